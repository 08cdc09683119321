#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dtwin/centerline.hpp"
#include "dtwin/grid.hpp"

namespace dtwin {

/// Topology-preserving 3D thinning in the style of Lee, Kashyap and Chu.
///
/// Each iteration runs six directional sub-passes in the fixed order
/// -y, +y, +x, -x, +z, -z. A sub-pass visits the eight parity subfields
/// (i, j, k mod 2) in turn; within a subfield it deletes, all at once, the
/// border voxels (the 6-neighbour in the pass direction is background) that
/// are simple points and not line ends. Voxels of one subfield are never
/// 26-adjacent, so simultaneous deletion is safe. Simplicity uses the 26/6
/// topological numbers, which preserves
/// component count, cavities and tunnels. Iterates until a full cycle
/// deletes nothing, so the result is idempotent.
BinaryMask thin(const BinaryMask& mask);
/// Throws "skeleton.empty_label" if `label` has no voxels.
BinaryMask thin(const LabelMask& mask, int label);

/// True if removing the centre of the 3x3x3 neighbourhood keeps topology.
/// `cube` is indexed [dz+1][dy+1][dx+1] flattened (x fastest).
bool is_simple_point(const std::array<bool, 27>& cube);

struct SkeletonGraph {
    GridGeometry geometry;
    std::vector<Index3> nodes;                        // sorted by linear index
    std::vector<std::pair<int, int>> edges;           // a < b
    std::vector<std::vector<int>> adjacency;          // sorted neighbour lists

    std::size_t degree(int node) const { return adjacency[static_cast<std::size_t>(node)].size(); }
    /// Node index of a voxel, or -1.
    int find(const Index3& voxel) const;
};

/// One node per skeleton voxel, edges between 26-neighbours.
SkeletonGraph build_graph(const BinaryMask& skeleton);

using Endpoints = std::pair<Index3, Index3>;

/// Voxel path of the organ centerline.
///
/// With endpoints: the breadth-first-search path between them. Without:
/// double sweep (BFS from the lowest-index node of the largest component to
/// its farthest node e1, then from e1 to the farthest node e2); ties go to
/// the lowest linear index. Errors: "skeleton.empty_graph",
/// "skeleton.endpoint_missing", "skeleton.disconnected".
std::vector<Index3> longest_voxel_path(const SkeletonGraph& graph,
                                       const std::optional<Endpoints>& endpoints = std::nullopt);

/// longest_voxel_path converted to world mm, smoothed by a centred 5-point
/// moving average (window shrinks symmetrically at the ends), with frames.
Centerline longest_path(const SkeletonGraph& graph,
                        const std::optional<Endpoints>& endpoints = std::nullopt);

/// Convenience: thin -> graph -> longest_path for one label.
Centerline extract_centerline(const LabelMask& mask, int label,
                              const std::optional<Endpoints>& endpoints = std::nullopt);

}  // namespace dtwin
