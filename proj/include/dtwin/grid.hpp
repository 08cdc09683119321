#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dtwin/core.hpp"

namespace dtwin {

/// Axis-aligned voxel lattice. Voxel (0,0,0) sits at `origin`; indices are
/// stored x-fastest, matching the NIfTI on-disk order.
struct GridGeometry {
    Index3 dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{};

    GridGeometry() = default;
    GridGeometry(Index3 d, Vec3 s, Vec3 o = {});

    std::int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
    std::int64_t linear(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return i + dims[0] * (j + dims[1] * k);
    }
    std::int64_t linear(const Index3& v) const { return linear(v[0], v[1], v[2]); }
    Index3 index(std::int64_t lin) const {
        return {lin % dims[0], (lin / dims[0]) % dims[1], lin / (dims[0] * dims[1])};
    }
    bool contains(const Index3& v) const {
        return v[0] >= 0 && v[1] >= 0 && v[2] >= 0 && v[0] < dims[0] && v[1] < dims[1] &&
               v[2] < dims[2];
    }
    Vec3 world(const Index3& v) const {
        return {origin.x + static_cast<double>(v[0]) * spacing.x,
                origin.y + static_cast<double>(v[1]) * spacing.y,
                origin.z + static_cast<double>(v[2]) * spacing.z};
    }
    Vec3 world(std::int64_t lin) const { return world(index(lin)); }
    /// Continuous voxel coordinate of a world point.
    Vec3 continuous_index(const Vec3& w) const {
        return {(w.x - origin.x) / spacing.x, (w.y - origin.y) / spacing.y,
                (w.z - origin.z) / spacing.z};
    }
    /// Nearest voxel to a world point (may lie outside the grid).
    Index3 nearest_index(const Vec3& w) const;
    double min_spacing() const;

    bool operator==(const GridGeometry&) const = default;
};

enum class ScalarKind { intensity, dose_gray };

struct ScalarGrid {
    GridGeometry geometry;
    std::vector<double> values;
    ScalarKind kind = ScalarKind::intensity;

    ScalarGrid() = default;
    explicit ScalarGrid(GridGeometry g, ScalarKind k = ScalarKind::intensity, double fill = 0.0);

    double& at(const Index3& v) { return values[static_cast<std::size_t>(geometry.linear(v))]; }
    double at(const Index3& v) const { return values[static_cast<std::size_t>(geometry.linear(v))]; }
};

struct LabelMask {
    GridGeometry geometry;
    std::vector<std::uint16_t> labels;
    std::map<int, std::string> label_names;

    LabelMask() = default;
    explicit LabelMask(GridGeometry g);

    std::uint16_t at(const Index3& v) const { return labels[static_cast<std::size_t>(geometry.linear(v))]; }
    /// Label of the voxel nearest to `w`; 0 outside the grid.
    std::uint16_t label_at_world(const Vec3& w) const;
    /// Throws if a nonzero label has no name.
    void validate() const;
};

/// Binary occupancy grid (skeletons, coverage, regions).
struct BinaryMask {
    GridGeometry geometry;
    std::vector<std::uint8_t> data;

    BinaryMask() = default;
    explicit BinaryMask(GridGeometry g);

    bool at(const Index3& v) const { return data[static_cast<std::size_t>(geometry.linear(v))] != 0; }
    std::int64_t count() const;
};

BinaryMask select_label(const LabelMask& mask, int label);
BinaryMask select_nonzero(const LabelMask& mask);
/// Dilation with the 26-neighbourhood (cube structuring element), `steps` times.
BinaryMask dilate(const BinaryMask& mask, int steps);
/// Exact Euclidean distance (mm) from every voxel centre to the nearest set
/// voxel of `target`; infinity when `target` is empty.
ScalarGrid distance_map(const BinaryMask& target);

enum class FieldConvention { forward_push, backward_pull };

struct VectorField {
    GridGeometry geometry;
    std::vector<Vec3> vectors;
    FieldConvention convention = FieldConvention::forward_push;

    VectorField() = default;
    explicit VectorField(GridGeometry g, FieldConvention c = FieldConvention::forward_push);

    Vec3& at(const Index3& v) { return vectors[static_cast<std::size_t>(geometry.linear(v))]; }
    const Vec3& at(const Index3& v) const { return vectors[static_cast<std::size_t>(geometry.linear(v))]; }
};

/// Trilinear interpolation at a world point; `background` outside the lattice.
double sample_trilinear(const ScalarGrid& grid, const Vec3& world_point, double background = 0.0);
/// Same as above at a continuous voxel coordinate.
double sample_trilinear_index(const ScalarGrid& grid, const Vec3& idx, double background = 0.0);
/// Component-wise trilinear interpolation of a vector field; zero outside.
Vec3 sample_vector(const VectorField& field, const Vec3& world_point);
Vec3 sample_vector_index(const VectorField& field, const Vec3& idx);

/// out(x) = moving(world(x) + V(x)) on the field's lattice.
ScalarGrid warp_pull(const ScalarGrid& moving, const VectorField& field, const Exec& exec = {});
/// Nearest-neighbour pull warp for label masks.
LabelMask warp_pull_labels(const LabelMask& moving, const VectorField& field, const Exec& exec = {});

/// Rounds every value through float32, so that in-memory data equals what a
/// float32 NIfTI round trip would give back.
void quantize_float32(ScalarGrid& grid);
void quantize_float32(VectorField& field);

}  // namespace dtwin
