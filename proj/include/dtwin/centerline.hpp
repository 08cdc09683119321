#pragma once

#include <vector>

#include "dtwin/core.hpp"

namespace dtwin {

/// Orthonormal frame attached to a centerline sample.
struct Frame {
    Vec3 tangent;
    Vec3 normal;
    Vec3 binormal;
};

/// Ordered world-space polyline (mm) with cumulative arc length and
/// parallel-transported frames.
///
/// Invariants: arclength[0] == 0 and strictly increasing; every frame is
/// orthonormal to 1e-9; consecutive normals never flip (transport follows
/// the minimal rotation between successive tangents).
struct Centerline {
    std::vector<Vec3> points;
    std::vector<double> arclength;
    std::vector<Frame> frames;

    std::size_t size() const { return points.size(); }
    double length() const { return arclength.empty() ? 0.0 : arclength.back(); }
    /// Point at arc-length fraction u in [0,1] (piecewise linear).
    Vec3 point_at(double u) const;
};

/// Builds arc length and frames for a polyline. Consecutive points closer
/// than 1e-9 mm are merged. Throws "centerline.degenerate" for fewer than
/// two distinct points.
Centerline make_centerline(std::vector<Vec3> points);

/// Rebuilds frames by parallel transport (tangents from central differences).
std::vector<Frame> transport_frames(const std::vector<Vec3>& points);

}  // namespace dtwin
