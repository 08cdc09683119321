#pragma once

#include <vector>

#include "dtwin/grid.hpp"

namespace dtwin {

/// Inclusive voxel box [lo, hi].
struct Box {
    Index3 lo{0, 0, 0};
    Index3 hi{-1, -1, -1};
    bool empty() const { return hi[0] < lo[0] || hi[1] < lo[1] || hi[2] < lo[2]; }
    Index3 dims() const { return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}; }
};

/// Bounding box of the set voxels grown by `margin` per axis and clipped to the grid.
Box bounding_box(const BinaryMask& mask, const Index3& margin = {0, 0, 0});

/// Sub-grid of `grid` covering `box`, with the origin moved accordingly.
ScalarGrid crop(const ScalarGrid& grid, const Box& box);

/// `part` (defined on the box of `full`) placed into a zero field on `full`.
VectorField embed(const VectorField& part, const GridGeometry& full, const Box& box);

/// Normalised sampled Gaussian with radius ceil(3*sigma); {1} for sigma <= 0.
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian (sigma in voxels) with replicated borders.
void gaussian_smooth(std::vector<double>& values, const Index3& dims, double sigma);
void gaussian_smooth(std::vector<Vec3>& values, const Index3& dims, double sigma);
inline void gaussian_smooth(ScalarGrid& g, double sigma) { gaussian_smooth(g.values, g.geometry.dims, sigma); }
inline void gaussian_smooth(VectorField& f, double sigma) { gaussian_smooth(f.vectors, f.geometry.dims, sigma); }

/// Normalised convolution inside `box`: sum(G*w*V)/sum(G*w) at voxels with
/// w > 0, others untouched. Voxels outside the box do not contribute.
void weighted_gaussian_smooth(VectorField& field, const std::vector<double>& weight, const Box& box, double sigma);

}  // namespace dtwin
