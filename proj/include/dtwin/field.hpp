#pragma once

#include <cstdint>
#include <vector>

#include "dtwin/grid.hpp"
#include "dtwin/surface.hpp"

namespace dtwin {

/// Shell correspondence: X at (u, v, p) on the original surface and its
/// displacement X' - X on the deformed one.
struct FieldSample {
    double u = 0.0, v = 0.0, p = 0.0;
    Vec3 origin;
    Vec3 vector;
};

/// Shell sampling grid; zero means the default (4 * sections, 4 * rays).
struct SamplingDensity {
    int n_u = 0;
    int n_v = 0;
    int n_p = 8;
};

/// u_i = i/(n_u-1), v_j = j/n_v, p_k = k/(n_p-1). Error: "field.topology".
std::vector<FieldSample> sample_correspondences(const TubeSurface& base, const Centerline& base_axis,
                                                const TubeSurface& deformed, const Centerline& deformed_axis,
                                                const SamplingDensity& density = {}, const Exec& exec = {});
/// Axes through the section centres of each surface.
std::vector<FieldSample> sample_correspondences(const TubeSurface& base, const TubeSurface& deformed,
                                                const SamplingDensity& density = {}, const Exec& exec = {});

struct Voxelized {
    VectorField field;  // forward_push
    BinaryMask coverage;
};

/// Per-voxel mean of the samples whose origin is nearest to that voxel.
Voxelized voxelize(const std::vector<FieldSample>& samples, const GridGeometry& geometry);

struct FillOptions {
    int max_sweeps = 200;
    double sigma_voxels = 1.0;
};

struct FillResult {
    VectorField field;
    std::int64_t unreachable = 0;  // region voxels never reached by the sweeps
    int sweeps = 0;
};

/// Fills uncovered region voxels with the mean of their already-known
/// 6-neighbours (Jacobi sweeps), then smooths inside the region with a
/// normalised Gaussian and restores the covered voxels. Zero outside region.
FillResult fill_smooth(const VectorField& field, const BinaryMask& coverage, const BinaryMask& region,
                       const FillOptions& options = {});

/// Scales vectors by max(0, 1 - d/width_mm), d the distance to `organ`.
void taper_outside(VectorField& field, const BinaryMask& organ, double width_mm);

struct InvertOptions {
    int max_iterations = 30;
    double tolerance_mm = 0.01;
    double fail_residual_mm = 0.5;
    double fail_fraction = 0.01;
};

struct InverseResult {
    VectorField field;  // backward_pull
    std::vector<double> residual;  // |V(y + w(y)) + w(y)| per voxel, mm
    double max_residual = 0.0;
    double fraction_failed = 0.0;  // over `region` (or all voxels)
    int iterations = 0;       // sweeps until the last voxel stopped
    bool converged = false;   // every voxel's update fell below tolerance
};

/// Fixed-point inversion w(y) = -V(y + w(y)) of a forward_push field. Each
/// voxel iterates until its own update is below tolerance_mm.
/// Errors: "field.convention", "field.inversion_failed".
InverseResult invert(const VectorField& push, const BinaryMask* region = nullptr, const InvertOptions& options = {},
                     const Exec& exec = {});

/// Largest Frobenius norm of the displacement gradient.
double max_gradient_norm(const VectorField& field);

struct JacobianResult {
    ScalarGrid log_jacobian;    // 0 at folded voxels
    double mean = 0.0;
    double sd = 0.0;
    std::int64_t foldings = 0;  // J <= 0 inside the mask
    std::int64_t count = 0;     // unfolded voxels in the mean
};

/// log det(I + grad V) by spacing-aware central differences, one-sided at
/// the borders. Statistics over `mask` (all voxels if null).
JacobianResult jacobian_log(const VectorField& field, const BinaryMask* mask = nullptr);

/// Region dilation in voxels for a wave of peak displacement `peak_mm`:
/// max(3, ceil(2 * peak / min spacing)).
int region_dilation(double peak_mm, const GridGeometry& geometry);

struct SurfaceFieldOptions {
    SamplingDensity density;
    FillOptions fill;
    int n_dilate = -1;  // < 0: region_dilation(peak)
    bool taper = true;
};

struct SurfaceField {
    VectorField push;
    BinaryMask coverage;
    BinaryMask region;
    std::int64_t unreachable = 0;
};

/// sample -> voxelize -> fill -> taper for one organ.
SurfaceField surface_field(const TubeSurface& base, const TubeSurface& deformed, const BinaryMask& organ,
                           double peak_mm, const SurfaceFieldOptions& options = {}, const Exec& exec = {});

}  // namespace dtwin
