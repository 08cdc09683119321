#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dtwin/field.hpp"
#include "dtwin/grid.hpp"
#include "dtwin/surface.hpp"

namespace dtwin {

struct Keypoint {
    Vec3 position;  // static-scan frame, mm
    double u = 0.0, v = 0.0, p = 0.0;
    int label = 0;
};

struct KeypointSet {
    std::vector<Keypoint> points;
};

/// Surface and inner-shell points of `surface` on the sampling grid, keeping
/// every `stride`-th sample.
KeypointSet shell_keypoints(const TubeSurface& surface, int label, const SamplingDensity& density = {}, int stride = 1);

struct Stats {
    double mean = 0.0;
    double sd = 0.0;  // population
    double max = 0.0;
    std::int64_t count = 0;
};

Stats summarize(const std::vector<double>& values);

struct TreResult {
    std::map<int, Stats> per_organ;
    std::vector<double> values;  // per keypoint, mm
};

/// TRE(p) = |q + u_cand(q) - p| with q = p + V_gt(p).
/// Error: "metrics.keypoint_outside".
TreResult tre(const KeypointSet& keys, const VectorField& gt_forward, const VectorField& cand_pull);

/// 2|A n B| / (|A| + |B|); 1 when both are empty. Error: "metrics.geometry".
double dsc(const BinaryMask& a, const BinaryMask& b);

/// Set voxels with at least one 6-neighbour unset or outside the grid.
BinaryMask boundary(const BinaryMask& mask);

/// Symmetric 95th-percentile (nearest rank) boundary distance, mm.
/// Errors: "metrics.empty_mask", "metrics.geometry".
double hd95(const BinaryMask& a, const BinaryMask& b);

/// Statistics of |V| over the mask. Error: "metrics.empty_mask".
Stats displacement_stats(const VectorField& field, const BinaryMask& mask);

/// Direct dose mapping: sum over k of dose(world(x) + u_k(x)).
/// Errors: "metrics.kind", "metrics.no_fields".
ScalarGrid accumulate_dose(const ScalarGrid& dose, const std::vector<VectorField>& pull_fields, const Exec& exec = {});

/// Mean of (|)D_dir - D_gt(|) / D_gt over mask voxels with D_gt >= floor, in percent.
/// Errors: "metrics.geometry", "metrics.no_dose".
double dwe(const ScalarGrid& accum_dir, const ScalarGrid& accum_gt, const BinaryMask* mask = nullptr,
           double dose_floor = 0.5, bool signed_error = false);

/// |a - b| per voxel.
ScalarGrid error_magnitude(const VectorField& a, const VectorField& b);
/// |V| per voxel.
ScalarGrid magnitude(const VectorField& field);

struct Bin {
    double lo = 0.0;
    double hi = 0.0;
    std::int64_t count = 0;
    std::optional<double> rmse_mm;  // empty when count == 0
};

/// Bins are [e_i, e_{i+1}), the last one closed. Error: "metrics.bad_edges".
std::vector<Bin> rmse_binned(const ScalarGrid& err, const ScalarGrid& binning, const std::vector<double>& edges,
                             const BinaryMask* mask = nullptr);

/// 0, step, 2*step, ... up to the first edge >= max_value (at least one bin).
std::vector<double> uniform_edges(double max_value, double step);

/// CSV with header bin_lo,bin_hi,count,rmse_mm (empty rmse for empty bins).
std::string bins_csv(const std::vector<Bin>& bins);

}  // namespace dtwin
