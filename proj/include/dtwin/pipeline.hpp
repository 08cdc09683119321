#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dtwin/config.hpp"
#include "dtwin/metrics.hpp"
#include "dtwin/serialize.hpp"
#include "dtwin/skeleton.hpp"

namespace dtwin {

/// A stage failure, tagged with the stage name and organ label (0 if none).
class PipelineError : public Error {
public:
    PipelineError(const Error& cause, std::string stage, int organ)
        : Error(cause.code(), cause.what()), stage_(std::move(stage)), organ_(organ) {}
    const std::string& stage() const noexcept { return stage_; }
    int organ() const noexcept { return organ_; }

private:
    std::string stage_;
    int organ_;
};

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file(const std::filesystem::path& path);

/// Centerline of one organ from its config: skeleton path (optionally between
/// the skeleton nodes nearest to the configured endpoints) or the phantom's
/// analytic curve, pulled in by the largest voxel spacing at both ends.
Centerline organ_centerline(const LabelMask& mask, const OrganConfig& organ, const PhantomSpec* phantom,
                            BinaryMask* skeleton_out = nullptr);

/// Resample -> cast sections -> fit.
TubeSurface organ_surface(const LabelMask& mask, const OrganConfig& organ, const Centerline& centerline);

/// Peak radial displacement used to size the field region: |A| / sqrt(3).
double wave_peak(const WaveParams& p);

/// Combines per-organ push fields: each voxel takes the mean over the organs
/// whose region contains it.
VectorField combine_fields(const std::vector<VectorField>& fields, const std::vector<BinaryMask>& regions);

struct EvalContext {
    const LabelMask* static_labels = nullptr;
    const LabelMask* deformed_labels = nullptr;  // ground truth at the evaluated phase
    const VectorField* gt_push = nullptr;
    const VectorField* gt_pull = nullptr;
    const KeypointSet* keypoints = nullptr;
    const ScalarGrid* dose = nullptr;  // optional planning dose
    std::vector<int> labels;
    double dose_floor_gy = 0.5;
    bool signed_dwe = false;
    double motion_bin_mm = 1.0;
    double dose_bin_gy = 10.0;
};

struct CandidateReport {
    Json json;
    ScalarGrid error;  // |u_cand - u_gt| in mm
    std::vector<Bin> motion_bins, dose_bins;
};

/// TRE, DSC, HD95, DWE and binned RMSE of a backward_pull candidate.
CandidateReport evaluate_candidate(const std::string& name, const VectorField& candidate, const EvalContext& ctx,
                                   const Exec& exec = {});

/// Runs a registration method by name: "hsof", "demons", "demons_diffeo".
/// Error: "config.invalid".
VectorField register_by_name(const std::string& method, const ScalarGrid& fixed, const ScalarGrid& moving,
                             const RegParams& params, const Exec& exec = {});

struct RunResult {
    std::filesystem::path output;
    Json manifest;
    Json report;
};

/// End-to-end run. Stage outputs whose key and file checksums match the
/// previous manifest in the output directory are reused.
/// Errors: PipelineError (any stage), "config.invalid".
RunResult run(const RunConfig& config);

}  // namespace dtwin
