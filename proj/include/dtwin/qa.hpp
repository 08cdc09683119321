#pragma once

#include <vector>

#include "dtwin/field.hpp"
#include "dtwin/metrics.hpp"
#include "dtwin/motion.hpp"
#include "dtwin/surface.hpp"

namespace dtwin {

struct QaThresholds {
    double displacement_mm = 0.8;
    double log_jacobian = 0.01;
};

struct QaOptions {
    SearchBox box = default_box();
    QaThresholds thresholds;
    bool per_phase = false;  // one parameter set per phase instead of one global set
    int n_phases = 21;
    /// Observation points: shell samples with p in {0, 0.5}.
    int obs_n_u = 0;  // 0: 4 * sections
    int obs_n_v = 0;  // 0: 4 * rays
    /// Region dilation used by both the observation operator and the
    /// re-synthesis; < 0 infers it from the support of the reference fields.
    int n_dilate = -1;
    SurfaceFieldOptions field;

    static SearchBox default_box() {
        SearchBox b;
        b.relative_tolerance = 1e-10;
        return b;
    }
};

struct QaPhase {
    int phase = 0;
    Stats reference, synthetic;  // |V| over the organ, mm
    double reference_logj_mean = 0.0, reference_logj_sd = 0.0;
    double synthetic_logj_mean = 0.0, synthetic_logj_sd = 0.0;
};

struct QaReport {
    std::vector<QaPhase> phases;
    double max_diff_mean_mm = 0.0;
    double max_diff_max_mm = 0.0;
    double max_diff_logj = 0.0;
    QaThresholds thresholds;
    bool per_phase = false;
    std::vector<WaveParams> fitted;  // one entry, or one per phase
    double fit_rmse_mm = 0.0;        // largest over the fits
    bool amplitude_at_bound = false;
    int n_dilate = 0;
    bool pass = false;
};

/// Fits waves to a reference motion given as forward_push fields (one per
/// phase), re-synthesizes the fields and compares per-phase displacement and
/// log-Jacobian statistics over the organ. Observations are radial
/// components of the reference at shell points; the observation operator is
/// built by pushing a unit radial move of each section through the same
/// sample -> voxelize -> fill chain, so a self-generated reference is
/// reproduced exactly.
/// Errors: "qa.phase_count", "qa.geometry".
QaReport qa_compare(const std::vector<VectorField>& reference, const TubeSurface& base, const BinaryMask& organ,
                    const QaOptions& options = {}, const Exec& exec = {});

/// Region dilation (voxels) implied by a tapered field's support.
int infer_dilation(const std::vector<VectorField>& fields, const BinaryMask& organ);

}  // namespace dtwin
