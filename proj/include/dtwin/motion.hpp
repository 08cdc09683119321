#pragma once

#include <utility>
#include <vector>

#include "dtwin/surface.hpp"

namespace dtwin {

/// Travelling peristaltic wave with exponential spatial/temporal damping.
struct WaveParams {
    double amplitude_mm = 16.0;
    double speed_mm_s = 5.0;
    double wavelength_mm = 55.0;
    double alpha_s = 0.0;  // 1/mm
    double alpha_t = 0.0;  // 1/s
    int n_phases = 21;

    double period() const { return wavelength_mm / speed_mm_s; }
    /// Throws "motion.bad_params".
    void validate() const;

    static WaveParams stomach() { return {16.0, 5.0, 55.0, 0.0, 0.0, 21}; }
    static WaveParams large_bowel() { return {16.0, 8.0, 40.0, 0.0, 0.0, 21}; }

    bool operator==(const WaveParams&) const = default;
};

/// Radial displacement (mm) at arc length L (mm) and time t (s):
/// A/sqrt(3) * sin(2*pi*(L - c*t)/lambda) * exp(-alpha_s*L) * exp(-alpha_t*t).
double wave_value(const WaveParams& params, double L, double t);

/// Time of phase k: k * T / (n_phases - 1).
double phase_time(const WaveParams& params, int k);

/// wave_value at phase k, with the temporal part of the sine argument taken
/// as the exact cycle fraction k/(n_phases-1) so that the last phase
/// reproduces phase 0 bit for bit when alpha_t = 0.
double wave_value_at_phase(const WaveParams& params, double L, int k);

/// Smallest radius a displaced control point may reach (mm).
inline constexpr double kMinLumenRadius = 0.5;

/// Displaces every control point along its radial direction by the
/// per-section value w_i: P' = P + w_i * d. Inward moves that would leave
/// a radius below kMinLumenRadius stop there instead.
TubeSurface displace_radially(const TubeSurface& surface, const std::vector<double>& per_section);

TubeSurface deform_surface(const TubeSurface& surface, const WaveParams& params, double t);
TubeSurface deform_surface_at_phase(const TubeSurface& surface, const WaveParams& params, int k);

/// Per-section wave values w_i at phase k.
std::vector<double> section_wave_values(const TubeSurface& surface, const WaveParams& params, int k);

struct PhaseSequence {
    TubeSurface base;
    WaveParams params;
    std::vector<double> times;
    std::vector<TubeSurface> phases;
    std::vector<double> mean_displacement;  // mean control-point displacement per phase
    int max_deformation_phase = 0;          // argmax of mean_displacement, ties -> smallest k
};

PhaseSequence synth_phases(const TubeSurface& surface, const WaveParams& params);
std::vector<PhaseSequence> synth_phases(const std::vector<std::pair<TubeSurface, WaveParams>>& organs);

// ---------------------------------------------------------------------------
// Wave-parameter fitting

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
    bool fixed() const { return lo == hi; }
};

struct SearchBox {
    ParamRange amplitude{0.0, 40.0};
    ParamRange speed{5.0, 5.0};
    ParamRange wavelength{20.0, 120.0};
    ParamRange alpha_s{0.0, 0.0};
    ParamRange alpha_t{0.0, 0.0};
    int grid_steps = 12;             // per free non-linear parameter, >= 8
    double relative_tolerance = 1e-3;  // final coordinate-descent step / range width
};

/// Reference motion observed on a fixed set of points.
///
/// The prediction for phase k is H * w_k, where w_k holds the per-section
/// wave values. With an empty `operator_rows`, H is the control lattice
/// itself: observation (i, j) reads section i directly.
struct ReferenceMotion {
    std::vector<double> arclengths;               // per section, mm
    std::vector<double> times;                    // per phase, s; empty = one period
    std::vector<double> phase_fractions;          // cycle fraction per phase when times is empty;
                                                  // empty = k / (phases - 1)
    std::vector<std::vector<double>> observations;  // [phase][observation], mm
    /// Sparse rows of H: (section, weight) pairs per observation.
    std::vector<std::vector<std::pair<int, double>>> operator_rows;

    std::size_t phase_count() const { return observations.size(); }

    /// Radial components (D . d_ij) of per-phase control point displacements,
    /// section-major, on the lattice H = identity per ray.
    static ReferenceMotion from_control_displacements(const TubeSurface& base,
                                                      const std::vector<std::vector<Vec3>>& displacements,
                                                      std::vector<double> times = {});
};

struct WaveFit {
    WaveParams params;
    double rmse = 0.0;
    int evaluations = 0;
};

/// Least-squares fit of WaveParams within `box`: coarse grid over the free
/// non-linear parameters, then coordinate descent with step halving. The
/// amplitude enters linearly and is solved in closed form (clamped to its
/// range) at every evaluation. Deterministic.
/// Errors: "motion.empty_search_box", "motion.bad_reference".
WaveFit fit_wave_params(const ReferenceMotion& reference, const SearchBox& box, int n_phases = 21);

}  // namespace dtwin
