#include "dtwin/motion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dtwin {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
const double kInvSqrt3 = 1.0 / std::sqrt(3.0);

double frac(double x) { return x - std::floor(x); }

// Unit-amplitude wave at spatial cycle count L/lambda and temporal cycle
// fraction tau, with damping evaluated at (L, t).
double unit_wave(const WaveParams& p, double L, double tau, double t) {
    const double x = frac(frac(L / p.wavelength_mm) - tau);
    return kInvSqrt3 * std::sin(kTwoPi * x) * std::exp(-p.alpha_s * L) * std::exp(-p.alpha_t * t);
}

double phase_fraction(const WaveParams& p, int k) {
    return static_cast<double>(k) / static_cast<double>(p.n_phases - 1);
}

}  // namespace

void WaveParams::validate() const {
    const bool ok = std::isfinite(amplitude_mm) && amplitude_mm >= 0.0 && std::isfinite(speed_mm_s) && speed_mm_s > 0.0 &&
                    std::isfinite(wavelength_mm) && wavelength_mm > 0.0 && std::isfinite(alpha_s) && alpha_s >= 0.0 &&
                    std::isfinite(alpha_t) && alpha_t >= 0.0 && n_phases >= 2;
    if (!ok) throw Error("motion.bad_params", "wave parameters out of range");
}

double wave_value(const WaveParams& p, double L, double t) {
    if (p.amplitude_mm == 0.0) return 0.0;
    return p.amplitude_mm * unit_wave(p, L, frac(t * p.speed_mm_s / p.wavelength_mm), t);
}

double phase_time(const WaveParams& p, int k) { return phase_fraction(p, k) * p.period(); }

double wave_value_at_phase(const WaveParams& p, double L, int k) {
    if (p.amplitude_mm == 0.0) return 0.0;
    const double tau = phase_fraction(p, k);
    return p.amplitude_mm * unit_wave(p, L, frac(tau), tau * p.period());
}

TubeSurface displace_radially(const TubeSurface& surface, const std::vector<double>& w) {
    if (w.size() != surface.section_count()) throw Error("motion.bad_reference", "one value per section required");
    TubeSurface out = surface;
    for (std::size_t i = 0; i < out.section_count(); ++i) {
        auto& sec = out.sections[i];
        if (w[i] == 0.0) continue;
        for (std::size_t j = 0; j < sec.ray_count(); ++j) {
            const double r = sec.radii[j];
            double r_new = r + w[i];
            if (w[i] < 0.0 && r_new < kMinLumenRadius) r_new = std::min(r, kMinLumenRadius);
            const double shift = r_new - r;
            sec.control_points[j] = sec.control_points[j] + sec.radial_dirs[j] * shift;
            sec.radii[j] = r_new;
        }
    }
    return out;
}

std::vector<double> section_wave_values(const TubeSurface& surface, const WaveParams& params, int k) {
    std::vector<double> w(surface.section_count());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = wave_value_at_phase(params, surface.sections[i].arclength, k);
    return w;
}

TubeSurface deform_surface(const TubeSurface& surface, const WaveParams& params, double t) {
    std::vector<double> w(surface.section_count());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = wave_value(params, surface.sections[i].arclength, t);
    return displace_radially(surface, w);
}

TubeSurface deform_surface_at_phase(const TubeSurface& surface, const WaveParams& params, int k) {
    return displace_radially(surface, section_wave_values(surface, params, k));
}

PhaseSequence synth_phases(const TubeSurface& surface, const WaveParams& params) {
    params.validate();
    PhaseSequence seq;
    seq.base = surface;
    seq.params = params;
    const auto n = static_cast<std::size_t>(params.n_phases);
    seq.times.resize(n);
    seq.phases.resize(n);
    seq.mean_displacement.assign(n, 0.0);
    double best = -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        const int ki = static_cast<int>(k);
        seq.times[k] = phase_time(params, ki);
        seq.phases[k] = deform_surface_at_phase(surface, params, ki);
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < surface.section_count(); ++i)
            for (std::size_t j = 0; j < surface.ray_count(); ++j, ++count)
                sum += norm(seq.phases[k].sections[i].control_points[j] - surface.sections[i].control_points[j]);
        seq.mean_displacement[k] = count ? sum / static_cast<double>(count) : 0.0;
        if (seq.mean_displacement[k] > best) {
            best = seq.mean_displacement[k];
            seq.max_deformation_phase = ki;
        }
    }
    return seq;
}

std::vector<PhaseSequence> synth_phases(const std::vector<std::pair<TubeSurface, WaveParams>>& organs) {
    std::vector<PhaseSequence> out(organs.size());
    parallel_for(organs.size(), Exec{}, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) out[i] = synth_phases(organs[i].first, organs[i].second);
    });
    return out;
}

ReferenceMotion ReferenceMotion::from_control_displacements(const TubeSurface& base,
                                                           const std::vector<std::vector<Vec3>>& displacements,
                                                           std::vector<double> times) {
    ReferenceMotion ref;
    const std::size_t rays = base.ray_count();
    for (const auto& s : base.sections) ref.arclengths.push_back(s.arclength);
    ref.times = std::move(times);
    for (const auto& phase : displacements) {
        if (phase.size() != base.section_count() * rays)
            throw Error("motion.bad_reference", "displacement count does not match the surface");
        std::vector<double> obs(phase.size());
        for (std::size_t i = 0; i < base.section_count(); ++i)
            for (std::size_t j = 0; j < rays; ++j)
                obs[i * rays + j] = dot(phase[i * rays + j], base.sections[i].radial_dirs[j]);
        ref.observations.push_back(std::move(obs));
    }
    ref.operator_rows.resize(base.section_count() * rays);
    for (std::size_t i = 0; i < base.section_count(); ++i)
        for (std::size_t j = 0; j < rays; ++j) ref.operator_rows[i * rays + j] = {{static_cast<int>(i), 1.0}};
    return ref;
}

namespace {

struct Objective {
    const ReferenceMotion& ref;
    ParamRange amp;
    int evaluations = 0;
    std::vector<std::vector<double>> g;  // H * unit wave, per phase

    // Sum of squared residuals with the amplitude solved in closed form.
    double operator()(WaveParams& p) {
        ++evaluations;
        const std::size_t n_ph = ref.phase_count();
        const std::size_t n_sec = ref.arclengths.size();
        g.resize(n_ph);
        double fy = 0.0, ff = 0.0;
        std::vector<double> w(n_sec);
        for (std::size_t k = 0; k < n_ph; ++k) {
            double tau, t;
            if (ref.times.empty()) {
                tau = ref.phase_fractions.empty() ? static_cast<double>(k) / static_cast<double>(n_ph - 1)
                                                  : ref.phase_fractions[k];
                t = tau * p.period();
            } else {
                t = ref.times[k];
                tau = frac(t * p.speed_mm_s / p.wavelength_mm);
            }
            for (std::size_t i = 0; i < n_sec; ++i) w[i] = unit_wave(p, ref.arclengths[i], frac(tau), t);
            const auto& y = ref.observations[k];
            auto& gk = g[k];
            gk.assign(y.size(), 0.0);
            for (std::size_t o = 0; o < y.size(); ++o) {
                double s = 0.0;
                for (const auto& [sec, wt] : ref.operator_rows[o]) s += wt * w[static_cast<std::size_t>(sec)];
                gk[o] = s;
                fy += s * y[o];
                ff += s * s;
            }
        }
        double a = ff > 0.0 ? fy / ff : amp.lo;
        p.amplitude_mm = std::clamp(a, amp.lo, amp.hi);
        double sse = 0.0;
        for (std::size_t k = 0; k < n_ph; ++k) {
            const auto& y = ref.observations[k];
            for (std::size_t o = 0; o < y.size(); ++o) {
                const double r = y[o] - p.amplitude_mm * g[k][o];
                sse += r * r;
            }
        }
        return sse;
    }
};

void check_range(const ParamRange& r, const char* name, bool positive) {
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi || r.lo < 0.0 || (positive && r.lo <= 0.0))
        throw Error("motion.empty_search_box", std::string("invalid search range for ") + name);
}

}  // namespace

WaveFit fit_wave_params(const ReferenceMotion& ref, const SearchBox& box, int n_phases) {
    check_range(box.amplitude, "amplitude", false);
    check_range(box.speed, "speed", true);
    check_range(box.wavelength, "wavelength", true);
    check_range(box.alpha_s, "alpha_s", false);
    check_range(box.alpha_t, "alpha_t", false);
    const std::size_t min_phases = ref.times.empty() && ref.phase_fractions.empty() ? 2 : 1;
    if (ref.phase_count() < min_phases || ref.arclengths.empty())
        throw Error("motion.bad_reference", "reference needs more phases or at least one section");
    if (!ref.phase_fractions.empty() && ref.phase_fractions.size() != ref.phase_count())
        throw Error("motion.bad_reference", "one phase fraction per phase required");
    if (!ref.times.empty() && ref.times.size() != ref.phase_count())
        throw Error("motion.bad_reference", "one time per phase required");
    const std::size_t n_obs = ref.observations.front().size();
    if (ref.operator_rows.empty()) {
        const std::size_t n_sec = ref.arclengths.size();
        if (n_obs % n_sec != 0) throw Error("motion.bad_reference", "observations do not tile the sections");
        ReferenceMotion lattice = ref;
        const std::size_t rays = n_obs / n_sec;
        lattice.operator_rows.resize(n_obs);
        for (std::size_t o = 0; o < n_obs; ++o) lattice.operator_rows[o] = {{static_cast<int>(o / rays), 1.0}};
        return fit_wave_params(lattice, box, n_phases);
    }
    if (ref.operator_rows.size() != n_obs) throw Error("motion.bad_reference", "observation operator size mismatch");
    for (const auto& o : ref.observations)
        if (o.size() != n_obs) throw Error("motion.bad_reference", "observation count differs between phases");
    for (const auto& row : ref.operator_rows)
        for (const auto& [sec, wt] : row)
            if (sec < 0 || static_cast<std::size_t>(sec) >= ref.arclengths.size())
                throw Error("motion.bad_reference", "observation operator references a missing section");

    Objective f{ref, box.amplitude, 0, {}};
    // Non-linear parameters: speed, wavelength, alpha_s, alpha_t.
    const ParamRange ranges[4] = {box.speed, box.wavelength, box.alpha_s, box.alpha_t};
    auto get = [](WaveParams& p, int d) -> double& {
        switch (d) {
            case 0: return p.speed_mm_s;
            case 1: return p.wavelength_mm;
            case 2: return p.alpha_s;
            default: return p.alpha_t;
        }
    };
    std::vector<int> free_dims;
    for (int d = 0; d < 4; ++d)
        if (!ranges[d].fixed()) free_dims.push_back(d);

    WaveParams p;
    p.n_phases = n_phases;
    for (int d = 0; d < 4; ++d) get(p, d) = ranges[d].lo;

    const int steps = std::max(8, box.grid_steps);
    WaveParams best = p;
    double best_sse = std::numeric_limits<double>::infinity();
    std::vector<int> idx(free_dims.size(), 0);
    for (;;) {
        WaveParams q = p;
        for (std::size_t a = 0; a < free_dims.size(); ++a) {
            const auto& r = ranges[free_dims[a]];
            get(q, free_dims[a]) = r.lo + (r.hi - r.lo) * idx[a] / (steps - 1);
        }
        const double s = f(q);
        if (s < best_sse) {
            best_sse = s;
            best = q;
        }
        std::size_t a = 0;
        while (a < idx.size() && ++idx[a] == steps) idx[a++] = 0;
        if (a == idx.size()) break;
    }

    // Coordinate descent with step halving.
    std::vector<double> step(4, 0.0);
    for (int d : free_dims) step[static_cast<std::size_t>(d)] = (ranges[d].hi - ranges[d].lo) / (steps - 1);
    const double tol = std::max(box.relative_tolerance, 1e-15);
    for (int iter = 0; iter < 10000; ++iter) {
        bool active = false;
        for (int d : free_dims) {
            const auto& r = ranges[d];
            double& h = step[static_cast<std::size_t>(d)];
            if (h <= tol * (r.hi - r.lo)) continue;
            active = true;
            bool moved = false;
            for (double dir : {1.0, -1.0}) {
                WaveParams q = best;
                get(q, d) = std::clamp(get(best, d) + dir * h, r.lo, r.hi);
                if (get(q, d) == get(best, d)) continue;
                const double s = f(q);
                if (s < best_sse) {
                    best_sse = s;
                    best = q;
                    moved = true;
                    break;
                }
            }
            if (!moved) h *= 0.5;
        }
        if (!active) break;
    }
    f(best);  // refresh the closed-form amplitude for the final point

    WaveFit fit;
    fit.params = best;
    const double n = static_cast<double>(ref.phase_count() * n_obs);
    fit.rmse = std::sqrt(std::max(best_sse, 0.0) / n);
    fit.evaluations = f.evaluations;
    return fit;
}

}  // namespace dtwin
