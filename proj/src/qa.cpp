#include "dtwin/qa.hpp"

#include <algorithm>
#include <cmath>

namespace dtwin {

int infer_dilation(const std::vector<VectorField>& fields, const BinaryMask& organ) {
    const auto dist = distance_map(organ);
    double far = 0.0;
    for (const auto& f : fields)
        for (std::size_t l = 0; l < f.vectors.size(); ++l)
            if (!organ.data[l] && f.vectors[l] != Vec3{}) far = std::max(far, dist.values[l]);
    // A taper of width n * s leaves nonzero vectors out to distances in [(n-1) s, n s).
    return static_cast<int>(std::floor(far / organ.geometry.min_spacing() + 1e-9)) + 1;
}

namespace {

struct Observation {
    Vec3 position;
    Vec3 radial;
};

std::vector<Observation> observation_points(const TubeSurface& base, const QaOptions& o) {
    const int n_u = o.obs_n_u > 0 ? o.obs_n_u : 4 * static_cast<int>(base.section_count());
    const int n_v = o.obs_n_v > 0 ? o.obs_n_v : 4 * static_cast<int>(base.ray_count());
    const Centerline axis = surface_axis(base);
    std::vector<Observation> out;
    out.reserve(static_cast<std::size_t>(2 * n_u * n_v));
    for (int i = 0; i < n_u; ++i) {
        const double u = static_cast<double>(i) / (n_u - 1);
        const Vec3 c = axis.point_at(u);
        for (int j = 0; j < n_v; ++j) {
            const double v = static_cast<double>(j) / n_v;
            const Vec3 s = eval(base, u, v);
            const Vec3 r = normalized(s - c);
            out.push_back({s, r});
            out.push_back({(s + c) * 0.5, r});
        }
    }
    return out;
}

QaPhase phase_stats(int k, const VectorField& ref, const VectorField& syn, const BinaryMask& organ) {
    QaPhase p;
    p.phase = k;
    p.reference = displacement_stats(ref, organ);
    p.synthetic = displacement_stats(syn, organ);
    const auto jr = jacobian_log(ref, &organ);
    const auto js = jacobian_log(syn, &organ);
    p.reference_logj_mean = jr.mean;
    p.reference_logj_sd = jr.sd;
    p.synthetic_logj_mean = js.mean;
    p.synthetic_logj_sd = js.sd;
    return p;
}

}  // namespace

QaReport qa_compare(const std::vector<VectorField>& reference, const TubeSurface& base, const BinaryMask& organ,
                    const QaOptions& options, const Exec& exec) {
    if (static_cast<int>(reference.size()) != options.n_phases || options.n_phases < 2)
        throw Error("qa.phase_count", "expected " + std::to_string(options.n_phases) + " reference fields, got " +
                                          std::to_string(reference.size()));
    const auto& g = organ.geometry;
    for (const auto& f : reference) {
        if (!(f.geometry == g)) throw Error("qa.geometry", "reference fields and organ mask differ in geometry");
        if (f.convention != FieldConvention::forward_push)
            throw Error("field.convention", "QA reference fields must be forward_push");
    }

    QaReport rep;
    rep.thresholds = options.thresholds;
    rep.per_phase = options.per_phase;
    rep.n_dilate = options.n_dilate >= 0 ? options.n_dilate : infer_dilation(reference, organ);
    SurfaceFieldOptions fopt = options.field;
    fopt.n_dilate = rep.n_dilate;

    // Observation operator: response of the radial observations to a unit
    // radial move of each section.
    const auto obs = observation_points(base, options);
    const std::size_t n_sec = base.section_count();
    ReferenceMotion motion;
    motion.operator_rows.resize(obs.size());
    for (std::size_t i = 0; i < n_sec; ++i) {
        std::vector<double> unit(n_sec, 0.0);
        unit[i] = 1.0;
        const auto impulse = surface_field(base, displace_radially(base, unit), organ, 1.0, fopt, exec);
        for (std::size_t o = 0; o < obs.size(); ++o) {
            const double h = dot(sample_vector(impulse.push, obs[o].position), obs[o].radial);
            if (h != 0.0) motion.operator_rows[o].push_back({static_cast<int>(i), h});
        }
    }
    for (const auto& s : base.sections) motion.arclengths.push_back(s.arclength);

    std::vector<std::vector<double>> y(reference.size(), std::vector<double>(obs.size()));
    for (std::size_t k = 0; k < reference.size(); ++k)
        for (std::size_t o = 0; o < obs.size(); ++o)
            y[k][o] = dot(sample_vector(reference[k], obs[o].position), obs[o].radial);

    const double denom = static_cast<double>(options.n_phases - 1);
    auto record = [&](const WaveFit& fit) {
        rep.fitted.push_back(fit.params);
        rep.fit_rmse_mm = std::max(rep.fit_rmse_mm, fit.rmse);
        if (!options.box.amplitude.fixed() && fit.params.amplitude_mm >= options.box.amplitude.hi)
            rep.amplitude_at_bound = true;
    };
    if (options.per_phase) {
        for (std::size_t k = 0; k < reference.size(); ++k) {
            ReferenceMotion one = motion;
            one.observations = {y[k]};
            one.phase_fractions = {static_cast<double>(k) / denom};
            record(fit_wave_params(one, options.box, options.n_phases));
        }
    } else {
        motion.observations = y;
        record(fit_wave_params(motion, options.box, options.n_phases));
    }

    for (std::size_t k = 0; k < reference.size(); ++k) {
        WaveParams p = rep.fitted[options.per_phase ? k : 0];
        p.n_phases = options.n_phases;
        const auto deformed = deform_surface_at_phase(base, p, static_cast<int>(k));
        auto syn = surface_field(base, deformed, organ, std::abs(p.amplitude_mm) / std::sqrt(3.0), fopt, exec).push;
        quantize_float32(syn);
        auto ph = phase_stats(static_cast<int>(k), reference[k], syn, organ);
        rep.max_diff_mean_mm = std::max(rep.max_diff_mean_mm, std::abs(ph.reference.mean - ph.synthetic.mean));
        rep.max_diff_max_mm = std::max(rep.max_diff_max_mm, std::abs(ph.reference.max - ph.synthetic.max));
        rep.max_diff_logj = std::max(rep.max_diff_logj, std::abs(ph.reference_logj_mean - ph.synthetic_logj_mean));
        rep.phases.push_back(ph);
    }
    rep.pass = rep.max_diff_mean_mm <= rep.thresholds.displacement_mm &&
               rep.max_diff_max_mm <= rep.thresholds.displacement_mm &&
               rep.max_diff_logj <= rep.thresholds.log_jacobian && !rep.amplitude_at_bound;
    return rep;
}

}  // namespace dtwin
