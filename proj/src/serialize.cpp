#include "dtwin/serialize.hpp"

#include <fstream>

namespace dtwin {

namespace {

template <class T>
void opt(const Json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

}  // namespace

void to_json(Json& j, const Vec3& v) { j = Json::array({v.x, v.y, v.z}); }
void from_json(const Json& j, Vec3& v) {
    if (!j.is_array() || j.size() != 3) throw Error("json.type", "expected a 3-vector");
    v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(Json& j, const GridGeometry& g) {
    j = {{"dims", g.dims}, {"spacing", g.spacing}, {"origin", g.origin}};
}
void from_json(const Json& j, GridGeometry& g) {
    g = GridGeometry(j.at("dims").get<Index3>(), j.at("spacing").get<Vec3>(), j.value("origin", Vec3{}));
}

void to_json(Json& j, const WaveParams& p) {
    j = {{"amplitude_mm", p.amplitude_mm}, {"speed_mm_s", p.speed_mm_s}, {"wavelength_mm", p.wavelength_mm},
         {"alpha_s", p.alpha_s},           {"alpha_t", p.alpha_t},       {"n_phases", p.n_phases}};
}
void from_json(const Json& j, WaveParams& p) {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "stomach") p = WaveParams::stomach();
        else if (name == "large_bowel") p = WaveParams::large_bowel();
        else throw Error("config.invalid", "unknown wave preset '" + name + "'");
        return;
    }
    opt(j, "amplitude_mm", p.amplitude_mm);
    opt(j, "speed_mm_s", p.speed_mm_s);
    opt(j, "wavelength_mm", p.wavelength_mm);
    opt(j, "alpha_s", p.alpha_s);
    opt(j, "alpha_t", p.alpha_t);
    opt(j, "n_phases", p.n_phases);
}

void to_json(Json& j, const ParamRange& r) { j = Json::array({r.lo, r.hi}); }
void from_json(const Json& j, ParamRange& r) {
    if (j.is_number()) {
        r.lo = r.hi = j.get<double>();
        return;
    }
    if (!j.is_array() || j.size() != 2) throw Error("json.type", "expected [lo, hi]");
    r = {j[0].get<double>(), j[1].get<double>()};
}

void to_json(Json& j, const SearchBox& b) {
    j = {{"amplitude", b.amplitude}, {"speed", b.speed},         {"wavelength", b.wavelength},
         {"alpha_s", b.alpha_s},     {"alpha_t", b.alpha_t},     {"grid_steps", b.grid_steps},
         {"relative_tolerance", b.relative_tolerance}};
}
void from_json(const Json& j, SearchBox& b) {
    opt(j, "amplitude", b.amplitude);
    opt(j, "speed", b.speed);
    opt(j, "wavelength", b.wavelength);
    opt(j, "alpha_s", b.alpha_s);
    opt(j, "alpha_t", b.alpha_t);
    opt(j, "grid_steps", b.grid_steps);
    opt(j, "relative_tolerance", b.relative_tolerance);
}

void to_json(Json& j, const RegParams& p) {
    j = {{"levels", p.levels},
         {"iterations", p.iterations},
         {"hs_warps", p.hs_warps},
         {"hs_alpha", p.hs_alpha},
         {"sigma_fluid", p.sigma_fluid},
         {"sigma_diffusion", p.sigma_diffusion},
         {"step_cap_voxels", p.step_cap_voxels},
         {"convergence", p.convergence},
         {"diffeomorphic", p.diffeomorphic},
         {"squarings", p.squarings}};
}
void from_json(const Json& j, RegParams& p) {
    opt(j, "levels", p.levels);
    opt(j, "iterations", p.iterations);
    opt(j, "hs_warps", p.hs_warps);
    opt(j, "hs_alpha", p.hs_alpha);
    opt(j, "sigma_fluid", p.sigma_fluid);
    opt(j, "sigma_diffusion", p.sigma_diffusion);
    opt(j, "step_cap_voxels", p.step_cap_voxels);
    opt(j, "convergence", p.convergence);
    opt(j, "diffeomorphic", p.diffeomorphic);
    opt(j, "squarings", p.squarings);
}

namespace {

const char* curve_name(CurveKind k) {
    switch (k) {
        case CurveKind::line: return "line";
        case CurveKind::arc: return "arc";
        case CurveKind::helix: return "helix";
    }
    return "line";
}

}  // namespace

void to_json(Json& j, const CurveSpec& c) {
    j = {{"kind", curve_name(c.kind)}};
    if (c.kind == CurveKind::line) {
        j["start"] = c.start;
        j["end"] = c.end;
        return;
    }
    j["center"] = c.center;
    j["e1"] = c.e1;
    j["e2"] = c.e2;
    j["radius"] = c.radius;
    j["angle0"] = c.angle0;
    j["angle1"] = c.angle1;
    if (c.kind == CurveKind::helix) j["pitch"] = c.pitch;
}
void from_json(const Json& j, CurveSpec& c) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "line") c.kind = CurveKind::line;
    else if (kind == "arc") c.kind = CurveKind::arc;
    else if (kind == "helix") c.kind = CurveKind::helix;
    else throw Error("phantom.bad_spec", "unknown curve kind '" + kind + "'");
    opt(j, "start", c.start);
    opt(j, "end", c.end);
    opt(j, "center", c.center);
    opt(j, "e1", c.e1);
    opt(j, "e2", c.e2);
    opt(j, "radius", c.radius);
    opt(j, "angle0", c.angle0);
    opt(j, "angle1", c.angle1);
    opt(j, "pitch", c.pitch);
}

void to_json(Json& j, const TubeSpec& t) {
    j = {{"label", t.label},
         {"name", t.name},
         {"curve", t.curve},
         {"radius_start", t.radius_start},
         {"radius_end", t.radius_end},
         {"wall_mm", t.wall_mm},
         {"wall_intensity", t.wall_intensity},
         {"lumen_intensity", t.lumen_intensity},
         {"round_caps", t.round_caps}};
}
void from_json(const Json& j, TubeSpec& t) {
    opt(j, "label", t.label);
    opt(j, "name", t.name);
    t.curve = j.at("curve").get<CurveSpec>();
    if (j.contains("radius")) t.radius_start = t.radius_end = j.at("radius").get<double>();
    opt(j, "radius_start", t.radius_start);
    opt(j, "radius_end", t.radius_end);
    opt(j, "wall_mm", t.wall_mm);
    opt(j, "wall_intensity", t.wall_intensity);
    opt(j, "lumen_intensity", t.lumen_intensity);
    opt(j, "round_caps", t.round_caps);
}

void to_json(Json& j, const DoseBlob& b) {
    j = {{"center", b.center}, {"sigma_mm", b.sigma_mm}, {"peak_gy", b.peak_gy}};
}
void from_json(const Json& j, DoseBlob& b) {
    b.center = j.at("center").get<Vec3>();
    opt(j, "sigma_mm", b.sigma_mm);
    opt(j, "peak_gy", b.peak_gy);
}

void to_json(Json& j, const PhantomSpec& s) {
    j = {{"geometry", s.geometry},
         {"organs", s.organs},
         {"background", s.background},
         {"texture_amplitude", s.texture_amplitude},
         {"texture_wavelength_mm", s.texture_wavelength_mm},
         {"noise_sd", s.noise_sd},
         {"seed", s.seed},
         {"dose", s.dose}};
}
void from_json(const Json& j, PhantomSpec& s) {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "P-A") s = fixture_pa();
        else if (name == "P-B") s = fixture_pb();
        else throw Error("phantom.bad_spec", "unknown phantom fixture '" + name + "'");
        return;
    }
    opt(j, "geometry", s.geometry);
    opt(j, "organs", s.organs);
    opt(j, "background", s.background);
    opt(j, "texture_amplitude", s.texture_amplitude);
    opt(j, "texture_wavelength_mm", s.texture_wavelength_mm);
    opt(j, "noise_sd", s.noise_sd);
    opt(j, "seed", s.seed);
    opt(j, "dose", s.dose);
}

void to_json(Json& j, const OrganDescriptor& d) {
    j = {{"label", d.label},
         {"name", d.name},
         {"length_mm", d.length_mm},
         {"radius_start", d.radius_start},
         {"radius_end", d.radius_end},
         {"centerline", d.centerline}};
}

void to_json(Json& j, const Centerline& c) {
    Json frames = Json::array();
    for (const auto& f : c.frames) frames.push_back({{"t", f.tangent}, {"n", f.normal}, {"b", f.binormal}});
    j = {{"points", c.points}, {"arclength", c.arclength}, {"frames", frames}};
}
void from_json(const Json& j, Centerline& c) {
    c.points = j.at("points").get<std::vector<Vec3>>();
    if (!j.contains("frames") || !j.contains("arclength")) {
        c = make_centerline(c.points);
        return;
    }
    c.arclength = j.at("arclength").get<std::vector<double>>();
    c.frames.clear();
    for (const auto& f : j.at("frames"))
        c.frames.push_back({f.at("t").get<Vec3>(), f.at("n").get<Vec3>(), f.at("b").get<Vec3>()});
    if (c.arclength.size() != c.points.size() || c.frames.size() != c.points.size())
        throw Error("centerline.degenerate", "centerline arrays differ in length");
}

void to_json(Json& j, const SectionalCurve& s) {
    j = {{"section_index", s.section_index},
         {"arclength", s.arclength},
         {"center", s.center},
         {"control_points", s.control_points},
         {"radial_dirs", s.radial_dirs},
         {"radii", s.radii},
         {"truncated", s.truncated},
         {"degenerate", s.degenerate}};
}
void from_json(const Json& j, SectionalCurve& s) {
    s.section_index = j.at("section_index").get<int>();
    s.arclength = j.at("arclength").get<double>();
    s.center = j.at("center").get<Vec3>();
    s.control_points = j.at("control_points").get<std::vector<Vec3>>();
    s.radial_dirs = j.at("radial_dirs").get<std::vector<Vec3>>();
    s.radii = j.at("radii").get<std::vector<double>>();
    s.truncated = j.value("truncated", std::vector<bool>(s.control_points.size(), false));
    s.degenerate = j.value("degenerate", false);
}

void to_json(Json& j, const TubeSurface& s) {
    j = {{"degree_u", s.degree_u}, {"degree_v", s.degree_v}, {"knots_u", s.knots_u},
         {"knots_v", s.knots_v},   {"weights", s.weights},   {"sections", s.sections}};
}
void from_json(const Json& j, TubeSurface& s) {
    s.degree_u = j.at("degree_u").get<int>();
    s.degree_v = j.at("degree_v").get<int>();
    s.knots_u = j.at("knots_u").get<std::vector<double>>();
    s.knots_v = j.at("knots_v").get<std::vector<double>>();
    s.weights = j.at("weights").get<std::vector<double>>();
    s.sections = j.at("sections").get<std::vector<SectionalCurve>>();
    const std::size_t rays = s.ray_count();
    for (const auto& sec : s.sections)
        if (sec.ray_count() != rays) throw Error("surface.inconsistent_rays", "sections differ in ray count");
    if (s.weights.size() != s.sections.size() * rays) throw Error("surface.bad_weights", "weight count mismatch");
}

void to_json(Json& j, const KeypointSet& k) {
    Json pts = Json::array();
    for (const auto& p : k.points)
        pts.push_back({{"position", p.position}, {"u", p.u}, {"v", p.v}, {"p", p.p}, {"label", p.label}});
    j = {{"points", pts}};
}
void from_json(const Json& j, KeypointSet& k) {
    k.points.clear();
    for (const auto& p : j.at("points"))
        k.points.push_back({p.at("position").get<Vec3>(), p.value("u", 0.0), p.value("v", 0.0), p.value("p", 0.0),
                            p.value("label", 0)});
}

void to_json(Json& j, const Stats& s) {
    j = {{"mean", s.mean}, {"sd", s.sd}, {"max", s.max}, {"count", s.count}};
}

void to_json(Json& j, const Bin& b) {
    j = {{"bin_lo", b.lo}, {"bin_hi", b.hi}, {"count", b.count}};
    j["rmse_mm"] = b.rmse_mm ? Json(*b.rmse_mm) : Json(nullptr);
}

void to_json(Json& j, const QaThresholds& t) {
    j = {{"displacement_mm", t.displacement_mm}, {"log_jacobian", t.log_jacobian}};
}

void to_json(Json& j, const QaReport& r) {
    Json phases = Json::array();
    for (const auto& p : r.phases)
        phases.push_back({{"phase", p.phase},
                          {"reference", p.reference},
                          {"synthetic", p.synthetic},
                          {"reference_logj", {{"mean", p.reference_logj_mean}, {"sd", p.reference_logj_sd}}},
                          {"synthetic_logj", {{"mean", p.synthetic_logj_mean}, {"sd", p.synthetic_logj_sd}}}});
    j = {{"phases", phases},
         {"summary",
          {{"max_abs_diff_mean_mm", r.max_diff_mean_mm},
           {"max_abs_diff_max_mm", r.max_diff_max_mm},
           {"max_abs_diff_mean_logj", r.max_diff_logj}}},
         {"thresholds", r.thresholds},
         {"mode", r.per_phase ? "per_phase" : "global"},
         {"fitted", r.fitted},
         {"fit_rmse_mm", r.fit_rmse_mm},
         {"amplitude_at_bound", r.amplitude_at_bound},
         {"n_dilate", r.n_dilate},
         {"pass", r.pass}};
}

void to_json(Json& j, const OrganConfig& o) {
    j = {{"label", o.label},
         {"wave", o.wave},
         {"centerline", o.centerline == CenterlineSource::analytic ? "analytic" : "skeleton"},
         {"n_sections", o.n_sections},
         {"n_rays", o.n_rays},
         {"n_u", o.n_u},
         {"n_v", o.n_v},
         {"n_p", o.n_p}};
    if (o.endpoints) j["endpoints"] = {o.endpoints->first, o.endpoints->second};
}
void from_json(const Json& j, OrganConfig& o) {
    o.label = j.at("label").get<int>();
    opt(j, "wave", o.wave);
    if (j.contains("centerline")) {
        const auto s = j.at("centerline").get<std::string>();
        if (s == "skeleton") o.centerline = CenterlineSource::skeleton;
        else if (s == "analytic") o.centerline = CenterlineSource::analytic;
        else throw Error("config.invalid", "centerline must be 'skeleton' or 'analytic'");
    }
    if (j.contains("endpoints") && !j.at("endpoints").is_null()) {
        const auto& e = j.at("endpoints");
        if (!e.is_array() || e.size() != 2) throw Error("config.invalid", "endpoints must be two voxel indices");
        o.endpoints = std::make_pair(e[0].get<Index3>(), e[1].get<Index3>());
    }
    opt(j, "n_sections", o.n_sections);
    opt(j, "n_rays", o.n_rays);
    opt(j, "n_u", o.n_u);
    opt(j, "n_v", o.n_v);
    opt(j, "n_p", o.n_p);
}

void to_json(Json& j, const RunConfig& c) {
    j = {{"input", c.input},
         {"mask", c.mask},
         {"organs", c.organs},
         {"n_phases", c.n_phases},
         {"registration", c.registration},
         {"registration_params", c.reg},
         {"registration_margin_mm", c.registration_margin_mm},
         {"dose", c.dose},
         {"output", c.output},
         {"workers", c.workers},
         {"seed", c.seed},
         {"dose_floor_gy", c.dose_floor_gy},
         {"signed_dwe", c.signed_dwe},
         {"tre_stride", c.tre_stride},
         {"motion_bin_mm", c.motion_bin_mm},
         {"dose_bin_gy", c.dose_bin_gy}};
    j["phantom"] = c.phantom ? Json(*c.phantom) : Json(nullptr);
}
void from_json(const Json& j, RunConfig& c) {
    opt(j, "input", c.input);
    opt(j, "mask", c.mask);
    if (j.contains("phantom") && !j.at("phantom").is_null()) c.phantom = j.at("phantom").get<PhantomSpec>();
    c.organs = j.at("organs").get<std::vector<OrganConfig>>();
    opt(j, "n_phases", c.n_phases);
    opt(j, "registration", c.registration);
    opt(j, "registration_params", c.reg);
    opt(j, "registration_margin_mm", c.registration_margin_mm);
    opt(j, "dose", c.dose);
    opt(j, "output", c.output);
    opt(j, "workers", c.workers);
    opt(j, "seed", c.seed);
    opt(j, "dose_floor_gy", c.dose_floor_gy);
    opt(j, "signed_dwe", c.signed_dwe);
    opt(j, "tre_stride", c.tre_stride);
    opt(j, "motion_bin_mm", c.motion_bin_mm);
    opt(j, "dose_bin_gy", c.dose_bin_gy);
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("json.io", "cannot open " + path.string());
    try {
        return Json::parse(f);
    } catch (const Json::exception& e) {
        throw Error("json.parse", path.string() + ": " + e.what());
    }
}

void write_json(const Json& j, const std::filesystem::path& path) {
    std::ofstream f(path);
    f << j.dump(2) << '\n';
    if (!f) throw Error("json.io", "cannot write " + path.string());
}

}  // namespace dtwin
