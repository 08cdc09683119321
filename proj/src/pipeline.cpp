#include "dtwin/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "dtwin/field.hpp"
#include "dtwin/filter.hpp"
#include "dtwin/heatmap.hpp"
#include "dtwin/nifti.hpp"

namespace dtwin {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Checksums

namespace {

struct Sha256 {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    Sha256() {
        if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) throw Error("sha256.init", "EVP init failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;
    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx, data, n); }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx, md, &len);
        static const char* digits = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out += digits[md[i] >> 4];
            out += digits[md[i] & 15];
        }
        return out;
    }
};

}  // namespace

std::string sha256_hex(const void* data, std::size_t size) {
    Sha256 h;
    h.update(data, size);
    return h.hex();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("io.read", "cannot open " + path.string());
    Sha256 h;
    std::vector<char> buf(1 << 20);
    while (f) {
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<std::size_t>(f.gcount()));
    }
    return h.hex();
}

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
    auto bad = [](const std::string& m) { throw Error("config.invalid", m); };
    if (!phantom && (input.empty() || mask.empty())) bad("either a phantom or both input and mask are required");
    if (output.empty()) bad("output directory is required");
    if (organs.empty()) bad("at least one organ is required");
    if (n_phases < 2) bad("n_phases must be at least 2");
    if (workers < 1) bad("workers must be at least 1");
    if (tre_stride < 1) bad("tre_stride must be at least 1");
    if (!(motion_bin_mm > 0) || !(dose_bin_gy > 0)) bad("bin widths must be positive");
    if (!(dose_floor_gy >= 0)) bad("dose_floor_gy must be non-negative");
    if (!(registration_margin_mm >= 0)) bad("registration_margin_mm must be non-negative");
    std::set<int> seen;
    for (const auto& o : organs) {
        if (o.label < 1 || o.label > 65535) bad("organ label out of range");
        if (!seen.insert(o.label).second) bad("duplicate organ label " + std::to_string(o.label));
        if (o.n_rays < 3) bad("n_rays must be at least 3");
        if (o.n_sections != 0 && o.n_sections < 4) bad("n_sections must be 0 or at least 4");
        if (o.n_u < 0 || o.n_v < 0 || o.n_p < 1) bad("bad shell sampling density");
        if (o.centerline == CenterlineSource::analytic && !phantom) bad("analytic centerlines need a phantom input");
        try {
            WaveParams w = o.wave;
            w.n_phases = n_phases;
            w.validate();
        } catch (const Error& e) {
            bad(e.what());
        }
    }
    for (const auto& m : registration)
        if (m != "hsof" && m != "demons" && m != "demons_diffeo") bad("unknown registration method '" + m + "'");
    try {
        reg.validate();
    } catch (const Error& e) {
        bad(e.what());
    }
}

// ---------------------------------------------------------------------------
// Anatomy

Centerline organ_centerline(const LabelMask& mask, const OrganConfig& organ, const PhantomSpec* phantom,
                            BinaryMask* skeleton_out) {
    if (organ.centerline == CenterlineSource::analytic) {
        if (!phantom) throw Error("config.invalid", "analytic centerline without a phantom");
        for (const auto& t : phantom->organs)
            if (t.label == organ.label)
            {
                // Keep the end sections a voxel clear of the flat caps.
                const auto& sp = mask.geometry.spacing;
                return analytic_centerline(t, 1.0, std::max({sp.x, sp.y, sp.z}));
            }
        throw Error("config.invalid", "phantom has no organ with label " + std::to_string(organ.label));
    }
    BinaryMask skel = thin(mask, organ.label);
    const SkeletonGraph graph = build_graph(skel);
    if (skeleton_out) *skeleton_out = skel;
    std::optional<Endpoints> ends;
    if (organ.endpoints) {
        if (graph.nodes.empty()) throw Error("skeleton.empty_graph", "empty skeleton");
        auto snap = [&](const Index3& v) {
            const Vec3 w = mask.geometry.world(v);
            Index3 best = graph.nodes.front();
            double bd = std::numeric_limits<double>::infinity();
            for (const auto& n : graph.nodes) {
                const double d = norm(mask.geometry.world(n) - w);
                if (d < bd) bd = d, best = n;
            }
            return best;
        };
        ends = Endpoints{snap(organ.endpoints->first), snap(organ.endpoints->second)};
    }
    return longest_path(graph, ends);
}

TubeSurface organ_surface(const LabelMask& mask, const OrganConfig& organ, const Centerline& centerline) {
    const int n = organ.n_sections > 0 ? organ.n_sections : default_section_count(centerline.length());
    const Centerline resampled = resample_centerline(centerline, n);
    CastOptions cast;
    cast.n_rays = organ.n_rays;
    return fit_surface(cast_sections(mask, organ.label, resampled, cast));
}

double wave_peak(const WaveParams& p) { return std::abs(p.amplitude_mm) / std::sqrt(3.0); }

VectorField combine_fields(const std::vector<VectorField>& fields, const std::vector<BinaryMask>& regions) {
    if (fields.empty() || fields.size() != regions.size()) throw Error("field.combine", "field/region count mismatch");
    if (fields.size() == 1) return fields.front();
    VectorField out(fields.front().geometry, FieldConvention::forward_push);
    for (std::size_t l = 0; l < out.vectors.size(); ++l) {
        Vec3 sum;
        int n = 0;
        for (std::size_t o = 0; o < fields.size(); ++o)
            if (regions[o].data[l]) {
                sum += fields[o].vectors[l];
                ++n;
            }
        if (n > 0) out.vectors[l] = sum / static_cast<double>(n);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

BinaryMask union_of(const LabelMask& labels, const std::vector<int>& which) {
    BinaryMask m(labels.geometry);
    for (std::size_t l = 0; l < labels.labels.size(); ++l)
        m.data[l] = std::find(which.begin(), which.end(), static_cast<int>(labels.labels[l])) != which.end();
    return m;
}

}  // namespace

CandidateReport evaluate_candidate(const std::string& name, const VectorField& cand, const EvalContext& ctx,
                                   const Exec& exec) {
    if (cand.convention != FieldConvention::backward_pull)
        throw Error("field.convention", "candidate '" + name + "' must be a backward_pull field");
    CandidateReport r;
    Json& j = r.json;
    j["name"] = name;

    if (ctx.keypoints) {
        const TreResult t = tre(*ctx.keypoints, *ctx.gt_push, cand);
        j["tre_mm"] = summarize(t.values);
        Json per = Json::object();
        for (const auto& [label, s] : t.per_organ) per[std::to_string(label)] = s;
        j["tre_per_organ_mm"] = per;
    }

    const LabelMask warped = warp_pull_labels(*ctx.static_labels, cand, exec);
    Json organs = Json::array();
    for (int label : ctx.labels) {
        const BinaryMask a = select_label(warped, label), b = select_label(*ctx.deformed_labels, label);
        Json o{{"label", label}, {"dsc", dsc(a, b)}};
        try {
            o["hd95_mm"] = hd95(a, b);
        } catch (const Error&) {
            o["hd95_mm"] = nullptr;
        }
        organs.push_back(o);
    }
    j["organs"] = organs;

    const BinaryMask organ_mask = union_of(*ctx.deformed_labels, ctx.labels);
    r.error = error_magnitude(cand, *ctx.gt_pull);
    const ScalarGrid motion = magnitude(*ctx.gt_pull);
    double max_motion = 0.0;
    for (std::size_t l = 0; l < motion.values.size(); ++l)
        if (organ_mask.data[l]) max_motion = std::max(max_motion, motion.values[l]);
    r.motion_bins = rmse_binned(r.error, motion, uniform_edges(max_motion, ctx.motion_bin_mm), &organ_mask);

    std::vector<double> sq;
    for (std::size_t l = 0; l < r.error.values.size(); ++l)
        if (organ_mask.data[l]) sq.push_back(r.error.values[l]);
    j["field_error_mm"] = summarize(sq);

    j["dwe_percent"] = nullptr;
    if (ctx.dose) {
        double max_dose = 0.0;
        for (std::size_t l = 0; l < ctx.dose->values.size(); ++l)
            if (organ_mask.data[l]) max_dose = std::max(max_dose, ctx.dose->values[l]);
        r.dose_bins = rmse_binned(r.error, *ctx.dose, uniform_edges(max_dose, ctx.dose_bin_gy), &organ_mask);
        const ScalarGrid gt = accumulate_dose(*ctx.dose, {*ctx.gt_pull}, exec);
        const ScalarGrid dir = accumulate_dose(*ctx.dose, {cand}, exec);
        try {
            j["dwe_percent"] = dwe(dir, gt, &organ_mask, ctx.dose_floor_gy, ctx.signed_dwe);
        } catch (const Error& e) {
            if (e.code() != "metrics.no_dose") throw;
            j["dwe_note"] = "no organ voxel reaches the dose floor";
        }
    }
    Json mb = Json::array();
    for (const auto& b : r.motion_bins) mb.push_back(b);
    j["rmse_by_motion"] = mb;
    Json db = Json::array();
    for (const auto& b : r.dose_bins) db.push_back(b);
    j["rmse_by_dose"] = db;
    return r;
}

VectorField register_by_name(const std::string& method, const ScalarGrid& fixed, const ScalarGrid& moving,
                             const RegParams& params, const Exec& exec) {
    if (method == "hsof") return register_hsof(fixed, moving, params, exec);
    RegParams p = params;
    if (method == "demons") p.diffeomorphic = false;
    else if (method == "demons_diffeo") p.diffeomorphic = true;
    else throw Error("config.invalid", "unknown registration method '" + method + "'");
    return register_demons(fixed, moving, p, exec);
}

// ---------------------------------------------------------------------------
// Run

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string key_of(const Json& j) {
    const std::string s = j.dump();
    return sha256_hex(s.data(), s.size());
}

/// Tracks emitted files and stage keys; reuses stages recorded with the same
/// key in the previous manifest when all their files still match.
class Bundle {
public:
    explicit Bundle(fs::path dir) : dir_(std::move(dir)) {
        fs::create_directories(dir_);
        const fs::path m = dir_ / "manifest.json";
        if (fs::exists(m)) {
            try {
                previous_ = read_json(m);
            } catch (const Error&) {
                previous_ = Json();
            }
        }
    }

    const fs::path& dir() const { return dir_; }
    fs::path path(const std::string& rel) const { return dir_ / rel; }

    bool reusable(const std::string& stage, const std::string& key) {
        if (!previous_.is_object() || !previous_.contains("files") || !previous_.contains("stages")) return false;
        bool found = false;
        for (const auto& s : previous_["stages"])
            if (s.value("name", "") == stage && s.value("key", "") == key) found = true;
        if (!found) return false;
        std::vector<Json> recs;
        for (const auto& f : previous_["files"])
            if (f.value("stage", "") == stage && !f.value("stale", false)) recs.push_back(f);
        if (recs.empty()) return false;
        for (const auto& f : recs) {
            const fs::path p = dir_ / f.at("path").get<std::string>();
            if (!fs::exists(p) || sha256_file(p) != f.at("sha256").get<std::string>()) return false;
        }
        for (const auto& f : recs) files_[f.at("path").get<std::string>()] = f;
        return true;
    }

    void emit(const std::string& rel, const std::string& stage) {
        const fs::path p = dir_ / rel;
        files_[rel] = Json{{"path", rel},
                           {"sha256", sha256_file(p)},
                           {"bytes", static_cast<std::uintmax_t>(fs::file_size(p))},
                           {"stage", stage}};
    }

    void stage(const std::string& name, const std::string& key, double seconds, bool cached) {
        stages_.push_back(Json{{"name", name}, {"key", key}, {"seconds", seconds}, {"cached", cached}});
    }

    bool has(const std::string& rel) const { return files_.count(rel) != 0; }

    Json manifest(const std::string& config_sha, const Json& summary, double wall, const Json& error) const {
        Json files = Json::array();
        std::map<std::string, Json> all = files_;
        for (const auto& e : fs::recursive_directory_iterator(dir_)) {
            if (!e.is_regular_file()) continue;
            const std::string rel = fs::relative(e.path(), dir_).generic_string();
            if (rel == "manifest.json" || all.count(rel)) continue;
            all[rel] = Json{{"path", rel},
                            {"sha256", sha256_file(e.path())},
                            {"bytes", static_cast<std::uintmax_t>(e.file_size())},
                            {"stage", nullptr},
                            {"stale", true}};
        }
        for (const auto& [rel, f] : all) files.push_back(f);
        Json m{{"config_sha256", config_sha}, {"stages", stages_}, {"files", files},
               {"summary", summary},          {"wall_seconds", wall}};
        if (!error.is_null()) m["error"] = error;
        return m;
    }

private:
    fs::path dir_;
    Json previous_;
    std::map<std::string, Json> files_;
    Json stages_ = Json::array();
};

template <class F>
auto guarded(const std::string& stage, int organ, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const PipelineError&) {
        throw;
    } catch (const Error& e) {
        throw PipelineError(e, stage, organ);
    } catch (const std::exception& e) {
        throw PipelineError(Error("internal", e.what()), stage, organ);
    }
}

std::string phase_name(const char* prefix, int k) { return std::string(prefix) + std::to_string(k) + ".nii"; }

struct OrganState {
    OrganConfig config;
    WaveParams wave;
    std::string name;
    Centerline centerline;
    TubeSurface base;
    std::vector<TubeSurface> phases;
    std::vector<double> mean_displacement;
    BinaryMask mask;
};

}  // namespace

RunResult run(const RunConfig& config) {
    config.validate();
    const auto t_start = Clock::now();
    const Exec exec{config.workers};

    Json key_config = config;
    key_config.erase("workers");
    key_config.erase("output");
    const Json full_config = config;
    const std::string config_sha = key_of(full_config);

    Bundle bundle(config.output);
    Json summary = Json::object();
    try {
        // ---- input
        std::optional<PhantomSpec> phantom = config.phantom;
        if (phantom) phantom->seed = config.seed;
        ScalarGrid input, dose;
        LabelMask labels;
        bool have_dose = false;
        std::string input_key;
        guarded("input", 0, [&] {
            const auto t0 = Clock::now();
            Json kj{{"stage", "input"}, {"phantom", phantom ? Json(*phantom) : Json(nullptr)}};
            if (!phantom) {
                kj["input"] = sha256_file(config.input);
                kj["mask"] = sha256_file(config.mask);
            }
            if (!config.dose.empty()) kj["dose"] = sha256_file(config.dose);
            input_key = key_of(kj);
            const bool cached = bundle.reusable("input", input_key);
            if (cached) {
                input = read_scalar_grid(bundle.path("input.nii"));
                labels = read_label_mask(bundle.path("labels.nii"));
                if (fs::exists(bundle.path("dose.nii")) && bundle.has("dose.nii")) {
                    dose = read_scalar_grid(bundle.path("dose.nii"));
                    have_dose = true;
                }
            } else {
                if (phantom) {
                    Phantom p = make_phantom(*phantom, exec);
                    input = std::move(p.intensity);
                    labels = std::move(p.labels);
                    if (!phantom->dose.empty()) {
                        dose = std::move(p.dose);
                        have_dose = true;
                    }
                } else {
                    input = read_scalar_grid(config.input);
                    labels = read_label_mask(config.mask);
                    if (!(input.geometry == labels.geometry))
                        throw Error("config.invalid", "input and mask geometries differ");
                }
                if (!config.dose.empty()) {
                    dose = read_scalar_grid(config.dose);
                    dose.kind = ScalarKind::dose_gray;
                    if (!(dose.geometry == input.geometry))
                        throw Error("config.invalid", "dose and input geometries differ");
                    have_dose = true;
                }
                quantize_float32(input);
                write_nifti(input, bundle.path("input.nii"));
                bundle.emit("input.nii", "input");
                write_nifti(labels, bundle.path("labels.nii"));
                bundle.emit("labels.nii", "input");
                if (have_dose) {
                    quantize_float32(dose);
                    write_nifti(dose, bundle.path("dose.nii"));
                    bundle.emit("dose.nii", "input");
                }
            }
            for (const auto& o : config.organs) {
                if (std::find(labels.labels.begin(), labels.labels.end(), static_cast<std::uint16_t>(o.label)) ==
                    labels.labels.end())
                    throw Error("config.invalid", "organ label " + std::to_string(o.label) + " not in the mask");
            }
            bundle.stage("input", input_key, seconds_since(t0), cached);
        });
        const GridGeometry& geom = input.geometry;

        // ---- anatomy: skeleton -> centerline -> surface -> phases
        std::vector<OrganState> organs;
        for (const auto& oc : config.organs) {
            OrganState s;
            s.config = oc;
            s.wave = oc.wave;
            s.wave.n_phases = config.n_phases;
            auto it = labels.label_names.find(oc.label);
            s.name = it != labels.label_names.end() ? it->second : "organ" + std::to_string(oc.label);
            s.mask = select_label(labels, oc.label);
            organs.push_back(std::move(s));
        }
        Json akj{{"stage", "anatomy"}, {"input", input_key}, {"organs", key_config["organs"]},
                 {"n_phases", config.n_phases}};
        const std::string anatomy_key = key_of(akj);
        const bool anatomy_cached = bundle.reusable("anatomy", anatomy_key);
        if (anatomy_cached) {
            const auto t0 = Clock::now();
            guarded("anatomy", 0, [&] {
                const Json cj = read_json(bundle.path("centerlines.json"));
                const Json sj = read_json(bundle.path("surfaces.json"));
                for (std::size_t o = 0; o < organs.size(); ++o) {
                    organs[o].centerline = cj.at("organs").at(o).at("centerline").get<Centerline>();
                    const Json& e = sj.at("organs").at(o);
                    organs[o].base = e.at("base").get<TubeSurface>();
                    organs[o].phases = e.at("phases").get<std::vector<TubeSurface>>();
                    organs[o].mean_displacement = e.at("mean_displacement").get<std::vector<double>>();
                }
            });
            bundle.stage("anatomy", anatomy_key, seconds_since(t0), true);
        } else {
            double t_skel = 0, t_cl = 0, t_surf = 0, t_phase = 0;
            Json cj{{"organs", Json::array()}};
            for (auto& s : organs) {
                const int label = s.config.label;
                auto t0 = Clock::now();
                BinaryMask skel;
                const bool use_skeleton = s.config.centerline == CenterlineSource::skeleton;
                if (use_skeleton) {
                    guarded("skeleton", label, [&] { skel = thin(labels, label); });
                    const std::string rel = "skeleton_" + std::to_string(label) + ".nii";
                    write_nifti(skel, bundle.path(rel));
                    bundle.emit(rel, "anatomy");
                }
                t_skel += seconds_since(t0);
                t0 = Clock::now();
                guarded("centerline", label, [&] {
                    if (use_skeleton) {
                        OrganConfig oc = s.config;
                        const SkeletonGraph graph = build_graph(skel);
                        std::optional<Endpoints> ends;
                        if (oc.endpoints) {
                            // Same snapping as organ_centerline, without thinning again.
                            if (graph.nodes.empty()) throw Error("skeleton.empty_graph", "empty skeleton");
                            auto snap = [&](const Index3& v) {
                                Index3 best = graph.nodes.front();
                                double bd = std::numeric_limits<double>::infinity();
                                for (const auto& n : graph.nodes) {
                                    const double d = norm(geom.world(n) - geom.world(v));
                                    if (d < bd) bd = d, best = n;
                                }
                                return best;
                            };
                            ends = Endpoints{snap(oc.endpoints->first), snap(oc.endpoints->second)};
                        }
                        s.centerline = longest_path(graph, ends);
                    } else {
                        s.centerline = organ_centerline(labels, s.config, phantom ? &*phantom : nullptr);
                    }
                });
                cj["organs"].push_back(Json{{"label", label},
                                            {"source", use_skeleton ? "skeleton" : "analytic"},
                                            {"length_mm", s.centerline.length()},
                                            {"centerline", s.centerline}});
                t_cl += seconds_since(t0);
                t0 = Clock::now();
                guarded("surface", label, [&] { s.base = organ_surface(labels, s.config, s.centerline); });
                t_surf += seconds_since(t0);
                t0 = Clock::now();
                guarded("phases", label, [&] {
                    PhaseSequence seq = synth_phases(s.base, s.wave);
                    s.phases = std::move(seq.phases);
                    s.mean_displacement = std::move(seq.mean_displacement);
                });
                t_phase += seconds_since(t0);
            }
            write_json(cj, bundle.path("centerlines.json"));
            bundle.emit("centerlines.json", "anatomy");
            Json sj{{"organs", Json::array()}};
            for (const auto& s : organs)
                sj["organs"].push_back(Json{{"label", s.config.label},
                                            {"wave", s.wave},
                                            {"base", s.base},
                                            {"phases", s.phases},
                                            {"mean_displacement", s.mean_displacement}});
            write_json(sj, bundle.path("surfaces.json"));
            bundle.emit("surfaces.json", "anatomy");
            bundle.stage("anatomy", anatomy_key, 0.0, false);
            bundle.stage("skeleton", anatomy_key, t_skel, false);
            bundle.stage("centerline", anatomy_key, t_cl, false);
            bundle.stage("surface", anatomy_key, t_surf, false);
            bundle.stage("phases", anatomy_key, t_phase, false);
        }

        // Phase of largest deformation: summed mean control-point displacement, ties to the smallest k.
        int kmax = 0;
        {
            double best = -1.0;
            for (int k = 0; k < config.n_phases; ++k) {
                double sum = 0.0;
                for (const auto& s : organs) sum += s.mean_displacement[static_cast<std::size_t>(k)];
                if (sum > best + 1e-12) best = sum, kmax = k;
            }
        }

        // ---- fields + synthesis, streamed per phase
        const std::string fields_key = key_of(Json{{"stage", "fields"}, {"anatomy", anatomy_key}});
        const std::string synth_key = key_of(Json{{"stage", "synthesis"}, {"fields", fields_key}});
        const bool fields_cached = bundle.reusable("fields", fields_key);
        const bool synth_cached = bundle.reusable("synthesis", synth_key);
        double t_fields = 0, t_synth = 0;
        Json field_stats;
        if (fields_cached) field_stats = guarded("fields", 0, [&] { return read_json(bundle.path("fields.json")); });
        else field_stats = Json{{"inversion", Json::array()}, {"organs", Json::array()}};
        if (!fields_cached)
            for (const auto& s : organs) field_stats["organs"].push_back(Json{{"label", s.config.label}, {"phases", Json::array()}});

        VectorField push_kmax, pull_kmax;
        ScalarGrid phase_kmax;
        LabelMask mask_kmax;
        BinaryMask region_kmax(geom);
        for (int k = 0; k < config.n_phases; ++k) {
            VectorField push, pull;
            auto t0 = Clock::now();
            if (fields_cached) {
                guarded("fields", 0, [&] {
                    push = read_vector_field(bundle.path(phase_name("gt_push_", k)));
                    pull = read_vector_field(bundle.path(phase_name("gt_pull_", k)));
                });
            } else {
                std::vector<VectorField> parts;
                std::vector<BinaryMask> regions;
                for (const auto& s : organs) {
                    guarded("fields", s.config.label, [&] {
                        SurfaceField sf = surface_field(s.base, s.phases[static_cast<std::size_t>(k)], s.mask,
                                                        wave_peak(s.wave), {}, exec);
                        parts.push_back(std::move(sf.push));
                        regions.push_back(std::move(sf.region));
                    });
                }
                guarded("fields", 0, [&] {
                    push = combine_fields(parts, regions);
                    parts.clear();
                    quantize_float32(push);
                    BinaryMask region(geom);
                    for (const auto& r : regions)
                        for (std::size_t l = 0; l < r.data.size(); ++l) region.data[l] |= r.data[l];
                    InverseResult inv = invert(push, &region, {}, exec);
                    pull = std::move(inv.field);
                    quantize_float32(pull);
                    field_stats["inversion"].push_back(Json{{"phase", k},
                                                            {"max_residual_mm", inv.max_residual},
                                                            {"fraction_failed", inv.fraction_failed},
                                                            {"iterations", inv.iterations},
                                                            {"converged", inv.converged}});
                    for (std::size_t o = 0; o < organs.size(); ++o) {
                        const Stats st = displacement_stats(push, organs[o].mask);
                        const JacobianResult jr = jacobian_log(push, &organs[o].mask);
                        field_stats["organs"][o]["phases"].push_back(Json{{"phase", k},
                                                                          {"displacement_mm", st},
                                                                          {"log_jacobian_mean", jr.mean},
                                                                          {"log_jacobian_sd", jr.sd},
                                                                          {"foldings", jr.foldings}});
                    }
                    write_nifti(push, bundle.path(phase_name("gt_push_", k)));
                    bundle.emit(phase_name("gt_push_", k), "fields");
                    write_nifti(pull, bundle.path(phase_name("gt_pull_", k)));
                    bundle.emit(phase_name("gt_pull_", k), "fields");
                });
            }
            t_fields += seconds_since(t0);
            t0 = Clock::now();
            guarded("synthesis", 0, [&] {
                if (synth_cached) {
                    if (k == kmax) {
                        phase_kmax = read_scalar_grid(bundle.path(phase_name("phase_", k)));
                        mask_kmax = read_label_mask(bundle.path(phase_name("mask_", k)));
                    }
                    return;
                }
                ScalarGrid vol = warp_pull(input, pull, exec);
                quantize_float32(vol);
                LabelMask m = warp_pull_labels(labels, pull, exec);
                write_nifti(vol, bundle.path(phase_name("phase_", k)));
                bundle.emit(phase_name("phase_", k), "synthesis");
                write_nifti(m, bundle.path(phase_name("mask_", k)));
                bundle.emit(phase_name("mask_", k), "synthesis");
                if (k == kmax) {
                    phase_kmax = std::move(vol);
                    mask_kmax = std::move(m);
                }
            });
            t_synth += seconds_since(t0);
            if (k == kmax) {
                for (std::size_t l = 0; l < push.vectors.size(); ++l)
                    region_kmax.data[l] = push.vectors[l] != Vec3{} || pull.vectors[l] != Vec3{};
                push_kmax = std::move(push);
                pull_kmax = std::move(pull);
            }
        }
        if (!fields_cached) {
            write_json(field_stats, bundle.path("fields.json"));
            bundle.emit("fields.json", "fields");
        }
        bundle.stage("fields", fields_key, t_fields, fields_cached);
        bundle.stage("synthesis", synth_key, t_synth, synth_cached);

        // ---- registration on the (static, max-phase) pair, inside an ROI
        std::vector<std::pair<std::string, VectorField>> candidates;
        {
            VectorField zero(geom, FieldConvention::backward_pull);
            candidates.emplace_back("identity", std::move(zero));
            candidates.emplace_back("gt_inverse", pull_kmax);
        }
        Index3 margin{};
        for (std::size_t a = 0; a < 3; ++a)
            margin[a] = static_cast<std::int64_t>(std::ceil(config.registration_margin_mm / geom.spacing[a]));
        BinaryMask roi_mask = region_kmax;
        for (std::size_t l = 0; l < roi_mask.data.size(); ++l)
            if (labels.labels[l] != 0 && std::find_if(config.organs.begin(), config.organs.end(), [&](const auto& o) {
                                             return o.label == labels.labels[l];
                                         }) != config.organs.end())
                roi_mask.data[l] = 1;
        const Box roi = bounding_box(roi_mask, margin);
        Json reg_info = Json::array();
        for (const auto& method : config.registration) {
            const std::string stage = "registration:" + method;
            const std::string key = key_of(Json{{"stage", stage},
                                                {"synthesis", synth_key},
                                                {"params", key_config["registration_params"]},
                                                {"margin", config.registration_margin_mm}});
            const std::string rel = "dvf_" + method + ".nii";
            const auto t0 = Clock::now();
            const bool cached = bundle.reusable(stage, key);
            VectorField dvf = guarded(stage, 0, [&] {
                if (cached) return read_vector_field(bundle.path(rel));
                const ScalarGrid fixed = crop(phase_kmax, roi), moving = crop(input, roi);
                VectorField f = embed(register_by_name(method, fixed, moving, config.reg, exec), geom, roi);
                quantize_float32(f);
                write_nifti(f, bundle.path(rel));
                bundle.emit(rel, stage);
                return f;
            });
            bundle.stage(stage, key, seconds_since(t0), cached);
            reg_info.push_back(Json{{"method", method}, {"roi_lo", roi.lo}, {"roi_hi", roi.hi}});
            candidates.emplace_back(method, std::move(dvf));
        }

        // ---- metrics
        const auto t_metrics = Clock::now();
        Json report;
        guarded("metrics", 0, [&] {
            KeypointSet keys;
            for (const auto& s : organs) {
                const KeypointSet k = shell_keypoints(
                    s.base, s.config.label, SamplingDensity{s.config.n_u, s.config.n_v, s.config.n_p},
                    config.tre_stride);
                keys.points.insert(keys.points.end(), k.points.begin(), k.points.end());
            }
            write_json(Json(keys), bundle.path("keypoints.json"));
            bundle.emit("keypoints.json", "metrics");

            EvalContext ctx;
            ctx.static_labels = &labels;
            ctx.deformed_labels = &mask_kmax;
            ctx.gt_push = &push_kmax;
            ctx.gt_pull = &pull_kmax;
            ctx.keypoints = &keys;
            ctx.dose = have_dose ? &dose : nullptr;
            for (const auto& s : organs) ctx.labels.push_back(s.config.label);
            ctx.dose_floor_gy = config.dose_floor_gy;
            ctx.signed_dwe = config.signed_dwe;
            ctx.motion_bin_mm = config.motion_bin_mm;
            ctx.dose_bin_gy = config.dose_bin_gy;

            // Heatmap slice through the middle of the first organ.
            const Centerline axis = surface_axis(organs.front().base);
            const Index3 mid = geom.nearest_index(axis.point_at(0.5));
            HeatmapOptions hm;
            hm.axis = 2;
            hm.index = std::clamp<std::int64_t>(mid[2], 0, geom.dims[2] - 1);
            {
                HeatmapOptions gray = hm;
                gray.ramp = ColorRamp::gray;
                render_heatmap(input, gray, bundle.path("input.ppm"));
                bundle.emit("input.ppm", "metrics");
                bundle.emit("input.ppm.legend.txt", "metrics");
                render_heatmap(magnitude(push_kmax), hm, bundle.path("gt_displacement.ppm"));
                bundle.emit("gt_displacement.ppm", "metrics");
                bundle.emit("gt_displacement.ppm.legend.txt", "metrics");
            }

            Json cands = Json::array();
            for (const auto& [name, field] : candidates) {
                CandidateReport cr = evaluate_candidate(name, field, ctx, exec);
                const std::string mcsv = "rmse_motion_" + name + ".csv";
                std::ofstream(bundle.path(mcsv)) << bins_csv(cr.motion_bins);
                bundle.emit(mcsv, "metrics");
                if (have_dose) {
                    const std::string dcsv = "rmse_dose_" + name + ".csv";
                    std::ofstream(bundle.path(dcsv)) << bins_csv(cr.dose_bins);
                    bundle.emit(dcsv, "metrics");
                }
                const std::string img = "error_" + name + ".ppm";
                render_heatmap(cr.error, hm, bundle.path(img));
                bundle.emit(img, "metrics");
                bundle.emit(img + ".legend.txt", "metrics");
                cands.push_back(std::move(cr.json));
            }

            Json organ_reports = Json::array();
            for (std::size_t o = 0; o < organs.size(); ++o) {
                const auto& s = organs[o];
                const Json& phases = field_stats["organs"][o]["phases"];
                double max_disp = 0.0, max_abs_logj = 0.0;
                std::int64_t foldings = 0;
                for (const auto& p : phases) {
                    max_disp = std::max(max_disp, p["displacement_mm"]["max"].get<double>());
                    max_abs_logj = std::max(max_abs_logj, std::abs(p["log_jacobian_mean"].get<double>()));
                    foldings += p["foldings"].get<std::int64_t>();
                }
                organ_reports.push_back(Json{{"label", s.config.label},
                                             {"name", s.name},
                                             {"wave", s.wave},
                                             {"centerline_length_mm", s.centerline.length()},
                                             {"n_sections", s.base.section_count()},
                                             {"n_rays", s.base.ray_count()},
                                             {"max_displacement_mm", max_disp},
                                             {"max_abs_mean_log_jacobian", max_abs_logj},
                                             {"foldings", foldings},
                                             {"phases", phases}});
            }
            report = Json{{"n_phases", config.n_phases},
                          {"max_deformation_phase", kmax},
                          {"geometry", geom},
                          {"organs", organ_reports},
                          {"inversion", field_stats["inversion"]},
                          {"registration", reg_info},
                          {"candidates", cands}};
            write_json(report, bundle.path("report.json"));
            bundle.emit("report.json", "metrics");
        });
        bundle.stage("metrics", "", seconds_since(t_metrics), false);

        int n_volumes = 0;
        for (int k = 0; k < config.n_phases; ++k) n_volumes += bundle.has(phase_name("phase_", k)) ? 1 : 0;
        summary["n_phase_volumes"] = n_volumes;
        summary["max_deformation_phase"] = kmax;
        Json maxd = Json::object();
        for (const auto& o : report["organs"]) maxd[o["name"].get<std::string>()] = o["max_displacement_mm"];
        summary["max_displacement_mm"] = maxd;

        const Json manifest = bundle.manifest(config_sha, summary, seconds_since(t_start), Json());
        write_json(manifest, bundle.path("manifest.json"));
        return RunResult{bundle.dir(), manifest, report};
    } catch (const PipelineError& e) {
        Json err{{"code", e.code()}, {"message", e.what()}, {"stage", e.stage()}, {"organ", e.organ()}};
        try {
            write_json(bundle.manifest(config_sha, summary, seconds_since(t_start), err),
                       bundle.path("manifest.json"));
        } catch (...) {
        }
        throw;
    }
}

}  // namespace dtwin
