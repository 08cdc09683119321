// Command-line front end: one subcommand per pipeline step plus `run` and `qa`.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <regex>

#include "dtwin/field.hpp"
#include "dtwin/heatmap.hpp"
#include "dtwin/nifti.hpp"
#include "dtwin/pipeline.hpp"
#include "dtwin/qa.hpp"

using namespace dtwin;
namespace fs = std::filesystem;

namespace {

std::optional<Endpoints> parse_endpoints(const std::vector<std::int64_t>& v) {
    if (v.empty()) return std::nullopt;
    if (v.size() != 6) throw Error("cli.usage", "--endpoints takes six voxel indices");
    return Endpoints{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
}

PhantomSpec load_phantom_spec(const std::string& spec) {
    if (spec == "P-A") return fixture_pa();
    if (spec == "P-B") return fixture_pb();
    return json_as<PhantomSpec>(read_json(spec), "phantom.bad_spec");
}

WaveParams wave_from(const std::string& preset, const std::string& file, std::optional<double> amplitude,
                     std::optional<double> speed, std::optional<double> wavelength) {
    WaveParams w = preset == "large_bowel" ? WaveParams::large_bowel() : WaveParams::stomach();
    if (preset != "stomach" && preset != "large_bowel") throw Error("cli.usage", "unknown wave preset '" + preset + "'");
    if (!file.empty()) w = json_as<WaveParams>(read_json(file), "motion.bad_params");
    if (amplitude) w.amplitude_mm = *amplitude;
    if (speed) w.speed_mm_s = *speed;
    if (wavelength) w.wavelength_mm = *wavelength;
    return w;
}

/// gt_push_<k>.nii files (or any *.nii) of a directory in phase order.
std::vector<fs::path> reference_files(const fs::path& dir) {
    std::vector<std::pair<long, fs::path>> found, push;
    const std::regex numbered(R"(.*?(\d+)\.nii$)");
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        std::smatch m;
        if (!std::regex_match(name, m, numbered)) continue;
        (name.rfind("gt_push_", 0) == 0 ? push : found).emplace_back(std::stol(m[1].str()), e.path());
    }
    if (!push.empty()) found = std::move(push);
    std::sort(found.begin(), found.end());
    std::vector<fs::path> out;
    for (auto& [k, p] : found) out.push_back(p);
    if (out.empty()) throw Error("qa.phase_count", "no numbered .nii fields in " + dir.string());
    return out;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    f << text;
    if (!f) throw Error("io.write", "cannot write " + p.string());
}

int fail(const std::string& code, const std::string& message, const Json& extra = Json::object()) {
    Json j{{"error", {{"code", code}, {"message", message}}}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j["error"][it.key()] = it.value();
    std::cerr << j.dump() << std::endl;
    return code == "cli.usage" ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Peristaltic motion digital twin: phantom generation, ground-truth motion synthesis, "
                 "registration and evaluation."};
    app.require_subcommand(1);
    int workers = 1;
    app.add_option("--workers", workers, "worker threads for voxel loops")->check(CLI::PositiveNumber);

    // phantom
    auto* ph = app.add_subcommand("phantom", "generate a tube phantom (intensity, labels, dose)");
    std::string ph_spec = "P-A", ph_out;
    std::optional<std::uint64_t> ph_seed;
    ph->add_option("--spec", ph_spec, "P-A, P-B or a phantom JSON file");
    ph->add_option("--seed", ph_seed, "noise seed");
    ph->add_option("--out", ph_out, "output directory")->required();

    // skeleton
    auto* sk = app.add_subcommand("skeleton", "thin one organ label to its skeleton");
    std::string sk_mask, sk_out;
    int sk_label = 1;
    sk->add_option("--mask", sk_mask)->required();
    sk->add_option("--label", sk_label);
    sk->add_option("--out", sk_out, "skeleton NIfTI")->required();

    // centerline
    auto* cl = app.add_subcommand("centerline", "longest skeleton path as a smoothed centerline");
    std::string cl_mask, cl_out;
    int cl_label = 1;
    std::vector<std::int64_t> cl_ends;
    cl->add_option("--mask", cl_mask)->required();
    cl->add_option("--label", cl_label);
    cl->add_option("--endpoints", cl_ends, "i j k i j k")->expected(6);
    cl->add_option("--out", cl_out, "centerline JSON")->required();

    // fit-surface
    auto* fs_cmd = app.add_subcommand("fit-surface", "cast sections along a centerline and fit the tube surface");
    std::string fs_mask, fs_cl, fs_out;
    int fs_label = 1, fs_sections = 0, fs_rays = 16;
    fs_cmd->add_option("--mask", fs_mask)->required();
    fs_cmd->add_option("--label", fs_label);
    fs_cmd->add_option("--centerline", fs_cl, "centerline JSON (default: extracted from the mask)");
    fs_cmd->add_option("--sections", fs_sections, "0: one per 5 mm, at least 12");
    fs_cmd->add_option("--rays", fs_rays);
    fs_cmd->add_option("--out", fs_out, "surface JSON")->required();

    // synth
    auto* sy = app.add_subcommand("synth", "deform a surface over the phases and build ground-truth fields");
    std::string sy_surface, sy_mask, sy_input, sy_out, sy_preset = "stomach", sy_wave;
    int sy_label = 1, sy_phases = 21;
    std::optional<double> sy_amp, sy_speed, sy_lambda;
    sy->add_option("--surface", sy_surface)->required();
    sy->add_option("--mask", sy_mask)->required();
    sy->add_option("--label", sy_label);
    sy->add_option("--input", sy_input, "intensity volume to warp into phase volumes");
    sy->add_option("--preset", sy_preset, "stomach or large_bowel");
    sy->add_option("--wave", sy_wave, "wave parameter JSON");
    sy->add_option("--amplitude", sy_amp);
    sy->add_option("--speed", sy_speed);
    sy->add_option("--wavelength", sy_lambda);
    sy->add_option("--phases", sy_phases);
    sy->add_option("--out", sy_out, "output directory")->required();

    // register
    auto* rg = app.add_subcommand("register", "deformable registration of moving onto fixed");
    std::string rg_fixed, rg_moving, rg_method = "demons", rg_params, rg_out;
    rg->add_option("--fixed", rg_fixed)->required();
    rg->add_option("--moving", rg_moving)->required();
    rg->add_option("--method", rg_method, "hsof, demons or demons_diffeo");
    rg->add_option("--params", rg_params, "registration parameter JSON");
    rg->add_option("--out", rg_out, "backward_pull field NIfTI")->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score a candidate field against ground truth");
    std::string ev_cand, ev_push, ev_pull, ev_static, ev_deformed, ev_dose, ev_surface, ev_out;
    std::vector<int> ev_labels;
    int ev_stride = 1;
    double ev_floor = 0.5, ev_mbin = 1.0, ev_dbin = 10.0;
    bool ev_signed = false;
    ev->add_option("--candidate", ev_cand, "backward_pull field")->required();
    ev->add_option("--gt-push", ev_push)->required();
    ev->add_option("--gt-pull", ev_pull)->required();
    ev->add_option("--static-labels", ev_static)->required();
    ev->add_option("--deformed-labels", ev_deformed)->required();
    ev->add_option("--dose", ev_dose);
    ev->add_option("--surface", ev_surface, "surface JSON for TRE keypoints");
    ev->add_option("--labels", ev_labels, "organ labels (default: all in the static mask)");
    ev->add_option("--tre-stride", ev_stride);
    ev->add_option("--dose-floor", ev_floor);
    ev->add_option("--motion-bin", ev_mbin);
    ev->add_option("--dose-bin", ev_dbin);
    ev->add_flag("--signed-dwe", ev_signed);
    ev->add_option("--out", ev_out, "report JSON")->required();

    // run
    auto* rn = app.add_subcommand("run", "end-to-end run from a JSON config");
    std::string rn_config, rn_output;
    rn->add_option("--config", rn_config)->required();
    rn->add_option("--output", rn_output, "override the output directory");

    // render
    auto* rd = app.add_subcommand("render", "slice heatmap of a scalar grid or field magnitude");
    std::string rd_in, rd_out, rd_ramp = "heat";
    int rd_axis = 2;
    std::int64_t rd_index = -1;
    std::optional<double> rd_min, rd_max;
    rd->add_option("--in", rd_in, "scalar or vector NIfTI")->required();
    rd->add_option("--axis", rd_axis);
    rd->add_option("--index", rd_index, "-1: middle slice");
    rd->add_option("--ramp", rd_ramp, "heat or gray");
    rd->add_option("--min", rd_min);
    rd->add_option("--max", rd_max);
    rd->add_option("--out", rd_out, "PPM path")->required();

    // qa
    auto* qa = app.add_subcommand("qa", "fit waves to a reference motion and compare statistics");
    std::string qa_ref, qa_mask, qa_surface, qa_out;
    int qa_label = 1;
    bool qa_per_phase = false;
    double qa_disp = 0.8, qa_logj = 0.01;
    qa->add_option("--reference", qa_ref, "directory of forward_push fields, one per phase")->required();
    qa->add_option("--mask", qa_mask)->required();
    qa->add_option("--label", qa_label);
    qa->add_option("--surface", qa_surface, "base surface JSON (default: fitted from the mask)");
    qa->add_flag("--per-phase", qa_per_phase, "one parameter set per phase");
    qa->add_option("--max-displacement-diff", qa_disp);
    qa->add_option("--max-logj-diff", qa_logj);
    qa->add_option("--out", qa_out, "QA report JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("cli.usage", e.what());
    }

    const Exec exec{workers};
    try {
        if (*ph) {
            PhantomSpec spec = load_phantom_spec(ph_spec);
            if (ph_seed) spec.seed = *ph_seed;
            const Phantom p = make_phantom(spec, exec);
            fs::create_directories(ph_out);
            write_nifti(p.intensity, fs::path(ph_out) / "intensity.nii");
            write_nifti(p.labels, fs::path(ph_out) / "labels.nii");
            write_nifti(p.dose, fs::path(ph_out) / "dose.nii");
            write_json(Json{{"spec", spec}, {"organs", p.descriptors}}, fs::path(ph_out) / "descriptors.json");
        } else if (*sk) {
            write_nifti(thin(read_label_mask(sk_mask), sk_label), sk_out);
        } else if (*cl) {
            const LabelMask mask = read_label_mask(cl_mask);
            OrganConfig o;
            o.label = cl_label;
            o.endpoints = parse_endpoints(cl_ends);
            write_json(Json(organ_centerline(mask, o, nullptr)), cl_out);
        } else if (*fs_cmd) {
            const LabelMask mask = read_label_mask(fs_mask);
            OrganConfig o;
            o.label = fs_label;
            o.n_sections = fs_sections;
            o.n_rays = fs_rays;
            const Centerline c = fs_cl.empty() ? organ_centerline(mask, o, nullptr)
                                               : json_as<Centerline>(read_json(fs_cl), "centerline.degenerate");
            write_json(Json(organ_surface(mask, o, c)), fs_out);
        } else if (*sy) {
            const TubeSurface base = json_as<TubeSurface>(read_json(sy_surface), "surface.bad_json");
            const LabelMask labels = read_label_mask(sy_mask);
            const BinaryMask organ = select_label(labels, sy_label);
            WaveParams w = wave_from(sy_preset, sy_wave, sy_amp, sy_speed, sy_lambda);
            w.n_phases = sy_phases;
            const PhaseSequence seq = synth_phases(base, w);
            const fs::path out(sy_out);
            fs::create_directories(out);
            write_json(Json{{"wave", w},
                            {"base", base},
                            {"phases", seq.phases},
                            {"mean_displacement", seq.mean_displacement},
                            {"max_deformation_phase", seq.max_deformation_phase}},
                       out / "surfaces.json");
            std::optional<ScalarGrid> input;
            if (!sy_input.empty()) input = read_scalar_grid(sy_input);
            for (int k = 0; k < sy_phases; ++k) {
                SurfaceField sf = surface_field(base, seq.phases[static_cast<std::size_t>(k)], organ, wave_peak(w), {}, exec);
                quantize_float32(sf.push);
                InverseResult inv = invert(sf.push, &sf.region, {}, exec);
                quantize_float32(inv.field);
                write_nifti(sf.push, out / ("gt_push_" + std::to_string(k) + ".nii"));
                write_nifti(inv.field, out / ("gt_pull_" + std::to_string(k) + ".nii"));
                write_nifti(warp_pull_labels(labels, inv.field, exec), out / ("mask_" + std::to_string(k) + ".nii"));
                if (input) {
                    ScalarGrid v = warp_pull(*input, inv.field, exec);
                    write_nifti(v, out / ("phase_" + std::to_string(k) + ".nii"));
                }
            }
        } else if (*rg) {
            RegParams p;
            if (!rg_params.empty()) p = json_as<RegParams>(read_json(rg_params), "registration.bad_params");
            write_nifti(register_by_name(rg_method, read_scalar_grid(rg_fixed), read_scalar_grid(rg_moving), p, exec),
                        rg_out);
        } else if (*ev) {
            const VectorField cand = read_vector_field(ev_cand);
            const VectorField push = read_vector_field(ev_push), pull = read_vector_field(ev_pull);
            const LabelMask st = read_label_mask(ev_static), de = read_label_mask(ev_deformed);
            std::optional<ScalarGrid> dose;
            if (!ev_dose.empty()) {
                dose = read_scalar_grid(ev_dose);
                dose->kind = ScalarKind::dose_gray;
            }
            std::optional<KeypointSet> keys;
            if (!ev_surface.empty()) {
                const Json sj = read_json(ev_surface);
                const TubeSurface s = json_as<TubeSurface>(sj.contains("base") ? sj["base"] : sj, "surface.bad_json");
                keys = shell_keypoints(s, ev_labels.empty() ? 1 : ev_labels.front(), {}, ev_stride);
            }
            EvalContext ctx;
            ctx.static_labels = &st;
            ctx.deformed_labels = &de;
            ctx.gt_push = &push;
            ctx.gt_pull = &pull;
            ctx.keypoints = keys ? &*keys : nullptr;
            ctx.dose = dose ? &*dose : nullptr;
            ctx.labels = ev_labels;
            if (ctx.labels.empty())
                for (const auto& [l, name] : st.label_names) ctx.labels.push_back(l);
            ctx.dose_floor_gy = ev_floor;
            ctx.signed_dwe = ev_signed;
            ctx.motion_bin_mm = ev_mbin;
            ctx.dose_bin_gy = ev_dbin;
            CandidateReport r = evaluate_candidate(fs::path(ev_cand).stem().string(), cand, ctx, exec);
            write_json(r.json, ev_out);
            write_text(ev_out + ".motion.csv", bins_csv(r.motion_bins));
            if (dose) write_text(ev_out + ".dose.csv", bins_csv(r.dose_bins));
        } else if (*rn) {
            RunConfig c = json_as<RunConfig>(read_json(rn_config), "config.invalid");
            if (!rn_output.empty()) c.output = rn_output;
            if (app.get_option("--workers")->count() > 0) c.workers = workers;
            const RunResult r = run(c);
            std::cout << Json{{"output", r.output.string()}, {"summary", r.manifest["summary"]}}.dump(2) << std::endl;
        } else if (*rd) {
            ScalarGrid g;
            const NiftiImage img = [&]() -> NiftiImage {
                try {
                    return read_nifti(rd_in);
                } catch (const Error& e) {
                    if (e.code() != "nifti.dim_mismatch" && e.code() != "nifti.kind") throw;
                    return magnitude(read_vector_field(rd_in));
                }
            }();
            if (const auto* s = std::get_if<ScalarGrid>(&img)) {
                g = *s;
            } else {
                const auto& m = std::get<LabelMask>(img);
                g = ScalarGrid(m.geometry);
                for (std::size_t l = 0; l < m.labels.size(); ++l) g.values[l] = m.labels[l];
            }
            HeatmapOptions o;
            o.axis = rd_axis;
            o.index = rd_index >= 0 ? rd_index
                                    : g.geometry.dims[static_cast<std::size_t>(std::clamp(rd_axis, 0, 2))] / 2;
            if (rd_ramp == "gray") o.ramp = ColorRamp::gray;
            else if (rd_ramp != "heat") throw Error("cli.usage", "unknown ramp '" + rd_ramp + "'");
            o.min = rd_min;
            o.max = rd_max;
            render_heatmap(g, o, rd_out);
        } else if (*qa) {
            std::vector<VectorField> refs;
            for (const auto& p : reference_files(qa_ref)) refs.push_back(read_vector_field(p));
            const LabelMask mask = read_label_mask(qa_mask);
            TubeSurface base;
            if (!qa_surface.empty()) {
                const Json sj = read_json(qa_surface);
                base = json_as<TubeSurface>(sj.contains("base") ? sj["base"] : sj, "surface.bad_json");
            } else {
                OrganConfig o;
                o.label = qa_label;
                base = organ_surface(mask, o, organ_centerline(mask, o, nullptr));
            }
            QaOptions opt;
            opt.per_phase = qa_per_phase;
            opt.n_phases = static_cast<int>(refs.size());
            opt.thresholds = {qa_disp, qa_logj};
            const QaReport r = qa_compare(refs, base, select_label(mask, qa_label), opt, exec);
            write_json(Json(r), qa_out);
            std::cout << (r.pass ? "pass" : "fail") << std::endl;
            return r.pass ? 0 : 3;
        }
    } catch (const PipelineError& e) {
        return fail(e.code(), e.what(), Json{{"stage", e.stage()}, {"organ", e.organ()}});
    } catch (const Error& e) {
        return fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}
