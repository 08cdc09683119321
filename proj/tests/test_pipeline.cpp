#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "dtwin/heatmap.hpp"
#include "dtwin/nifti.hpp"
#include "dtwin/pipeline.hpp"
#include "test_util.hpp"

using namespace dtwin;
using dtwin_test::TempDir;
namespace fs = std::filesystem;

namespace {

PhantomSpec small_phantom() {
    PhantomSpec s;
    s.geometry = GridGeometry({40, 40, 48}, {1.5, 1.5, 2.0});
    TubeSpec t;
    t.curve.start = {29.25, 29.25, 14.0};
    t.curve.end = {29.25, 29.25, 80.0};
    t.radius_start = t.radius_end = 11.0;
    s.organs.push_back(t);
    s.dose.push_back(DoseBlob{{29.25, 29.25, 47.0}, 15.0, 50.0});
    return s;
}

RunConfig small_config(const fs::path& out, double amplitude) {
    RunConfig c;
    c.phantom = small_phantom();
    OrganConfig o;
    o.label = 1;
    o.wave = WaveParams{amplitude, 5.0, 33.0, 0.0, 0.0, 21};
    o.centerline = CenterlineSource::analytic;
    o.n_sections = 14;
    c.organs.push_back(o);
    c.output = out.string();
    return c;
}

std::map<std::string, std::string> checksums(const Json& manifest) {
    std::map<std::string, std::string> m;
    for (const auto& f : manifest["files"]) m[f["path"].get<std::string>()] = f["sha256"].get<std::string>();
    return m;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST(Pipeline, Sha256KnownVectors) {
    EXPECT_EQ(sha256_hex("abc", 3), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex("", 0), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    TempDir d;
    std::ofstream(d.path / "x") << "abc";
    EXPECT_EQ(sha256_file(d.path / "x"), sha256_hex("abc", 3));
}

TEST(Pipeline, ConfigRoundTrip) {
    RunConfig c = small_config("/tmp/out", 16.0);
    c.organs[0].endpoints = std::make_pair(Index3{1, 2, 3}, Index3{4, 5, 6});
    c.registration = {"hsof", "demons_diffeo"};
    c.reg.levels = 2;
    c.seed = 99;
    c.signed_dwe = true;
    const Json j = c;
    const RunConfig back = j.get<RunConfig>();
    EXPECT_EQ(Json(back).dump(), j.dump());
    EXPECT_EQ(back.organs, c.organs);
    EXPECT_EQ(back.seed, 99u);
    ASSERT_TRUE(back.phantom);
    EXPECT_EQ(back.phantom->geometry, c.phantom->geometry);
}

TEST(Pipeline, ConfigValidation) {
    auto code = [](const RunConfig& c) {
        try {
            c.validate();
        } catch (const Error& e) {
            return e.code();
        }
        return std::string("ok");
    };
    RunConfig c = small_config("/tmp/out", 16.0);
    EXPECT_EQ(code(c), "ok");
    auto d = c;
    d.registration = {"bogus"};
    EXPECT_EQ(code(d), "config.invalid");
    d = c;
    d.organs.push_back(d.organs[0]);
    EXPECT_EQ(code(d), "config.invalid");
    d = c;
    d.phantom.reset();
    EXPECT_EQ(code(d), "config.invalid");
    d = c;
    d.organs[0].wave.wavelength_mm = -1;
    EXPECT_EQ(code(d), "config.invalid");
}

TEST(Pipeline, CombineFieldsAveragesOverlaps) {
    GridGeometry g({3, 1, 1}, {1, 1, 1});
    VectorField a(g), b(g);
    BinaryMask ra(g), rb(g);
    a.vectors = {{1, 0, 0}, {2, 0, 0}, {9, 9, 9}};
    b.vectors = {{7, 7, 7}, {4, 0, 0}, {0, 3, 0}};
    ra.data = {1, 1, 0};
    rb.data = {0, 1, 1};
    const VectorField c = combine_fields({a, b}, {ra, rb});
    EXPECT_EQ(c.vectors[0], (Vec3{1, 0, 0}));
    EXPECT_EQ(c.vectors[1], (Vec3{3, 0, 0}));
    EXPECT_EQ(c.vectors[2], (Vec3{0, 3, 0}));
}

TEST(Heatmap, ConstantGridIsUniform) {
    ScalarGrid g(GridGeometry({5, 4, 3}, {1, 1, 1}), ScalarKind::intensity, 2.5);
    const Image img = render_slice(g, {2, 1});
    EXPECT_EQ(img.width, 5);
    EXPECT_EQ(img.height, 4);
    for (const auto& p : img.pixels) EXPECT_EQ(p, img.pixels.front());
}

TEST(Heatmap, TwoValuesGiveTwoColors) {
    ScalarGrid g(GridGeometry({6, 6, 2}, {1, 1, 1}));
    for (std::int64_t j = 0; j < 6; ++j)
        for (std::int64_t i = 0; i < 6; ++i) g.at({i, j, 0}) = i < 3 ? 1.0 : 4.0;
    std::set<std::array<std::uint8_t, 3>> colors;
    for (const auto& p : render_slice(g, {2, 0}).pixels) colors.insert(p);
    EXPECT_EQ(colors.size(), 2u);
}

TEST(Heatmap, RampIsMonotone) {
    ScalarGrid g(GridGeometry({64, 3, 2}, {1, 1, 1}));
    for (std::int64_t i = 0; i < 64; ++i)
        for (std::int64_t j = 0; j < 3; ++j) g.at({i, j, 1}) = static_cast<double>(i);
    for (ColorRamp ramp : {ColorRamp::gray, ColorRamp::heat}) {
        HeatmapOptions o{2, 1, ramp, std::nullopt, std::nullopt};
        const Image img = render_slice(g, o);
        for (int row = 0; row < img.height; ++row)
            for (int col = 1; col < img.width; ++col) {
                const auto& a = img.pixels[static_cast<std::size_t>(row * img.width + col - 1)];
                const auto& b = img.pixels[static_cast<std::size_t>(row * img.width + col)];
                for (int c = 0; c < 3; ++c) EXPECT_LE(a[static_cast<std::size_t>(c)], b[static_cast<std::size_t>(c)]);
                EXPECT_LT(a[0] + a[1] + a[2], b[0] + b[1] + b[2] + 1);
            }
        EXPECT_EQ(img.pixels.front(), ramp_color(ramp, 0.0));
        EXPECT_EQ(img.pixels[63], ramp_color(ramp, 1.0));
    }
}

TEST(Heatmap, PpmAndLegend) {
    TempDir d;
    ScalarGrid g(GridGeometry({4, 3, 2}, {1, 1, 1}));
    g.values[5] = 3.0;
    HeatmapOptions o{2, 0, ColorRamp::gray, 0.0, 6.0};
    render_heatmap(g, o, d.path / "a.ppm");
    const std::string ppm = read_bytes(d.path / "a.ppm");
    const std::string header = "P6\n4 3\n255\n";
    ASSERT_EQ(ppm.size(), header.size() + 36);
    EXPECT_EQ(ppm.substr(0, header.size()), header);
    // voxel (1,1) sits on the middle row; value 3 of [0,6] -> 128
    EXPECT_EQ(static_cast<unsigned char>(ppm[header.size() + 3 * (1 * 4 + 1)]), 128);
    const std::string legend = read_bytes(d.path / "a.ppm.legend.txt");
    EXPECT_NE(legend.find("min 0\n"), std::string::npos);
    EXPECT_NE(legend.find("max 6\n"), std::string::npos);
    EXPECT_THROW(render_slice(g, {2, 2}), Error);
    EXPECT_THROW(render_slice(g, {3, 0}), Error);
}

TEST(Pipeline, ZeroAmplitudeIsIdentity) {
    TempDir d;
    const RunResult r = run(small_config(d.path, 0.0));
    const std::string input = read_bytes(d.path / "input.nii");
    const LabelMask labels = read_label_mask(d.path / "labels.nii");
    for (int k = 0; k < 21; ++k) {
        const std::string name = "phase_" + std::to_string(k) + ".nii";
        EXPECT_EQ(read_bytes(d.path / name), input) << name;
        EXPECT_EQ(read_label_mask(d.path / ("mask_" + std::to_string(k) + ".nii")).labels, labels.labels);
    }
    for (const auto& c : r.report["candidates"]) {
        EXPECT_EQ(c["tre_mm"]["max"].get<double>(), 0.0);
        EXPECT_EQ(c["organs"][0]["dsc"].get<double>(), 1.0);
        EXPECT_EQ(c["organs"][0]["hd95_mm"].get<double>(), 0.0);
        EXPECT_EQ(c["dwe_percent"].get<double>(), 0.0);
    }
    EXPECT_EQ(r.manifest["summary"]["n_phase_volumes"].get<int>(), 21);
}

TEST(Pipeline, ManifestCompleteAndRerunIsCachedAndIdentical) {
    TempDir d;
    const RunConfig c = small_config(d.path, 8.0);
    const RunResult a = run(c);

    std::set<std::string> listed;
    for (const auto& f : a.manifest["files"]) {
        const auto rel = f["path"].get<std::string>();
        listed.insert(rel);
        EXPECT_EQ(sha256_file(d.path / rel), f["sha256"].get<std::string>()) << rel;
        EXPECT_FALSE(f.value("stale", false)) << rel;
    }
    for (const auto& e : fs::directory_iterator(d.path)) {
        const auto rel = e.path().filename().string();
        if (rel != "manifest.json") EXPECT_TRUE(listed.count(rel)) << rel;
    }
    for (const char* must : {"gt_push_0.nii", "gt_pull_20.nii", "phase_20.nii", "mask_7.nii", "keypoints.json",
                             "surfaces.json", "centerlines.json", "report.json", "rmse_motion_identity.csv",
                             "rmse_dose_gt_inverse.csv", "error_gt_inverse.ppm", "error_gt_inverse.ppm.legend.txt"})
        EXPECT_TRUE(listed.count(must)) << must;

    // Phase 20 closes the cycle.
    EXPECT_EQ(read_bytes(d.path / "gt_push_20.nii"), read_bytes(d.path / "gt_push_0.nii"));

    const RunResult b = run(c);
    EXPECT_EQ(checksums(a.manifest), checksums(b.manifest));
    EXPECT_EQ(a.report.dump(), b.report.dump());
    std::map<std::string, bool> cached;
    for (const auto& s : b.manifest["stages"]) cached[s["name"].get<std::string>()] = s["cached"].get<bool>();
    EXPECT_TRUE(cached["input"]);
    EXPECT_TRUE(cached["anatomy"]);
    EXPECT_TRUE(cached["fields"]);
    EXPECT_TRUE(cached["synthesis"]);

    // A tampered output invalidates its stage.
    { std::ofstream(d.path / "phase_3.nii", std::ios::app) << "x"; }
    const RunResult e = run(c);
    for (const auto& s : e.manifest["stages"])
        if (s["name"] == "synthesis") EXPECT_FALSE(s["cached"].get<bool>());
    EXPECT_EQ(checksums(a.manifest), checksums(e.manifest));
}

TEST(Pipeline, WorkerCountDoesNotChangeOutputs) {
    TempDir d1, d2;
    RunConfig c1 = small_config(d1.path, 8.0), c2 = small_config(d2.path, 8.0);
    c2.workers = 3;
    EXPECT_EQ(checksums(run(c1).manifest), checksums(run(c2).manifest));
}

TEST(Pipeline, StageErrorsCarryStageAndOrgan) {
    TempDir d;
    RunConfig c = small_config(d.path, 8.0);
    c.organs[0].label = 5;
    c.organs[0].centerline = CenterlineSource::skeleton;
    try {
        run(c);
        FAIL() << "expected a PipelineError";
    } catch (const PipelineError& e) {
        EXPECT_EQ(e.stage(), "input");
        EXPECT_EQ(e.code(), "config.invalid");
    }
    EXPECT_TRUE(fs::exists(d.path / "manifest.json"));
    EXPECT_TRUE(read_json(d.path / "manifest.json").contains("error"));
}

TEST(Pipeline, EndpointsSnapToSkeleton) {
    PhantomSpec s = small_phantom();
    s.organs[0].round_caps = true;
    s.organs[0].radius_start = s.organs[0].radius_end = 5.0;
    const Phantom p = make_phantom(s);
    OrganConfig o;
    o.endpoints = std::make_pair(Index3{0, 0, 0}, Index3{39, 39, 47});
    BinaryMask skel;
    const Centerline c = organ_centerline(p.labels, o, nullptr, &skel);
    EXPECT_GT(skel.count(), 0);
    EXPECT_GT(c.length(), 50.0);
    EXPECT_LT(c.points.front().z, c.points.back().z);
}
