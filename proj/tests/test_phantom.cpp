#include <gtest/gtest.h>

#include <numbers>

#include "dtwin/phantom.hpp"
#include "dtwin/skeleton.hpp"
#include "dtwin/surface.hpp"

using namespace dtwin;

namespace {

constexpr double kPi = std::numbers::pi;

TubeSpec straight_tube(double r, Vec3 a, Vec3 b) {
    TubeSpec t;
    t.curve.kind = CurveKind::line;
    t.curve.start = a;
    t.curve.end = b;
    t.radius_start = t.radius_end = r;
    return t;
}

TubeSpec helix_stomach() {
    TubeSpec t;
    t.name = "stomach";
    t.curve.kind = CurveKind::helix;
    t.curve.center = {40, 40, 20};
    t.curve.e1 = {1, 0, 0};
    t.curve.e2 = {0, 1, 0};
    t.curve.radius = 18;
    t.curve.angle0 = 0.0;
    t.curve.angle1 = 1.2 * kPi;
    t.curve.pitch = 40;
    t.radius_start = 14;
    t.radius_end = 8;
    return t;
}

double hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    auto directed = [](const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
        double h = 0.0;
        for (const auto& x : p) {
            double best = 1e300;
            for (const auto& y : q) best = std::min(best, norm(x - y));
            h = std::max(h, best);
        }
        return h;
    };
    return std::max(directed(a, b), directed(b, a));
}

}  // namespace

TEST(Curve, LengthsAndTangents) {
    CurveSpec arc;
    arc.kind = CurveKind::arc;
    arc.radius = 10;
    arc.angle0 = 0;
    arc.angle1 = kPi / 2;
    EXPECT_NEAR(arc.length(), 5 * kPi, 1e-12);
    EXPECT_NEAR(norm(arc.point(1.0) - Vec3{0, 10, 0}), 0.0, 1e-12);
    EXPECT_NEAR(norm(arc.tangent(0.0) - Vec3{0, 1, 0}), 0.0, 1e-12);
    const auto h = helix_stomach();
    double poly = 0.0;
    for (int i = 0; i < 4000; ++i) poly += norm(h.curve.point((i + 1) / 4000.0) - h.curve.point(i / 4000.0));
    EXPECT_NEAR(h.curve.length(), poly, 1e-4);
    const double ds = 1e-6;
    const Vec3 fd = normalized(h.curve.point(0.3 + ds) - h.curve.point(0.3 - ds));
    EXPECT_NEAR(norm(fd - h.curve.tangent(0.3)), 0.0, 1e-8);
}

TEST(Curve, ClosestMatchesDenseScan) {
    const auto h = helix_stomach();
    CurveSpec arc = h.curve;
    arc.kind = CurveKind::arc;
    const CurveSpec line = straight_tube(5, {0, 0, 0}, {10, 20, 5}).curve;
    const Vec3 probes[] = {{40, 40, 20}, {60, 45, 30}, {20, 70, 50}, {0, 0, 0}, {55, 20, 10}};
    for (const CurveSpec* c : {&h.curve, static_cast<const CurveSpec*>(&arc), &line}) {
        for (const auto& x : probes) {
            double best = 1e300;
            for (int i = 0; i <= 20000; ++i) best = std::min(best, norm(x - c->point(i / 20000.0)));
            EXPECT_NEAR(norm(x - c->point(c->closest(x))), best, 1e-3);
        }
    }
}

TEST(Phantom, StraightTubeVolume) {
    PhantomSpec s;
    s.geometry = GridGeometry({40, 40, 80}, {1, 1, 1});
    s.organs.push_back(straight_tube(10, {19.5, 19.5, 15}, {19.5, 19.5, 65}));
    const auto ph = make_phantom(s);
    const double analytic = kPi * 100.0 * 50.0;
    const auto n = static_cast<double>(select_label(ph.labels, 1).count());
    EXPECT_LT(std::abs(n - analytic) / analytic, 0.03);
    EXPECT_EQ(ph.labels.label_names.at(1), "stomach");

    s.organs[0].round_caps = true;
    const auto rounded = static_cast<double>(select_label(make_phantom(s).labels, 1).count());
    const double capsule = analytic + 4.0 / 3.0 * kPi * 1000.0;
    EXPECT_LT(std::abs(rounded - capsule) / capsule, 0.03);
}

TEST(Phantom, HelixDeterministic) {
    PhantomSpec s;
    s.geometry = GridGeometry({64, 64, 48}, {1.25, 1.25, 1.5});
    s.organs.push_back(helix_stomach());
    s.noise_sd = 0.05;
    s.seed = 7;
    const auto a = make_phantom(s);
    const auto b = make_phantom(s, Exec{3});
    EXPECT_EQ(a.intensity.values, b.intensity.values);
    EXPECT_EQ(a.labels.labels, b.labels.labels);
    EXPECT_GT(select_label(a.labels, 1).count(), 1000);
    s.seed = 8;
    EXPECT_NE(make_phantom(s).intensity.values, a.intensity.values);
}

TEST(Phantom, DoseBlobPeak) {
    PhantomSpec s;
    s.geometry = GridGeometry({21, 21, 21}, {2, 2, 2});
    s.dose.push_back({{20, 20, 20}, 6.0, 50.0});
    const auto ph = make_phantom(s);
    EXPECT_EQ(ph.dose.kind, ScalarKind::dose_gray);
    EXPECT_DOUBLE_EQ(ph.dose.at({10, 10, 10}), 50.0);
    EXPECT_NEAR(ph.dose.at({13, 10, 10}), 50.0 * std::exp(-0.5), 1e-12);
}

TEST(Phantom, IntersectingTubesRejected) {
    PhantomSpec s;
    s.geometry = GridGeometry({40, 40, 40}, {1, 1, 1});
    s.organs.push_back(straight_tube(5, {10, 10, 5}, {10, 10, 35}));
    auto b = straight_tube(5, {22.5, 10, 5}, {22.5, 10, 35});
    b.label = 2;
    b.name = "bowel";
    s.organs.push_back(b);
    EXPECT_NO_THROW(s.validate());  // 2.5 mm gap
    s.organs[1].curve.start.x = s.organs[1].curve.end.x = 21.5;
    try {
        make_phantom(s);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "phantom.intersecting");
    }
    s.organs[1].label = 1;
    EXPECT_THROW(s.validate(), Error);
}

TEST(Phantom, SkeletonRecoversSlenderTube) {
    PhantomSpec s;
    s.geometry = GridGeometry({70, 50, 40}, {1, 1, 1});
    TubeSpec t;
    t.curve.kind = CurveKind::arc;
    t.curve.center = {35, 5, 20};
    t.curve.e1 = {1, 0, 0};
    t.curve.e2 = {0, 1, 0};
    t.curve.radius = 30;
    t.curve.angle0 = kPi / 6;
    t.curve.angle1 = 5 * kPi / 6;
    t.radius_start = t.radius_end = 5;
    t.round_caps = true;
    s.organs.push_back(t);
    const auto ph = make_phantom(s);
    const auto c = extract_centerline(ph.labels, 1);
    const auto truth = analytic_centerline(t, 0.25);
    EXPECT_LE(hausdorff(c.points, truth.points), 2.0 * std::sqrt(3.0));
}

TEST(Phantom, CastRadiiMatchProfile) {
    PhantomSpec s;
    s.geometry = GridGeometry({40, 40, 60}, {1, 1, 1});
    auto t = straight_tube(10, {19.5, 19.5, 5}, {19.5, 19.5, 55});
    t.radius_end = 7;
    s.organs.push_back(t);
    const auto ph = make_phantom(s);
    const auto axis = analytic_centerline(t, 1.0, 0.5);
    const auto secs = cast_sections(ph.labels, 1, resample_centerline(axis, 12));
    const double half_diag = 0.5 * std::sqrt(3.0);
    for (const auto& sec : secs) {
        const double sp = t.curve.closest(sec.center);
        for (double r : sec.radii) EXPECT_NEAR(r, t.radius_at(sp), half_diag);
    }
}

TEST(Phantom, FixturesFitTheGrid) {
    for (const auto& spec : {fixture_pa(), fixture_pb()}) {
        const auto ph = make_phantom(spec);
        const auto organ = select_label(ph.labels, 1);
        EXPECT_NEAR(ph.descriptors.at(0).length_mm, 110.0, 0.1);
        // At least 26 mm of background between the organ and every grid face.
        const auto& g = organ.geometry;
        for (std::int64_t l = 0; l < g.voxel_count(); ++l) {
            if (!organ.data[static_cast<std::size_t>(l)]) continue;
            const Vec3 x = g.world(l);
            for (std::size_t a = 0; a < 3; ++a) {
                const double hi = g.origin[a] + static_cast<double>(g.dims[a] - 1) * g.spacing[a];
                ASSERT_GE(x[a] - g.origin[a], 26.0);
                ASSERT_GE(hi - x[a], 26.0);
            }
        }
    }
    // P-A: low dose on the organ; P-B: the blob peak sits on the organ.
    const auto pa = make_phantom(fixture_pa());
    const auto pb = make_phantom(fixture_pb());
    const auto organ = select_label(pa.labels, 1);
    double max_a = 0.0, max_b = 0.0;
    for (std::size_t l = 0; l < organ.data.size(); ++l) {
        if (!organ.data[l]) continue;
        max_a = std::max(max_a, pa.dose.values[l]);
        max_b = std::max(max_b, pb.dose.values[l]);
    }
    EXPECT_GT(max_a, 5.0);
    EXPECT_LT(max_a, 30.0);
    EXPECT_GT(max_b, 45.0);
}
