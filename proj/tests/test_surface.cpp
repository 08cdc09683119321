#include <gtest/gtest.h>

#include <numbers>

#include "dtwin/surface.hpp"

using namespace dtwin;

namespace {

constexpr double kPi = std::numbers::pi;

Centerline straight(double length, int n, Vec3 start = {}, Vec3 dir = {0, 0, 1}) {
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) pts.push_back(start + dir * (length * i / (n - 1)));
    return make_centerline(pts);
}

// Digital cylinder along z centred at (cx, cy) with given radius, z in [z0, z1).
LabelMask cylinder_mask(const GridGeometry& g, double cx, double cy, double radius, double z0, double z1) {
    LabelMask m(g);
    m.label_names[1] = "tube";
    for (std::int64_t l = 0; l < g.voxel_count(); ++l) {
        const Vec3 p = g.world(l);
        if (std::hypot(p.x - cx, p.y - cy) <= radius && p.z >= z0 && p.z < z1) m.labels[static_cast<std::size_t>(l)] = 1;
    }
    return m;
}

std::vector<SectionalCurve> circle_sections(int n_sections, int n_rays, double radius) {
    std::vector<SectionalCurve> out;
    for (int i = 0; i < n_sections; ++i) {
        SectionalCurve s;
        s.section_index = i;
        s.arclength = 10.0 * i;
        s.center = {0, 0, 10.0 * i};
        for (int j = 0; j < n_rays; ++j) {
            const double th = 2 * kPi * j / n_rays;
            const Vec3 d{std::cos(th), std::sin(th), 0};
            s.radial_dirs.push_back(d);
            s.radii.push_back(radius);
            s.control_points.push_back(s.center + d * radius);
            s.truncated.push_back(false);
        }
        out.push_back(s);
    }
    return out;
}

// Oracle: radius range of a uniform periodic cubic B-spline over a regular
// n-gon of unit radius, from the closed-form uniform cubic basis.
std::pair<double, double> bspline_circle_range(int n) {
    double lo = 1e9, hi = 0.0;
    for (int k = 0; k <= 4000; ++k) {
        const double t = static_cast<double>(k) / 4000.0;
        const double b0 = (1 - t) * (1 - t) * (1 - t) / 6.0;
        const double b1 = (3 * t * t * t - 6 * t * t + 4) / 6.0;
        const double b2 = (-3 * t * t * t + 3 * t * t + 3 * t + 1) / 6.0;
        const double b3 = t * t * t / 6.0;
        double x = 0, y = 0;
        const double w[4] = {b0, b1, b2, b3};
        for (int a = 0; a < 4; ++a) {
            const double th = 2 * kPi * (a - 1) / n;
            x += w[a] * std::cos(th);
            y += w[a] * std::sin(th);
        }
        const double r = std::hypot(x, y);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    return {lo, hi};
}

}  // namespace

TEST(Resample, StraightSegmentUniform) {
    const auto c = resample_centerline(straight(90.0, 7), 10);
    ASSERT_EQ(c.size(), 10u);
    for (int i = 0; i < 10; ++i) {
        EXPECT_NEAR(c.arclength[static_cast<std::size_t>(i)], 10.0 * i, 1e-9);
        EXPECT_NEAR(c.points[static_cast<std::size_t>(i)].z, 10.0 * i, 1e-9);
    }
    const auto again = resample_centerline(c, 10);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(norm(again.points[i] - c.points[i]), 0.0, 1e-9);
    EXPECT_THROW(resample_centerline(c, 3), Error);
}

TEST(Resample, QuarterArcChordsEqual) {
    std::vector<Vec3> pts;
    for (int k = 0; k <= 2000; ++k) {
        const double a = 0.5 * kPi * k / 2000.0;
        pts.push_back({50 * std::cos(a), 50 * std::sin(a), 0});
    }
    const auto c = resample_centerline(make_centerline(pts), 16);
    std::vector<double> chords;
    for (std::size_t i = 1; i < c.size(); ++i) chords.push_back(norm(c.points[i] - c.points[i - 1]));
    const auto [mn, mx] = std::minmax_element(chords.begin(), chords.end());
    EXPECT_LE((*mx - *mn) / *mn, 0.01);
}

TEST(CastSections, CylinderRadius) {
    const GridGeometry g({41, 41, 40}, {1, 1, 1});
    const auto mask = cylinder_mask(g, 20, 20, 10.0, 2, 38);
    const auto c = straight(20.0, 5, {20, 20, 10});
    const auto secs = cast_sections(mask, 1, c, {.n_rays = 16});
    ASSERT_EQ(secs.size(), 5u);
    const double h = std::sqrt(3.0) / 2.0;
    for (double r : secs[2].radii) {
        EXPECT_GE(r, 10.0 - h);
        EXPECT_LE(r, 10.0 + h);
    }
    for (const auto& s : secs)
        for (std::size_t j = 0; j < s.ray_count(); ++j) {
            EXPECT_NEAR(norm(s.radial_dirs[j]), 1.0, 1e-9);
            EXPECT_GT(s.radii[j], 0.0);
            EXPECT_NEAR(norm(s.control_points[j] - (s.center + s.radial_dirs[j] * s.radii[j])), 0.0, 1e-12);
        }
}

TEST(CastSections, SquareCrossSection) {
    const GridGeometry g({31, 31, 20}, {1, 1, 1});
    LabelMask m(g);
    m.label_names[1] = "box";
    for (std::int64_t l = 0; l < g.voxel_count(); ++l) {
        const Vec3 p = g.world(l);
        if (std::abs(p.x - 15) <= 8 && std::abs(p.y - 15) <= 8 && p.z >= 2 && p.z <= 17) m.labels[static_cast<std::size_t>(l)] = 1;
    }
    const auto c = straight(8.0, 5, {15, 15, 6});
    const auto secs = cast_sections(m, 1, c, {.n_rays = 4});
    const double h = std::sqrt(3.0) / 2.0;
    ASSERT_FALSE(secs.empty());
    for (double r : secs[2].radii) EXPECT_NEAR(r, 8.0, h);
}

TEST(CastSections, BoundaryCenterFlaggedAndOutsideDropped) {
    const GridGeometry g({41, 41, 40}, {1, 1, 1});
    const auto mask = cylinder_mask(g, 20, 20, 10.0, 2, 38);
    std::vector<std::string> warnings;
    set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
    // First point on the boundary voxel, last point outside the organ.
    const auto c = make_centerline({{30, 20, 10}, {30, 20, 15}, {30, 20, 20}, {30, 20, 25}, {39, 39, 25}});
    const auto secs = cast_sections(mask, 1, c, {.n_rays = 8});
    set_warning_sink(nullptr);
    EXPECT_EQ(secs.size(), 4u);
    EXPECT_EQ(warnings.size(), 1u);
    EXPECT_TRUE(secs[0].degenerate);
    EXPECT_LE(*std::min_element(secs[0].radii.begin(), secs[0].radii.end()), 1.0);
}

TEST(FitSurface, CircleShrinkBounds) {
    const auto surf = fit_surface(circle_sections(8, 16, 10.0));
    const auto [lo, hi] = bspline_circle_range(16);
    for (int a = 0; a < 64; ++a)
        for (int b = 0; b < 64; ++b) {
            const Vec3 p = eval(surf, a / 63.0, b / 64.0);
            const double r = std::hypot(p.x, p.y);
            EXPECT_GE(r, lo * 10.0 - 1e-9);
            EXPECT_LE(r, hi * 10.0 + 1e-9);
            EXPECT_LE(r, 10.0 + 1e-9);
        }
}

TEST(FitSurface, Errors) {
    try {
        fit_surface(circle_sections(1, 16, 10.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "surface.too_few_sections");
    }
    auto secs = circle_sections(6, 16, 10.0);
    secs[3] = circle_sections(4, 12, 10.0)[3];
    try {
        fit_surface(secs);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "surface.inconsistent_rays");
    }
}

TEST(FitSurface, MoreRaysCloserToCircle) {
    auto max_dev = [](int rays) {
        const auto s = fit_surface(circle_sections(6, rays, 10.0));
        double dev = 0.0;
        for (int b = 0; b < 512; ++b) {
            const Vec3 p = eval(s, 0.5, b / 512.0);
            dev = std::max(dev, std::abs(std::hypot(p.x, p.y) - 10.0));
        }
        return dev;
    };
    EXPECT_LT(max_dev(16), max_dev(8));
    EXPECT_LT(max_dev(32), max_dev(16));
}

TEST(Shell, EndpointsLinearityAndNesting) {
    const auto surf = fit_surface(circle_sections(8, 16, 10.0));
    const auto axis = surface_axis(surf);
    for (double u : {0.0, 0.13, 0.5, 0.77, 1.0})
        for (double v : {0.0, 0.3, 0.99}) {
            EXPECT_EQ(eval_shell(surf, axis, u, v, 0.0), eval(surf, u, v));
            EXPECT_NEAR(norm(eval_shell(surf, axis, u, v, 1.0) - axis.point_at(u)), 0.0, 1e-6);
            const Vec3 mid = (eval(surf, u, v) + axis.point_at(u)) * 0.5;
            EXPECT_NEAR(norm(eval_shell(surf, axis, u, v, 0.5) - mid), 0.0, 1e-12);
            double prev = 1e9;
            for (int k = 0; k <= 10; ++k) {
                const Vec3 p = eval_shell(surf, axis, u, v, k / 10.0);
                const double d = norm(p - axis.point_at(u));
                EXPECT_LE(d, prev + 1e-12);
                prev = d;
            }
        }
}

TEST(Shell, VPeriodic) {
    auto secs = circle_sections(8, 16, 10.0);
    secs[4].control_points[3] += Vec3{1.5, -0.5, 0.2};  // break symmetry
    const auto surf = fit_surface(secs);
    for (double u : {0.0, 0.4, 1.0})
        EXPECT_NEAR(norm(eval(surf, u, 0.0) - eval(surf, u, std::nextafter(1.0, 0.0))), 0.0, 1e-6);
}

TEST(Shell, SurfaceInsideDilatedMask) {
    const GridGeometry g({41, 41, 50}, {1, 1, 1});
    const auto mask = cylinder_mask(g, 20, 20, 9.0, 3, 47);
    const auto c = resample_centerline(straight(36.0, 10, {20, 20, 7}), 12);
    const auto surf = fit_surface(cast_sections(mask, 1, c, {.n_rays = 16}));
    const auto region = dilate(select_label(mask, 1), 1);
    int inside = 0;
    for (int a = 0; a < 64; ++a)
        for (int b = 0; b < 64; ++b) {
            const Index3 v = g.nearest_index(eval(surf, a / 63.0, b / 64.0));
            if (g.contains(v) && region.at(v)) ++inside;
        }
    EXPECT_GE(inside, static_cast<int>(0.99 * 64 * 64));
}
