#include <gtest/gtest.h>

#include <cstring>
#include <numbers>
#include <random>

#include "dtwin/motion.hpp"

using namespace dtwin;

namespace {

TubeSurface straight_tube(int n_sections, int n_rays, double radius, double spacing = 5.0) {
    std::vector<SectionalCurve> secs;
    for (int i = 0; i < n_sections; ++i) {
        SectionalCurve s;
        s.section_index = i;
        s.arclength = spacing * i;
        s.center = {0, 0, spacing * i};
        for (int j = 0; j < n_rays; ++j) {
            const double th = 2 * std::numbers::pi * j / n_rays;
            const Vec3 d{std::cos(th), std::sin(th), 0};
            s.radial_dirs.push_back(d);
            s.radii.push_back(radius);
            s.control_points.push_back(s.center + d * radius);
            s.truncated.push_back(false);
        }
        secs.push_back(s);
    }
    return fit_surface(secs);
}

bool bit_equal(const TubeSurface& a, const TubeSurface& b) {
    for (std::size_t i = 0; i < a.section_count(); ++i)
        for (std::size_t j = 0; j < a.ray_count(); ++j)
            for (int c = 0; c < 3; ++c) {
                const double x = a.sections[i].control_points[j][c];
                const double y = b.sections[i].control_points[j][c];
                if (std::memcmp(&x, &y, sizeof x) != 0) return false;
            }
    return true;
}

// Reference built directly from the analytic formula, independent of the
// fitter's internal evaluation path.
ReferenceMotion analytic_reference(const TubeSurface& base, double A, double c, double lambda, double noise = 0.0) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-noise, noise);
    std::vector<std::vector<Vec3>> disp;
    const double T = lambda / c;
    for (int k = 0; k < 21; ++k) {
        const double t = k * T / 20.0;
        std::vector<Vec3> phase;
        for (const auto& s : base.sections) {
            const double w = A / std::sqrt(3.0) * std::sin(2 * std::numbers::pi * (s.arclength - c * t) / lambda);
            for (std::size_t j = 0; j < s.ray_count(); ++j) phase.push_back(s.radial_dirs[j] * (w + u(rng)));
        }
        disp.push_back(phase);
    }
    return ReferenceMotion::from_control_displacements(base, disp);
}

}  // namespace

TEST(Wave, AnalyticValues) {
    WaveParams p;  // A=16, c=5, lambda=55
    EXPECT_NEAR(wave_value(p, 55.0 / 4.0, 0.0), 16.0 / std::sqrt(3.0), 1e-12);
    EXPECT_NEAR(wave_value(p, 55.0 / 4.0, 0.0), 9.2376, 1e-4);
    EXPECT_NEAR(wave_value(p, 55.0 / 4.0 + 5.0 * 3.0, 3.0), 9.2376, 1e-4);
    p.alpha_s = 0.01;
    EXPECT_NEAR(wave_value(p, 55.0, 0.0), 0.0, 1e-12);
    p.amplitude_mm = 0.0;
    EXPECT_EQ(wave_value(p, 12.3, 4.5), 0.0);
}

TEST(Wave, Periods) {
    EXPECT_DOUBLE_EQ(WaveParams::stomach().period(), 11.0);
    EXPECT_DOUBLE_EQ(WaveParams::large_bowel().period(), 5.0);
    const WaveParams p;
    EXPECT_EQ(phase_time(p, 0), 0.0);
    EXPECT_DOUBLE_EQ(phase_time(p, 20), 11.0);
}

TEST(Wave, BoundAndMonotoneAttenuation) {
    WaveParams p;
    p.alpha_s = 0.02;
    p.alpha_t = 0.01;
    const double bound = p.amplitude_mm / std::sqrt(3.0);
    double prev = 1e9;
    for (double L = 0; L <= 120; L += 5) {
        double peak = 0.0;
        for (int k = 0; k < 2000; ++k) peak = std::max(peak, std::abs(wave_value(p, L, k * p.period() / 2000.0)));
        EXPECT_LE(peak, bound * std::exp(-p.alpha_s * L) + 1e-12);
        EXPECT_LE(peak, prev + 1e-12);
        prev = peak;
    }
    // Equality case: alpha_t = 0, sine peak reachable at t = 0.
    p.alpha_t = 0.0;
    EXPECT_NEAR(wave_value(p, 55.0 / 4.0, 0.0), bound * std::exp(-p.alpha_s * 55.0 / 4.0), 1e-12);
}

TEST(Wave, PhaseVariantMatchesTimeFormula) {
    const WaveParams p;
    for (int k = 0; k < 21; ++k)
        for (double L : {0.0, 7.5, 33.0, 101.0})
            EXPECT_NEAR(wave_value_at_phase(p, L, k), wave_value(p, L, phase_time(p, k)), 1e-9);
}

TEST(Deform, ZeroAmplitudeIdentity) {
    const auto base = straight_tube(12, 16, 10.0);
    WaveParams p;
    p.amplitude_mm = 0.0;
    EXPECT_TRUE(bit_equal(deform_surface(base, p, 3.7), base));
}

TEST(Deform, RadialDisplacement) {
    const auto base = straight_tube(12, 16, 20.0);
    const WaveParams p;
    const auto moved = deform_surface(base, p, 2.0);
    for (std::size_t i = 0; i < base.section_count(); ++i) {
        const double w = wave_value(p, base.sections[i].arclength, 2.0);
        for (std::size_t j = 0; j < base.ray_count(); ++j) {
            const Vec3 d = moved.sections[i].control_points[j] - base.sections[i].control_points[j];
            EXPECT_NEAR(norm(d - base.sections[i].radial_dirs[j] * w), 0.0, 1e-12);
            EXPECT_NEAR(moved.sections[i].radii[j], 20.0 + w, 1e-12);
        }
    }
}

TEST(Deform, ClampAtMinimumRadius) {
    const auto base = straight_tube(12, 16, 3.0);
    WaveParams p;
    p.amplitude_mm = 60.0;
    for (int k = 0; k < 21; ++k) {
        const auto moved = deform_surface_at_phase(base, p, k);
        for (std::size_t i = 0; i < base.section_count(); ++i)
            for (std::size_t j = 0; j < base.ray_count(); ++j) {
                const auto& s = moved.sections[i];
                const double r = dot(s.control_points[j] - s.center, s.radial_dirs[j]);
                EXPECT_GE(r, kMinLumenRadius - 1e-12);
            }
    }
}

TEST(Synth, PeriodicityBitwiseAndMaxPhase) {
    const auto base = straight_tube(14, 16, 15.0);
    for (const auto& p : {WaveParams::stomach(), WaveParams::large_bowel()}) {
        const auto seq = synth_phases(base, p);
        ASSERT_EQ(seq.phases.size(), 21u);
        EXPECT_TRUE(bit_equal(seq.phases[0], seq.phases[20]));
        EXPECT_EQ(seq.times.front(), 0.0);
        EXPECT_DOUBLE_EQ(seq.times.back(), p.period());
        const auto it = std::max_element(seq.mean_displacement.begin(), seq.mean_displacement.end());
        EXPECT_EQ(seq.max_deformation_phase, static_cast<int>(it - seq.mean_displacement.begin()));
    }
    WaveParams zero;
    zero.amplitude_mm = 0.0;
    EXPECT_EQ(synth_phases(base, zero).max_deformation_phase, 0);
}

TEST(Fit, SelfConsistency) {
    const auto base = straight_tube(24, 16, 15.0);
    const auto fit = fit_wave_params(analytic_reference(base, 16.0, 5.0, 55.0), SearchBox{});
    EXPECT_NEAR(fit.params.amplitude_mm, 16.0, 0.8);
    EXPECT_NEAR(fit.params.wavelength_mm, 55.0, 0.05 * 55.0);
    EXPECT_LT(fit.rmse, 0.1);
}

TEST(Fit, ZeroReferenceGivesZeroAmplitude) {
    const auto base = straight_tube(16, 8, 15.0);
    const auto fit = fit_wave_params(analytic_reference(base, 0.0, 5.0, 55.0), SearchBox{});
    EXPECT_EQ(fit.params.amplitude_mm, 0.0);
    EXPECT_EQ(fit.rmse, 0.0);
}

TEST(Fit, NoisyReference) {
    const auto base = straight_tube(24, 16, 15.0);
    const auto fit = fit_wave_params(analytic_reference(base, 16.0, 5.0, 55.0, 0.5), SearchBox{});
    EXPECT_NEAR(fit.params.amplitude_mm, 16.0, 1.5);
}

TEST(Fit, ExplicitTimesAndFreeSpeed) {
    const auto base = straight_tube(24, 8, 15.0);
    auto ref = analytic_reference(base, 12.0, 8.0, 40.0);
    for (int k = 0; k < 21; ++k) ref.times.push_back(k * 5.0 / 20.0);
    SearchBox box;
    box.speed = {4.0, 12.0};
    box.wavelength = {25.0, 70.0};
    box.relative_tolerance = 1e-9;
    const auto fit = fit_wave_params(ref, box);
    EXPECT_NEAR(fit.params.amplitude_mm, 12.0, 1e-4);
    EXPECT_NEAR(fit.params.speed_mm_s, 8.0, 1e-4);
    EXPECT_NEAR(fit.params.wavelength_mm, 40.0, 1e-4);
}

TEST(Fit, Errors) {
    const auto base = straight_tube(8, 8, 15.0);
    const auto ref = analytic_reference(base, 16.0, 5.0, 55.0);
    SearchBox box;
    box.wavelength = {60.0, 50.0};
    try {
        fit_wave_params(ref, box);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "motion.empty_search_box");
    }
}
