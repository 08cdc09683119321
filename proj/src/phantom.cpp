#include "dtwin/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace dtwin {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec3 axis3(const CurveSpec& c) { return cross(c.e1, c.e2); }

double angle_at(const CurveSpec& c, double s) { return c.angle0 + (c.angle1 - c.angle0) * s; }

}  // namespace

Vec3 CurveSpec::point(double s) const {
    switch (kind) {
        case CurveKind::line:
            return start + (end - start) * s;
        case CurveKind::arc:
        case CurveKind::helix: {
            const double t = angle_at(*this, s);
            Vec3 p = center + (e1 * std::cos(t) + e2 * std::sin(t)) * radius;
            if (kind == CurveKind::helix) p += axis3(*this) * (pitch * (t - angle0) / kTwoPi);
            return p;
        }
    }
    return {};
}

Vec3 CurveSpec::tangent(double s) const {
    if (kind == CurveKind::line) return normalized(end - start);
    const double t = angle_at(*this, s);
    const double sign = angle1 >= angle0 ? 1.0 : -1.0;
    Vec3 d = (e2 * std::cos(t) - e1 * std::sin(t)) * radius;
    if (kind == CurveKind::helix) d += axis3(*this) * (pitch / kTwoPi);
    return normalized(d * sign);
}

double CurveSpec::length() const {
    if (kind == CurveKind::line) return norm(end - start);
    const double sweep = std::abs(angle1 - angle0);
    const double rise = kind == CurveKind::helix ? pitch / kTwoPi : 0.0;
    return sweep * std::sqrt(radius * radius + rise * rise);
}

double CurveSpec::closest(const Vec3& x) const {
    if (kind == CurveKind::line) {
        const Vec3 d = end - start;
        const double l2 = dot(d, d);
        return l2 > 0.0 ? std::clamp(dot(x - start, d) / l2, 0.0, 1.0) : 0.0;
    }
    if (kind == CurveKind::arc) {
        const Vec3 r = x - center;
        double t = std::atan2(dot(r, e2), dot(r, e1));
        // Bring t into the swept interval when one of its 2 pi copies lies there.
        const double lo = std::min(angle0, angle1), hi = std::max(angle0, angle1);
        const double mid = 0.5 * (lo + hi);
        t += kTwoPi * std::round((mid - t) / kTwoPi);
        if (t >= lo && t <= hi) return (t - angle0) / (angle1 - angle0);
        const double d0 = norm(x - point(0.0)), d1 = norm(x - point(1.0));
        return d0 <= d1 ? 0.0 : 1.0;
    }
    // Helix: coarse scan, then golden-section refinement in the best bracket.
    const int n = std::max(64, static_cast<int>(std::ceil(length() / 2.0)));
    int best = 0;
    double best_d = 1e300;
    for (int i = 0; i <= n; ++i) {
        const double d = norm(x - point(static_cast<double>(i) / n));
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    double a = static_cast<double>(std::max(0, best - 1)) / n;
    double b = static_cast<double>(std::min(n, best + 1)) / n;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = norm(x - point(c)), fd = norm(x - point(d));
    for (int it = 0; it < 60; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = norm(x - point(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = norm(x - point(d));
        }
    }
    return 0.5 * (a + b);
}

void PhantomSpec::validate() const {
    for (std::size_t a = 0; a < 3; ++a)
        if (geometry.dims[a] < 1 || !(geometry.spacing[a] > 0.0)) throw Error("phantom.bad_spec", "invalid grid geometry");
    std::vector<int> labels;
    for (const auto& o : organs) {
        if (o.label < 1 || o.label > 65535) throw Error("phantom.bad_spec", "organ label must be in 1..65535");
        if (std::find(labels.begin(), labels.end(), o.label) != labels.end())
            throw Error("phantom.bad_spec", "duplicate organ label " + std::to_string(o.label));
        labels.push_back(o.label);
        if (!(o.radius_start > 0.0) || !(o.radius_end > 0.0) || !(o.wall_mm >= 0.0))
            throw Error("phantom.bad_spec", "organ radii must be positive");
        if (!(o.curve.length() > 0.0)) throw Error("phantom.bad_spec", "organ curve has zero length");
        if (o.curve.kind != CurveKind::line) {
            if (!(o.curve.radius > 0.0)) throw Error("phantom.bad_spec", "curve radius must be positive");
            if (std::abs(dot(o.curve.e1, o.curve.e2)) > 1e-9 || std::abs(norm(o.curve.e1) - 1.0) > 1e-9 ||
                std::abs(norm(o.curve.e2) - 1.0) > 1e-9)
                throw Error("phantom.bad_spec", "curve plane axes must be orthonormal");
        }
    }
    for (const auto& b : dose)
        if (!(b.sigma_mm > 0.0)) throw Error("phantom.bad_spec", "dose blob sigma must be positive");
    if (!(noise_sd >= 0.0) || !(texture_wavelength_mm > 0.0)) throw Error("phantom.bad_spec", "invalid background");

    for (std::size_t i = 0; i < organs.size(); ++i) {
        for (std::size_t j = i + 1; j < organs.size(); ++j) {
            const auto& A = organs[i];
            const auto& B = organs[j];
            const int na = std::max(2, static_cast<int>(std::ceil(A.curve.length() / 0.5)));
            const int nb = std::max(2, static_cast<int>(std::ceil(B.curve.length() / 0.5)));
            for (int a = 0; a <= na; ++a) {
                const double sa = static_cast<double>(a) / na;
                const Vec3 pa = A.curve.point(sa);
                for (int b = 0; b <= nb; ++b) {
                    const double sb = static_cast<double>(b) / nb;
                    const double gap = norm(pa - B.curve.point(sb)) - A.radius_at(sa) - B.radius_at(sb);
                    if (gap <= 2.0)
                        throw Error("phantom.intersecting",
                                    "organs '" + A.name + "' and '" + B.name + "' are closer than 2 mm");
                }
            }
        }
    }
}

double dose_at(const std::vector<DoseBlob>& blobs, const Vec3& x) {
    double d = 0.0;
    for (const auto& b : blobs) {
        const Vec3 r = x - b.center;
        d += b.peak_gy * std::exp(-dot(r, r) / (2.0 * b.sigma_mm * b.sigma_mm));
    }
    return d;
}

Centerline analytic_centerline(const TubeSpec& tube, double step_mm, double inset_mm) {
    const double len = tube.curve.length();
    if (!(step_mm > 0.0) || !(2.0 * inset_mm < len)) throw Error("phantom.bad_spec", "invalid centerline sampling");
    const double s0 = inset_mm / len, s1 = 1.0 - s0;
    const int n = std::max(2, static_cast<int>(std::ceil((len - 2.0 * inset_mm) / step_mm)));
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(n + 1));
    for (int i = 0; i <= n; ++i) pts.push_back(tube.curve.point(s0 + (s1 - s0) * static_cast<double>(i) / n));
    return make_centerline(std::move(pts));
}

Phantom make_phantom(const PhantomSpec& spec, const Exec& exec) {
    spec.validate();
    const auto& g = spec.geometry;
    Phantom ph;
    ph.intensity = ScalarGrid(g);
    ph.labels = LabelMask(g);
    ph.dose = ScalarGrid(g, ScalarKind::dose_gray);
    for (const auto& o : spec.organs) ph.labels.label_names[o.label] = o.name;

    const double k = kTwoPi / spec.texture_wavelength_mm;
    const double ramp = g.min_spacing();
    parallel_for(g.voxel_count(), exec, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t l = b; l < e; ++l) {
            const auto li = static_cast<std::size_t>(l);
            const Vec3 x = g.world(l);
            double value = spec.background + spec.texture_amplitude * std::sin(k * x.x) * std::sin(k * x.y + 0.7) *
                                                 std::sin(k * x.z + 1.3);
            for (const auto& o : spec.organs) {
                const double s = o.curve.closest(x);
                const Vec3 r = x - o.curve.point(s);
                // Flat caps: at an end parameter the point must lie in the cap plane.
                if (!o.round_caps && (s <= 0.0 || s >= 1.0) && std::abs(dot(r, o.curve.tangent(s))) > 1e-9) continue;
                const double depth = o.radius_at(s) - norm(r);
                if (depth < 0.0) continue;
                ph.labels.labels[li] = static_cast<std::uint16_t>(o.label);
                // Wall near the surface, lumen deeper in, blended over one voxel.
                const double w = std::clamp((depth - o.wall_mm) / ramp + 0.5, 0.0, 1.0);
                value += (1.0 - w) * o.wall_intensity + w * o.lumen_intensity - spec.background;
                break;
            }
            ph.intensity.values[li] = value;
            ph.dose.values[li] = dose_at(spec.dose, x);
        }
    });

    if (spec.noise_sd > 0.0) {
        std::mt19937_64 rng(spec.seed);
        std::normal_distribution<double> noise(0.0, spec.noise_sd);
        for (double& v : ph.intensity.values) v += noise(rng);
    }

    for (const auto& o : spec.organs) {
        OrganDescriptor d;
        d.label = o.label;
        d.name = o.name;
        d.length_mm = o.curve.length();
        d.radius_start = o.radius_start;
        d.radius_end = o.radius_end;
        d.centerline = analytic_centerline(o).points;
        ph.descriptors.push_back(std::move(d));
    }
    return ph;
}

namespace {

PhantomSpec base_fixture() {
    PhantomSpec s;
    s.geometry = GridGeometry({128, 128, 96}, {1.5, 1.5, 2.0});
    TubeSpec t;
    t.label = 1;
    t.name = "stomach";
    t.curve.kind = CurveKind::arc;
    // Gentle arc along the grid's space diagonal, bulging within the x-y plane.
    const double r3 = 1.0 / std::sqrt(3.0), r2 = 1.0 / std::sqrt(2.0);
    t.curve.center = {36.459, 157.041, 96.5};
    t.curve.e1 = {-r3, -r3, -r3};
    t.curve.e2 = {r2, -r2, 0.0};
    t.curve.radius = 100.0;
    t.curve.angle0 = 58.5 * std::numbers::pi / 180.0;
    t.curve.angle1 = 121.5 * std::numbers::pi / 180.0;
    t.radius_start = 34.0;
    t.radius_end = 31.0;
    t.wall_mm = 4.0;
    t.wall_intensity = 0.8;
    t.lumen_intensity = 0.45;
    s.organs.push_back(t);
    s.background = 0.15;
    s.texture_amplitude = 0.1;
    s.texture_wavelength_mm = 30.0;
    s.noise_sd = 0.0;
    s.seed = 7;
    return s;
}

}  // namespace

PhantomSpec fixture_pa() {
    PhantomSpec s = base_fixture();
    s.dose.push_back({{57.7, 135.8, 96.5}, 25.0, 50.0});  // concave side, about 36 mm off the wall
    return s;
}

PhantomSpec fixture_pb() {
    PhantomSpec s = base_fixture();
    s.dose.push_back({{107.17, 86.33, 96.5}, 25.0, 50.0});  // on the arc midpoint
    return s;
}

}  // namespace dtwin
