#include "dtwin/surface.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "dtwin/bspline.hpp"

namespace dtwin {

namespace {

Vec3 point_at_arclength(const Centerline& c, double s) {
    if (s <= 0.0) return c.points.front();
    if (s >= c.length()) return c.points.back();
    auto it = std::upper_bound(c.arclength.begin(), c.arclength.end(), s);
    const auto i1 = static_cast<std::size_t>(it - c.arclength.begin());
    const auto i0 = i1 - 1;
    const double f = (s - c.arclength[i0]) / (c.arclength[i1] - c.arclength[i0]);
    return c.points[i0] * (1.0 - f) + c.points[i1] * f;
}

bool in_grid(const GridGeometry& g, const Vec3& w) { return g.contains(g.nearest_index(w)); }

}  // namespace

int default_section_count(double arclength_mm) {
    return std::max(12, static_cast<int>(std::ceil(arclength_mm / 5.0)));
}

Centerline resample_centerline(const Centerline& c, int n_sections) {
    if (n_sections < 4) throw Error("surface.bad_sections", "need at least 4 sections");
    if (c.size() < 2 || !(c.length() > 0.0))
        throw Error("centerline.degenerate", "cannot resample a zero-length centerline");
    std::vector<Vec3> pts(static_cast<std::size_t>(n_sections));
    const double L = c.length();
    for (int k = 0; k < n_sections; ++k) {
        const double s = k == n_sections - 1 ? L : L * static_cast<double>(k) / static_cast<double>(n_sections - 1);
        pts[static_cast<std::size_t>(k)] = point_at_arclength(c, s);
    }
    return make_centerline(std::move(pts));
}

std::vector<SectionalCurve> cast_sections(const LabelMask& mask, int label, const Centerline& c,
                                          const CastOptions& options) {
    if (options.n_rays < 4) throw Error("surface.bad_rays", "need at least 4 rays per section");
    const auto& g = mask.geometry;
    const double step = options.step_fraction * g.min_spacing();
    const double voxel = std::max({g.spacing.x, g.spacing.y, g.spacing.z});
    auto inside = [&](const Vec3& w) { return mask.label_at_world(w) == label; };

    std::vector<SectionalCurve> out;
    int dropped = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const Vec3 center = c.points[i];
        if (!inside(center)) {
            ++dropped;
            continue;
        }
        SectionalCurve sec;
        sec.section_index = static_cast<int>(i);
        sec.arclength = c.arclength[i];
        sec.center = center;
        const Frame& f = c.frames[i];
        for (int j = 0; j < options.n_rays; ++j) {
            const double theta = 2.0 * std::numbers::pi * j / options.n_rays;
            const Vec3 d = normalized(f.normal * std::cos(theta) + f.binormal * std::sin(theta));
            double lo = 0.0;
            double hi = step;
            bool truncated = false;
            for (;;) {
                const Vec3 p = center + d * hi;
                if (!in_grid(g, p)) {
                    truncated = true;
                    break;
                }
                if (!inside(p)) break;
                lo = hi;
                hi += step;
            }
            double r;
            if (truncated) {
                r = std::max(lo, 0.5 * step);
            } else {
                while (hi - lo > options.tolerance_mm) {
                    const double mid = 0.5 * (lo + hi);
                    if (inside(center + d * mid)) lo = mid;
                    else hi = mid;
                }
                r = 0.5 * (lo + hi);
            }
            sec.radial_dirs.push_back(d);
            sec.radii.push_back(r);
            sec.control_points.push_back(center + d * r);
            sec.truncated.push_back(truncated);
            if (r <= voxel) sec.degenerate = true;
        }
        out.push_back(std::move(sec));
    }
    if (dropped > 0) {
        std::ostringstream os;
        os << dropped << " centerline point(s) outside label " << label << " were dropped";
        warn(os.str());
    }
    return out;
}

TubeSurface fit_surface(std::vector<SectionalCurve> sections) {
    if (sections.size() < 4) throw Error("surface.too_few_sections", "need at least 4 sections to fit a cubic surface");
    const std::size_t rays = sections.front().ray_count();
    for (const auto& s : sections)
        if (s.ray_count() != rays) throw Error("surface.inconsistent_rays", "sections have different ray counts");
    if (rays < 4) throw Error("surface.bad_rays", "need at least 4 rays per section");
    TubeSurface t;
    t.degree_u = 3;
    t.degree_v = 3;
    t.knots_u = bspline::clamped_uniform_knots(static_cast<int>(sections.size()), t.degree_u);
    t.knots_v = bspline::periodic_uniform_knots(static_cast<int>(rays), t.degree_v);
    t.weights.assign(sections.size() * rays, 1.0);
    t.sections = std::move(sections);
    return t;
}

Vec3 eval(const TubeSurface& s, double u, double v) {
    const int nu = static_cast<int>(s.section_count());
    const int nv = static_cast<int>(s.ray_count());
    u = std::clamp(u, 0.0, 1.0);
    v -= std::floor(v);
    const int su = bspline::find_span(nu, s.degree_u, u, s.knots_u);
    const int sv = bspline::find_span(nv + s.degree_v, s.degree_v, v, s.knots_v);
    const auto Nu = bspline::basis_functions(su, u, s.degree_u, s.knots_u);
    const auto Nv = bspline::basis_functions(sv, v, s.degree_v, s.knots_v);
    // Shift so that v = j/nv is centred on control point j.
    const int shift = s.degree_v / 2;
    Vec3 num{};
    double den = 0.0;
    for (int a = 0; a <= s.degree_u; ++a) {
        const auto i = static_cast<std::size_t>(su - s.degree_u + a);
        const auto& ring = s.sections[i].control_points;
        for (int b = 0; b <= s.degree_v; ++b) {
            const auto j = static_cast<std::size_t>(((sv - s.degree_v + b - shift) % nv + nv) % nv);
            const double w = Nu[static_cast<std::size_t>(a)] * Nv[static_cast<std::size_t>(b)] * s.weight(i, j);
            num += ring[j] * w;
            den += w;
        }
    }
    return num / den;
}

Vec3 eval_shell(const TubeSurface& surface, const Centerline& axis, double u, double v, double p) {
    return eval(surface, u, v) * (1.0 - p) + axis.point_at(u) * p;
}

Centerline surface_axis(const TubeSurface& surface) {
    std::vector<Vec3> centers;
    centers.reserve(surface.section_count());
    for (const auto& s : surface.sections) centers.push_back(s.center);
    return make_centerline(std::move(centers));
}

TubeSurface with_control_points(const TubeSurface& base, const std::vector<Vec3>& points) {
    const std::size_t rays = base.ray_count();
    if (points.size() != base.section_count() * rays)
        throw Error("surface.topology", "control point count does not match the surface");
    TubeSurface out = base;
    for (std::size_t i = 0; i < out.section_count(); ++i) {
        auto& sec = out.sections[i];
        for (std::size_t j = 0; j < rays; ++j) {
            sec.control_points[j] = points[i * rays + j];
            sec.radii[j] = dot(sec.control_points[j] - sec.center, sec.radial_dirs[j]);
        }
    }
    return out;
}

}  // namespace dtwin
