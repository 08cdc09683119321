#pragma once

#include <vector>

#include "dtwin/centerline.hpp"
#include "dtwin/grid.hpp"

namespace dtwin {

/// Ring of boundary points cast from one centerline sample.
/// control_points[j] = center + radii[j] * radial_dirs[j], radii[j] > 0.
struct SectionalCurve {
    int section_index = 0;
    double arclength = 0.0;  // position along the organ, mm
    Vec3 center;
    std::vector<Vec3> control_points;
    std::vector<Vec3> radial_dirs;
    std::vector<double> radii;
    std::vector<bool> truncated;  // ray left the grid before leaving the organ
    bool degenerate = false;      // some radius <= one voxel

    std::size_t ray_count() const { return control_points.size(); }
};

/// Tube-shaped NURBS surface. u runs along the tube (clamped knots), v around
/// it (periodic, uniform). Weights are stored per control point and are all
/// 1 for surfaces built here.
struct TubeSurface {
    std::vector<SectionalCurve> sections;
    int degree_u = 3;
    int degree_v = 3;
    std::vector<double> knots_u;
    std::vector<double> knots_v;
    std::vector<double> weights;  // sections.size() * ray_count(), section-major

    std::size_t section_count() const { return sections.size(); }
    std::size_t ray_count() const { return sections.empty() ? 0 : sections.front().ray_count(); }
    double weight(std::size_t i, std::size_t j) const { return weights[i * ray_count() + j]; }
};

/// max(12, ceil(arclength / 5 mm)).
int default_section_count(double arclength_mm);

/// Uniform arc-length resampling with re-transported frames.
/// Errors: "surface.bad_sections" (n < 4), "centerline.degenerate".
Centerline resample_centerline(const Centerline& c, int n_sections);

struct CastOptions {
    int n_rays = 16;
    double step_fraction = 0.25;   // of the smallest voxel spacing
    double tolerance_mm = 0.05;    // bisection bracket
};

/// Casts n_rays rays per centerline point in its (normal, binormal) plane at
/// angles 2*pi*j/n_rays. Centerline points outside the organ are dropped
/// with a warning.
std::vector<SectionalCurve> cast_sections(const LabelMask& mask, int label, const Centerline& c,
                                          const CastOptions& options = {});

/// Degree 3x3 surface using the cast boundary points directly as the control
/// net. Errors: "surface.too_few_sections", "surface.inconsistent_rays".
TubeSurface fit_surface(std::vector<SectionalCurve> sections);

/// Surface point at u in [0,1], v in [0,1) (v wraps).
Vec3 eval(const TubeSurface& surface, double u, double v);

/// (1-p) * eval(surface,u,v) + p * axis.point_at(u).
Vec3 eval_shell(const TubeSurface& surface, const Centerline& axis, double u, double v, double p);

/// Centerline through the section centers.
Centerline surface_axis(const TubeSurface& surface);

/// Same topology and knots, new control points (section-major) and radii.
TubeSurface with_control_points(const TubeSurface& base, const std::vector<Vec3>& points);

}  // namespace dtwin
