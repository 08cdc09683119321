#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtwin/centerline.hpp"
#include "dtwin/grid.hpp"

namespace dtwin {

enum class CurveKind { line, arc, helix };

/// Constant-speed analytic curve C(s), s in [0, 1].
///
/// line:  start -> end.
/// arc:   center + radius (cos t e1 + sin t e2), t from angle0 to angle1 (rad).
/// helix: arc plus pitch * t / (2 pi) along e1 x e2.
struct CurveSpec {
    CurveKind kind = CurveKind::line;
    Vec3 start{}, end{};              // line
    Vec3 center{};                    // arc, helix
    Vec3 e1{1, 0, 0}, e2{0, 1, 0};    // orthonormal plane axes
    double radius = 0.0;
    double angle0 = 0.0, angle1 = 0.0;
    double pitch = 0.0;               // mm per turn (helix)

    Vec3 point(double s) const;
    Vec3 tangent(double s) const;  // unit
    double length() const;
    /// Parameter of the closest curve point, clamped to [0, 1].
    double closest(const Vec3& x) const;
};

struct TubeSpec {
    int label = 1;
    std::string name = "stomach";
    CurveSpec curve;
    double radius_start = 10.0;  // mm, linear taper along s
    double radius_end = 10.0;
    double wall_mm = 3.0;
    double wall_intensity = 0.8;
    double lumen_intensity = 0.4;
    bool round_caps = false;  // hemispherical ends instead of flat ones

    double radius_at(double s) const { return radius_start + (radius_end - radius_start) * s; }
};

struct DoseBlob {
    Vec3 center;
    double sigma_mm = 10.0;
    double peak_gy = 50.0;
};

struct PhantomSpec {
    GridGeometry geometry{{128, 128, 96}, {1.5, 1.5, 2.0}};
    std::vector<TubeSpec> organs;
    double background = 0.1;
    double texture_amplitude = 0.1;
    double texture_wavelength_mm = 40.0;
    double noise_sd = 0.0;
    std::uint64_t seed = 7;
    std::vector<DoseBlob> dose;

    /// Throws "phantom.bad_spec" or "phantom.intersecting" (tube surfaces
    /// closer than 2 mm at sampled points).
    void validate() const;
};

struct OrganDescriptor {
    int label = 0;
    std::string name;
    double length_mm = 0.0;
    double radius_start = 0.0, radius_end = 0.0;
    std::vector<Vec3> centerline;  // samples at about 1 mm
};

struct Phantom {
    ScalarGrid intensity;
    LabelMask labels;
    ScalarGrid dose;  // dose_gray
    std::vector<OrganDescriptor> descriptors;
};

/// Voxels are labelled when they lie on a cross-sectional disk of the tube
/// (flat end caps) or, with round caps, within the end radius of an
/// endpoint. Intensity is lumen/wall by depth below the surface with a
/// one-voxel ramp, plus a smooth texture and seeded Gaussian noise.
Phantom make_phantom(const PhantomSpec& spec, const Exec& exec = {});

/// Analytic centerline sampled at about `step_mm`, with both ends pulled in
/// by `inset_mm` of arc length.
Centerline analytic_centerline(const TubeSpec& tube, double step_mm = 1.0, double inset_mm = 0.0);

/// Sum of Gaussian blobs at a world point.
double dose_at(const std::vector<DoseBlob>& blobs, const Vec3& x);

/// Fixture "P-A": curved wide stomach tube, dose blob well off the tube.
PhantomSpec fixture_pa();
/// Fixture "P-B": same tube, dose blob centred on it.
PhantomSpec fixture_pb();

}  // namespace dtwin
