#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dtwin/motion.hpp"
#include "dtwin/phantom.hpp"
#include "dtwin/registration.hpp"

namespace dtwin {

enum class CenterlineSource { skeleton, analytic };

struct OrganConfig {
    int label = 1;
    WaveParams wave;
    /// Skeleton voxels (snapped to the nearest skeleton node) to run the path between.
    std::optional<std::pair<Index3, Index3>> endpoints;
    /// analytic: use the phantom's exact curve (phantom inputs only).
    CenterlineSource centerline = CenterlineSource::skeleton;
    int n_sections = 0;  // 0: default_section_count(length)
    int n_rays = 16;
    int n_u = 0, n_v = 0, n_p = 8;  // shell sampling, 0 = default

    bool operator==(const OrganConfig&) const = default;
};

struct RunConfig {
    std::string input;  // intensity NIfTI (unused with a phantom)
    std::string mask;   // label NIfTI (unused with a phantom)
    std::optional<PhantomSpec> phantom;
    std::vector<OrganConfig> organs;
    int n_phases = 21;
    std::vector<std::string> registration;  // "hsof", "demons", "demons_diffeo"
    RegParams reg;
    double registration_margin_mm = 10.0;  // ROI around the moving region
    std::string dose;                       // optional dose NIfTI (phantoms carry their own)
    std::string output;
    int workers = 1;
    std::uint64_t seed = 7;
    double dose_floor_gy = 0.5;
    bool signed_dwe = false;
    int tre_stride = 1;
    double motion_bin_mm = 1.0;
    double dose_bin_gy = 10.0;

    /// Throws "config.invalid".
    void validate() const;
};

}  // namespace dtwin
