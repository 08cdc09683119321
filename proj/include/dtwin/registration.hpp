#pragma once

#include "dtwin/grid.hpp"

namespace dtwin {

struct RegParams {
    int levels = 3;              // pyramid depth, x2 downsampling per level
    int iterations = 200;        // per level (demons); Jacobi sweeps per relinearisation (Horn-Schunck)
    int hs_warps = 5;            // relinearisations per level (Horn-Schunck)
    double hs_alpha = 0.02;      // smoothness weight, intensities in [0,1]
    double sigma_fluid = 1.0;    // voxels
    double sigma_diffusion = 1.0;
    double step_cap_voxels = 2.0;
    double convergence = 1e-3;   // mean update, voxels
    bool diffeomorphic = false;  // demons only
    int squarings = 7;

    /// Throws "registration.bad_params".
    void validate() const;
};

/// Multiresolution Horn-Schunck optical flow. Returns a backward_pull field
/// in mm such that moving(x + u(x)) ~ fixed(x).
/// Errors: "registration.geometry", "registration.bad_params".
VectorField register_hsof(const ScalarGrid& fixed, const ScalarGrid& moving, const RegParams& params = {},
                          const Exec& exec = {});

/// Multiresolution demons (additive, or diffeomorphic via scaling and squaring).
VectorField register_demons(const ScalarGrid& fixed, const ScalarGrid& moving, const RegParams& params = {},
                            const Exec& exec = {});

/// Sum of squared differences over the grid.
double ssd(const ScalarGrid& a, const ScalarGrid& b);

}  // namespace dtwin
