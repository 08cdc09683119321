#pragma once

#include <vector>

namespace dtwin::bspline {

// Knot-vector helpers and Cox-de Boor basis evaluation (non-vanishing
// functions only, as in Piegl & Tiller A2.1/A2.2).

/// p+1 zeros, uniform interior knots, p+1 ones; n_ctrl + p + 1 entries.
std::vector<double> clamped_uniform_knots(int n_ctrl, int degree);

/// Uniform unclamped knots for a closed curve of n_ctrl distinct control
/// points: t_k = (k - p) / n_ctrl for k = 0 .. n_ctrl + 2p. The valid
/// parameter domain is [t_p, t_{n_ctrl+p}] = [0, 1]; control point index
/// j refers to point j mod n_ctrl.
std::vector<double> periodic_uniform_knots(int n_ctrl, int degree);

/// Knot span index s with knots[s] <= t < knots[s+1], restricted to
/// [degree, n_basis - 1]. `n_basis` is the number of basis functions.
int find_span(int n_basis, int degree, double t, const std::vector<double>& knots);

/// The degree+1 non-zero basis values N_{s-p..s}(t).
std::vector<double> basis_functions(int span, double t, int degree, const std::vector<double>& knots);

}  // namespace dtwin::bspline
