#include "dtwin/bspline.hpp"

#include <algorithm>

#include "dtwin/core.hpp"

namespace dtwin::bspline {

std::vector<double> clamped_uniform_knots(int n_ctrl, int degree) {
    if (n_ctrl < degree + 1) throw Error("bspline.too_few_points", "need at least degree+1 control points");
    std::vector<double> k(static_cast<std::size_t>(n_ctrl + degree + 1), 0.0);
    const int interior = n_ctrl - degree;  // number of spans
    for (int i = 0; i <= degree; ++i) k[static_cast<std::size_t>(n_ctrl + i)] = 1.0;
    for (int i = 1; i < interior; ++i)
        k[static_cast<std::size_t>(degree + i)] = static_cast<double>(i) / static_cast<double>(interior);
    return k;
}

std::vector<double> periodic_uniform_knots(int n_ctrl, int degree) {
    if (n_ctrl < degree + 1) throw Error("bspline.too_few_points", "need at least degree+1 control points");
    std::vector<double> k(static_cast<std::size_t>(n_ctrl + 2 * degree + 1));
    for (std::size_t i = 0; i < k.size(); ++i)
        k[i] = static_cast<double>(static_cast<int>(i) - degree) / static_cast<double>(n_ctrl);
    return k;
}

int find_span(int n_basis, int degree, double t, const std::vector<double>& knots) {
    const int last = n_basis - 1;
    if (t >= knots[static_cast<std::size_t>(last + 1)]) return last;
    if (t <= knots[static_cast<std::size_t>(degree)]) return degree;
    auto it = std::upper_bound(knots.begin() + degree, knots.begin() + last + 1, t);
    return static_cast<int>(it - knots.begin()) - 1;
}

std::vector<double> basis_functions(int span, double t, int degree, const std::vector<double>& knots) {
    std::vector<double> N(static_cast<std::size_t>(degree + 1), 0.0);
    std::vector<double> left(static_cast<std::size_t>(degree + 1)), right(static_cast<std::size_t>(degree + 1));
    N[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[static_cast<std::size_t>(j)] = t - knots[static_cast<std::size_t>(span + 1 - j)];
        right[static_cast<std::size_t>(j)] = knots[static_cast<std::size_t>(span + j)] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
            const double tmp = denom != 0.0 ? N[static_cast<std::size_t>(r)] / denom : 0.0;
            N[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * tmp;
            saved = left[static_cast<std::size_t>(j - r)] * tmp;
        }
        N[static_cast<std::size_t>(j)] = saved;
    }
    return N;
}

}  // namespace dtwin::bspline
