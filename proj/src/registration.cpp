#include "dtwin/registration.hpp"

#include <algorithm>
#include <cmath>

#include "dtwin/filter.hpp"

namespace dtwin {

void RegParams::validate() const {
    const bool ok = levels >= 1 && iterations >= 1 && hs_warps >= 1 && hs_alpha > 0.0 && sigma_fluid >= 0.0 &&
                    sigma_diffusion >= 0.0 && step_cap_voxels > 0.0 && convergence >= 0.0 && squarings >= 0;
    if (!ok) throw Error("registration.bad_params", "invalid registration parameters");
}

namespace {

struct Vol {
    Index3 d{0, 0, 0};
    std::vector<double> v;
    std::int64_t size() const { return d[0] * d[1] * d[2]; }
    std::int64_t lin(std::int64_t i, std::int64_t j, std::int64_t k) const { return i + d[0] * (j + d[1] * k); }
};

using Flow = std::vector<Vec3>;  // voxel units

Vol normalized(const ScalarGrid& g) {
    Vol out{g.geometry.dims, g.values};
    const auto [lo, hi] = std::minmax_element(out.v.begin(), out.v.end());
    const double a = *lo, span = *hi - *lo;
    for (double& x : out.v) x = span > 0.0 ? (x - a) / span : 0.0;
    return out;
}

Vol downsample(const Vol& f) {
    Vol c;
    for (std::size_t a = 0; a < 3; ++a) c.d[a] = (f.d[a] + 1) / 2;
    c.v.assign(static_cast<std::size_t>(c.size()), 0.0);
    for (std::int64_t k = 0; k < c.d[2]; ++k)
        for (std::int64_t j = 0; j < c.d[1]; ++j)
            for (std::int64_t i = 0; i < c.d[0]; ++i) {
                double s = 0.0;
                int n = 0;
                for (std::int64_t dk = 0; dk < 2; ++dk)
                    for (std::int64_t dj = 0; dj < 2; ++dj)
                        for (std::int64_t di = 0; di < 2; ++di) {
                            const std::int64_t x = 2 * i + di, y = 2 * j + dj, z = 2 * k + dk;
                            if (x < f.d[0] && y < f.d[1] && z < f.d[2]) {
                                s += f.v[static_cast<std::size_t>(f.lin(x, y, z))];
                                ++n;
                            }
                        }
                c.v[static_cast<std::size_t>(c.lin(i, j, k))] = s / n;
            }
    return c;
}

// Trilinear interpolation with replicated borders.
template <class T>
T sample_clamped(const Index3& d, const Vec3& c, const T* data) {
    std::int64_t i0[3], i1[3];
    double f[3];
    for (std::size_t a = 0; a < 3; ++a) {
        const double hi = static_cast<double>(d[a] - 1);
        const double x = c[a] <= 0.0 ? 0.0 : (c[a] >= hi ? hi : c[a]);
        const auto fl = static_cast<std::int64_t>(x);
        i0[a] = fl;
        i1[a] = fl + 1 < d[a] ? fl + 1 : fl;
        f[a] = x - static_cast<double>(fl);
    }
    const std::int64_t sy = d[0], sz = d[0] * d[1];
    const std::int64_t y0 = i0[1] * sy, y1 = i1[1] * sy, z0 = i0[2] * sz, z1 = i1[2] * sz;
    const T c00 = data[i0[0] + y0 + z0] * (1.0 - f[0]) + data[i1[0] + y0 + z0] * f[0];
    const T c10 = data[i0[0] + y1 + z0] * (1.0 - f[0]) + data[i1[0] + y1 + z0] * f[0];
    const T c01 = data[i0[0] + y0 + z1] * (1.0 - f[0]) + data[i1[0] + y0 + z1] * f[0];
    const T c11 = data[i0[0] + y1 + z1] * (1.0 - f[0]) + data[i1[0] + y1 + z1] * f[0];
    const T c0 = c00 * (1.0 - f[1]) + c10 * f[1];
    const T c1 = c01 * (1.0 - f[1]) + c11 * f[1];
    return c0 * (1.0 - f[2]) + c1 * f[2];
}

Vol warp(const Vol& m, const Flow& u, const Exec& exec) {
    Vol out{m.d, std::vector<double>(m.v.size())};
    parallel_for(m.size(), exec, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t l = b; l < e; ++l) {
            const std::int64_t i = l % m.d[0], j = (l / m.d[0]) % m.d[1], k = l / (m.d[0] * m.d[1]);
            const Vec3 c = Vec3{static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)} +
                           u[static_cast<std::size_t>(l)];
            out.v[static_cast<std::size_t>(l)] =
                sample_clamped<double>(m.d, c, m.v.data());
        }
    });
    return out;
}

Flow gradient(const Vol& f) {
    Flow g(f.v.size());
    const std::int64_t stride[3] = {1, f.d[0], f.d[0] * f.d[1]};
    for (std::int64_t l = 0; l < f.size(); ++l) {
        const std::int64_t idx[3] = {l % f.d[0], (l / f.d[0]) % f.d[1], l / (f.d[0] * f.d[1])};
        Vec3 out{};
        for (std::size_t a = 0; a < 3; ++a) {
            const std::int64_t n = f.d[a];
            if (n < 2) continue;
            const std::int64_t lo = idx[a] > 0 ? l - stride[a] : l;
            const std::int64_t hi = idx[a] < n - 1 ? l + stride[a] : l;
            const double h = (idx[a] > 0 && idx[a] < n - 1) ? 2.0 : 1.0;
            out[a] = (f.v[static_cast<std::size_t>(hi)] - f.v[static_cast<std::size_t>(lo)]) / h;
        }
        g[static_cast<std::size_t>(l)] = out;
    }
    return g;
}

Flow upsample(const Flow& coarse, const Index3& cd, const Index3& fd) {
    Flow out(static_cast<std::size_t>(fd[0] * fd[1] * fd[2]));
    for (std::int64_t k = 0; k < fd[2]; ++k)
        for (std::int64_t j = 0; j < fd[1]; ++j)
            for (std::int64_t i = 0; i < fd[0]; ++i) {
                const Vec3 c{(i - 0.5) / 2.0, (j - 0.5) / 2.0, (k - 0.5) / 2.0};
                const Vec3 v = sample_clamped<Vec3>(cd, c, coarse.data());
                out[static_cast<std::size_t>(i + fd[0] * (j + fd[1] * k))] = v * 2.0;
            }
    return out;
}

Flow exponentiate(const Flow& v, const Index3& d, int squarings) {
    Flow u(v.size());
    const double scale = std::ldexp(1.0, -squarings);
    for (std::size_t l = 0; l < v.size(); ++l) u[l] = v[l] * scale;
    Flow next(v.size());
    for (int s = 0; s < squarings; ++s) {
        for (std::int64_t l = 0; l < static_cast<std::int64_t>(u.size()); ++l) {
            const Vec3 x{static_cast<double>(l % d[0]), static_cast<double>((l / d[0]) % d[1]),
                         static_cast<double>(l / (d[0] * d[1]))};
            const Vec3 ul = u[static_cast<std::size_t>(l)];
            next[static_cast<std::size_t>(l)] =
                ul + sample_clamped<Vec3>(d, x + ul, u.data());
        }
        u.swap(next);
    }
    return u;
}

void check_pair(const ScalarGrid& fixed, const ScalarGrid& moving, const RegParams& p) {
    p.validate();
    if (!(fixed.geometry == moving.geometry))
        throw Error("registration.geometry", "fixed and moving images must share a geometry; resample first");
}

template <class LevelSolver>
VectorField multires(const ScalarGrid& fixed, const ScalarGrid& moving, const RegParams& p, LevelSolver solve) {
    std::vector<Vol> fp{normalized(fixed)}, mp{normalized(moving)};
    for (int l = 1; l < p.levels; ++l) {
        const auto& top = fp.back();
        if (std::min({top.d[0], top.d[1], top.d[2]}) < 16) break;
        fp.push_back(downsample(top));
        mp.push_back(downsample(mp.back()));
    }
    Flow u;
    for (int l = static_cast<int>(fp.size()) - 1; l >= 0; --l) {
        const auto& F = fp[static_cast<std::size_t>(l)];
        if (u.empty()) u.assign(F.v.size(), Vec3{});
        else u = upsample(u, fp[static_cast<std::size_t>(l + 1)].d, F.d);
        solve(F, mp[static_cast<std::size_t>(l)], u);
    }
    VectorField out(fixed.geometry, FieldConvention::backward_pull);
    for (std::size_t l = 0; l < u.size(); ++l) out.vectors[l] = hadamard(u[l], fixed.geometry.spacing);
    return out;
}

}  // namespace

VectorField register_hsof(const ScalarGrid& fixed, const ScalarGrid& moving, const RegParams& p, const Exec& exec) {
    check_pair(fixed, moving, p);
    const int inner = p.iterations;
    return multires(fixed, moving, p, [&](const Vol& F, const Vol& M, Flow& u) {
        const Flow gf = gradient(F);
        const std::int64_t stride[3] = {1, F.d[0], F.d[0] * F.d[1]};
        Flow next(u.size());
        for (int w = 0; w < p.hs_warps; ++w) {
            const Vol Iw = warp(M, u, exec);
            Flow g = gradient(Iw);
            std::vector<double> It(u.size());
            for (std::size_t l = 0; l < u.size(); ++l) {
                g[l] = (g[l] + gf[l]) * 0.5;
                It[l] = Iw.v[l] - F.v[l];
            }
            const Flow u0 = u;
            for (int it = 0; it < inner; ++it) {
                parallel_for(F.size(), exec, [&](std::int64_t b, std::int64_t e) {
                    for (std::int64_t l = b; l < e; ++l) {
                        const std::int64_t idx[3] = {l % F.d[0], (l / F.d[0]) % F.d[1], l / (F.d[0] * F.d[1])};
                        Vec3 mean{};
                        for (std::size_t a = 0; a < 3; ++a) {
                            mean += u[static_cast<std::size_t>(idx[a] > 0 ? l - stride[a] : l)];
                            mean += u[static_cast<std::size_t>(idx[a] < F.d[a] - 1 ? l + stride[a] : l)];
                        }
                        mean = mean / 6.0;
                        const auto s = static_cast<std::size_t>(l);
                        const Vec3& gl = g[s];
                        const double r = dot(gl, mean - u0[s]) + It[s];
                        const Vec3 nu = mean - gl * (r / (6.0 * p.hs_alpha + dot(gl, gl)));
                        next[s] = nu;
                    }
                });
                u.swap(next);
            }
            double change = 0.0;
            for (std::size_t l = 0; l < u.size(); ++l) change += norm(u[l] - u0[l]);
            if (change / static_cast<double>(u.size()) < p.convergence) break;
        }
    });
}

VectorField register_demons(const ScalarGrid& fixed, const ScalarGrid& moving, const RegParams& p, const Exec& exec) {
    check_pair(fixed, moving, p);
    return multires(fixed, moving, p, [&](const Vol& F, const Vol& M, Flow& u) {
        const Flow gf = gradient(F);
        Flow vel = u;  // diffeomorphic mode: stationary velocity, initialised from the coarser level
        Flow delta(u.size());
        for (int it = 0; it < p.iterations; ++it) {
            const Vol Iw = warp(M, u, exec);
            const Flow gm = gradient(Iw);
            double mean_step = 0.0;
            for (std::size_t l = 0; l < u.size(); ++l) {
                const Vec3 g = (gf[l] + gm[l]) * 0.5;
                const double diff = Iw.v[l] - F.v[l];
                const double den = dot(g, g) + diff * diff;
                Vec3 d = den > 1e-12 ? g * (-diff / den) : Vec3{};
                const double n = norm(d);
                if (n > p.step_cap_voxels) d = d * (p.step_cap_voxels / n);
                delta[l] = d;
                mean_step += norm(d);
            }
            mean_step /= static_cast<double>(u.size());
            gaussian_smooth(delta, F.d, p.sigma_fluid);
            if (p.diffeomorphic) {
                for (std::size_t l = 0; l < u.size(); ++l) vel[l] += delta[l];
                gaussian_smooth(vel, F.d, p.sigma_diffusion);
                u = exponentiate(vel, F.d, p.squarings);
            } else {
                for (std::size_t l = 0; l < u.size(); ++l) u[l] += delta[l];
                gaussian_smooth(u, F.d, p.sigma_diffusion);
            }
            if (mean_step < p.convergence) break;
        }
    });
}

double ssd(const ScalarGrid& a, const ScalarGrid& b) {
    if (!(a.geometry == b.geometry)) throw Error("registration.geometry", "images differ in geometry");
    double s = 0.0;
    for (std::size_t l = 0; l < a.values.size(); ++l) {
        const double d = a.values[l] - b.values[l];
        s += d * d;
    }
    return s;
}

}  // namespace dtwin
