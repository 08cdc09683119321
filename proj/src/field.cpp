#include "dtwin/field.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dtwin/filter.hpp"

namespace dtwin {

std::vector<FieldSample> sample_correspondences(const TubeSurface& base, const Centerline& base_axis,
                                                const TubeSurface& deformed, const Centerline& deformed_axis,
                                                const SamplingDensity& density, const Exec& exec) {
    if (base.section_count() != deformed.section_count() || base.ray_count() != deformed.ray_count())
        throw Error("field.topology", "base and deformed surfaces differ in topology");
    const int n_u = density.n_u > 0 ? density.n_u : 4 * static_cast<int>(base.section_count());
    const int n_v = density.n_v > 0 ? density.n_v : 4 * static_cast<int>(base.ray_count());
    const int n_p = density.n_p;
    if (n_u < 2 || n_v < 1 || n_p < 2) throw Error("field.bad_density", "sampling density too small");
    const std::size_t per_u = static_cast<std::size_t>(n_v) * static_cast<std::size_t>(n_p);
    std::vector<FieldSample> out(static_cast<std::size_t>(n_u) * per_u);
    parallel_for(n_u, exec, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i) {
            const double u = static_cast<double>(i) / (n_u - 1);
            std::size_t o = static_cast<std::size_t>(i) * per_u;
            for (int j = 0; j < n_v; ++j) {
                const double v = static_cast<double>(j) / n_v;
                const Vec3 s0 = eval(base, u, v);
                const Vec3 s1 = eval(deformed, u, v);
                const Vec3 a0 = base_axis.point_at(u);
                const Vec3 a1 = deformed_axis.point_at(u);
                for (int k = 0; k < n_p; ++k, ++o) {
                    const double p = static_cast<double>(k) / (n_p - 1);
                    const Vec3 x = s0 * (1.0 - p) + a0 * p;
                    const Vec3 xd = s1 * (1.0 - p) + a1 * p;
                    out[o] = {u, v, p, x, xd - x};
                }
            }
        }
    });
    return out;
}

std::vector<FieldSample> sample_correspondences(const TubeSurface& base, const TubeSurface& deformed,
                                                const SamplingDensity& density, const Exec& exec) {
    return sample_correspondences(base, surface_axis(base), deformed, surface_axis(deformed), density, exec);
}

Voxelized voxelize(const std::vector<FieldSample>& samples, const GridGeometry& g) {
    Voxelized out{VectorField(g, FieldConvention::forward_push), BinaryMask(g)};
    std::vector<std::pair<std::int64_t, std::size_t>> keyed;
    keyed.reserve(samples.size());
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const Index3 v = g.nearest_index(samples[s].origin);
        if (g.contains(v)) keyed.emplace_back(g.linear(v), s);
    }
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t a = 0; a < keyed.size();) {
        std::size_t b = a;
        Vec3 sum{};
        while (b < keyed.size() && keyed[b].first == keyed[a].first) sum += samples[keyed[b++].second].vector;
        const auto l = static_cast<std::size_t>(keyed[a].first);
        out.field.vectors[l] = sum / static_cast<double>(b - a);
        out.coverage.data[l] = 1;
        a = b;
    }
    return out;
}

namespace {

constexpr std::array<Index3, 6> kFace{{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};

}  // namespace

FillResult fill_smooth(const VectorField& field, const BinaryMask& coverage, const BinaryMask& region,
                       const FillOptions& options) {
    const auto& g = field.geometry;
    if (!(coverage.geometry == g) || !(region.geometry == g))
        throw Error("field.geometry", "field, coverage and region must share a geometry");
    FillResult res{VectorField(g, FieldConvention::forward_push), 0, 0};
    auto& V = res.field.vectors;
    std::vector<std::uint8_t> known(V.size(), 0);
    std::vector<std::int64_t> pending;
    for (std::size_t l = 0; l < V.size(); ++l) {
        if (!region.data[l]) continue;
        if (coverage.data[l]) {
            known[l] = 1;
            V[l] = field.vectors[l];
        } else {
            pending.push_back(static_cast<std::int64_t>(l));
        }
    }

    std::vector<std::pair<std::int64_t, Vec3>> updates;
    while (!pending.empty() && res.sweeps < options.max_sweeps) {
        ++res.sweeps;
        updates.clear();
        std::vector<std::int64_t> still;
        for (std::int64_t l : pending) {
            const Index3 v = g.index(l);
            Vec3 sum{};
            int n = 0;
            for (const auto& d : kFace) {
                const Index3 w{v[0] + d[0], v[1] + d[1], v[2] + d[2]};
                if (!g.contains(w)) continue;
                const auto lw = static_cast<std::size_t>(g.linear(w));
                if (known[lw]) {
                    sum += V[lw];
                    ++n;
                }
            }
            if (n > 0) updates.emplace_back(l, sum / static_cast<double>(n));
            else still.push_back(l);
        }
        if (updates.empty()) break;
        for (const auto& [l, val] : updates) {
            V[static_cast<std::size_t>(l)] = val;
            known[static_cast<std::size_t>(l)] = 1;
        }
        pending.swap(still);
    }
    res.unreachable = static_cast<std::int64_t>(pending.size());

    if (options.sigma_voxels > 0.0) {
        std::vector<double> weight(V.size(), 0.0);
        for (std::size_t l = 0; l < V.size(); ++l) weight[l] = known[l] ? 1.0 : 0.0;
        const int r = static_cast<int>(std::ceil(3.0 * options.sigma_voxels));
        weighted_gaussian_smooth(res.field, weight, bounding_box(region, {r, r, r}), options.sigma_voxels);
        for (std::size_t l = 0; l < V.size(); ++l)
            if (region.data[l] && coverage.data[l]) V[l] = field.vectors[l];
    }
    return res;
}

void taper_outside(VectorField& field, const BinaryMask& organ, double width_mm) {
    if (!(width_mm > 0.0)) throw Error("field.bad_taper", "taper width must be positive");
    const auto d = distance_map(organ);
    for (std::size_t l = 0; l < field.vectors.size(); ++l) {
        const double dl = d.values[l];
        if (dl == 0.0) continue;
        const double s = std::max(0.0, 1.0 - dl / width_mm);
        field.vectors[l] = s > 0.0 ? field.vectors[l] * s : Vec3{};
    }
}

namespace {

// Column a of the displacement gradient at voxel v: dV/dx_a.
Vec3 partial(const VectorField& f, const Index3& v, std::size_t a) {
    const auto& g = f.geometry;
    const std::int64_t n = g.dims[a];
    if (n < 2) return {};
    Index3 lo = v, hi = v;
    double h = g.spacing[a];
    if (v[a] == 0) {
        hi[a] += 1;
    } else if (v[a] == n - 1) {
        lo[a] -= 1;
    } else {
        lo[a] -= 1;
        hi[a] += 1;
        h *= 2.0;
    }
    return (f.at(hi) - f.at(lo)) / h;
}

}  // namespace

double max_gradient_norm(const VectorField& field) {
    const auto& g = field.geometry;
    double best = 0.0;
    for (std::int64_t l = 0; l < g.voxel_count(); ++l) {
        const Index3 v = g.index(l);
        double s = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
            const Vec3 c = partial(field, v, a);
            s += dot(c, c);
        }
        best = std::max(best, s);
    }
    return std::sqrt(best);
}

InverseResult invert(const VectorField& push, const BinaryMask* region, const InvertOptions& opt, const Exec& exec) {
    if (push.convention != FieldConvention::forward_push)
        throw Error("field.convention", "invert expects a forward_push field");
    const auto& g = push.geometry;
    if (region && !(region->geometry == g)) throw Error("field.geometry", "region geometry differs from the field");
    if (max_gradient_norm(push) >= 1.0) warn("displacement gradient norm >= 1; inverse may be inaccurate");

    InverseResult res{VectorField(g, FieldConvention::backward_pull), std::vector<double>(push.vectors.size(), 0.0),
                      0.0, 0.0, 0, true};
    BinaryMask moving(g);
    double vmax = 0.0;
    for (std::size_t l = 0; l < push.vectors.size(); ++l) {
        const double m = norm(push.vectors[l]);
        if (m > 0.0) moving.data[l] = 1;
        vmax = std::max(vmax, m);
    }
    if (vmax == 0.0) return res;
    Index3 margin;
    for (std::size_t a = 0; a < 3; ++a) margin[a] = static_cast<std::int64_t>(std::ceil(vmax / g.spacing[a])) + 2;
    const Box box = bounding_box(moving, margin);
    const Index3 bd = box.dims();

    std::vector<std::int64_t> ids;
    ids.reserve(static_cast<std::size_t>(bd[0] * bd[1] * bd[2]));
    for (std::int64_t k = box.lo[2]; k <= box.hi[2]; ++k)
        for (std::int64_t j = box.lo[1]; j <= box.hi[1]; ++j)
            for (std::int64_t i = box.lo[0]; i <= box.hi[0]; ++i) ids.push_back(g.linear(i, j, k));

    // Each voxel's iteration only reads the fixed field V, so voxels converge
    // independently; converged ones leave the active set.
    auto& W = res.field.vectors;
    for (std::int64_t l : ids) W[static_cast<std::size_t>(l)] = push.vectors[static_cast<std::size_t>(l)] * -1.0;
    std::vector<std::int64_t> active = ids;
    std::vector<Vec3> next;
    std::vector<std::uint8_t> done;
    for (int it = 0; it < opt.max_iterations && !active.empty(); ++it) {
        ++res.iterations;
        const auto na = static_cast<std::int64_t>(active.size());
        next.assign(active.size(), Vec3{});
        done.assign(active.size(), 0);
        parallel_for(na, exec, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t q = b; q < e; ++q) {
                const auto l = static_cast<std::size_t>(active[static_cast<std::size_t>(q)]);
                const Vec3 w = W[l];
                const Vec3 nw = sample_vector(push, g.world(static_cast<std::int64_t>(l)) + w) * -1.0;
                next[static_cast<std::size_t>(q)] = nw;
                done[static_cast<std::size_t>(q)] = norm(nw - w) < opt.tolerance_mm;
            }
        });
        std::size_t keep = 0;
        for (std::size_t q = 0; q < active.size(); ++q) {
            W[static_cast<std::size_t>(active[q])] = next[q];
            if (!done[q]) active[keep++] = active[q];
        }
        active.resize(keep);
    }
    res.converged = active.empty();

    std::int64_t failed = 0, counted = 0;
    for (std::int64_t l : ids) {
        const auto lu = static_cast<std::size_t>(l);
        const double r = norm(sample_vector(push, g.world(l) + W[lu]) + W[lu]);
        res.residual[lu] = r;
        res.max_residual = std::max(res.max_residual, r);
    }
    for (std::size_t l = 0; l < W.size(); ++l) {
        if (region && !region->data[l]) continue;
        ++counted;
        if (res.residual[l] > opt.fail_residual_mm) ++failed;
    }
    res.fraction_failed = counted ? static_cast<double>(failed) / static_cast<double>(counted) : 0.0;
    if (res.fraction_failed > opt.fail_fraction) {
        std::ostringstream os;
        os << "inversion residual above " << opt.fail_residual_mm << " mm at " << 100.0 * res.fraction_failed
           << "% of voxels";
        throw Error("field.inversion_failed", os.str());
    }
    return res;
}

JacobianResult jacobian_log(const VectorField& field, const BinaryMask* mask) {
    const auto& g = field.geometry;
    if (mask && !(mask->geometry == g)) throw Error("field.geometry", "mask geometry differs from the field");
    JacobianResult res;
    res.log_jacobian = ScalarGrid(g);
    double sum = 0.0, sum2 = 0.0;
    for (std::int64_t l = 0; l < g.voxel_count(); ++l) {
        const Index3 v = g.index(l);
        const Vec3 c0 = partial(field, v, 0), c1 = partial(field, v, 1), c2 = partial(field, v, 2);
        // M = I + [c0 c1 c2] (columns).
        const double m00 = 1.0 + c0.x, m01 = c1.x, m02 = c2.x;
        const double m10 = c0.y, m11 = 1.0 + c1.y, m12 = c2.y;
        const double m20 = c0.z, m21 = c1.z, m22 = 1.0 + c2.z;
        const double J = m00 * (m11 * m22 - m12 * m21) - m01 * (m10 * m22 - m12 * m20) + m02 * (m10 * m21 - m11 * m20);
        const bool in = !mask || mask->data[static_cast<std::size_t>(l)];
        if (J <= 0.0) {
            if (in) ++res.foldings;
            continue;
        }
        const double lj = std::log(J);
        res.log_jacobian.values[static_cast<std::size_t>(l)] = lj;
        if (in) {
            sum += lj;
            sum2 += lj * lj;
            ++res.count;
        }
    }
    if (res.count > 0) {
        const double n = static_cast<double>(res.count);
        res.mean = sum / n;
        res.sd = std::sqrt(std::max(0.0, sum2 / n - res.mean * res.mean));
    }
    return res;
}

int region_dilation(double peak_mm, const GridGeometry& geometry) {
    return std::max(3, static_cast<int>(std::ceil(2.0 * peak_mm / geometry.min_spacing())));
}

SurfaceField surface_field(const TubeSurface& base, const TubeSurface& deformed, const BinaryMask& organ,
                           double peak_mm, const SurfaceFieldOptions& options, const Exec& exec) {
    const auto& g = organ.geometry;
    const int n_dilate = options.n_dilate >= 0 ? options.n_dilate : region_dilation(peak_mm, g);
    SurfaceField out;
    out.region = dilate(organ, n_dilate);
    auto vox = voxelize(sample_correspondences(base, deformed, options.density, exec), g);
    for (std::size_t l = 0; l < vox.coverage.data.size(); ++l)
        if (!out.region.data[l]) {
            vox.coverage.data[l] = 0;
            vox.field.vectors[l] = {};
        }
    auto filled = fill_smooth(vox.field, vox.coverage, out.region, options.fill);
    out.push = std::move(filled.field);
    out.unreachable = filled.unreachable;
    out.coverage = std::move(vox.coverage);
    if (options.taper && n_dilate > 0) taper_outside(out.push, organ, n_dilate * g.min_spacing());
    return out;
}

}  // namespace dtwin
