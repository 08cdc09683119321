#include "dtwin/grid.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <sstream>

namespace dtwin {

namespace {

// Continuous indices within this distance of an integer are snapped onto it,
// which keeps integer-voxel shifts bit-exact despite mm/voxel round trips.
constexpr double kSnap = 1e-10;

double snap(double c) {
    const double r = std::nearbyint(c);
    return std::abs(c - r) < kSnap ? r : c;
}

struct AxisWeights {
    std::int64_t i0 = 0;
    std::int64_t i1 = 0;
    double f = 0.0;
};

// False when the coordinate lies outside [0, n-1].
bool axis_weights(double c, std::int64_t n, AxisWeights& w) {
    c = snap(c);
    if (!(c >= 0.0) || c > static_cast<double>(n - 1)) return false;
    w.i0 = static_cast<std::int64_t>(std::floor(c));
    if (w.i0 >= n - 1) {
        w.i0 = n - 1;
        w.i1 = n - 1;
        w.f = 0.0;
    } else {
        w.i1 = w.i0 + 1;
        w.f = c - static_cast<double>(w.i0);
    }
    return true;
}

template <class Value, class Fetch>
bool trilinear(const GridGeometry& g, const Vec3& idx, Fetch fetch, Value& out) {
    AxisWeights wx, wy, wz;
    if (!axis_weights(idx.x, g.dims[0], wx) || !axis_weights(idx.y, g.dims[1], wy) ||
        !axis_weights(idx.z, g.dims[2], wz)) {
        return false;
    }
    auto lerp = [](const Value& a, const Value& b, double f) { return a * (1.0 - f) + b * f; };
    const Value c00 = lerp(fetch(g.linear(wx.i0, wy.i0, wz.i0)), fetch(g.linear(wx.i1, wy.i0, wz.i0)), wx.f);
    const Value c10 = lerp(fetch(g.linear(wx.i0, wy.i1, wz.i0)), fetch(g.linear(wx.i1, wy.i1, wz.i0)), wx.f);
    const Value c01 = lerp(fetch(g.linear(wx.i0, wy.i0, wz.i1)), fetch(g.linear(wx.i1, wy.i0, wz.i1)), wx.f);
    const Value c11 = lerp(fetch(g.linear(wx.i0, wy.i1, wz.i1)), fetch(g.linear(wx.i1, wy.i1, wz.i1)), wx.f);
    out = lerp(lerp(c00, c10, wy.f), lerp(c01, c11, wy.f), wz.f);
    return true;
}

Vec3 pull_index(const GridGeometry& out_geom, const GridGeometry& src_geom, const Index3& v,
                const Vec3& disp) {
    if (out_geom == src_geom) {
        return {static_cast<double>(v[0]) + disp.x / src_geom.spacing.x,
                static_cast<double>(v[1]) + disp.y / src_geom.spacing.y,
                static_cast<double>(v[2]) + disp.z / src_geom.spacing.z};
    }
    return src_geom.continuous_index(out_geom.world(v) + disp);
}

}  // namespace

GridGeometry::GridGeometry(Index3 d, Vec3 s, Vec3 o) : dims(d), spacing(s), origin(o) {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) throw Error("grid.bad_dims", "grid dimensions must be >= 1");
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
            throw Error("grid.bad_spacing", "grid spacing must be positive and finite");
    }
}

Index3 GridGeometry::nearest_index(const Vec3& w) const {
    const Vec3 c = continuous_index(w);
    return {static_cast<std::int64_t>(std::floor(c.x + 0.5)),
            static_cast<std::int64_t>(std::floor(c.y + 0.5)),
            static_cast<std::int64_t>(std::floor(c.z + 0.5))};
}

double GridGeometry::min_spacing() const { return std::min({spacing.x, spacing.y, spacing.z}); }

ScalarGrid::ScalarGrid(GridGeometry g, ScalarKind k, double fill)
    : geometry(g), values(static_cast<std::size_t>(g.voxel_count()), fill), kind(k) {}

LabelMask::LabelMask(GridGeometry g)
    : geometry(g), labels(static_cast<std::size_t>(g.voxel_count()), 0) {}

std::uint16_t LabelMask::label_at_world(const Vec3& w) const {
    const Index3 v = geometry.nearest_index(w);
    return geometry.contains(v) ? at(v) : 0;
}

void LabelMask::validate() const {
    std::vector<bool> seen(65536, false);
    for (auto l : labels) seen[l] = true;
    for (int l = 1; l < 65536; ++l) {
        if (seen[static_cast<std::size_t>(l)] && !label_names.contains(l)) {
            std::ostringstream os;
            os << "label " << l << " has no organ name";
            throw Error("labels.unnamed", os.str());
        }
    }
}

BinaryMask::BinaryMask(GridGeometry g) : geometry(g), data(static_cast<std::size_t>(g.voxel_count()), 0) {}

std::int64_t BinaryMask::count() const {
    return std::count_if(data.begin(), data.end(), [](std::uint8_t b) { return b != 0; });
}

BinaryMask select_label(const LabelMask& mask, int label) {
    BinaryMask out(mask.geometry);
    for (std::size_t i = 0; i < mask.labels.size(); ++i) out.data[i] = mask.labels[i] == label ? 1 : 0;
    return out;
}

BinaryMask select_nonzero(const LabelMask& mask) {
    BinaryMask out(mask.geometry);
    for (std::size_t i = 0; i < mask.labels.size(); ++i) out.data[i] = mask.labels[i] != 0 ? 1 : 0;
    return out;
}

BinaryMask dilate(const BinaryMask& mask, int steps) {
    if (steps <= 0) return mask;
    BinaryMask cur = mask;
    const auto& g = mask.geometry;
    // Box dilation of radius `steps` is separable: a running-count max filter per axis.
    std::vector<std::int64_t> prefix;
    for (int axis = 0; axis < 3; ++axis) {
        const std::int64_t n = g.dims[static_cast<std::size_t>(axis)];
        const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? g.dims[0] : g.dims[0] * g.dims[1]);
        BinaryMask next(g);
        prefix.assign(static_cast<std::size_t>(n + 1), 0);
        for (std::int64_t lin = 0; lin < g.voxel_count(); ++lin) {
            const Index3 v = g.index(lin);
            if (v[static_cast<std::size_t>(axis)] != 0) continue;  // one line per start voxel
            for (std::int64_t t = 0; t < n; ++t)
                prefix[static_cast<std::size_t>(t + 1)] =
                    prefix[static_cast<std::size_t>(t)] + cur.data[static_cast<std::size_t>(lin + t * stride)];
            for (std::int64_t t = 0; t < n; ++t) {
                const std::int64_t lo = std::max<std::int64_t>(0, t - steps);
                const std::int64_t hi = std::min<std::int64_t>(n, t + steps + 1);
                next.data[static_cast<std::size_t>(lin + t * stride)] =
                    prefix[static_cast<std::size_t>(hi)] > prefix[static_cast<std::size_t>(lo)] ? 1 : 0;
            }
        }
        cur = std::move(next);
    }
    return cur;
}

namespace {

// Felzenszwalb-Huttenlocher 1-D squared distance transform with sample spacing h.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, double h, std::vector<int>& v,
            std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[static_cast<std::size_t>(q)] == inf) continue;
        const double xq = q * h;
        while (k >= 0) {
            const int p = v[static_cast<std::size_t>(k)];
            const double xp = p * h;
            const double s = ((f[static_cast<std::size_t>(q)] + xq * xq) - (f[static_cast<std::size_t>(p)] + xp * xp)) /
                             (2.0 * (xq - xp));
            if (s <= z[static_cast<std::size_t>(k)]) --k;
            else break;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = k == 0 ? -inf : [&] {
            const int p = v[static_cast<std::size_t>(k - 1)];
            const double xp = p * h;
            return ((f[static_cast<std::size_t>(q)] + xq * xq) - (f[static_cast<std::size_t>(p)] + xp * xp)) /
                   (2.0 * (xq - xp));
        }();
    }
    if (k < 0) {
        std::fill(d.begin(), d.end(), inf);
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (j < k && z[static_cast<std::size_t>(j + 1)] < q * h) ++j;
        const double dx = (q - v[static_cast<std::size_t>(j)]) * h;
        d[static_cast<std::size_t>(q)] = dx * dx + f[static_cast<std::size_t>(v[static_cast<std::size_t>(j)])];
    }
}

}  // namespace

ScalarGrid distance_map(const BinaryMask& target) {
    const auto& g = target.geometry;
    ScalarGrid out(g);
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = target.data[i] ? 0.0 : inf;
    std::vector<double> f, d;
    std::vector<int> v;
    std::vector<double> z;
    for (int axis = 0; axis < 3; ++axis) {
        const std::int64_t n = g.dims[static_cast<std::size_t>(axis)];
        const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? g.dims[0] : g.dims[0] * g.dims[1]);
        const double h = g.spacing[axis];
        f.resize(static_cast<std::size_t>(n));
        d.resize(static_cast<std::size_t>(n));
        v.resize(static_cast<std::size_t>(n));
        z.resize(static_cast<std::size_t>(n + 1));
        for (std::int64_t lin = 0; lin < g.voxel_count(); ++lin) {
            if (g.index(lin)[static_cast<std::size_t>(axis)] != 0) continue;
            for (std::int64_t t = 0; t < n; ++t) f[static_cast<std::size_t>(t)] = out.values[static_cast<std::size_t>(lin + t * stride)];
            edt_1d(f, d, h, v, z);
            for (std::int64_t t = 0; t < n; ++t) out.values[static_cast<std::size_t>(lin + t * stride)] = d[static_cast<std::size_t>(t)];
        }
    }
    for (double& x : out.values) x = std::sqrt(x);
    return out;
}

VectorField::VectorField(GridGeometry g, FieldConvention c)
    : geometry(g), vectors(static_cast<std::size_t>(g.voxel_count())), convention(c) {}

double sample_trilinear_index(const ScalarGrid& grid, const Vec3& idx, double background) {
    double out = background;
    const auto& vals = grid.values;
    if (!trilinear<double>(grid.geometry, idx, [&](std::int64_t l) { return vals[static_cast<std::size_t>(l)]; }, out))
        return background;
    return out;
}

double sample_trilinear(const ScalarGrid& grid, const Vec3& world_point, double background) {
    return sample_trilinear_index(grid, grid.geometry.continuous_index(world_point), background);
}

Vec3 sample_vector_index(const VectorField& field, const Vec3& idx) {
    Vec3 out{};
    const auto& vecs = field.vectors;
    if (!trilinear<Vec3>(field.geometry, idx, [&](std::int64_t l) { return vecs[static_cast<std::size_t>(l)]; }, out))
        return Vec3{};
    return out;
}

Vec3 sample_vector(const VectorField& field, const Vec3& world_point) {
    return sample_vector_index(field, field.geometry.continuous_index(world_point));
}

ScalarGrid warp_pull(const ScalarGrid& moving, const VectorField& field, const Exec& exec) {
    if (field.convention != FieldConvention::backward_pull)
        throw Error("field.convention", "warp_pull requires a backward_pull field");
    ScalarGrid out(field.geometry, moving.kind);
    const auto& og = field.geometry;
    parallel_for(og.voxel_count(), exec, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t lin = b; lin < e; ++lin) {
            const Index3 v = og.index(lin);
            const Vec3 idx = pull_index(og, moving.geometry, v, field.vectors[static_cast<std::size_t>(lin)]);
            out.values[static_cast<std::size_t>(lin)] = sample_trilinear_index(moving, idx);
        }
    });
    return out;
}

LabelMask warp_pull_labels(const LabelMask& moving, const VectorField& field, const Exec& exec) {
    if (field.convention != FieldConvention::backward_pull)
        throw Error("field.convention", "warp_pull_labels requires a backward_pull field");
    LabelMask out(field.geometry);
    out.label_names = moving.label_names;
    const auto& og = field.geometry;
    const auto& mg = moving.geometry;
    parallel_for(og.voxel_count(), exec, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t lin = b; lin < e; ++lin) {
            const Index3 v = og.index(lin);
            const Vec3 idx = pull_index(og, mg, v, field.vectors[static_cast<std::size_t>(lin)]);
            const Index3 n{static_cast<std::int64_t>(std::floor(snap(idx.x) + 0.5)),
                           static_cast<std::int64_t>(std::floor(snap(idx.y) + 0.5)),
                           static_cast<std::int64_t>(std::floor(snap(idx.z) + 0.5))};
            out.labels[static_cast<std::size_t>(lin)] = mg.contains(n) ? moving.at(n) : 0;
        }
    });
    return out;
}

void quantize_float32(ScalarGrid& grid) {
    for (auto& v : grid.values) v = static_cast<double>(static_cast<float>(v));
}

void quantize_float32(VectorField& field) {
    for (auto& v : field.vectors)
        for (int a = 0; a < 3; ++a) v[a] = static_cast<double>(static_cast<float>(v[a]));
}

}  // namespace dtwin
