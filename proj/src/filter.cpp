#include "dtwin/filter.hpp"

#include <algorithm>
#include <cmath>

namespace dtwin {

Box bounding_box(const BinaryMask& mask, const Index3& margin) {
    const auto& g = mask.geometry;
    Box b{{g.dims[0], g.dims[1], g.dims[2]}, {-1, -1, -1}};
    for (std::int64_t l = 0; l < g.voxel_count(); ++l) {
        if (!mask.data[static_cast<std::size_t>(l)]) continue;
        const Index3 v = g.index(l);
        for (std::size_t a = 0; a < 3; ++a) {
            b.lo[a] = std::min(b.lo[a], v[a]);
            b.hi[a] = std::max(b.hi[a], v[a]);
        }
    }
    if (b.hi[0] < 0) return Box{};
    for (std::size_t a = 0; a < 3; ++a) {
        b.lo[a] = std::max<std::int64_t>(0, b.lo[a] - margin[a]);
        b.hi[a] = std::min<std::int64_t>(g.dims[a] - 1, b.hi[a] + margin[a]);
    }
    return b;
}

ScalarGrid crop(const ScalarGrid& grid, const Box& box) {
    const auto& g = grid.geometry;
    if (box.empty()) throw Error("grid.empty_box", "cannot crop to an empty box");
    for (std::size_t a = 0; a < 3; ++a)
        if (box.lo[a] < 0 || box.hi[a] >= g.dims[a]) throw Error("grid.bad_box", "crop box outside the grid");
    ScalarGrid out(GridGeometry(box.dims(), g.spacing, g.world(box.lo)), grid.kind);
    const auto& d = out.geometry.dims;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i)
                out.values[static_cast<std::size_t>(out.geometry.linear(i, j, k))] =
                    grid.at({box.lo[0] + i, box.lo[1] + j, box.lo[2] + k});
    return out;
}

VectorField embed(const VectorField& part, const GridGeometry& full, const Box& box) {
    if (part.geometry.dims != box.dims()) throw Error("grid.bad_box", "field does not match the box");
    VectorField out(full, part.convention);
    const auto& d = part.geometry.dims;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i)
                out.at({box.lo[0] + i, box.lo[1] + j, box.lo[2] + k}) = part.at({i, j, k});
    return out;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) return {1.0};
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + r)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

namespace {

template <class T>
void smooth_axis(std::vector<T>& values, const Index3& dims, int axis, const std::vector<double>& k) {
    const std::int64_t n = dims[static_cast<std::size_t>(axis)];
    const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? dims[0] : dims[0] * dims[1]);
    const int r = static_cast<int>(k.size() / 2);
    const std::int64_t total = dims[0] * dims[1] * dims[2];
    if (axis == 0) {
        std::vector<T> line(static_cast<std::size_t>(n));
        for (std::int64_t start = 0; start < total; start += n) {
            std::copy(values.begin() + start, values.begin() + start + n, line.begin());
            for (std::int64_t t = 0; t < n; ++t) {
                T acc{};
                if (t >= r && t + r < n) {
                    const T* src = line.data() + (t - r);
                    for (std::size_t o = 0; o < k.size(); ++o) acc += src[o] * k[o];
                } else {
                    for (int o = -r; o <= r; ++o) {
                        const std::int64_t s = std::clamp<std::int64_t>(t + o, 0, n - 1);
                        acc += line[static_cast<std::size_t>(s)] * k[static_cast<std::size_t>(o + r)];
                    }
                }
                values[static_cast<std::size_t>(start + t)] = acc;
            }
        }
        return;
    }
    // Higher axes: whole contiguous slabs of `stride` elements at a time.
    const std::int64_t block = stride * n;
    std::vector<T> slab(static_cast<std::size_t>(block));
    for (std::int64_t base = 0; base < total; base += block) {
        std::copy(values.begin() + base, values.begin() + base + block, slab.begin());
        for (std::int64_t t = 0; t < n; ++t) {
            T* dst = values.data() + base + t * stride;
            std::fill(dst, dst + stride, T{});
            for (int o = -r; o <= r; ++o) {
                const std::int64_t s = std::clamp<std::int64_t>(t + o, 0, n - 1);
                const T* src = slab.data() + s * stride;
                const double w = k[static_cast<std::size_t>(o + r)];
                for (std::int64_t i = 0; i < stride; ++i) dst[i] += src[i] * w;
            }
        }
    }
}

template <class T>
void smooth_all(std::vector<T>& values, const Index3& dims, double sigma) {
    if (!(sigma > 0.0)) return;
    const auto k = gaussian_kernel(sigma);
    for (int axis = 0; axis < 3; ++axis)
        if (dims[static_cast<std::size_t>(axis)] > 1) smooth_axis(values, dims, axis, k);
}

// Zero-padded separable convolution of a dense box-local array.
template <class T>
void convolve_zero(std::vector<T>& values, const Index3& dims, const std::vector<double>& k) {
    const int r = static_cast<int>(k.size() / 2);
    const std::int64_t total = dims[0] * dims[1] * dims[2];
    for (int axis = 0; axis < 3; ++axis) {
        const std::int64_t n = dims[static_cast<std::size_t>(axis)];
        const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? dims[0] : dims[0] * dims[1]);
        std::vector<T> line(static_cast<std::size_t>(n));
        for (std::int64_t start = 0; start < total; ++start) {
            if ((start / stride) % n != 0) continue;
            for (std::int64_t t = 0; t < n; ++t) line[static_cast<std::size_t>(t)] = values[static_cast<std::size_t>(start + t * stride)];
            for (std::int64_t t = 0; t < n; ++t) {
                T acc{};
                const std::int64_t lo = std::max<std::int64_t>(0, t - r);
                const std::int64_t hi = std::min<std::int64_t>(n - 1, t + r);
                for (std::int64_t s = lo; s <= hi; ++s)
                    acc += line[static_cast<std::size_t>(s)] * k[static_cast<std::size_t>(s - t + r)];
                values[static_cast<std::size_t>(start + t * stride)] = acc;
            }
        }
    }
}

}  // namespace

void gaussian_smooth(std::vector<double>& values, const Index3& dims, double sigma) { smooth_all(values, dims, sigma); }
void gaussian_smooth(std::vector<Vec3>& values, const Index3& dims, double sigma) { smooth_all(values, dims, sigma); }

void weighted_gaussian_smooth(VectorField& field, const std::vector<double>& weight, const Box& box, double sigma) {
    if (box.empty() || !(sigma > 0.0)) return;
    const auto& g = field.geometry;
    const Index3 bd = box.dims();
    const auto n = static_cast<std::size_t>(bd[0] * bd[1] * bd[2]);
    std::vector<Vec3> num(n);
    std::vector<double> den(n);
    auto global = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
        return static_cast<std::size_t>(g.linear(box.lo[0] + i, box.lo[1] + j, box.lo[2] + k));
    };
    std::size_t b = 0;
    for (std::int64_t k = 0; k < bd[2]; ++k)
        for (std::int64_t j = 0; j < bd[1]; ++j)
            for (std::int64_t i = 0; i < bd[0]; ++i, ++b) {
                const std::size_t l = global(i, j, k);
                den[b] = weight[l];
                num[b] = field.vectors[l] * weight[l];
            }
    const auto kern = gaussian_kernel(sigma);
    convolve_zero(num, bd, kern);
    convolve_zero(den, bd, kern);
    b = 0;
    for (std::int64_t k = 0; k < bd[2]; ++k)
        for (std::int64_t j = 0; j < bd[1]; ++j)
            for (std::int64_t i = 0; i < bd[0]; ++i, ++b) {
                const std::size_t l = global(i, j, k);
                if (weight[l] > 0.0 && den[b] > 0.0) field.vectors[l] = num[b] / den[b];
            }
}

}  // namespace dtwin
