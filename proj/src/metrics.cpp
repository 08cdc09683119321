#include "dtwin/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace dtwin {

namespace {

void same_geometry(const GridGeometry& a, const GridGeometry& b) {
    if (!(a == b)) throw Error("metrics.geometry", "inputs differ in geometry");
}

bool inside_extent(const GridGeometry& g, const Vec3& w) {
    const Vec3 c = g.continuous_index(w);
    for (std::size_t a = 0; a < 3; ++a)
        if (!(c[a] >= -1e-9 && c[a] <= static_cast<double>(g.dims[a] - 1) + 1e-9)) return false;
    return true;
}

}  // namespace

KeypointSet shell_keypoints(const TubeSurface& surface, int label, const SamplingDensity& density, int stride) {
    if (stride < 1) throw Error("metrics.bad_stride", "stride must be >= 1");
    KeypointSet out;
    const auto samples = sample_correspondences(surface, surface, density);
    for (std::size_t i = 0; i < samples.size(); i += static_cast<std::size_t>(stride)) {
        const auto& s = samples[i];
        out.points.push_back({s.origin, s.u, s.v, s.p, label});
    }
    return out;
}

Stats summarize(const std::vector<double>& values) {
    Stats s;
    s.count = static_cast<std::int64_t>(values.size());
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) {
        sum += v;
        s.max = std::max(s.max, v);
    }
    s.mean = sum / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

TreResult tre(const KeypointSet& keys, const VectorField& gt_forward, const VectorField& cand_pull) {
    if (gt_forward.convention != FieldConvention::forward_push || cand_pull.convention != FieldConvention::backward_pull)
        throw Error("field.convention", "TRE needs a forward_push ground truth and a backward_pull candidate");
    TreResult res;
    std::map<int, std::vector<double>> per;
    res.values.reserve(keys.points.size());
    for (const auto& k : keys.points) {
        if (!inside_extent(gt_forward.geometry, k.position))
            throw Error("metrics.keypoint_outside", "keypoint outside the ground-truth field");
        const Vec3 q = k.position + sample_vector(gt_forward, k.position);
        if (!inside_extent(cand_pull.geometry, q))
            throw Error("metrics.keypoint_outside", "deformed keypoint outside the candidate field");
        const double e = norm(q + sample_vector(cand_pull, q) - k.position);
        res.values.push_back(e);
        per[k.label].push_back(e);
    }
    for (const auto& [label, v] : per) res.per_organ[label] = summarize(v);
    return res;
}

double dsc(const BinaryMask& a, const BinaryMask& b) {
    same_geometry(a.geometry, b.geometry);
    std::int64_t na = 0, nb = 0, both = 0;
    for (std::size_t l = 0; l < a.data.size(); ++l) {
        const bool x = a.data[l] != 0, y = b.data[l] != 0;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

BinaryMask boundary(const BinaryMask& mask) {
    const auto& g = mask.geometry;
    BinaryMask out(g);
    static constexpr std::array<Index3, 6> face{{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    for (std::int64_t l = 0; l < g.voxel_count(); ++l) {
        if (!mask.data[static_cast<std::size_t>(l)]) continue;
        const Index3 v = g.index(l);
        for (const auto& d : face) {
            const Index3 n{v[0] + d[0], v[1] + d[1], v[2] + d[2]};
            if (!g.contains(n) || !mask.at(n)) {
                out.data[static_cast<std::size_t>(l)] = 1;
                break;
            }
        }
    }
    return out;
}

namespace {

double directed_p95(const BinaryMask& from_boundary, const ScalarGrid& dist_to_other) {
    std::vector<double> d;
    for (std::size_t l = 0; l < from_boundary.data.size(); ++l)
        if (from_boundary.data[l]) d.push_back(dist_to_other.values[l]);
    std::sort(d.begin(), d.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(d.size())));
    return d[std::max<std::size_t>(rank, 1) - 1];
}

}  // namespace

double hd95(const BinaryMask& a, const BinaryMask& b) {
    same_geometry(a.geometry, b.geometry);
    if (a.count() == 0 || b.count() == 0) throw Error("metrics.empty_mask", "HD95 needs two nonempty masks");
    const auto ba = boundary(a), bb = boundary(b);
    return std::max(directed_p95(ba, distance_map(bb)), directed_p95(bb, distance_map(ba)));
}

Stats displacement_stats(const VectorField& field, const BinaryMask& mask) {
    same_geometry(field.geometry, mask.geometry);
    std::vector<double> m;
    for (std::size_t l = 0; l < field.vectors.size(); ++l)
        if (mask.data[l]) m.push_back(norm(field.vectors[l]));
    if (m.empty()) throw Error("metrics.empty_mask", "displacement statistics over an empty mask");
    return summarize(m);
}

ScalarGrid accumulate_dose(const ScalarGrid& dose, const std::vector<VectorField>& pull_fields, const Exec& exec) {
    if (dose.kind != ScalarKind::dose_gray) throw Error("metrics.kind", "dose accumulation needs a dose grid");
    if (pull_fields.empty()) throw Error("metrics.no_fields", "no deformation fields to accumulate over");
    const auto& g = pull_fields.front().geometry;
    ScalarGrid out(g, ScalarKind::dose_gray);
    for (const auto& f : pull_fields) {
        if (f.convention != FieldConvention::backward_pull)
            throw Error("field.convention", "dose accumulation needs backward_pull fields");
        same_geometry(f.geometry, g);
    }
    parallel_for(g.voxel_count(), exec, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t l = b; l < e; ++l) {
            const Vec3 x = g.world(l);
            double s = 0.0;
            for (const auto& f : pull_fields) s += sample_trilinear(dose, x + f.vectors[static_cast<std::size_t>(l)]);
            out.values[static_cast<std::size_t>(l)] = s;
        }
    });
    return out;
}

double dwe(const ScalarGrid& dir, const ScalarGrid& gt, const BinaryMask* mask, double floor, bool signed_error) {
    same_geometry(dir.geometry, gt.geometry);
    if (mask) same_geometry(mask->geometry, gt.geometry);
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::size_t l = 0; l < gt.values.size(); ++l) {
        if (mask && !mask->data[l]) continue;
        const double ref = gt.values[l];
        if (!(ref >= floor) || ref <= 0.0) continue;
        const double d = dir.values[l] - ref;
        sum += (signed_error ? d : std::abs(d)) / ref;
        ++n;
    }
    if (n == 0) throw Error("metrics.no_dose", "no voxels at or above the dose floor");
    return 100.0 * sum / static_cast<double>(n);
}

ScalarGrid error_magnitude(const VectorField& a, const VectorField& b) {
    same_geometry(a.geometry, b.geometry);
    ScalarGrid out(a.geometry);
    for (std::size_t l = 0; l < a.vectors.size(); ++l) out.values[l] = norm(a.vectors[l] - b.vectors[l]);
    return out;
}

ScalarGrid magnitude(const VectorField& field) {
    ScalarGrid out(field.geometry);
    for (std::size_t l = 0; l < field.vectors.size(); ++l) out.values[l] = norm(field.vectors[l]);
    return out;
}

std::vector<Bin> rmse_binned(const ScalarGrid& err, const ScalarGrid& binning, const std::vector<double>& edges,
                             const BinaryMask* mask) {
    same_geometry(err.geometry, binning.geometry);
    if (mask) same_geometry(mask->geometry, err.geometry);
    if (edges.size() < 2) throw Error("metrics.bad_edges", "need at least two bin edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw Error("metrics.bad_edges", "bin edges must be strictly increasing");
    const std::size_t nb = edges.size() - 1;
    std::vector<double> sq(nb, 0.0);
    std::vector<Bin> bins(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        bins[i].lo = edges[i];
        bins[i].hi = edges[i + 1];
    }
    for (std::size_t l = 0; l < err.values.size(); ++l) {
        if (mask && !mask->data[l]) continue;
        const double x = binning.values[l];
        if (!(x >= edges.front() && x <= edges.back())) continue;
        std::size_t i = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
        i = std::min(i, nb) - 1;
        ++bins[i].count;
        sq[i] += err.values[l] * err.values[l];
    }
    for (std::size_t i = 0; i < nb; ++i)
        if (bins[i].count > 0) bins[i].rmse_mm = std::sqrt(sq[i] / static_cast<double>(bins[i].count));
    return bins;
}

std::vector<double> uniform_edges(double max_value, double step) {
    if (!(step > 0.0)) throw Error("metrics.bad_edges", "bin step must be positive");
    const auto n = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(std::max(0.0, max_value) / step)));
    std::vector<double> e(static_cast<std::size_t>(n + 1));
    for (std::int64_t i = 0; i <= n; ++i) e[static_cast<std::size_t>(i)] = step * static_cast<double>(i);
    return e;
}

std::string bins_csv(const std::vector<Bin>& bins) {
    std::ostringstream os;
    os.precision(10);
    os << "bin_lo,bin_hi,count,rmse_mm\n";
    for (const auto& b : bins) {
        os << b.lo << ',' << b.hi << ',' << b.count << ',';
        if (b.rmse_mm) os << *b.rmse_mm;
        os << '\n';
    }
    return os.str();
}

}  // namespace dtwin
