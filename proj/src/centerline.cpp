#include "dtwin/centerline.hpp"

#include <algorithm>
#include <cmath>

namespace dtwin {

namespace {

// Rotates v by the minimal rotation taking unit vector a onto unit vector b.
Vec3 minimal_rotation(const Vec3& v, const Vec3& a, const Vec3& b) {
    const Vec3 axis = cross(a, b);
    const double s = norm(axis);
    const double c = dot(a, b);
    if (s < 1e-14) return v;
    const Vec3 k = axis / s;
    return v * c + cross(k, v) * s + k * (dot(k, v) * (1.0 - c));
}

}  // namespace

std::vector<Frame> transport_frames(const std::vector<Vec3>& points) {
    const std::size_t n = points.size();
    std::vector<Frame> frames(n);
    if (n < 2) return frames;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& a = points[i == 0 ? 0 : i - 1];
        const Vec3& b = points[i + 1 == n ? n - 1 : i + 1];
        frames[i].tangent = normalized(b - a);
    }
    // Initial normal from the coordinate axis least aligned with the tangent.
    const Vec3 t0 = frames[0].tangent;
    int best = 0;
    for (int a = 1; a < 3; ++a)
        if (std::abs(t0[a]) < std::abs(t0[best])) best = a;
    Vec3 e{};
    e[best] = 1.0;
    Vec3 nrm = normalized(e - t0 * dot(e, t0));
    for (std::size_t i = 0; i < n; ++i) {
        Frame& f = frames[i];
        if (i > 0) nrm = minimal_rotation(nrm, frames[i - 1].tangent, f.tangent);
        nrm = normalized(nrm - f.tangent * dot(nrm, f.tangent));
        f.normal = nrm;
        f.binormal = normalized(cross(f.tangent, f.normal));
    }
    return frames;
}

Centerline make_centerline(std::vector<Vec3> points) {
    Centerline c;
    for (const auto& p : points) {
        if (!c.points.empty() && norm(p - c.points.back()) < 1e-9) continue;
        c.points.push_back(p);
    }
    if (c.points.size() < 2) throw Error("centerline.degenerate", "centerline needs at least two distinct points");
    c.arclength.resize(c.points.size());
    c.arclength[0] = 0.0;
    for (std::size_t i = 1; i < c.points.size(); ++i)
        c.arclength[i] = c.arclength[i - 1] + norm(c.points[i] - c.points[i - 1]);
    c.frames = transport_frames(c.points);
    return c;
}

Vec3 Centerline::point_at(double u) const {
    if (points.empty()) return {};
    const double s = std::clamp(u, 0.0, 1.0) * length();
    if (u <= 0.0) return points.front();
    if (u >= 1.0) return points.back();
    auto it = std::upper_bound(arclength.begin(), arclength.end(), s);
    const std::size_t i1 = std::min<std::size_t>(static_cast<std::size_t>(it - arclength.begin()), points.size() - 1);
    const std::size_t i0 = i1 - 1;
    const double seg = arclength[i1] - arclength[i0];
    const double f = seg > 0.0 ? (s - arclength[i0]) / seg : 0.0;
    return points[i0] * (1.0 - f) + points[i1] * f;
}

}  // namespace dtwin
