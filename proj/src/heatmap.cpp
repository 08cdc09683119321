#include "dtwin/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace dtwin {

std::array<std::uint8_t, 3> ramp_color(ColorRamp ramp, double t) {
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
    auto byte = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
    if (ramp == ColorRamp::gray) return {byte(t), byte(t), byte(t)};
    // Black -> red -> yellow -> white, each channel monotone in t.
    return {byte(3.0 * t), byte(3.0 * t - 1.0), byte(3.0 * t - 2.0)};
}

Image render_slice(const ScalarGrid& grid, const HeatmapOptions& o, double* used_min, double* used_max) {
    const auto& g = grid.geometry;
    if (o.axis < 0 || o.axis > 2) throw Error("render.bad_slice", "slice axis must be 0, 1 or 2");
    const auto a = static_cast<std::size_t>(o.axis);
    if (o.index < 0 || o.index >= g.dims[a])
        throw Error("render.bad_slice", "slice index " + std::to_string(o.index) + " out of range");
    const std::size_t c = a == 0 ? 1 : 0;   // image columns
    const std::size_t r = a == 2 ? 1 : 2;   // image rows
    Image img;
    img.width = static_cast<int>(g.dims[c]);
    img.height = static_cast<int>(g.dims[r]);
    auto value = [&](std::int64_t col, std::int64_t row) {
        Index3 v{};
        v[a] = o.index;
        v[c] = col;
        v[r] = g.dims[r] - 1 - row;  // top row = highest index
        return grid.at(v);
    };
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::int64_t row = 0; row < img.height; ++row)
        for (std::int64_t col = 0; col < img.width; ++col) {
            const double x = value(col, row);
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    if (o.min) lo = *o.min;
    if (o.max) hi = *o.max;
    if (used_min) *used_min = lo;
    if (used_max) *used_max = hi;
    img.pixels.reserve(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
    for (std::int64_t row = 0; row < img.height; ++row)
        for (std::int64_t col = 0; col < img.width; ++col) {
            const double t = hi > lo ? (value(col, row) - lo) / (hi - lo) : 0.0;
            img.pixels.push_back(ramp_color(o.ramp, t));
        }
    return img;
}

std::string encode_ppm(const Image& image) {
    std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.reserve(out.size() + image.pixels.size() * 3);
    for (const auto& p : image.pixels) out.append(reinterpret_cast<const char*>(p.data()), 3);
    return out;
}

void render_heatmap(const ScalarGrid& grid, const HeatmapOptions& options, const std::filesystem::path& out) {
    double lo = 0.0, hi = 0.0;
    const Image img = render_slice(grid, options, &lo, &hi);
    {
        std::ofstream f(out, std::ios::binary);
        const std::string data = encode_ppm(img);
        f.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!f) throw Error("render.io", "cannot write " + out.string());
    }
    std::ofstream legend(out.string() + ".legend.txt");
    legend.precision(10);
    legend << "ramp " << (options.ramp == ColorRamp::gray ? "gray" : "heat") << "\n"
           << "axis " << options.axis << "\nindex " << options.index << "\nmin " << lo << "\nmax " << hi << "\n";
    if (!legend) throw Error("render.io", "cannot write legend for " + out.string());
}

}  // namespace dtwin
