#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dtwin/grid.hpp"

namespace dtwin {

enum class ColorRamp { gray, heat };

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::array<std::uint8_t, 3>> pixels;  // row-major, top row first
};

struct HeatmapOptions {
    int axis = 2;  // slice normal: 0 = x, 1 = y, 2 = z
    std::int64_t index = 0;
    ColorRamp ramp = ColorRamp::heat;
    std::optional<double> min, max;  // default: slice range
};

/// RGB colour for t in [0, 1] (clamped).
std::array<std::uint8_t, 3> ramp_color(ColorRamp ramp, double t);

/// One slice mapped linearly over [min, max]. Image columns follow the first
/// remaining axis, rows the second. Error: "render.bad_slice".
Image render_slice(const ScalarGrid& grid, const HeatmapOptions& options, double* used_min = nullptr,
                   double* used_max = nullptr);

/// Binary P6 PPM.
std::string encode_ppm(const Image& image);

/// Writes the PPM and a "<path>.legend.txt" sidecar with the ramp and range.
void render_heatmap(const ScalarGrid& grid, const HeatmapOptions& options, const std::filesystem::path& out);

}  // namespace dtwin
