#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "polcolor/image.hpp"

namespace polcolor {

enum class Layout : std::uint16_t { Gray1 = 1, Cov9 = 2, Class1 = 3, Param9 = 4 };

int channel_count(Layout layout);
const char* layout_name(Layout layout);

/// Channel-interleaved, row-major float32 image. "PRAS" files store exactly
/// these values, so reading back what was written is bit-identical.
struct PolRaster {
    static constexpr std::uint16_t kFormatVersion = 1;
    static constexpr std::size_t kHeaderBytes = 16;

    std::uint32_t width = 0;
    std::uint32_t height = 0;
    Layout layout = Layout::Gray1;
    std::vector<float> data;

    PolRaster() = default;
    PolRaster(std::uint32_t w, std::uint32_t h, Layout l);

    int channels() const { return channel_count(layout); }
    float& at(std::uint32_t y, std::uint32_t x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * static_cast<std::size_t>(channels()) + c];
    }
    float at(std::uint32_t y, std::uint32_t x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * static_cast<std::size_t>(channels()) + c];
    }
    bool operator==(const PolRaster&) const = default;
};

std::vector<std::uint8_t> encode_raster(const PolRaster& raster);
PolRaster decode_raster(const std::vector<std::uint8_t>& bytes);

void write_raster(const std::filesystem::path& path, const PolRaster& raster);
PolRaster read_raster(const std::filesystem::path& path);

PolRaster to_raster(const Plane& plane);
PolRaster to_raster(const LabelPlane& labels);
PolRaster to_raster(const CovarianceImage& image);
PolRaster to_raster(const std::vector<ParamVector>& params, int width, int height);

Plane plane_from_raster(const PolRaster& raster);
LabelPlane labels_from_raster(const PolRaster& raster);
CovarianceImage covariance_from_raster(const PolRaster& raster);

enum class PngMode {
    GrayDb,       // GRAY1, [-25, 0] dB onto [0, 255]
    GrayLinear,   // GRAY1, [0, 5] onto [0, 255]
    Pauli,        // COV9, Pauli channels in dB
    Freeman,      // COV9, r = double bounce, g = volume, b = surface in dB
    HAlphaZones,  // CLASS1 zone ids, fixed palette
};

/// Colour modes share one white point (97th percentile of all channel dB
/// values) and show 25 dB below it.
void export_png(const PolRaster& raster, PngMode mode, const std::filesystem::path& path);

/// 8-bit RGB pixels (row-major, interleaved) that export_png would write.
std::vector<std::uint8_t> render_rgb(const PolRaster& raster, PngMode mode);

}  // namespace polcolor
