#include "polcolor/rasterio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include <png.h>

#include "polcolor/decomp.hpp"
#include "polcolor/errors.hpp"

namespace polcolor {

namespace {

constexpr char kMagic[4] = {'P', 'R', 'A', 'S'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v = static_cast<T>(v | (static_cast<T>(p[i]) << (8 * i)));
    return v;
}

Layout checked_layout(std::uint16_t raw) {
    if (raw < 1 || raw > 4) throw InvalidInput("unknown raster layout " + std::to_string(raw));
    return static_cast<Layout>(raw);
}

void require_layout(const PolRaster& r, Layout l) {
    if (r.layout != l)
        throw InvalidInput(std::string("expected a ") + layout_name(l) + " raster, got " + layout_name(r.layout));
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

double to_db(double v) { return 10.0 * std::log10(std::max(v, 1e-30)); }

// Zone palette indexed by zone id; index 0 is unclassified.
constexpr std::array<std::array<std::uint8_t, 3>, kNumZones + 1> kZonePalette{{
    {0, 0, 0},
    {0, 90, 255},
    {120, 190, 255},
    {160, 0, 200},
    {0, 170, 80},
    {120, 220, 60},
    {255, 60, 60},
    {255, 210, 0},
    {255, 130, 0},
}};

std::vector<std::uint8_t> colour_db(const std::vector<std::array<double, 3>>& rgb) {
    std::vector<double> db;
    db.reserve(rgb.size() * 3);
    for (const auto& px : rgb)
        for (double v : px) db.push_back(to_db(v));
    std::vector<double> sorted = db;
    const auto rank = static_cast<std::size_t>(std::floor(0.97 * static_cast<double>(sorted.size() - 1)));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank), sorted.end());
    const double white = sorted[rank];
    const double black = white - 25.0;
    std::vector<std::uint8_t> out(db.size());
    for (std::size_t i = 0; i < db.size(); ++i) out[i] = to_byte((db[i] - black) / 25.0);
    return out;
}

}  // namespace

int channel_count(Layout layout) {
    switch (layout) {
    case Layout::Gray1:
    case Layout::Class1: return 1;
    case Layout::Cov9:
    case Layout::Param9: return 9;
    }
    throw InvalidInput("unknown raster layout");
}

const char* layout_name(Layout layout) {
    switch (layout) {
    case Layout::Gray1: return "GRAY1";
    case Layout::Cov9: return "COV9";
    case Layout::Class1: return "CLASS1";
    case Layout::Param9: return "PARAM9";
    }
    return "?";
}

PolRaster::PolRaster(std::uint32_t w, std::uint32_t h, Layout l)
    : width(w), height(h), layout(l), data(static_cast<std::size_t>(w) * h * channel_count(l), 0.0f) {}

std::vector<std::uint8_t> encode_raster(const PolRaster& raster) {
    const std::size_t expected = static_cast<std::size_t>(raster.width) * raster.height * raster.channels();
    if (raster.data.size() != expected) throw InvalidInput("raster data length does not match its header");
    std::vector<std::uint8_t> out;
    out.reserve(PolRaster::kHeaderBytes + 4 * expected);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_le<std::uint16_t>(out, PolRaster::kFormatVersion);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(raster.layout));
    put_le<std::uint32_t>(out, raster.width);
    put_le<std::uint32_t>(out, raster.height);
    for (float v : raster.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

PolRaster decode_raster(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw InvalidInput("bad magic");
    if (bytes.size() < PolRaster::kHeaderBytes) throw InvalidInput("truncated header");
    const auto version = get_le<std::uint16_t>(bytes.data() + 4);
    if (version != PolRaster::kFormatVersion) throw InvalidInput("unknown version " + std::to_string(version));
    PolRaster r;
    r.layout = checked_layout(get_le<std::uint16_t>(bytes.data() + 6));
    r.width = get_le<std::uint32_t>(bytes.data() + 8);
    r.height = get_le<std::uint32_t>(bytes.data() + 12);
    const std::size_t values = static_cast<std::size_t>(r.width) * r.height * r.channels();
    const std::size_t payload = bytes.size() - PolRaster::kHeaderBytes;
    if (payload < 4 * values) throw InvalidInput("truncated payload");
    if (payload > 4 * values) throw InvalidInput("trailing bytes after payload");
    r.data.resize(values);
    const std::uint8_t* p = bytes.data() + PolRaster::kHeaderBytes;
    for (std::size_t i = 0; i < values; ++i) r.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i));
    return r;
}

void write_raster(const std::filesystem::path& path, const PolRaster& raster) {
    const auto bytes = encode_raster(raster);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidInput("failed writing " + path.string());
}

PolRaster read_raster(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_raster(bytes);
    } catch (const InvalidInput& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

PolRaster to_raster(const Plane& plane) {
    PolRaster r(static_cast<std::uint32_t>(plane.cols()), static_cast<std::uint32_t>(plane.rows()), Layout::Gray1);
    for (Eigen::Index y = 0; y < plane.rows(); ++y)
        for (Eigen::Index x = 0; x < plane.cols(); ++x)
            r.data[static_cast<std::size_t>(y * plane.cols() + x)] = static_cast<float>(plane(y, x));
    return r;
}

PolRaster to_raster(const LabelPlane& labels) {
    PolRaster r(static_cast<std::uint32_t>(labels.cols()), static_cast<std::uint32_t>(labels.rows()), Layout::Class1);
    for (Eigen::Index y = 0; y < labels.rows(); ++y)
        for (Eigen::Index x = 0; x < labels.cols(); ++x)
            r.data[static_cast<std::size_t>(y * labels.cols() + x)] = static_cast<float>(labels(y, x));
    return r;
}

PolRaster to_raster(const CovarianceImage& image) {
    PolRaster r(static_cast<std::uint32_t>(image.width), static_cast<std::uint32_t>(image.height), Layout::Cov9);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            const auto& c = image.at(y, x);
            const std::array<double, 9> v{c(0, 0).real(), c(1, 1).real(), c(2, 2).real(),
                                          c(0, 1).real(), c(0, 1).imag(), c(0, 2).real(),
                                          c(0, 2).imag(), c(1, 2).real(), c(1, 2).imag()};
            for (int k = 0; k < 9; ++k)
                r.at(static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(x), k) = static_cast<float>(v[static_cast<std::size_t>(k)]);
        }
    return r;
}

PolRaster to_raster(const std::vector<ParamVector>& params, int width, int height) {
    if (params.size() != static_cast<std::size_t>(width) * height) throw InvalidInput("parameter count mismatch");
    PolRaster r(static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(height), Layout::Param9);
    for (std::size_t i = 0; i < params.size(); ++i)
        for (int k = 0; k < kNumParams; ++k) r.data[i * kNumParams + static_cast<std::size_t>(k)] = static_cast<float>(params[i][k]);
    return r;
}

Plane plane_from_raster(const PolRaster& raster) {
    require_layout(raster, Layout::Gray1);
    Plane p(raster.height, raster.width);
    for (std::uint32_t y = 0; y < raster.height; ++y)
        for (std::uint32_t x = 0; x < raster.width; ++x) p(y, x) = raster.at(y, x, 0);
    return p;
}

LabelPlane labels_from_raster(const PolRaster& raster) {
    require_layout(raster, Layout::Class1);
    LabelPlane p(raster.height, raster.width);
    for (std::uint32_t y = 0; y < raster.height; ++y)
        for (std::uint32_t x = 0; x < raster.width; ++x) p(y, x) = static_cast<int>(raster.at(y, x, 0));
    return p;
}

CovarianceImage covariance_from_raster(const PolRaster& raster) {
    require_layout(raster, Layout::Cov9);
    CovarianceImage img(static_cast<int>(raster.width), static_cast<int>(raster.height));
    for (std::uint32_t y = 0; y < raster.height; ++y)
        for (std::uint32_t x = 0; x < raster.width; ++x) {
            auto v = [&](int k) { return static_cast<double>(raster.at(y, x, k)); };
            if (v(0) < 0.0 || v(1) < 0.0 || v(2) < 0.0)
                throw InvalidInput("COV9 raster has a negative diagonal at (" + std::to_string(x) + ", " +
                                   std::to_string(y) + ")");
            CovarianceMatrix c;
            c(0, 0) = v(0);
            c(1, 1) = v(1);
            c(2, 2) = v(2);
            c(0, 1) = Complex(v(3), v(4));
            c(0, 2) = Complex(v(5), v(6));
            c(1, 2) = Complex(v(7), v(8));
            c(1, 0) = std::conj(c(0, 1));
            c(2, 0) = std::conj(c(0, 2));
            c(2, 1) = std::conj(c(1, 2));
            img.at(static_cast<int>(y), static_cast<int>(x)) = c;
        }
    return img;
}

std::vector<std::uint8_t> render_rgb(const PolRaster& raster, PngMode mode) {
    const std::size_t n = static_cast<std::size_t>(raster.width) * raster.height;
    std::vector<std::uint8_t> rgb(3 * n);
    switch (mode) {
    case PngMode::GrayDb:
    case PngMode::GrayLinear:
        require_layout(raster, Layout::Gray1);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = raster.data[i];
            const std::uint8_t g = mode == PngMode::GrayDb ? to_byte((to_db(v) + 25.0) / 25.0) : to_byte(v / 5.0);
            rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = g;
        }
        break;
    case PngMode::Pauli:
    case PngMode::Freeman: {
        const CovarianceImage img = covariance_from_raster(raster);
        std::vector<std::array<double, 3>> channels(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (mode == PngMode::Pauli) {
                const PauliRgb p = pauli_rgb(img.pixels[i]);
                channels[i] = {p.r, p.g, p.b};
            } else {
                const FreemanPowers f = freeman_durden(img.pixels[i]);
                channels[i] = {f.pd, f.pv, f.ps};
            }
        }
        rgb = colour_db(channels);
        break;
    }
    case PngMode::HAlphaZones:
        require_layout(raster, Layout::Class1);
        for (std::size_t i = 0; i < n; ++i) {
            const int z = static_cast<int>(raster.data[i]);
            const auto& c = kZonePalette[static_cast<std::size_t>(z >= 1 && z <= kNumZones ? z : 0)];
            std::copy(c.begin(), c.end(), rgb.begin() + static_cast<std::ptrdiff_t>(3 * i));
        }
        break;
    }
    return rgb;
}

void export_png(const PolRaster& raster, PngMode mode, const std::filesystem::path& path) {
    if (raster.width == 0 || raster.height == 0) throw InvalidInput("cannot export an empty raster");
    const auto rgb = render_rgb(raster, mode);

    std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!file) throw InvalidInput("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, nullptr);
        throw NumericalFailure("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InvalidInput("failed writing PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, raster.width, raster.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (std::uint32_t y = 0; y < raster.height; ++y)
        png_write_row(png, rgb.data() + static_cast<std::size_t>(y) * raster.width * 3);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace polcolor
