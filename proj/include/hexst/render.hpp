#pragma once

#include "errors.hpp"
#include "hexgeom.hpp"
#include "metrics.hpp"
#include "numerics.hpp"
#include "windowing.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace hexst {

struct Rgb {
    std::uint8_t r = 255, g = 255, b = 255;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Image {
    int width = 0;
    int height = 0;
    std::vector<Rgb> pixels;

    Image(int w, int h, Rgb fill = {}) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Binary PPM (P6); each comment becomes a "# ..." header line.
inline void write_ppm(const std::filesystem::path& path, const Image& img, std::span<const std::string> comments = {}) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "P6\n";
    for (const auto& c : comments) os << "# " << c << "\n";
    os << img.width << " " << img.height << "\n255\n";
    for (const Rgb& p : img.pixels) {
        const char px[3] = {static_cast<char>(p.r), static_cast<char>(p.g), static_cast<char>(p.b)};
        os.write(px, 3);
    }
    if (!os) throw IoError("write failed for " + path.string());
}

inline Image read_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::string magic;
    is >> magic;
    if (magic != "P6") throw InputError(path.string() + ": not a binary PPM");
    auto next_int = [&]() {
        is >> std::ws;
        while (is.peek() == '#') {
            std::string skip;
            std::getline(is, skip);
            is >> std::ws;
        }
        int v = 0;
        if (!(is >> v)) throw InputError(path.string() + ": bad PPM header");
        return v;
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    if (maxval != 255) throw InputError(path.string() + ": unsupported maxval");
    is.get();
    Image img(w, h);
    for (Rgb& p : img.pixels) {
        char px[3];
        if (!is.read(px, 3)) throw InputError(path.string() + ": truncated pixel data");
        p = {static_cast<std::uint8_t>(px[0]), static_cast<std::uint8_t>(px[1]), static_cast<std::uint8_t>(px[2])};
    }
    return img;
}

// Maps slide coordinates to pixels, preserving aspect ratio, y pointing up.
struct Viewport {
    BoundingBox box;
    double pixels_per_unit = 1.0;
    int margin = 0;
    int width = 0;
    int height = 0;

    static Viewport fit(std::span<const CartesianPoint> pts, double pad, int max_side) {
        Viewport v;
        v.box = bounding_box(pts);
        const double w = std::max(v.box.hi.x1 - v.box.lo.x1, 0.0) + 2.0 * pad;
        const double h = std::max(v.box.hi.x2 - v.box.lo.x2, 0.0) + 2.0 * pad;
        v.pixels_per_unit = static_cast<double>(max_side) / std::max({w, h, 1e-12});
        v.margin = 2;
        v.width = static_cast<int>(std::ceil(w * v.pixels_per_unit)) + 2 * v.margin;
        v.height = static_cast<int>(std::ceil(h * v.pixels_per_unit)) + 2 * v.margin;
        v.box.lo = v.box.lo - CartesianPoint{pad, pad};
        return v;
    }

    double px(double x) const { return margin + (x - box.lo.x1) * pixels_per_unit; }
    double py(double y) const { return height - 1 - margin - (y - box.lo.x2) * pixels_per_unit; }
};

inline void fill_disk(Image& img, double cx, double cy, double radius, Rgb color) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= radius * radius) img.at(x, y) = color;
        }
}

/// Well-separated categorical colour for index i (golden-angle hue walk).
inline Rgb categorical_color(int i) {
    const double hue = std::fmod(static_cast<double>(i) * 137.50776405003785, 360.0) / 60.0;
    const double sat = i % 2 == 0 ? 0.75 : 0.55;
    const double val = i % 3 == 0 ? 0.95 : 0.8;
    const double c = val * sat;
    const double x = c * (1.0 - std::abs(std::fmod(hue, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hue)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = val - c;
    auto to8 = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    return {to8(r + m), to8(g + m), to8(b + m)};
}

/// Sequential colour ramp for t in [0, 1] (dark blue through teal and green to yellow).
inline Rgb ramp_color(double t) {
    static constexpr std::array<std::array<double, 3>, 5> stops{{
        {0.267, 0.005, 0.329}, {0.229, 0.322, 0.546}, {0.128, 0.567, 0.551}, {0.369, 0.789, 0.383}, {0.993, 0.906, 0.144}}};
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(t), 3);
    const double f = t - static_cast<double>(k);
    auto mix = [&](std::size_t c) {
        return static_cast<std::uint8_t>(std::lround((stops[k][c] * (1.0 - f) + stops[k + 1][c] * f) * 255.0));
    };
    return {mix(0), mix(1), mix(2)};
}

inline constexpr Rgb kDroppedColor{160, 160, 160};

/// Spots coloured by window membership; spots without a window are grey.
inline Image render_partition(std::span<const CartesianPoint> coords, const WindowPartition& p, double d_med,
                              int max_side = 512) {
    if (coords.size() != p.window_of_spot.size()) throw StructuralError("render_partition: spot count mismatch");
    const Viewport vp = Viewport::fit(coords, d_med, max_side);
    Image img(vp.width, vp.height);
    const double r = 0.45 * d_med * vp.pixels_per_unit;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const int w = p.window_of_spot[i];
        fill_disk(img, vp.px(coords[i].x1), vp.py(coords[i].x2), r, w < 0 ? kDroppedColor : categorical_color(w));
    }
    return img;
}

struct ValueSummary {
    double mean = 0.0;
    double stddev = 0.0;  // population
    double min = 0.0;
    double max = 0.0;
};

inline ValueSummary summarize(std::span<const double> v) {
    if (v.empty()) throw InputError("summarize: no values");
    ValueSummary s;
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    for (double x : v) s.stddev += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(s.stddev / static_cast<double>(v.size()));
    return s;
}

/// "mean +/- std (min--max)"
inline std::string annotation(const ValueSummary& s) {
    return format_double(s.mean) + " +/- " + format_double(s.stddev) + " (" + format_double(s.min) + "--" +
           format_double(s.max) + ")";
}

/// Spots coloured by value, min-max normalised; a constant column maps every spot to the ramp midpoint.
inline Image render_heatmap(std::span<const CartesianPoint> coords, std::span<const double> values, double d_med,
                            int max_side = 512) {
    if (coords.size() != values.size()) throw StructuralError("render_heatmap: value count mismatch");
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError("render_heatmap: non-finite value");
    }
    const ValueSummary s = summarize(values);
    const Viewport vp = Viewport::fit(coords, d_med, max_side);
    Image img(vp.width, vp.height);
    const double r = 0.5 * d_med * vp.pixels_per_unit;
    const double range = s.max - s.min;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double t = range > 0.0 ? (values[i] - s.min) / range : 0.5;
        fill_disk(img, vp.px(coords[i].x1), vp.py(coords[i].x2), r, ramp_color(t));
    }
    return img;
}

} // namespace hexst
