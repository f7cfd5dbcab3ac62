#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "crowdscan/error.hpp"
#include "crowdscan/linalg.hpp"

namespace crowdscan {

/// Intensity image, row-major, values in [0,1]. channels is 1 (gray) or
/// 3 (RGB interleaved). Pixel centers sit at integer coordinates, x right,
/// y down.
struct Frame {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> pixels;
    std::int64_t timestamp = 0;

    static Frame gray(int w, int h, float fill = 0.0f) {
        Frame f;
        f.width = w;
        f.height = h;
        f.channels = 1;
        f.pixels.assign(std::size_t(w) * h, fill);
        return f;
    }

    static Frame rgb(int w, int h, float fill = 0.0f) {
        Frame f;
        f.width = w;
        f.height = h;
        f.channels = 3;
        f.pixels.assign(std::size_t(w) * h * 3, fill);
        return f;
    }

    float& at(int x, int y, int c = 0) {
        return pixels[(std::size_t(y) * width + x) * channels + c];
    }
    float at(int x, int y, int c = 0) const {
        return pixels[(std::size_t(y) * width + x) * channels + c];
    }

    bool same_size(const Frame& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    bool in_bounds(double x, double y) const {
        return x >= 0.0 && y >= 0.0 && x <= width - 1.0 && y <= height - 1.0;
    }
};

inline void validate_frame(const Frame& f) {
    if (f.width <= 0 || f.height <= 0 || (f.channels != 1 && f.channels != 3))
        throw Error(Errc::DimensionMismatch, "bad frame dimensions");
    if (f.pixels.size() != std::size_t(f.width) * f.height * f.channels)
        throw Error(Errc::DimensionMismatch, "pixel buffer does not match dimensions");
    for (float v : f.pixels)
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw Error(Errc::IoError, "pixel value outside [0,1]");
}

/// Bilinear sample with edge clamping. Callers enforce their own
/// out-of-bounds policy before calling.
inline float bilinear_sample(const Frame& f, double x, double y, int c = 0) {
    x = std::clamp(x, 0.0, double(f.width - 1));
    y = std::clamp(y, 0.0, double(f.height - 1));
    const int x0 = int(x);
    const int y0 = int(y);
    const int x1 = std::min(x0 + 1, f.width - 1);
    const int y1 = std::min(y0 + 1, f.height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double v00 = f.at(x0, y0, c);
    const double v10 = f.at(x1, y0, c);
    const double v01 = f.at(x0, y1, c);
    const double v11 = f.at(x1, y1, c);
    return float((v00 * (1 - fx) + v10 * fx) * (1 - fy) +
                 (v01 * (1 - fx) + v11 * fx) * fy);
}

/// RGB -> luma with the Rec.601 weights used for all frame loading.
inline Frame to_gray(const Frame& f) {
    if (f.channels == 1) return f;
    Frame g = Frame::gray(f.width, f.height);
    g.timestamp = f.timestamp;
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
            g.at(x, y) = 0.299f * f.at(x, y, 0) + 0.587f * f.at(x, y, 1) +
                         0.114f * f.at(x, y, 2);
    return g;
}

inline Frame to_rgb(const Frame& f) {
    if (f.channels == 3) return f;
    Frame c = Frame::rgb(f.width, f.height);
    c.timestamp = f.timestamp;
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            const float v = f.at(x, y);
            c.at(x, y, 0) = v;
            c.at(x, y, 1) = v;
            c.at(x, y, 2) = v;
        }
    return c;
}

} // namespace crowdscan
