#pragma once

#include <algorithm>
#include <cmath>

#include "crowdscan/image.hpp"
#include "crowdscan/linalg.hpp"

namespace crowdscan {

struct Rgb {
    float r = 0, g = 0, b = 0;
    static Rgb from_bytes(int r, int g, int b) {
        return {float(r) / 255.0f, float(g) / 255.0f, float(b) / 255.0f};
    }
};

inline void put_pixel(Frame& img, int x, int y, const Rgb& c, double alpha = 1.0) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    const float a = float(std::clamp(alpha, 0.0, 1.0));
    img.at(x, y, 0) = (1 - a) * img.at(x, y, 0) + a * c.r;
    img.at(x, y, 1) = (1 - a) * img.at(x, y, 1) + a * c.g;
    img.at(x, y, 2) = (1 - a) * img.at(x, y, 2) + a * c.b;
}

inline void fill_disc(Frame& img, const Vec2& center, double radius, const Rgb& c) {
    const int x0 = int(std::floor(center.x - radius));
    const int x1 = int(std::ceil(center.x + radius));
    const int y0 = int(std::floor(center.y - radius));
    const int y1 = int(std::ceil(center.y + radius));
    const double r2 = radius * radius;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if ((Vec2(x, y) - center).norm_sq() <= r2) put_pixel(img, x, y, c);
}

/// Thick segment drawn as a stamped sequence of discs.
inline void draw_thick_segment(Frame& img, const Vec2& a, const Vec2& b,
                               double width, const Rgb& c) {
    const double len = (b - a).norm();
    const double radius = std::max(width * 0.5, 0.5);
    const int steps = std::max(1, int(std::ceil(len / (radius * 0.5))));
    for (int i = 0; i <= steps; ++i)
        fill_disc(img, a + (b - a) * (double(i) / steps), radius, c);
}

inline void draw_thick_polyline(Frame& img, const std::vector<Vec2>& pts,
                                double width, const Rgb& c) {
    for (std::size_t i = 1; i < pts.size(); ++i)
        draw_thick_segment(img, pts[i - 1], pts[i], width, c);
}

inline void fill_triangle(Frame& img, const Vec2& a, const Vec2& b, const Vec2& c,
                          const Rgb& color) {
    const int x0 = int(std::floor(std::min({a.x, b.x, c.x})));
    const int x1 = int(std::ceil(std::max({a.x, b.x, c.x})));
    const int y0 = int(std::floor(std::min({a.y, b.y, c.y})));
    const int y1 = int(std::ceil(std::max({a.y, b.y, c.y})));
    auto edge = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    };
    const double area = edge(a, b, c);
    if (std::fabs(area) < 1e-12) return;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const Vec2 p(x, y);
            const double w0 = edge(a, b, p) / area;
            const double w1 = edge(b, c, p) / area;
            const double w2 = edge(c, a, p) / area;
            if (w0 >= 0 && w1 >= 0 && w2 >= 0) put_pixel(img, x, y, color);
        }
}

} // namespace crowdscan
