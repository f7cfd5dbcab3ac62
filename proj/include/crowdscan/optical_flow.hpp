#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "crowdscan/error.hpp"
#include "crowdscan/image.hpp"

namespace crowdscan {

/// Per-pixel displacement field, pixels per frame, row-major.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> u;
    std::vector<float> v;

    static FlowField zero(int w, int h) {
        FlowField f;
        f.width = w;
        f.height = h;
        f.u.assign(std::size_t(w) * h, 0.0f);
        f.v.assign(std::size_t(w) * h, 0.0f);
        return f;
    }

    std::size_t idx(int x, int y) const { return std::size_t(y) * width + x; }

    Vec2 sample(double x, double y) const {
        x = std::clamp(x, 0.0, double(width - 1));
        y = std::clamp(y, 0.0, double(height - 1));
        const int x0 = int(x);
        const int y0 = int(y);
        const int x1 = std::min(x0 + 1, width - 1);
        const int y1 = std::min(y0 + 1, height - 1);
        const double fx = x - x0;
        const double fy = y - y0;
        auto lerp2 = [&](const std::vector<float>& a) {
            const double t = a[idx(x0, y0)] * (1 - fx) + a[idx(x1, y0)] * fx;
            const double b = a[idx(x0, y1)] * (1 - fx) + a[idx(x1, y1)] * fx;
            return t * (1 - fy) + b * fy;
        };
        return {lerp2(u), lerp2(v)};
    }
};

struct FlowParams {
    int pyramid_levels = 3;
    int window = 15;        // odd
    int iterations = 3;     // Lucas-Kanade warp iterations per level
    int block_stride = 8;   // node grid spacing, pixels
    double max_flow = 20.0; // magnitude clamp, pixels per frame
    double ridge = 1e-4;    // Tikhonov weight per window pixel; damps textureless blocks
};

namespace detail {

inline Frame downsample_half(const Frame& src) {
    // separable [1 4 6 4 1]/16 blur then 2x decimation
    static const double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
    Frame tmp = Frame::gray(src.width, src.height);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            double s = 0.0;
            for (int t = -2; t <= 2; ++t)
                s += k[t + 2] * src.at(std::clamp(x + t, 0, src.width - 1), y);
            tmp.at(x, y) = float(s);
        }
    const int w2 = std::max(1, (src.width + 1) / 2);
    const int h2 = std::max(1, (src.height + 1) / 2);
    Frame out = Frame::gray(w2, h2);
    for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x) {
            double s = 0.0;
            for (int t = -2; t <= 2; ++t)
                s += k[t + 2] * tmp.at(x * 2, std::clamp(y * 2 + t, 0, src.height - 1));
            out.at(x, y) = float(s);
        }
    return out;
}

struct Gradients {
    std::vector<float> ix, iy;
};

inline Gradients central_gradients(const Frame& f) {
    Gradients g;
    g.ix.assign(std::size_t(f.width) * f.height, 0.0f);
    g.iy.assign(std::size_t(f.width) * f.height, 0.0f);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, f.width - 1);
            const int ym = std::max(y - 1, 0), yp = std::min(y + 1, f.height - 1);
            g.ix[std::size_t(y) * f.width + x] = 0.5f * (f.at(xp, y) - f.at(xm, y));
            g.iy[std::size_t(y) * f.width + x] = 0.5f * (f.at(x, yp) - f.at(x, ym));
        }
    return g;
}

/// Node grid spanning [0, n-1] inclusive with roughly `stride` spacing.
struct NodeAxis {
    std::vector<int> pos;
    double index_of(double x) const {
        // grid is uniform by construction; map x to fractional node index
        if (pos.size() < 2) return 0.0;
        const double span = double(pos.back() - pos.front());
        if (span <= 0) return 0.0;
        const double t = (x - pos.front()) / span * double(pos.size() - 1);
        return std::clamp(t, 0.0, double(pos.size() - 1));
    }
};

inline NodeAxis make_axis(int n, int stride) {
    NodeAxis ax;
    const int count = std::max(2, (n - 1) / std::max(stride, 1) + 1);
    ax.pos.resize(std::size_t(count));
    for (int i = 0; i < count; ++i)
        ax.pos[std::size_t(i)] = int(std::lround(double(i) * (n - 1) / (count - 1)));
    return ax;
}

} // namespace detail

/// Coarse-to-fine pyramidal Lucas-Kanade on a node grid, bilinearly densified
/// to every pixel. Displacements estimate b(x + u, y + v) ~= a(x, y).
inline FlowField dense_optical_flow(const Frame& a, const Frame& b,
                                    const FlowParams& params = {}) {
    if (a.width != b.width || a.height != b.height)
        throw Error(Errc::DimensionMismatch, "flow frames differ in size");
    if (a.channels != 1 || b.channels != 1)
        throw Error(Errc::DimensionMismatch, "flow frames must be grayscale");

    int levels = std::max(1, params.pyramid_levels);
    while (levels > 1 && (std::min(a.width, a.height) >> (levels - 1)) < 2 * params.window)
        --levels;

    std::vector<Frame> pyr_a{a}, pyr_b{b};
    for (int l = 1; l < levels; ++l) {
        pyr_a.push_back(detail::downsample_half(pyr_a.back()));
        pyr_b.push_back(detail::downsample_half(pyr_b.back()));
    }

    const int half = params.window / 2;
    std::vector<double> du, dv;          // node displacements at current level
    detail::NodeAxis ax_prev, ay_prev;   // node axes of the coarser level

    for (int l = levels - 1; l >= 0; --l) {
        const Frame& fa = pyr_a[std::size_t(l)];
        const Frame& fb = pyr_b[std::size_t(l)];
        const auto grad = detail::central_gradients(fa);
        const auto ax = detail::make_axis(fa.width, params.block_stride);
        const auto ay = detail::make_axis(fa.height, params.block_stride);
        const std::size_t nx = ax.pos.size(), ny = ay.pos.size();

        std::vector<double> nu(nx * ny, 0.0), nv(nx * ny, 0.0);
        if (!du.empty()) {
            // upsample the coarser level's node field (x2 displacement scale)
            for (std::size_t j = 0; j < ny; ++j)
                for (std::size_t i = 0; i < nx; ++i) {
                    const double cx = ax_prev.index_of(ax.pos[i] * 0.5);
                    const double cy = ay_prev.index_of(ay.pos[j] * 0.5);
                    const std::size_t x0 = std::size_t(cx), y0 = std::size_t(cy);
                    const std::size_t x1 = std::min(x0 + 1, ax_prev.pos.size() - 1);
                    const std::size_t y1 = std::min(y0 + 1, ay_prev.pos.size() - 1);
                    const double fx = cx - double(x0), fy = cy - double(y0);
                    auto lerp = [&](const std::vector<double>& f) {
                        const std::size_t w = ax_prev.pos.size();
                        const double t = f[y0 * w + x0] * (1 - fx) + f[y0 * w + x1] * fx;
                        const double bm = f[y1 * w + x0] * (1 - fx) + f[y1 * w + x1] * fx;
                        return t * (1 - fy) + bm * fy;
                    };
                    nu[j * nx + i] = 2.0 * lerp(du);
                    nv[j * nx + i] = 2.0 * lerp(dv);
                }
        }

        const double ridge = params.ridge * double(params.window) * params.window;
        for (std::size_t j = 0; j < ny; ++j) {
            for (std::size_t i = 0; i < nx; ++i) {
                const int cx = ax.pos[i];
                const int cy = ay.pos[j];
                double g00 = ridge, g01 = 0.0, g11 = ridge;
                for (int wy = -half; wy <= half; ++wy)
                    for (int wx = -half; wx <= half; ++wx) {
                        const int px = std::clamp(cx + wx, 0, fa.width - 1);
                        const int py = std::clamp(cy + wy, 0, fa.height - 1);
                        const double ix = grad.ix[std::size_t(py) * fa.width + px];
                        const double iy = grad.iy[std::size_t(py) * fa.width + px];
                        g00 += ix * ix;
                        g01 += ix * iy;
                        g11 += iy * iy;
                    }
                const double det = g00 * g11 - g01 * g01;
                if (det < 1e-12) continue;

                double dx = nu[j * nx + i], dy = nv[j * nx + i];
                for (int it = 0; it < params.iterations; ++it) {
                    double b0 = 0.0, b1 = 0.0;
                    for (int wy = -half; wy <= half; ++wy)
                        for (int wx = -half; wx <= half; ++wx) {
                            const int px = std::clamp(cx + wx, 0, fa.width - 1);
                            const int py = std::clamp(cy + wy, 0, fa.height - 1);
                            const double it_ = bilinear_sample(fb, px + dx, py + dy) -
                                               fa.at(px, py);
                            b0 += it_ * grad.ix[std::size_t(py) * fa.width + px];
                            b1 += it_ * grad.iy[std::size_t(py) * fa.width + px];
                        }
                    const double sx = -(g11 * b0 - g01 * b1) / det;
                    const double sy = -(g00 * b1 - g01 * b0) / det;
                    dx += sx;
                    dy += sy;
                    if (sx * sx + sy * sy < 1e-4) break;
                }
                const double mag = std::sqrt(dx * dx + dy * dy);
                if (mag > params.max_flow) {
                    dx *= params.max_flow / mag;
                    dy *= params.max_flow / mag;
                }
                nu[j * nx + i] = dx;
                nv[j * nx + i] = dy;
            }
        }

        du = std::move(nu);
        dv = std::move(nv);
        ax_prev = ax;
        ay_prev = ay;
    }

    // densify the finest node grid to every pixel
    FlowField out = FlowField::zero(a.width, a.height);
    const std::size_t nx = ax_prev.pos.size();
    for (int y = 0; y < a.height; ++y) {
        const double cy = ay_prev.index_of(y);
        const std::size_t y0 = std::size_t(cy);
        const std::size_t y1 = std::min(y0 + 1, ay_prev.pos.size() - 1);
        const double fy = cy - double(y0);
        for (int x = 0; x < a.width; ++x) {
            const double cx = ax_prev.index_of(x);
            const std::size_t x0 = std::size_t(cx);
            const std::size_t x1 = std::min(x0 + 1, nx - 1);
            const double fx = cx - double(x0);
            auto lerp = [&](const std::vector<double>& f) {
                const double t = f[y0 * nx + x0] * (1 - fx) + f[y0 * nx + x1] * fx;
                const double bm = f[y1 * nx + x0] * (1 - fx) + f[y1 * nx + x1] * fx;
                return t * (1 - fy) + bm * fy;
            };
            double u = lerp(du), v = lerp(dv);
            const double mag = std::sqrt(u * u + v * v);
            if (mag > params.max_flow) {
                u *= params.max_flow / mag;
                v *= params.max_flow / mag;
            }
            out.u[out.idx(x, y)] = float(u);
            out.v[out.idx(x, y)] = float(v);
        }
    }
    return out;
}

} // namespace crowdscan
