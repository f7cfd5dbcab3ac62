#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "crowdscan/draw.hpp"
#include "crowdscan/error.hpp"
#include "crowdscan/geometry.hpp"
#include "crowdscan/image.hpp"
#include "crowdscan/image_io.hpp"

namespace crowdscan {

/// Detector scores sampled on a stride-spaced grid: cell (cx, cy) holds the
/// response at image pixel (cx * stride, cy * stride).
struct ResponseMap {
    int width = 0;
    int height = 0;
    int stride = 3;
    std::vector<float> values;  // row-major, in [0,1]

    std::size_t idx(int cx, int cy) const { return std::size_t(cy) * width + cx; }
};

/// Head radius as an affine function of image row: r(y) = a*y + b, clamped
/// to at least 1 pixel.
struct PerspectiveModel {
    double a = 0.0;
    double b = 6.0;

    double radius_at(double y) const { return std::max(1.0, a * y + b); }
};

/// Expected detector response around one person, peak-normalized to 1 and
/// 180-degree symmetric. Loadable from file so a measured kernel can replace
/// the default Gaussian.
struct ResponseKernel {
    int radius = 0;               // template radius at reference scale
    std::vector<double> weights;  // (2r+1)^2 row-major

    static ResponseKernel gaussian(int radius) {
        ResponseKernel k;
        k.radius = std::max(1, radius);
        const int side = 2 * k.radius + 1;
        const double sigma = k.radius / 2.0;
        k.weights.resize(std::size_t(side) * side);
        for (int dy = -k.radius; dy <= k.radius; ++dy)
            for (int dx = -k.radius; dx <= k.radius; ++dx)
                k.weights[std::size_t(dy + k.radius) * side + (dx + k.radius)] =
                    std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        return k;
    }

    /// Bilinear sample in template coordinates; zero outside the support.
    double sample(double dx, double dy) const {
        const double x = dx + radius;
        const double y = dy + radius;
        const int side = 2 * radius + 1;
        if (x < 0.0 || y < 0.0 || x > side - 1.0 || y > side - 1.0) return 0.0;
        const int x0 = int(x), y0 = int(y);
        const int x1 = std::min(x0 + 1, side - 1), y1 = std::min(y0 + 1, side - 1);
        const double fx = x - x0, fy = y - y0;
        auto w = [&](int xx, int yy) { return weights[std::size_t(yy) * side + xx]; };
        return (w(x0, y0) * (1 - fx) + w(x1, y0) * fx) * (1 - fy) +
               (w(x0, y1) * (1 - fx) + w(x1, y1) * fx) * fy;
    }

    void validate() const {
        const int side = 2 * radius + 1;
        if (radius < 1 || weights.size() != std::size_t(side) * side)
            throw Error(Errc::InvalidConfig, "kernel dimensions are inconsistent");
        double peak = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw Error(Errc::InvalidConfig, "kernel weights must be >= 0");
            peak = std::max(peak, w);
        }
        if (std::fabs(peak - 1.0) > 1e-6)
            throw Error(Errc::InvalidConfig, "kernel must be peak-normalized to 1");
        for (std::size_t i = 0; i < weights.size(); ++i)
            if (std::fabs(weights[i] - weights[weights.size() - 1 - i]) > 1e-9)
                throw Error(Errc::InvalidConfig, "kernel must be 180-degree symmetric");
    }
};

/// Localized individuals: full-resolution pixel positions plus matched
/// response amplitudes.
struct DetectionSet {
    std::vector<Vec2> points;
    std::vector<double> scores;

    int count() const { return int(points.size()); }
};

/// Persons per 1m x 1m ground cell. Detections outside the extent (or at
/// infinity) land in `overflow`, so grid total + overflow = detection count.
struct DensityGrid {
    double origin_x = 0.0;
    double origin_y = 0.0;
    int rows = 0;
    int cols = 0;
    std::vector<int> counts;  // row-major rows x cols
    int overflow = 0;

    int total() const {
        int s = 0;
        for (int c : counts) s += c;
        return s;
    }
};

// --- operations ---------------------------------------------------------------

struct BaselineParams {
    /// Reference dip depth (intensity units) that maps the matched template
    /// amplitude to 1.0. Pure NCC is contrast-blind, so the response is
    /// NCC weighted by matched amplitude over this reference.
    double depth_ref = 0.4;
};

/// Template-correlation head detector: at every stride-spaced pixel, the
/// normalized cross-correlation of the local patch against an isotropic
/// dark-blob template of the perspective-given radius, weighted by the
/// fitted dip amplitude and clamped to [0,1].
inline ResponseMap baseline_response(const Frame& frame, const PerspectiveModel& p,
                                     int stride = 3, const BaselineParams& params = {}) {
    if (stride < 1) throw Error(Errc::InvalidConfig, "stride must be >= 1");
    const Frame gray = to_gray(frame);

    ResponseMap map;
    map.stride = stride;
    map.width = gray.width / stride;
    map.height = gray.height / stride;
    map.values.assign(std::size_t(map.width) * map.height, 0.0f);

    struct Template {
        int radius;
        std::vector<double> centered;  // t - mean(t)
        double energy;                 // sum centered^2
    };
    std::map<int, Template> cache;
    auto get_template = [&](int radius) -> const Template& {
        auto it = cache.find(radius);
        if (it != cache.end()) return it->second;
        Template t;
        t.radius = radius;
        const int side = 2 * radius + 1;
        const double sigma = radius / 2.0;
        std::vector<double> raw(std::size_t(side) * side);
        double mean = 0.0;
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx) {
                const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                raw[std::size_t(dy + radius) * side + (dx + radius)] = v;
                mean += v;
            }
        mean /= double(side * side);
        t.centered.resize(raw.size());
        t.energy = 0.0;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            t.centered[i] = raw[i] - mean;
            t.energy += t.centered[i] * t.centered[i];
        }
        return cache.emplace(radius, std::move(t)).first->second;
    };

    for (int cy = 0; cy < map.height; ++cy) {
        const int py = cy * stride;
        const int radius = std::max(1, int(std::lround(p.radius_at(py))));
        const Template& t = get_template(radius);
        const int side = 2 * radius + 1;
        for (int cx = 0; cx < map.width; ++cx) {
            const int px = cx * stride;

            double sum = 0.0, sum_sq = 0.0, cross = 0.0;
            for (int dy = -radius; dy <= radius; ++dy) {
                const int y = std::clamp(py + dy, 0, gray.height - 1);
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int x = std::clamp(px + dx, 0, gray.width - 1);
                    const double v = gray.at(x, y);
                    sum += v;
                    sum_sq += v * v;
                    cross += v * t.centered[std::size_t(dy + radius) * side + (dx + radius)];
                }
            }
            const double n = double(side) * side;
            const double var = sum_sq - sum * sum / n;
            if (var < 1e-12 || t.energy < 1e-12) continue;

            // dark blob: the patch anticorrelates with the bright template
            const double ncc = -cross / std::sqrt(var * t.energy);
            const double amplitude = -cross / t.energy;  // dip depth, intensity units
            const double response =
                std::max(0.0, ncc) *
                std::clamp(amplitude / params.depth_ref, 0.0, 1.0);
            map.values[map.idx(cx, cy)] = float(std::clamp(response, 0.0, 1.0));
        }
    }
    return map;
}

/// Bilinear upsampling of a response map back to image resolution; values
/// stay within the input range.
inline std::vector<float> upsample_response(const ResponseMap& r, int target_w,
                                            int target_h) {
    if (r.width < 1 || r.height < 1)
        throw Error(Errc::DimensionMismatch, "empty response map");
    if (std::abs(target_w - r.width * r.stride) > r.stride ||
        std::abs(target_h - r.height * r.stride) > r.stride)
        throw Error(Errc::DimensionMismatch,
                    "target dimensions do not match stride * response dimensions");

    std::vector<float> out(std::size_t(target_w) * target_h, 0.0f);
    for (int y = 0; y < target_h; ++y) {
        const double gy = std::clamp(double(y) / r.stride, 0.0, double(r.height - 1));
        const int y0 = int(gy);
        const int y1 = std::min(y0 + 1, r.height - 1);
        const double fy = gy - y0;
        for (int x = 0; x < target_w; ++x) {
            const double gx = std::clamp(double(x) / r.stride, 0.0, double(r.width - 1));
            const int x0 = int(gx);
            const int x1 = std::min(x0 + 1, r.width - 1);
            const double fx = gx - x0;
            const double v = (r.values[r.idx(x0, y0)] * (1 - fx) +
                              r.values[r.idx(x1, y0)] * fx) * (1 - fy) +
                             (r.values[r.idx(x0, y1)] * (1 - fx) +
                              r.values[r.idx(x1, y1)] * fx) * fy;
            out[std::size_t(y) * target_w + x] = float(v);
        }
    }
    return out;
}

namespace detail {

/// Adds amp * kernel (rescaled to radius r) centered at pt. Subtraction is
/// the same call with negative amp; both sides of the pursuit use this one
/// sampler, so noiseless synthesis cancels exactly.
inline void stamp_kernel(std::vector<float>& img, int w, int h, const Vec2& pt,
                         const ResponseKernel& kernel, double r, double amp) {
    const double scale = double(kernel.radius) / r;
    const int x0 = std::max(0, int(std::floor(pt.x - r)) - 1);
    const int x1 = std::min(w - 1, int(std::ceil(pt.x + r)) + 1);
    const int y0 = std::max(0, int(std::floor(pt.y - r)) - 1);
    const int y1 = std::min(h - 1, int(std::ceil(pt.y + r)) + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double k = kernel.sample((x - pt.x) * scale, (y - pt.y) * scale);
            if (k > 0.0)
                img[std::size_t(y) * w + x] += float(amp * k);
        }
}

inline double kernel_energy(const ResponseKernel& kernel, double r) {
    const double scale = double(kernel.radius) / r;
    const int ri = int(std::ceil(r)) + 1;
    double e = 0.0;
    for (int y = -ri; y <= ri; ++y)
        for (int x = -ri; x <= ri; ++x) {
            const double k = kernel.sample(x * scale, y * scale);
            e += k * k;
        }
    return e;
}

} // namespace detail

/// Ideal detector response for known candidate locations: unit kernels at
/// each point, rescaled by the perspective model, clamped to [0,1].
inline std::vector<float> synthesize_response(std::span<const Vec2> points,
                                              const ResponseKernel& kernel,
                                              const PerspectiveModel& p, int w, int h,
                                              std::span<const double> amplitudes = {}) {
    std::vector<float> out(std::size_t(w) * h, 0.0f);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double amp = amplitudes.empty() ? 1.0 : amplitudes[i];
        detail::stamp_kernel(out, w, h, points[i], kernel, p.radius_at(points[i].y), amp);
    }
    for (auto& v : out) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

struct NmsStop {
    int max_detections = 100000;
    /// Minimum squared-residual decrease to accept a step. Negative means
    /// derive the default 0.25 * kernel_energy * score_floor^2.
    double residual_drop_min = -1.0;
    double score_floor = 0.25;
};

/// Greedy matching pursuit for the least-squares objective
/// ||raw - synthetic(P)||^2: repeatedly take the residual argmax, fit the
/// kernel there, subtract, and stop when the residual decrease of a step
/// falls under the threshold. Detections keep the pairwise separation
/// 0.8 * mean radius; closer argmax peaks are suppressed without detection.
inline DetectionSet nms_least_squares(std::vector<float> residual, int w, int h,
                                      const ResponseKernel& kernel,
                                      const PerspectiveModel& p,
                                      const NmsStop& stop = {}) {
    if (residual.size() != std::size_t(w) * h)
        throw Error(Errc::DimensionMismatch, "response buffer does not match dimensions");

    double drop_min = stop.residual_drop_min;
    if (drop_min < 0.0) {
        const double e_mid = detail::kernel_energy(kernel, p.radius_at(h / 2.0));
        drop_min = 0.25 * e_mid * stop.score_floor * stop.score_floor;
    }

    DetectionSet det;
    const long guard = long(stop.max_detections) + long(residual.size());
    for (long iter = 0; iter < guard; ++iter) {
        if (det.count() >= stop.max_detections) break;

        float best = 0.0f;
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < residual.size(); ++i)
            if (residual[i] > best) {
                best = residual[i];
                best_idx = i;
            }
        if (best <= 1e-6f) break;

        const Vec2 pt(double(best_idx % std::size_t(w)), double(best_idx / std::size_t(w)));
        const double r = p.radius_at(pt.y);

        bool too_close = false;
        for (std::size_t i = 0; i < det.points.size() && !too_close; ++i) {
            const double min_sep =
                0.8 * (p.radius_at(det.points[i].y) + r) * 0.5;
            if ((det.points[i] - pt).norm() < min_sep) too_close = true;
        }
        if (too_close) {
            residual[best_idx] = 0.0f;  // suppress, no detection
            continue;
        }

        const double amp = std::clamp(double(best), 0.0, 1.0);

        // squared-residual decrease of this step: sum(2*amp*k*res - amp^2*k^2)
        const double scale = double(kernel.radius) / r;
        const int x0 = std::max(0, int(std::floor(pt.x - r)) - 1);
        const int x1 = std::min(w - 1, int(std::ceil(pt.x + r)) + 1);
        const int y0 = std::max(0, int(std::floor(pt.y - r)) - 1);
        const int y1 = std::min(h - 1, int(std::ceil(pt.y + r)) + 1);
        double gain = 0.0;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double k = kernel.sample((x - pt.x) * scale, (y - pt.y) * scale);
                if (k <= 0.0) continue;
                const double res = residual[std::size_t(y) * w + x];
                gain += 2.0 * amp * k * res - amp * amp * k * k;
            }
        if (gain < drop_min) break;

        detail::stamp_kernel(residual, w, h, pt, kernel, r, -amp);
        det.points.push_back(pt);
        det.scores.push_back(amp);
    }
    return det;
}

/// Maps detections to the ground plane and counts per 1 m^2 cell; detections
/// outside the extent or at infinity are tallied in overflow.
inline DensityGrid density_grid(const DetectionSet& d, const Homography& h,
                                const GroundRect& extent) {
    if (!extent.valid())
        throw Error(Errc::InvalidConfig, "density extent is degenerate");
    DensityGrid grid;
    grid.origin_x = extent.min_x;
    grid.origin_y = extent.min_y;
    grid.cols = std::max(1, int(std::ceil(extent.width)));
    grid.rows = std::max(1, int(std::ceil(extent.height)));
    grid.counts.assign(std::size_t(grid.rows) * grid.cols, 0);

    for (const auto& pt : d.points) {
        Vec2 g;
        try {
            g = apply_homography(h, pt);
        } catch (const Error&) {
            ++grid.overflow;  // point at infinity: skipped, tallied
            continue;
        }
        const int cx = int(std::floor(g.x - extent.min_x));
        const int cy = int(std::floor(g.y - extent.min_y));
        if (cx < 0 || cy < 0 || cx >= grid.cols || cy >= grid.rows) {
            ++grid.overflow;
            continue;
        }
        ++grid.counts[std::size_t(cy) * grid.cols + cx];
    }
    return grid;
}

// --- serialization --------------------------------------------------------------

inline nlohmann::json detections_to_json(const DetectionSet& d) {
    nlohmann::json j;
    j["schema"] = 1;
    auto pts = nlohmann::json::array();
    for (const auto& p : d.points) pts.push_back({p.x, p.y});
    j["points"] = std::move(pts);
    j["scores"] = d.scores;
    return j;
}

inline nlohmann::json density_to_json(const DensityGrid& g) {
    nlohmann::json j;
    j["schema"] = 1;
    j["origin"] = {g.origin_x, g.origin_y};
    j["cell_m"] = 1.0;
    j["rows"] = g.rows;
    j["cols"] = g.cols;
    auto rows = nlohmann::json::array();
    for (int r = 0; r < g.rows; ++r) {
        auto row = nlohmann::json::array();
        for (int c = 0; c < g.cols; ++c)
            row.push_back(g.counts[std::size_t(r) * g.cols + c]);
        rows.push_back(std::move(row));
    }
    j["counts"] = std::move(rows);
    j["overflow"] = g.overflow;
    return j;
}

/// Red-dot localization overlay.
inline Frame render_detections(const Frame& frame, const DetectionSet& d,
                               double dot_radius = 2.0) {
    Frame out = to_rgb(frame);
    for (const auto& p : d.points)
        fill_disc(out, p, dot_radius, Rgb::from_bytes(255, 0, 0));
    return out;
}

// --- response map files ----------------------------------------------------------
// Binary CRM1: magic "CRM1", u32 width, u32 height, u32 stride (little
// endian), then width*height float32 little-endian values. PGM is accepted
// as values/255 with a caller-supplied stride.

namespace detail {

inline void push_u32_le(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(std::uint8_t(x));
    v.push_back(std::uint8_t(x >> 8));
    v.push_back(std::uint8_t(x >> 16));
    v.push_back(std::uint8_t(x >> 24));
}

inline std::uint32_t read_u32_le(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
           (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

} // namespace detail

inline void save_response(const std::filesystem::path& path, const ResponseMap& r) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(16 + r.values.size() * 4);
    bytes.insert(bytes.end(), {'C', 'R', 'M', '1'});
    detail::push_u32_le(bytes, std::uint32_t(r.width));
    detail::push_u32_le(bytes, std::uint32_t(r.height));
    detail::push_u32_le(bytes, std::uint32_t(r.stride));
    for (float v : r.values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        detail::push_u32_le(bytes, bits);
    }
    detail::write_file_bytes(path, bytes);
}

inline ResponseMap load_response(const std::filesystem::path& path, int pgm_stride = 3) {
    const std::string ext = path.extension().string();
    if (ext == ".pgm" || ext == ".PGM") {
        const Frame f = load_pnm(path);
        ResponseMap r;
        r.width = f.width;
        r.height = f.height;
        r.stride = pgm_stride;
        r.values = f.pixels;
        return r;
    }

    const auto bytes = detail::read_file_bytes(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "CRM1", 4) != 0)
        throw Error(Errc::IoError, "not a CRM1 response file: " + path.string());
    ResponseMap r;
    r.width = int(detail::read_u32_le(&bytes[4]));
    r.height = int(detail::read_u32_le(&bytes[8]));
    r.stride = int(detail::read_u32_le(&bytes[12]));
    if (r.width <= 0 || r.height <= 0 || r.stride <= 0)
        throw Error(Errc::IoError, "bad CRM1 header: " + path.string());
    const std::size_t n = std::size_t(r.width) * r.height;
    if (bytes.size() != 16 + n * 4)
        throw Error(Errc::IoError, "CRM1 payload size mismatch: " + path.string());
    r.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = detail::read_u32_le(&bytes[16 + i * 4]);
        float v;
        std::memcpy(&v, &bits, 4);
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
            throw Error(Errc::IoError, "CRM1 value outside [0,1]: " + path.string());
        r.values[i] = v;
    }
    return r;
}

} // namespace crowdscan
