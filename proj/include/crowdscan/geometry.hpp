#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "crowdscan/error.hpp"
#include "crowdscan/image.hpp"
#include "crowdscan/linalg.hpp"

namespace crowdscan {

/// Projective map from image pixel coordinates to ground-plane meters.
/// Kept normalized so that m(2,2) = 1 whenever that entry is nonzero.
struct Homography {
    Mat3 m;

    static Homography identity() { return {Mat3::identity()}; }

    static Homography from_matrix(const Mat3& raw) {
        Homography h{raw};
        h.normalize();
        if (std::fabs(h.m.det()) <= 1e-12)
            throw Error(Errc::NonInvertible, "homography is singular");
        return h;
    }

    void normalize() {
        const double w = m(2, 2);
        if (std::fabs(w) > 1e-12) {
            for (auto& v : m.a) v /= w;
        } else {
            // scale so the largest-magnitude entry is +1; keeps the map
            // identical and the representation deterministic
            double best = 0.0;
            for (double v : m.a)
                if (std::fabs(v) > std::fabs(best)) best = v;
            if (best != 0.0)
                for (auto& v : m.a) v /= best;
        }
    }

    Homography inverse() const { return Homography::from_matrix(m.inverse()); }
};

struct Correspondence {
    Vec2 image_px;
    Vec2 ground_m;
};

/// Axis-aligned ground-plane rectangle in meters.
struct GroundRect {
    double min_x = 0.0;
    double min_y = 0.0;
    double width = 0.0;
    double height = 0.0;

    bool valid() const { return width > 0.0 && height > 0.0; }
    bool contains(const Vec2& p) const {
        return p.x >= min_x && p.y >= min_y && p.x <= min_x + width &&
               p.y <= min_y + height;
    }
};

/// Shared ground-plane canvas for rectification and panorama fusion.
/// Canvas pixel (i, j) has its center at ground point
/// (min_x + i / resolution, min_y + j / resolution).
struct PanoramaLayout {
    std::vector<std::pair<int, Homography>> views;  // (camera id, image->ground)
    GroundRect extent;
    double resolution = 1.0;  // pixels per meter

    void validate() const {
        if (!extent.valid())
            throw Error(Errc::InvalidConfig, "panorama extent is degenerate");
        if (!(resolution > 0.0))
            throw Error(Errc::InvalidConfig, "panorama resolution must be positive");
    }

    int canvas_width() const {
        return int(std::floor(extent.width * resolution + 0.5)) + 1;
    }
    int canvas_height() const {
        return int(std::floor(extent.height * resolution + 0.5)) + 1;
    }

    Vec2 ground_of_canvas(int i, int j) const {
        return {extent.min_x + i / resolution, extent.min_y + j / resolution};
    }
};

/// Maps an image point to the ground plane. Throws PointAtInfinity when the
/// homogeneous depth vanishes.
inline Vec2 apply_homography(const Homography& h, const Vec2& p) {
    const auto v = h.m.apply({p.x, p.y, 1.0});
    if (std::fabs(v[2]) <= 1e-9)
        throw Error(Errc::PointAtInfinity, "point maps to infinity");
    return {v[0] / v[2], v[1] / v[2]};
}

namespace detail {

struct HartleyNorm {
    Mat3 t;         // similarity transform applied to the points
    Mat3 t_inv;
};

inline HartleyNorm hartley_normalize(std::span<const Vec2> pts,
                                     std::vector<Vec2>& out) {
    Vec2 c{0, 0};
    for (const auto& p : pts) c += p;
    c = c / double(pts.size());
    double rms = 0.0;
    for (const auto& p : pts) rms += (p - c).norm_sq();
    rms = std::sqrt(rms / double(pts.size()));
    if (rms < 1e-12)
        throw Error(Errc::DegenerateConfiguration, "all points coincide");
    const double s = std::sqrt(2.0) / rms;

    HartleyNorm n;
    n.t.a = {s, 0, -s * c.x, 0, s, -s * c.y, 0, 0, 1};
    n.t_inv.a = {1.0 / s, 0, c.x, 0, 1.0 / s, c.y, 0, 0, 1};
    out.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        out[i] = {(pts[i].x - c.x) * s, (pts[i].y - c.y) * s};
    return n;
}

} // namespace detail

/// Normalized DLT. Hartley-normalizes both point sets, solves for the null
/// vector of the 2n x 9 design matrix via the eigenvector of A^T A with the
/// smallest eigenvalue, then denormalizes.
inline Homography estimate_homography(std::span<const Correspondence> pairs) {
    if (pairs.size() < 4)
        throw Error(Errc::InsufficientPoints,
                    "homography estimation needs at least 4 correspondences, got " +
                        std::to_string(pairs.size()));

    std::vector<Vec2> img(pairs.size()), gnd(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        img[i] = pairs[i].image_px;
        gnd[i] = pairs[i].ground_m;
    }
    std::vector<Vec2> img_n, gnd_n;
    const auto ti = detail::hartley_normalize(img, img_n);
    const auto tg = detail::hartley_normalize(gnd, gnd_n);

    // accumulate A^T A over the two DLT rows of every correspondence
    std::vector<double> ata(81, 0.0);
    auto accumulate = [&](const std::array<double, 9>& row) {
        for (int r = 0; r < 9; ++r)
            for (int c = r; c < 9; ++c)
                ata[std::size_t(r) * 9 + c] += row[std::size_t(r)] * row[std::size_t(c)];
    };
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double u = img_n[i].x, v = img_n[i].y;
        const double X = gnd_n[i].x, Y = gnd_n[i].y;
        accumulate({0, 0, 0, -u, -v, -1, Y * u, Y * v, Y});
        accumulate({u, v, 1, 0, 0, 0, -X * u, -X * v, -X});
    }
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < r; ++c)
            ata[std::size_t(r) * 9 + c] = ata[std::size_t(c) * 9 + r];

    const SymEigen eig = jacobi_eigen_sym(ata, 9);
    const double scale = std::max(eig.values[8], 1.0);
    if (eig.values[1] < 1e-10 * scale)
        throw Error(Errc::DegenerateConfiguration,
                    "correspondences are rank-deficient (collinear or repeated points)");

    Mat3 hn;
    for (int i = 0; i < 9; ++i) hn.a[std::size_t(i)] = eig.vectors[std::size_t(i) * 9 + 0];

    Mat3 h = tg.t_inv * hn * ti.t;
    Homography out{h};
    out.normalize();
    if (std::fabs(out.m.det()) <= 1e-12)
        throw Error(Errc::DegenerateConfiguration, "estimated homography is singular");
    return out;
}

namespace detail {

/// Samples one ground point through a view's inverse homography.
/// Returns false when the point falls outside the source frame.
inline bool sample_view(const Frame& src, const Mat3& ground_to_image,
                        const Vec2& ground, float& value) {
    const auto v = ground_to_image.apply({ground.x, ground.y, 1.0});
    if (std::fabs(v[2]) <= 1e-9) return false;
    const double x = v[0] / v[2];
    const double y = v[1] / v[2];
    if (!src.in_bounds(x, y)) return false;
    value = bilinear_sample(src, x, y);
    return true;
}

} // namespace detail

/// Inverse-maps every canvas pixel through h^-1 with bilinear interpolation.
/// Canvas pixels that fall outside the source stay 0.
inline Frame rectify(const Frame& frame, const Homography& h,
                     const PanoramaLayout& layout) {
    layout.validate();
    const Mat3 inv = h.m.inverse();  // throws NonInvertible
    const Frame src = to_gray(frame);

    Frame out = Frame::gray(layout.canvas_width(), layout.canvas_height());
    out.timestamp = frame.timestamp;
    for (int j = 0; j < out.height; ++j) {
        for (int i = 0; i < out.width; ++i) {
            float v = 0.0f;
            if (detail::sample_view(src, inv, layout.ground_of_canvas(i, j), v))
                out.at(i, j) = v;
        }
    }
    return out;
}

/// Rectifies every view into the shared canvas; overlapping contributions
/// are averaged.
inline Frame fuse_panorama(std::span<const Frame> frames,
                           const PanoramaLayout& layout) {
    layout.validate();
    if (frames.size() != layout.views.size())
        throw Error(Errc::LayoutMismatch,
                    "panorama layout has " + std::to_string(layout.views.size()) +
                        " views for " + std::to_string(frames.size()) + " frames");

    std::vector<Frame> gray;
    std::vector<Mat3> inv;
    gray.reserve(frames.size());
    inv.reserve(frames.size());
    for (std::size_t k = 0; k < frames.size(); ++k) {
        gray.push_back(to_gray(frames[k]));
        inv.push_back(layout.views[k].second.m.inverse());
    }

    Frame out = Frame::gray(layout.canvas_width(), layout.canvas_height());
    for (int j = 0; j < out.height; ++j) {
        for (int i = 0; i < out.width; ++i) {
            const Vec2 g = layout.ground_of_canvas(i, j);
            double sum = 0.0;
            int hits = 0;
            for (std::size_t k = 0; k < gray.size(); ++k) {
                float v = 0.0f;
                if (detail::sample_view(gray[k], inv[k], g, v)) {
                    sum += v;
                    ++hits;
                }
            }
            if (hits > 0) out.at(i, j) = float(sum / hits);
        }
    }
    return out;
}

// --- file formats -----------------------------------------------------------

/// Correspondence file: one `u v X Y` line per pair, `#` comments allowed.
inline std::vector<Correspondence> load_correspondences(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    std::vector<Correspondence> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::vector<double> vals;
        double v;
        while (ss >> v) vals.push_back(v);
        if (vals.empty()) continue;
        if (vals.size() != 4)
            throw Error(Errc::IoError, "malformed correspondence line: " + line);
        out.push_back({{vals[0], vals[1]}, {vals[2], vals[3]}});
    }
    return out;
}

/// Homography file: 9 whitespace-separated reals, row-major, m[2][2] = 1.
inline Homography load_homography(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    Mat3 m;
    for (int i = 0; i < 9; ++i)
        if (!(in >> m.a[std::size_t(i)]))
            throw Error(Errc::IoError, "homography file needs 9 values: " + path.string());
    return Homography::from_matrix(m);
}

inline void save_homography(const std::filesystem::path& path, const Homography& h) {
    std::ofstream out(path);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    char buf[64];
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", h.m(r, c));
            out << buf << (c == 2 ? '\n' : ' ');
        }
    }
}

} // namespace crowdscan
