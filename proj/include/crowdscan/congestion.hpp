#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdscan/draw.hpp"
#include "crowdscan/error.hpp"
#include "crowdscan/flowsum.hpp"
#include "crowdscan/motion.hpp"

namespace crowdscan {

/// Per-point lateral-oscillation score for one tracklet. For each point with
/// a full centered window of steps, the local desired direction is the unit
/// mean displacement over the window; per-step displacements are projected on
/// its orthogonal, and the score is
///   (zero crossings of the orthogonal component) * (mean |orthogonal|) / window.
/// Straight uniform motion scores 0, and so do stationary windows (mean
/// displacement below 1e-6: standing still is not oscillation).
inline std::vector<double> oscillation_score(const Tracklet& t, int window) {
    const int n = int(t.points.size());
    if (window < 4 || n - 1 < window)
        throw Error(Errc::TrackletTooShort,
                    "oscillation window " + std::to_string(window) +
                        " needs a tracklet with at least that many steps");

    std::vector<Vec2> steps(std::size_t(n - 1));
    for (int i = 0; i + 1 < n; ++i) steps[std::size_t(i)] = t.points[std::size_t(i) + 1] - t.points[std::size_t(i)];

    std::vector<double> scores(std::size_t(n), 0.0);
    const int half = window / 2;
    for (int i = half; i <= n - 1 - half; ++i) {
        const int lo = i - half;                       // window of `window` steps
        const int hi = std::min(lo + window, n - 1);   // exclusive
        Vec2 mean{0, 0};
        for (int j = lo; j < hi; ++j) mean += steps[std::size_t(j)];
        mean = mean / double(hi - lo);
        if (mean.norm() < 1e-6) continue;  // stationary: defined as 0

        const Vec2 ortho = mean.normalized().perp();
        int crossings = 0;
        int prev_sign = 0;
        double amplitude = 0.0;
        for (int j = lo; j < hi; ++j) {
            const double o = steps[std::size_t(j)].dot(ortho);
            amplitude += std::fabs(o);
            const int sign = o > 1e-9 ? 1 : (o < -1e-9 ? -1 : 0);
            if (sign != 0) {
                if (prev_sign != 0 && sign != prev_sign) ++crossings;
                prev_sign = sign;
            }
        }
        amplitude /= double(hi - lo);
        scores[std::size_t(i)] = double(crossings) * amplitude / double(window);
    }
    return scores;
}

/// Spatial grid of mean per-point oscillation scores. counts[] holds the
/// number of accumulated point contributions per cell.
struct OscillationMap {
    int grid_w = 0;
    int grid_h = 0;
    double cell_size = 0.0;
    int segment_start = 0;
    std::vector<double> scores;
    std::vector<int> counts;

    std::size_t idx(int cx, int cy) const { return std::size_t(cy) * grid_w + cx; }

    double max_score() const {
        double m = 0.0;
        for (double s : scores) m = std::max(m, s);
        return m;
    }
};

/// Accumulates every scored tracklet point into its covering cell and takes
/// the per-cell mean, so dense smooth flow does not outrank sparse
/// oscillating flow. Tracklets shorter than the window contribute nothing.
inline OscillationMap build_oscillation_map(const TrackletSet& ts, double cell_size,
                                            int window, int frame_w, int frame_h) {
    if (ts.tracklets.empty())
        throw Error(Errc::EmptyInput, "oscillation map needs a non-empty tracklet set");
    if (cell_size < 1.0)
        throw Error(Errc::InvalidConfig, "cell_size must be >= 1 pixel");

    OscillationMap map;
    map.grid_w = std::max(1, int(std::ceil(frame_w / cell_size)));
    map.grid_h = std::max(1, int(std::ceil(frame_h / cell_size)));
    map.cell_size = cell_size;
    map.segment_start = ts.segment_start;
    map.scores.assign(std::size_t(map.grid_w) * map.grid_h, 0.0);
    map.counts.assign(std::size_t(map.grid_w) * map.grid_h, 0);

    const int half = window / 2;
    for (const auto& t : ts.tracklets) {
        if (int(t.points.size()) - 1 < window) continue;
        const auto scores = oscillation_score(t, window);
        const int n = int(t.points.size());
        for (int i = half; i <= n - 1 - half; ++i) {
            const Vec2& p = t.points[std::size_t(i)];
            const int cx = std::clamp(int(p.x / cell_size), 0, map.grid_w - 1);
            const int cy = std::clamp(int(p.y / cell_size), 0, map.grid_h - 1);
            map.scores[map.idx(cx, cy)] += scores[std::size_t(i)];
            map.counts[map.idx(cx, cy)] += 1;
        }
    }
    for (std::size_t c = 0; c < map.scores.size(); ++c)
        if (map.counts[c] > 0) map.scores[c] /= double(map.counts[c]);
    return map;
}

/// Quantization noise floor: cells below max(abs_floor, rel_floor * max score)
/// get label 0. The relative part tracks the map's own scale; the absolute
/// part keeps an all-calm scene from being quantized against its own noise.
struct QuantizeParams {
    double rel_floor = 0.05;
    double abs_floor = 0.05;
};

struct QuantizedMap {
    int grid_w = 0;
    int grid_h = 0;
    double cell_size = 0.0;
    int levels = 4;
    std::vector<int> labels;  // 0 = below threshold, else 1..levels-1

    std::size_t idx(int cx, int cy) const { return std::size_t(cy) * grid_w + cx; }
};

/// Nonzero scores quantized into levels-1 equal-width bins over [T0, max].
/// An all-zero map yields all-zero labels (not an error).
inline QuantizedMap quantize_map(const OscillationMap& m, int levels,
                                 const QuantizeParams& params = {}) {
    if (levels < 2)
        throw Error(Errc::InvalidConfig, "quantization needs at least 2 levels");
    QuantizedMap q;
    q.grid_w = m.grid_w;
    q.grid_h = m.grid_h;
    q.cell_size = m.cell_size;
    q.levels = levels;
    q.labels.assign(m.scores.size(), 0);

    const double max_score = m.max_score();
    if (max_score <= 0.0) return q;
    const double t0 = std::max(params.abs_floor, params.rel_floor * max_score);
    if (max_score <= t0) return q;

    const double bin_width = (max_score - t0) / double(levels - 1);
    for (std::size_t c = 0; c < m.scores.size(); ++c) {
        const double s = m.scores[c];
        if (s < t0) continue;
        q.labels[c] = std::clamp(1 + int((s - t0) / bin_width), 1, levels - 1);
    }
    return q;
}

/// Connected component of high-oscillation cells.
struct CandidateRegion {
    Vec2 centroid_px;
    int area_cells = 0;
};

/// 8-connected components of cells with label >= min_level; components
/// smaller than min_region_area are dropped. Centroids are in pixels.
inline std::vector<CandidateRegion> candidate_regions(const QuantizedMap& q,
                                                      int min_level,
                                                      int min_region_area) {
    if (min_level < 1 || min_level >= q.levels)
        throw Error(Errc::InvalidConfig, "min_level must be in [1, levels)");

    std::vector<int> visited(q.labels.size(), 0);
    std::vector<CandidateRegion> out;
    std::vector<std::pair<int, int>> stack;

    for (int cy = 0; cy < q.grid_h; ++cy) {
        for (int cx = 0; cx < q.grid_w; ++cx) {
            const std::size_t start = q.idx(cx, cy);
            if (visited[start] || q.labels[start] < min_level) continue;

            double sum_x = 0.0, sum_y = 0.0;
            int area = 0;
            stack.clear();
            stack.emplace_back(cx, cy);
            visited[start] = 1;
            while (!stack.empty()) {
                const auto [x, y] = stack.back();
                stack.pop_back();
                ++area;
                sum_x += (x + 0.5) * q.cell_size;
                sum_y += (y + 0.5) * q.cell_size;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        const int nx2 = x + dx, ny2 = y + dy;
                        if (nx2 < 0 || ny2 < 0 || nx2 >= q.grid_w || ny2 >= q.grid_h)
                            continue;
                        const std::size_t ni = q.idx(nx2, ny2);
                        if (visited[ni] || q.labels[ni] < min_level) continue;
                        visited[ni] = 1;
                        stack.emplace_back(nx2, ny2);
                    }
            }
            if (area >= min_region_area)
                out.push_back({{sum_x / area, sum_y / area}, area});
        }
    }
    return out;
}

/// Congestion location confirmed across temporal segments.
struct CongestionRegion {
    enum class Kind { Fixed, Dynamic };

    Vec2 centroid;
    double area_cells = 0.0;
    double confidence = 0.0;            // fraction of segments in the chain
    std::vector<int> segments_present;  // segment_start values, ascending
    std::vector<Vec2> track;            // chained centroid per listed segment
    Kind kind = Kind::Fixed;
};

inline const char* kind_name(CongestionRegion::Kind k) {
    return k == CongestionRegion::Kind::Fixed ? "fixed" : "dynamic";
}

/// Chains candidate regions greedily across consecutive segments (nearest
/// centroid within match_radius). Chains covering at least `persistence` of
/// all segments become CongestionRegions; a chain whose centroid scatter
/// stays under match_radius/2 is fixed, otherwise dynamic.
inline std::vector<CongestionRegion> localize_congestion(
    const std::vector<std::pair<int, std::vector<CandidateRegion>>>& per_segment,
    double persistence, double match_radius) {
    if (per_segment.empty())
        throw Error(Errc::EmptyInput, "localization needs at least one segment");
    if (!(persistence > 0.0 && persistence <= 1.0))
        throw Error(Errc::InvalidConfig, "persistence must be in (0,1]");

    struct Chain {
        std::vector<int> segment_starts;
        std::vector<Vec2> centroids;
        std::vector<int> areas;
        std::size_t last_segment_index = 0;
    };
    std::vector<Chain> chains;

    for (std::size_t s = 0; s < per_segment.size(); ++s) {
        const auto& [seg_start, regions] = per_segment[s];

        // stable processing order: by centroid, then area
        std::vector<std::size_t> order(regions.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const auto& ra = regions[a];
            const auto& rb = regions[b];
            if (ra.centroid_px.x != rb.centroid_px.x)
                return ra.centroid_px.x < rb.centroid_px.x;
            if (ra.centroid_px.y != rb.centroid_px.y)
                return ra.centroid_px.y < rb.centroid_px.y;
            return ra.area_cells < rb.area_cells;
        });

        const std::size_t existing = chains.size();  // chains opened before this segment
        std::vector<bool> chain_taken(existing, false);
        for (std::size_t oi : order) {
            const auto& region = regions[oi];
            double best = match_radius;
            int best_chain = -1;
            for (std::size_t c = 0; c < existing; ++c) {
                if (chain_taken[c]) continue;
                if (s == 0 || chains[c].last_segment_index != s - 1) continue;
                const double dist = (chains[c].centroids.back() - region.centroid_px).norm();
                if (dist < best) {
                    best = dist;
                    best_chain = int(c);
                }
            }
            if (best_chain >= 0) {
                auto& ch = chains[std::size_t(best_chain)];
                ch.segment_starts.push_back(seg_start);
                ch.centroids.push_back(region.centroid_px);
                ch.areas.push_back(region.area_cells);
                ch.last_segment_index = s;
                chain_taken[std::size_t(best_chain)] = true;
            } else {
                Chain ch;
                ch.segment_starts = {seg_start};
                ch.centroids = {region.centroid_px};
                ch.areas = {region.area_cells};
                ch.last_segment_index = s;
                chains.push_back(std::move(ch));
            }
        }
    }

    const double total = double(per_segment.size());
    std::vector<CongestionRegion> out;
    for (const auto& ch : chains) {
        const double fraction = double(ch.segment_starts.size()) / total;
        if (fraction < persistence) continue;

        CongestionRegion region;
        Vec2 mean{0, 0};
        double mean_area = 0.0;
        for (std::size_t i = 0; i < ch.centroids.size(); ++i) {
            mean += ch.centroids[i];
            mean_area += ch.areas[i];
        }
        mean = mean / double(ch.centroids.size());
        mean_area /= double(ch.centroids.size());

        double var = 0.0;
        for (const auto& c : ch.centroids) var += (c - mean).norm_sq();
        const double scatter = std::sqrt(var / double(ch.centroids.size()));

        region.centroid = mean;
        region.area_cells = mean_area;
        region.confidence = fraction;
        region.segments_present = ch.segment_starts;
        region.track = ch.centroids;
        region.kind = scatter < match_radius * 0.5 ? CongestionRegion::Kind::Fixed
                                                   : CongestionRegion::Kind::Dynamic;
        out.push_back(std::move(region));
    }
    std::sort(out.begin(), out.end(), [](const CongestionRegion& a, const CongestionRegion& b) {
        if (a.centroid.x != b.centroid.x) return a.centroid.x < b.centroid.x;
        return a.centroid.y < b.centroid.y;
    });
    return out;
}

// --- serialization & rendering -------------------------------------------------

inline nlohmann::json congestion_to_json(const std::vector<CongestionRegion>& regions) {
    nlohmann::json j;
    j["schema"] = 1;
    auto arr = nlohmann::json::array();
    for (const auto& r : regions) {
        nlohmann::json rj;
        rj["centroid"] = {r.centroid.x, r.centroid.y};
        rj["area_cells"] = r.area_cells;
        rj["confidence"] = r.confidence;
        rj["kind"] = kind_name(r.kind);
        rj["segments"] = r.segments_present;
        auto track = nlohmann::json::array();
        for (const auto& p : r.track) track.push_back({p.x, p.y});
        rj["track"] = std::move(track);
        arr.push_back(std::move(rj));
    }
    j["regions"] = std::move(arr);
    return j;
}

/// Oscillation map upsampled to frame size and alpha-blended (0.5) over the
/// frame with the flowsum color scale; calm cells stay untinted.
inline Frame render_congestion_heatmap(const Frame& frame, const OscillationMap& map,
                                       double alpha = 0.5) {
    Frame out = to_rgb(frame);
    const double max_score = map.max_score();
    if (max_score <= 0.0) return out;
    const auto& scale = speed_color_scale();
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const int cx = std::clamp(int(x / map.cell_size), 0, map.grid_w - 1);
            const int cy = std::clamp(int(y / map.cell_size), 0, map.grid_h - 1);
            const double s = map.scores[map.idx(cx, cy)] / max_score;
            if (s <= 0.05) continue;
            const auto& rgb = scale[std::size_t(std::clamp(int(s * 5.0), 0, 4))];
            put_pixel(out, x, y, Rgb::from_bytes(rgb[0], rgb[1], rgb[2]), alpha);
        }
    return out;
}

} // namespace crowdscan
