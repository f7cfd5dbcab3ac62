#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "crowdscan/draw.hpp"
#include "crowdscan/error.hpp"
#include "crowdscan/geometry.hpp"
#include "crowdscan/motion.hpp"
#include "crowdscan/parallel.hpp"

namespace crowdscan {

/// Longest-common-subsequence similarity in [0,1]: LCS length under the
/// Chebyshev match tolerance eps, normalized by the shorter tracklet.
inline double lcs_similarity(const Tracklet& t1, const Tracklet& t2, double eps) {
    if (t1.points.size() < 2 || t2.points.size() < 2)
        throw Error(Errc::DegenerateTracklet, "LCS needs tracklets with >= 2 points");
    if (!(eps > 0.0))
        throw Error(Errc::InvalidConfig, "LCS eps must be positive");

    const auto& a = t1.points;
    const auto& b = t2.points;
    const std::size_t m = a.size(), n = b.size();
    std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            if ((a[i - 1] - b[j - 1]).norm_inf() <= eps)
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return double(prev[n]) / double(std::min(m, n));
}

/// Symmetric matrix of pairwise LCS similarities, unit diagonal.
struct SimilarityMatrix {
    int n = 0;
    std::vector<double> values;  // row-major n x n

    double at(int i, int j) const { return values[std::size_t(i) * n + j]; }
    double& at(int i, int j) { return values[std::size_t(i) * n + j]; }
};

inline SimilarityMatrix build_similarity_matrix(const TrackletSet& ts, double eps,
                                                int threads = 1) {
    if (ts.tracklets.empty())
        throw Error(Errc::EmptyInput, "similarity matrix needs a non-empty tracklet set");
    const int n = int(ts.tracklets.size());
    SimilarityMatrix sim;
    sim.n = n;
    sim.values.assign(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) sim.at(i, i) = 1.0;

    // flatten the upper triangle so rows parallelize evenly
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(std::size_t(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);

    parallel_for(0, pairs.size(), threads, [&](std::size_t k) {
        const auto [i, j] = pairs[k];
        const double s = lcs_similarity(ts.tracklets[std::size_t(i)],
                                        ts.tracklets[std::size_t(j)], eps);
        sim.at(i, j) = s;
        sim.at(j, i) = s;
    });
    return sim;
}

/// One dominant-flow cluster; members index into the tracklet set the
/// similarity matrix was built from.
struct FlowCluster {
    std::vector<int> members;  // ascending
    int size() const { return int(members.size()); }
};

/// Agglomerative clustering with average linkage on d = 1 - similarity,
/// dendrogram cut at cut_distance (merges happen while min distance <= cut).
/// Ties merge the lexicographically smallest slot pair; clusters always live
/// in the slot of their smallest member, which makes the result independent
/// of input order up to relabeling.
inline std::vector<FlowCluster> cluster_tracklets(const SimilarityMatrix& sim,
                                                  double cut_distance,
                                                  int min_cluster_size) {
    if (!(cut_distance > 0.0 && cut_distance < 1.0))
        throw Error(Errc::InvalidConfig, "cut_distance must be in (0,1)");
    const int n = sim.n;
    if (n == 0) return {};

    std::vector<double> dist(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            dist[std::size_t(i) * n + j] = 1.0 - sim.at(i, j);

    std::vector<bool> active(std::size_t(n), true);
    std::vector<int> size(std::size_t(n), 1);
    std::vector<std::vector<int>> members(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) members[std::size_t(i)] = {i};

    auto d = [&](int i, int j) -> double& { return dist[std::size_t(i) * n + j]; };

    for (int merges = 0; merges < n - 1; ++merges) {
        double best = std::numeric_limits<double>::infinity();
        int bi = -1, bj = -1;
        for (int i = 0; i < n; ++i) {
            if (!active[std::size_t(i)]) continue;
            for (int j = i + 1; j < n; ++j) {
                if (!active[std::size_t(j)]) continue;
                if (d(i, j) < best) {
                    best = d(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        if (bi < 0 || best > cut_distance) break;

        // average linkage (Lance-Williams), merge bj into bi
        const double si = size[std::size_t(bi)], sj = size[std::size_t(bj)];
        for (int k = 0; k < n; ++k) {
            if (!active[std::size_t(k)] || k == bi || k == bj) continue;
            const double nd = (si * d(bi, k) + sj * d(bj, k)) / (si + sj);
            d(bi, k) = nd;
            d(k, bi) = nd;
        }
        size[std::size_t(bi)] += size[std::size_t(bj)];
        auto& mi = members[std::size_t(bi)];
        auto& mj = members[std::size_t(bj)];
        mi.insert(mi.end(), mj.begin(), mj.end());
        mj.clear();
        active[std::size_t(bj)] = false;
    }

    std::vector<FlowCluster> out;
    for (int i = 0; i < n; ++i) {
        if (!active[std::size_t(i)]) continue;
        if (int(members[std::size_t(i)].size()) < std::max(min_cluster_size, 1)) continue;
        FlowCluster c;
        c.members = members[std::size_t(i)];
        std::sort(c.members.begin(), c.members.end());
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const FlowCluster& a, const FlowCluster& b) {
        return a.members.front() < b.members.front();
    });
    return out;
}

/// Clustered-flow summary rendered as one arrow.
struct DominantFlow {
    std::vector<Vec2> path;            // representative polyline
    double mean_speed_px_s = 0.0;
    std::optional<double> mean_speed_m_s;
    int density = 0;                   // member tracklet count
    Vec2 direction{1.0, 0.0};          // unit tangent at the path end
    int color_bin = 0;                 // 0..4 into speed_color_scale()
    double width = 2.0;                // render stroke width at default scale
};

/// Fixed 5-color speed scale, blue -> green -> yellow -> orange -> red.
inline const std::array<std::array<int, 3>, 5>& speed_color_scale() {
    static const std::array<std::array<int, 3>, 5> scale = {{
        {0, 0, 255}, {0, 200, 0}, {255, 255, 0}, {255, 128, 0}, {255, 0, 0}}};
    return scale;
}

inline double stroke_width(int density, double width_per_member) {
    return std::clamp(density * width_per_member, 2.0, 40.0);
}

namespace detail {

/// Arc-length resampling to a fixed point count; a zero-length tracklet
/// resamples to copies of its single location.
inline std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, int count) {
    std::vector<Vec2> out(static_cast<std::size_t>(count));
    std::vector<double> cum(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i)
        cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
    const double total = cum.back();
    if (total < 1e-12) {
        for (auto& p : out) p = pts.front();
        return out;
    }
    std::size_t seg = 1;
    for (int k = 0; k < count; ++k) {
        const double target = total * double(k) / double(count - 1);
        while (seg < pts.size() - 1 && cum[seg] < target) ++seg;
        const double span = cum[seg] - cum[seg - 1];
        const double t = span < 1e-12 ? 0.0 : (target - cum[seg - 1]) / span;
        out[std::size_t(k)] = pts[seg - 1] + (pts[seg] - pts[seg - 1]) * t;
    }
    return out;
}

} // namespace detail

/// Representative path = pointwise mean of arc-length-resampled members;
/// speed from mean per-step displacement; direction from the final tangent.
inline DominantFlow summarize_cluster(const FlowCluster& cluster, const TrackletSet& ts,
                                      const Homography* image_to_ground, double fps,
                                      int path_points = 20) {
    if (cluster.members.empty())
        throw Error(Errc::EmptyCluster, "cannot summarize an empty cluster");

    DominantFlow flow;
    flow.density = cluster.size();
    flow.path.assign(std::size_t(path_points), Vec2{0, 0});

    double speed_px = 0.0;
    double speed_m = 0.0;
    int speed_m_members = 0;
    for (int idx : cluster.members) {
        const Tracklet& t = ts.tracklets[std::size_t(idx)];
        const auto res = detail::resample_polyline(t.points, path_points);
        for (int k = 0; k < path_points; ++k)
            flow.path[std::size_t(k)] += res[std::size_t(k)];
        speed_px += t.mean_step();

        if (image_to_ground) {
            try {
                double glen = 0.0;
                Vec2 prevg = apply_homography(*image_to_ground, t.points.front());
                for (std::size_t i = 1; i < t.points.size(); ++i) {
                    const Vec2 g = apply_homography(*image_to_ground, t.points[i]);
                    glen += (g - prevg).norm();
                    prevg = g;
                }
                speed_m += glen / double(t.steps());
                ++speed_m_members;
            } catch (const Error&) {
                // point at infinity: skip this member for the metric speed
            }
        }
    }
    for (auto& p : flow.path) p = p / double(cluster.size());
    flow.mean_speed_px_s = speed_px / double(cluster.size()) * fps;
    if (image_to_ground && speed_m_members > 0)
        flow.mean_speed_m_s = speed_m / double(speed_m_members) * fps;

    Vec2 tangent = flow.path.back() - flow.path[flow.path.size() - 2];
    if (tangent.norm() < 1e-9) tangent = flow.path.back() - flow.path.front();
    if (tangent.norm() < 1e-9) tangent = {1.0, 0.0};
    flow.direction = tangent.normalized();
    flow.width = stroke_width(flow.density, 0.5);
    return flow;
}

/// Quantizes speeds into the 5 color bins over [0, 95th-percentile speed].
inline void assign_color_bins(std::vector<DominantFlow>& flows) {
    if (flows.empty()) return;
    std::vector<double> speeds;
    speeds.reserve(flows.size());
    for (const auto& f : flows) speeds.push_back(f.mean_speed_px_s);
    std::sort(speeds.begin(), speeds.end());
    const std::size_t rank =
        std::min(speeds.size() - 1,
                 std::size_t(std::ceil(0.95 * double(speeds.size())) - 1));
    const double max_speed = speeds[rank];
    for (auto& f : flows) {
        if (max_speed <= 0.0) { f.color_bin = 0; continue; }
        f.color_bin = std::clamp(int(f.mean_speed_px_s / max_speed * 5.0), 0, 4);
    }
}

/// Full per-segment summary: one DominantFlow per cluster, color bins assigned.
inline std::vector<DominantFlow> summarize_flows(const std::vector<FlowCluster>& clusters,
                                                 const TrackletSet& ts,
                                                 const Homography* image_to_ground,
                                                 double fps) {
    std::vector<DominantFlow> flows;
    flows.reserve(clusters.size());
    for (const auto& c : clusters)
        flows.push_back(summarize_cluster(c, ts, image_to_ground, fps));
    assign_color_bins(flows);
    return flows;
}

/// Draws each flow as a thick color-coded polyline with a triangular head.
/// Stroke width = clamp(density * width_per_member, 2, 40).
inline Frame render_flow_overlay(const Frame& frame,
                                 const std::vector<DominantFlow>& flows,
                                 double width_per_member = 0.5) {
    Frame out = to_rgb(frame);
    for (const auto& flow : flows) {
        if (flow.path.size() < 2) continue;
        const auto& rgb = speed_color_scale()[std::size_t(flow.color_bin)];
        const Rgb color = Rgb::from_bytes(rgb[0], rgb[1], rgb[2]);
        const double w = stroke_width(flow.density, width_per_member);

        // shorten the shaft so the head triangle carries the tip
        const double head_len = std::clamp(3.0 * w, 6.0, 36.0);
        std::vector<Vec2> shaft = flow.path;
        const Vec2 tip = shaft.back();
        shaft.back() = tip - flow.direction * (head_len * 0.5);
        draw_thick_polyline(out, shaft, w, color);

        const Vec2 base = tip - flow.direction * head_len;
        const Vec2 side = flow.direction.perp() * (head_len * 0.5);
        fill_triangle(out, tip, base + side, base - side, color);
    }
    return out;
}

} // namespace crowdscan
