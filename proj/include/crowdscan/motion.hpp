#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdscan/error.hpp"
#include "crowdscan/linalg.hpp"
#include "crowdscan/optical_flow.hpp"

namespace crowdscan {

/// Temporal segmentation: starts of fully contained, overlapping segments.
struct SegmentPlan {
    int segment_length = 0;
    double overlap_fraction = 0.0;
    int stride = 0;
    std::vector<int> starts;
};

inline SegmentPlan plan_segments(int total_frames, int segment_length,
                                 double overlap_fraction) {
    if (segment_length < 2)
        throw Error(Errc::InvalidPlan, "segment_length must be >= 2");
    if (overlap_fraction < 0.0 || overlap_fraction >= 1.0)
        throw Error(Errc::InvalidPlan, "overlap_fraction must be in [0,1)");
    if (total_frames < segment_length)
        throw Error(Errc::InvalidPlan,
                    "video shorter than one segment (" + std::to_string(total_frames) +
                        " < " + std::to_string(segment_length) + " frames)");

    SegmentPlan plan;
    plan.segment_length = segment_length;
    plan.overlap_fraction = overlap_fraction;
    plan.stride = int(std::lround(segment_length * (1.0 - overlap_fraction)));
    if (plan.stride < 1)
        throw Error(Errc::InvalidPlan, "overlap too large: stride rounds to zero");
    for (int s = 0; s + segment_length <= total_frames; s += plan.stride)
        plan.starts.push_back(s);
    return plan;
}

/// Particle trajectory inside one segment; sub-pixel positions, one point per
/// advection step plus the seed.
struct Tracklet {
    int id = 0;
    int start_frame = 0;
    std::vector<Vec2> points;

    int steps() const { return int(points.size()) - 1; }

    double net_displacement() const {
        return points.size() < 2 ? 0.0 : (points.back() - points.front()).norm();
    }

    double path_length() const {
        double s = 0.0;
        for (std::size_t i = 1; i < points.size(); ++i)
            s += (points[i] - points[i - 1]).norm();
        return s;
    }

    double mean_step() const {
        return points.size() < 2 ? 0.0 : path_length() / double(steps());
    }
};

struct TrackletSet {
    int segment_start = 0;
    double grid_spacing = 0.0;
    std::vector<Tracklet> tracklets;
};

struct AdvectionParams {
    double max_step = 20.0;  // per-step displacement cap, pixels
};

/// Seeds a regular particle grid on the segment's first frame and integrates
/// one explicit Euler step per flow field. Particles leaving the frame are
/// terminated; their prefix is kept when it still has >= 2 points.
inline TrackletSet advect_particles(std::span<const FlowField> flows,
                                    double grid_spacing, int segment_start = 0,
                                    const AdvectionParams& params = {}) {
    if (flows.empty())
        throw Error(Errc::EmptyInput, "advection needs at least one flow field");
    if (grid_spacing < 1.0)
        throw Error(Errc::EmptyInput, "grid_spacing must be >= 1 pixel");
    const int w = flows[0].width, h = flows[0].height;
    for (const auto& f : flows)
        if (f.width != w || f.height != h)
            throw Error(Errc::DimensionMismatch, "flow fields differ in size");

    TrackletSet set;
    set.segment_start = segment_start;
    set.grid_spacing = grid_spacing;

    struct Particle {
        Vec2 pos;
        std::vector<Vec2> trail;
        bool alive = true;
    };
    std::vector<Particle> particles;
    for (double y = 0.0; y <= h - 1.0; y += grid_spacing)
        for (double x = 0.0; x <= w - 1.0; x += grid_spacing) {
            Particle p;
            p.pos = {x, y};
            p.trail = {p.pos};
            particles.push_back(std::move(p));
        }

    for (const auto& flow : flows) {
        for (auto& p : particles) {
            if (!p.alive) continue;
            Vec2 step = flow.sample(p.pos.x, p.pos.y);
            const double mag = step.norm();
            if (mag > params.max_step) step = step * (params.max_step / mag);
            const Vec2 next = p.pos + step;
            if (next.x < 0.0 || next.y < 0.0 || next.x > w - 1.0 || next.y > h - 1.0) {
                p.alive = false;
                continue;
            }
            p.pos = next;
            p.trail.push_back(next);
        }
    }

    int id = 0;
    for (auto& p : particles) {
        if (p.trail.size() < 2) { ++id; continue; }
        Tracklet t;
        t.id = id++;
        t.start_frame = segment_start;
        t.points = std::move(p.trail);
        set.tracklets.push_back(std::move(t));
    }
    return set;
}

/// Length / net-displacement filter. The displacement test is disabled for
/// congestion analysis, where oscillating tracklets have small net motion.
inline TrackletSet prune_tracklets(const TrackletSet& ts, int min_length_steps,
                                   double min_net_displacement,
                                   bool filter_displacement = true) {
    if (min_length_steps < 0 || min_net_displacement < 0.0)
        throw Error(Errc::InvalidConfig, "prune thresholds must be >= 0");
    TrackletSet out;
    out.segment_start = ts.segment_start;
    out.grid_spacing = ts.grid_spacing;
    for (const auto& t : ts.tracklets) {
        if (t.steps() < min_length_steps) continue;
        if (filter_displacement && t.net_displacement() < min_net_displacement)
            continue;
        out.tracklets.push_back(t);
    }
    return out;
}

// --- JSON interface ----------------------------------------------------------

inline nlohmann::json tracklets_to_json(const TrackletSet& ts) {
    nlohmann::json j;
    j["schema"] = 1;
    j["segment_start"] = ts.segment_start;
    j["grid_spacing"] = ts.grid_spacing;
    auto arr = nlohmann::json::array();
    for (const auto& t : ts.tracklets) {
        nlohmann::json tj;
        tj["id"] = t.id;
        tj["start_frame"] = t.start_frame;
        auto pts = nlohmann::json::array();
        for (const auto& p : t.points) pts.push_back({p.x, p.y});
        tj["points"] = std::move(pts);
        arr.push_back(std::move(tj));
    }
    j["tracklets"] = std::move(arr);
    return j;
}

inline TrackletSet tracklets_from_json(const nlohmann::json& j) {
    TrackletSet ts;
    ts.segment_start = j.at("segment_start").get<int>();
    ts.grid_spacing = j.at("grid_spacing").get<double>();
    for (const auto& tj : j.at("tracklets")) {
        Tracklet t;
        t.id = tj.at("id").get<int>();
        t.start_frame = tj.at("start_frame").get<int>();
        for (const auto& p : tj.at("points"))
            t.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        ts.tracklets.push_back(std::move(t));
    }
    return ts;
}

} // namespace crowdscan
