#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdscan/error.hpp"
#include "crowdscan/image.hpp"
#include "crowdscan/linalg.hpp"
#include "crowdscan/rng.hpp"

namespace crowdscan {

struct RectPx {
    double x = 0, y = 0, w = 0, h = 0;

    Vec2 center() const { return {x + w * 0.5, y + h * 0.5}; }
    bool contains(const Vec2& p) const {
        return p.x > x && p.x < x + w && p.y > y && p.y < y + h;
    }
    /// Nearest point of the (closed) rectangle to p.
    Vec2 clamp_point(const Vec2& p) const {
        return {std::clamp(p.x, x, x + w), std::clamp(p.y, y, y + h)};
    }
};

struct LaneSpec {
    RectPx entry;
    RectPx goal;
    double speed = 1.0;  // px per frame

    Vec2 direction() const { return (goal.center() - entry.center()).normalized(); }
};

struct MovingObstacle {
    RectPx rect;     // position at frame 0
    Vec2 velocity;   // px per frame

    RectPx at(int frame) const {
        return {rect.x + velocity.x * frame, rect.y + velocity.y * frame, rect.w, rect.h};
    }
};

/// Synthetic crowd scenario. Agents follow goal attraction with short-range
/// exponential repulsion; blocked agents jitter laterally. Everything is a
/// pure function of the spec and its seed.
struct ScenarioSpec {
    std::string name;
    int width = 320;
    int height = 240;
    int frames = 100;
    double fps = 25.0;
    int agents = 0;
    std::vector<LaneSpec> lanes;  // empty => static agents (counting scenes)
    std::vector<RectPx> obstacles;
    std::optional<RectPx> bottleneck;        // gap rectangle; ground-truth marker
    std::optional<MovingObstacle> moving_obstacle;
    double blob_radius = 4.0;
    std::uint64_t seed = 1;
    double noise = 0.0;                      // pixel-noise std
    double repulsion = 1.0;                  // pairwise force scale, px/frame
    std::optional<RectPx> spawn;             // static placement region
    double min_head_separation = 0.0;        // static placement rejection radius

    void validate() const {
        if (width < 16 || height < 16)
            throw Error(Errc::InvalidSpec, "scenario frame too small");
        if (frames < 2) throw Error(Errc::InvalidSpec, "scenario needs >= 2 frames");
        if (agents < 0) throw Error(Errc::InvalidSpec, "agent count must be >= 0");
        if (!(fps > 0.0)) throw Error(Errc::InvalidSpec, "fps must be positive");
        if (!(blob_radius >= 1.0))
            throw Error(Errc::InvalidSpec, "blob_radius must be >= 1 px");
        if (noise < 0.0 || repulsion < 0.0)
            throw Error(Errc::InvalidSpec, "noise and repulsion must be >= 0");
        auto in_frame = [&](const RectPx& r) {
            return r.w > 0 && r.h > 0 && r.x >= 0 && r.y >= 0 &&
                   r.x + r.w <= width && r.y + r.h <= height;
        };
        for (const auto& lane : lanes) {
            if (!(lane.speed > 0.0))
                throw Error(Errc::InvalidSpec, "lane speed must be positive");
            if (!in_frame(lane.entry) || !in_frame(lane.goal))
                throw Error(Errc::InvalidSpec, "lane regions must lie within the frame");
            if (lane.direction().norm() < 0.5)
                throw Error(Errc::InvalidSpec, "lane entry and goal coincide");
        }
        for (const auto& o : obstacles)
            if (!in_frame(o))
                throw Error(Errc::InvalidSpec, "obstacle outside the frame");
        if (spawn && !in_frame(*spawn))
            throw Error(Errc::InvalidSpec, "spawn region outside the frame");
    }
};

struct GroundTruth {
    std::vector<std::vector<Vec2>> trajectories;    // per agent, one point per frame
    std::vector<Vec2> lane_directions;
    std::optional<Vec2> congestion_center;          // present iff bottleneck defined
    std::vector<std::vector<Vec2>> per_frame_heads; // per frame
    std::vector<Vec2> blockage_track;               // moving obstacle center per frame
};

struct Scenario {
    std::vector<Frame> frames;
    GroundTruth truth;
};

namespace detail {

/// Fixed-seed value-noise texture: random lattice every 4 px, bilinearly
/// upsampled. Gives the optical flow something to hold on to.
inline Frame value_noise_background(int w, int h, std::uint64_t seed, double lo,
                                    double hi) {
    Rng rng(seed ^ 0xBAC6'0123'4567'89ABull);
    const int cell = 4;
    const int gw = w / cell + 2, gh = h / cell + 2;
    std::vector<double> lattice(std::size_t(gw) * gh);
    for (auto& v : lattice) v = rng.uniform(lo, hi);

    Frame bg = Frame::gray(w, h);
    for (int y = 0; y < h; ++y) {
        const double gy = double(y) / cell;
        const int y0 = int(gy);
        const double fy = gy - y0;
        for (int x = 0; x < w; ++x) {
            const double gx = double(x) / cell;
            const int x0 = int(gx);
            const double fx = gx - x0;
            auto lat = [&](int xx, int yy) { return lattice[std::size_t(yy) * gw + xx]; };
            bg.at(x, y) = float((lat(x0, y0) * (1 - fx) + lat(x0 + 1, y0) * fx) * (1 - fy) +
                                (lat(x0, y0 + 1) * (1 - fx) + lat(x0 + 1, y0 + 1) * fx) * fy);
        }
    }
    return bg;
}

inline void stamp_blob(Frame& img, const Vec2& c, double radius, double depth) {
    const double sigma = radius / 2.0;
    const int x0 = std::max(0, int(std::floor(c.x - radius)) - 1);
    const int x1 = std::min(img.width - 1, int(std::ceil(c.x + radius)) + 1);
    const int y0 = std::max(0, int(std::floor(c.y - radius)) - 1);
    const int y1 = std::min(img.height - 1, int(std::ceil(c.y + radius)) + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d2 = (Vec2(x, y) - c).norm_sq();
            const float v = img.at(x, y) - float(depth * std::exp(-d2 / (2 * sigma * sigma)));
            img.at(x, y) = std::max(0.0f, v);
        }
}

/// Pushes a point out of a rectangle along the cheapest axis, with margin.
inline Vec2 push_out(const RectPx& r, const Vec2& p, double margin) {
    if (!r.contains(p)) return p;
    const double left = p.x - r.x;
    const double right = r.x + r.w - p.x;
    const double top = p.y - r.y;
    const double bottom = r.y + r.h - p.y;
    const double m = std::min({left, right, top, bottom});
    if (m == left) return {r.x - margin, p.y};
    if (m == right) return {r.x + r.w + margin, p.y};
    if (m == top) return {p.x, r.y - margin};
    return {p.x, r.y + r.h + margin};
}

/// Row-major grid placement inside a rectangle, roughly square cells.
inline std::vector<Vec2> grid_placement(const RectPx& rect, int count, Rng& rng) {
    std::vector<Vec2> out;
    if (count <= 0) return out;
    int rows = std::max(1, int(std::floor(std::sqrt(double(count) * rect.h / std::max(rect.w, 1.0)))));
    int cols = (count + rows - 1) / rows;
    for (int i = 0; i < count; ++i) {
        const int rr = i / cols;
        const int cc = i % cols;
        const double px = rect.x + (cc + 0.5) * rect.w / cols + rng.uniform(-0.5, 0.5);
        const double py = rect.y + (rr + 0.5) * rect.h / rows + rng.uniform(-0.5, 0.5);
        out.push_back({px, py});
    }
    return out;
}

} // namespace detail

inline Scenario generate_scenario(const ScenarioSpec& spec) {
    spec.validate();

    Scenario scenario;
    GroundTruth& truth = scenario.truth;
    for (const auto& lane : spec.lanes)
        truth.lane_directions.push_back(lane.direction());
    if (spec.bottleneck) truth.congestion_center = spec.bottleneck->center();

    Rng rng(spec.seed);

    struct Agent {
        Vec2 pos;
        int lane = -1;
        int blocked_streak = 0;
    };
    std::vector<Agent> agents;
    agents.reserve(std::size_t(spec.agents));

    if (spec.lanes.empty()) {
        // static scene: rejection-sampled placement, used for counting tests
        const RectPx region = spec.spawn
                                  ? *spec.spawn
                                  : RectPx{12, 12, double(spec.width) - 24,
                                           double(spec.height) - 24};
        const double min_sep = spec.min_head_separation;
        for (int i = 0; i < spec.agents; ++i) {
            bool placed = false;
            for (int attempt = 0; attempt < 20000 && !placed; ++attempt) {
                const Vec2 cand{rng.uniform(region.x, region.x + region.w),
                                rng.uniform(region.y, region.y + region.h)};
                bool ok = true;
                for (const auto& o : spec.obstacles)
                    if (o.contains(cand)) { ok = false; break; }
                if (ok && min_sep > 0.0)
                    for (const auto& a : agents)
                        if ((a.pos - cand).norm() < min_sep) { ok = false; break; }
                if (ok) {
                    agents.push_back({cand, -1, 0});
                    placed = true;
                }
            }
            if (!placed)
                throw Error(Errc::InvalidSpec,
                            "cannot place agents with the requested separation");
        }
    } else {
        // round-robin lane assignment, grid placement inside each entry region
        std::vector<int> per_lane(spec.lanes.size(), 0);
        for (int i = 0; i < spec.agents; ++i)
            ++per_lane[std::size_t(i) % spec.lanes.size()];
        for (std::size_t l = 0; l < spec.lanes.size(); ++l) {
            auto placed = detail::grid_placement(spec.lanes[l].entry, per_lane[l], rng);
            for (auto& p : placed) {
                for (const auto& o : spec.obstacles) p = detail::push_out(o, p, 1.0);
                agents.push_back({p, int(l), 0});
            }
        }
    }

    truth.trajectories.assign(agents.size(), {});
    const Frame background = detail::value_noise_background(
        spec.width, spec.height, spec.seed, 0.45, 0.85);
    const double d0 = 2.0 * spec.blob_radius;
    const double cutoff = 4.0 * d0;

    for (int t = 0; t < spec.frames; ++t) {
        std::vector<RectPx> solid = spec.obstacles;
        if (spec.moving_obstacle) solid.push_back(spec.moving_obstacle->at(t));
        if (spec.moving_obstacle)
            truth.blockage_track.push_back(spec.moving_obstacle->at(t).center());

        // record state, render frame t
        std::vector<Vec2> heads;
        heads.reserve(agents.size());
        for (std::size_t i = 0; i < agents.size(); ++i) {
            truth.trajectories[i].push_back(agents[i].pos);
            heads.push_back(agents[i].pos);
        }
        truth.per_frame_heads.push_back(heads);

        Frame frame = background;
        frame.timestamp = t;
        for (const auto& a : agents)
            detail::stamp_blob(frame, a.pos, spec.blob_radius, 0.55);
        for (const auto& o : solid) {
            const int ox0 = std::max(0, int(std::floor(o.x)));
            const int ox1 = std::min(spec.width - 1, int(std::ceil(o.x + o.w)) - 1);
            const int oy0 = std::max(0, int(std::floor(o.y)));
            const int oy1 = std::min(spec.height - 1, int(std::ceil(o.y + o.h)) - 1);
            for (int y = oy0; y <= oy1; ++y)
                for (int x = ox0; x <= ox1; ++x)
                    frame.at(x, y) *= 0.35f;
        }
        if (spec.noise > 0.0) {
            Rng noise_rng(spec.seed ^ (0x9E37'79B9'7F4A'7C15ull + std::uint64_t(t) * 0x2545F4914F6CDD1Dull));
            for (auto& v : frame.pixels)
                v = std::clamp(v + float(noise_rng.gaussian(0.0, spec.noise)), 0.0f, 1.0f);
        }
        scenario.frames.push_back(std::move(frame));

        if (t == spec.frames - 1 || spec.lanes.empty()) continue;

        // hard collision applies at t+1, where a moving obstacle has advanced
        std::vector<RectPx> solid_next = spec.obstacles;
        if (spec.moving_obstacle) solid_next.push_back(spec.moving_obstacle->at(t + 1));

        // synchronous update from the frame-t snapshot
        std::vector<Vec2> snapshot(agents.size());
        for (std::size_t i = 0; i < agents.size(); ++i) snapshot[i] = agents[i].pos;

        for (std::size_t i = 0; i < agents.size(); ++i) {
            Agent& a = agents[i];
            const LaneSpec& lane = spec.lanes[std::size_t(a.lane)];
            const Vec2 lane_dir = lane.direction();

            // bottleneck funnel: upstream agents outside the gap aim at it
            Vec2 desired_dir = lane_dir;
            if (spec.bottleneck) {
                const RectPx& gap = *spec.bottleneck;
                const Vec2 gc = gap.center();
                const double along = (gc - a.pos).dot(lane_dir);
                const bool upstream = along > 0.0;
                if (upstream) {
                    const Vec2 to_gap = (gc - a.pos).normalized();
                    if (to_gap.norm() > 0.5) desired_dir = to_gap;
                }
            }

            Vec2 force{0, 0};
            if (spec.repulsion > 0.0) {
                for (std::size_t j = 0; j < agents.size(); ++j) {
                    if (j == i) continue;
                    const Vec2 delta = snapshot[i] - snapshot[j];
                    const double d = delta.norm();
                    if (d > cutoff || d < 1e-9) continue;
                    force += delta * (spec.repulsion * std::exp(-d / d0) / d);
                }
            }
            for (const auto& o : solid) {
                const Vec2 near = o.clamp_point(snapshot[i]);
                const Vec2 delta = snapshot[i] - near;
                const double d = delta.norm();
                if (d < 1e-9) continue;  // inside; the projection below handles it
                if (d < 3.0 * spec.blob_radius)
                    force += delta * (2.0 * std::exp(-d / spec.blob_radius) / d);
            }

            Vec2 vel = desired_dir * lane.speed + force;
            // crowd pressure can redirect or stall an agent but not launch it
            const double vmax = lane.speed * 1.15;
            if (vel.norm() > vmax) vel = vel * (vmax / vel.norm());

            Vec2 next = a.pos + vel;

            // lateral jitter while blocked
            const double progress = (next - a.pos).dot(desired_dir);
            if (progress < 0.3 * lane.speed) {
                ++a.blocked_streak;
            } else {
                a.blocked_streak = 0;
            }
            if (a.blocked_streak >= 2)
                next += desired_dir.perp() * rng.uniform(-2.0, 2.0);

            // hard non-penetration and frame clamping
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& o : solid_next) next = detail::push_out(o, next, 0.5);

            const bool out_of_frame = next.x < 1.0 || next.y < 1.0 ||
                                      next.x > spec.width - 2.0 ||
                                      next.y > spec.height - 2.0;
            const bool at_goal = lane.goal.contains(next);
            if (out_of_frame || at_goal) {
                // wrap back to the entry edge, keep the lateral coordinate
                const Vec2 dir = lane_dir;
                Vec2 respawn = next;
                if (std::fabs(dir.x) >= std::fabs(dir.y)) {
                    respawn.x = dir.x > 0 ? lane.entry.x + rng.uniform(0.0, 2.0)
                                          : lane.entry.x + lane.entry.w - rng.uniform(0.0, 2.0);
                    respawn.y = std::clamp(next.y, lane.entry.y, lane.entry.y + lane.entry.h);
                } else {
                    respawn.y = dir.y > 0 ? lane.entry.y + rng.uniform(0.0, 2.0)
                                          : lane.entry.y + lane.entry.h - rng.uniform(0.0, 2.0);
                    respawn.x = std::clamp(next.x, lane.entry.x, lane.entry.x + lane.entry.w);
                }
                for (const auto& o : solid_next) respawn = detail::push_out(o, respawn, 1.0);
                next = respawn;
                a.blocked_streak = 0;
            }

            next.x = std::clamp(next.x, 1.0, spec.width - 2.0);
            next.y = std::clamp(next.y, 1.0, spec.height - 2.0);
            a.pos = next;
        }
    }
    return scenario;
}

// --- builtin scenarios ---------------------------------------------------------

inline std::vector<ScenarioSpec> builtin_scenarios() {
    std::vector<ScenarioSpec> all;

    {
        // straight unhindered flow; the congestion false-positive control
        ScenarioSpec s;
        s.name = "free_flow";
        s.width = 320; s.height = 240; s.frames = 150;
        s.agents = 12;
        s.lanes = {{{20, 50, 60, 140}, {306, 50, 10, 140}, 1.5}};
        s.repulsion = 0.0;
        s.blob_radius = 4.0;
        s.seed = 11;
        all.push_back(std::move(s));
    }
    {
        // two compact platoons passing in opposite directions; sized so the
        // platoons stay in frame and each lane yields one coherent cluster
        ScenarioSpec s;
        s.name = "two_lanes_opposing";
        s.width = 320; s.height = 240; s.frames = 175;
        s.agents = 28;
        s.lanes = {{{30, 60, 22, 16}, {306, 60, 10, 16}, 1.2},
                   {{268, 160, 22, 16}, {4, 160, 10, 16}, 1.2}};
        s.repulsion = 0.0;
        s.blob_radius = 4.0;
        s.seed = 22;
        all.push_back(std::move(s));
    }
    {
        // wall with a narrow gap; agents spawn close to the mouth so the
        // queue exists from the first segment onward
        ScenarioSpec s;
        s.name = "bottleneck_fixed";
        s.width = 320; s.height = 240; s.frames = 325;
        s.agents = 40;
        s.lanes = {{{150, 105, 40, 30}, {306, 105, 10, 30}, 1.4}};
        s.obstacles = {{208, 0, 10, 114}, {208, 126, 10, 114}};
        s.bottleneck = RectPx{208, 114, 10, 12};
        s.repulsion = 2.4;
        s.blob_radius = 4.0;
        s.seed = 33;
        all.push_back(std::move(s));
    }
    {
        // a slow transverse blocker plows through the main flow; the queue
        // behind it drifts with it
        ScenarioSpec s;
        s.name = "moving_blockage";
        s.width = 320; s.height = 240; s.frames = 325;
        s.agents = 48;
        s.lanes = {{{20, 40, 80, 160}, {304, 40, 14, 160}, 1.5}};
        s.moving_obstacle = MovingObstacle{{190, 40, 18, 72}, {0.0, 0.45}};
        s.repulsion = 2.0;
        s.blob_radius = 4.0;
        s.seed = 44;
        all.push_back(std::move(s));
    }
    {
        // static dense scene for the counting pipeline
        ScenarioSpec s;
        s.name = "dense_static_200";
        s.width = 320; s.height = 240; s.frames = 3;
        s.agents = 200;
        s.blob_radius = 5.0;
        s.noise = 0.05;
        s.spawn = RectPx{14, 14, 292, 212};
        s.min_head_separation = 13.0;
        s.seed = 55;
        all.push_back(std::move(s));
    }
    return all;
}

inline ScenarioSpec builtin_scenario(const std::string& name) {
    for (auto& s : builtin_scenarios())
        if (s.name == name) return s;
    throw Error(Errc::InvalidSpec, "unknown builtin scenario: " + name);
}

// --- serialization ---------------------------------------------------------------

inline nlohmann::json rect_to_json(const RectPx& r) {
    return nlohmann::json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
}

inline RectPx rect_from_json(const nlohmann::json& j) {
    return {j.at("x").get<double>(), j.at("y").get<double>(),
            j.at("w").get<double>(), j.at("h").get<double>()};
}

inline nlohmann::json scenario_to_json(const ScenarioSpec& s) {
    nlohmann::json j;
    j["schema"] = 1;
    j["name"] = s.name;
    j["width"] = s.width;
    j["height"] = s.height;
    j["frames"] = s.frames;
    j["fps"] = s.fps;
    j["agents"] = s.agents;
    auto lanes = nlohmann::json::array();
    for (const auto& lane : s.lanes)
        lanes.push_back({{"entry", rect_to_json(lane.entry)},
                         {"goal", rect_to_json(lane.goal)},
                         {"speed", lane.speed}});
    j["lanes"] = std::move(lanes);
    auto obstacles = nlohmann::json::array();
    for (const auto& o : s.obstacles) obstacles.push_back(rect_to_json(o));
    j["obstacles"] = std::move(obstacles);
    j["bottleneck"] = s.bottleneck ? rect_to_json(*s.bottleneck) : nlohmann::json();
    if (s.moving_obstacle)
        j["moving_obstacle"] = {{"rect", rect_to_json(s.moving_obstacle->rect)},
                                {"velocity", {s.moving_obstacle->velocity.x,
                                              s.moving_obstacle->velocity.y}}};
    else
        j["moving_obstacle"] = nullptr;
    j["blob_radius"] = s.blob_radius;
    j["seed"] = s.seed;
    j["noise"] = s.noise;
    j["repulsion"] = s.repulsion;
    j["spawn"] = s.spawn ? rect_to_json(*s.spawn) : nlohmann::json();
    j["min_head_separation"] = s.min_head_separation;
    return j;
}

inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
    ScenarioSpec s;
    s.name = j.value("name", "custom");
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    s.frames = j.at("frames").get<int>();
    s.fps = j.value("fps", 25.0);
    s.agents = j.at("agents").get<int>();
    if (j.contains("lanes"))
        for (const auto& lj : j.at("lanes"))
            s.lanes.push_back({rect_from_json(lj.at("entry")),
                               rect_from_json(lj.at("goal")),
                               lj.at("speed").get<double>()});
    if (j.contains("obstacles"))
        for (const auto& oj : j.at("obstacles")) s.obstacles.push_back(rect_from_json(oj));
    if (j.contains("bottleneck") && !j.at("bottleneck").is_null())
        s.bottleneck = rect_from_json(j.at("bottleneck"));
    if (j.contains("moving_obstacle") && !j.at("moving_obstacle").is_null()) {
        const auto& mj = j.at("moving_obstacle");
        s.moving_obstacle = MovingObstacle{
            rect_from_json(mj.at("rect")),
            {mj.at("velocity").at(0).get<double>(), mj.at("velocity").at(1).get<double>()}};
    }
    s.blob_radius = j.value("blob_radius", 4.0);
    s.seed = j.value("seed", std::uint64_t(1));
    s.noise = j.value("noise", 0.0);
    s.repulsion = j.value("repulsion", 1.0);
    if (j.contains("spawn") && !j.at("spawn").is_null())
        s.spawn = rect_from_json(j.at("spawn"));
    s.min_head_separation = j.value("min_head_separation", 0.0);
    return s;
}

inline nlohmann::json ground_truth_to_json(const GroundTruth& g) {
    nlohmann::json j;
    j["schema"] = 1;
    auto trajs = nlohmann::json::array();
    for (const auto& t : g.trajectories) {
        auto pts = nlohmann::json::array();
        for (const auto& p : t) pts.push_back({p.x, p.y});
        trajs.push_back(std::move(pts));
    }
    j["trajectories"] = std::move(trajs);
    auto dirs = nlohmann::json::array();
    for (const auto& d : g.lane_directions) dirs.push_back({d.x, d.y});
    j["lane_directions"] = std::move(dirs);
    j["congestion_center"] = g.congestion_center
                                 ? nlohmann::json{g.congestion_center->x,
                                                  g.congestion_center->y}
                                 : nlohmann::json();
    auto heads = nlohmann::json::array();
    for (const auto& frame_heads : g.per_frame_heads) {
        auto pts = nlohmann::json::array();
        for (const auto& p : frame_heads) pts.push_back({p.x, p.y});
        heads.push_back(std::move(pts));
    }
    j["per_frame_heads"] = std::move(heads);
    auto track = nlohmann::json::array();
    for (const auto& p : g.blockage_track) track.push_back({p.x, p.y});
    j["blockage_track"] = std::move(track);
    return j;
}

} // namespace crowdscan
