#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdscan/congestion.hpp"
#include "crowdscan/counting.hpp"
#include "crowdscan/error.hpp"
#include "crowdscan/flowsum.hpp"
#include "crowdscan/geometry.hpp"
#include "crowdscan/image_io.hpp"
#include "crowdscan/motion.hpp"
#include "crowdscan/optical_flow.hpp"
#include "crowdscan/parallel.hpp"

namespace crowdscan {

struct PruneConfig {
    int min_length = 20;              // steps
    double min_net_displacement = 5.0;
};

struct FlowsumConfig {
    double lcs_eps = 10.0;
    double cut_distance = 0.5;
    int min_cluster_size = 5;
    double width_per_member = 0.5;
};

struct CongestionConfig {
    double cell_size = 16.0;
    int window = 16;
    int levels = 4;
    int min_level = 2;
    int min_region_area = 4;
    double persistence = 0.5;
    double match_radius = 48.0;  // 3 * cell_size
    double rel_floor = 0.05;
    double abs_floor = 0.05;
};

struct CountingConfig {
    int stride = 3;
    double perspective_a = 0.0;
    double perspective_b = 6.0;
    std::string kernel_file;
    double score_floor = 0.25;
    double depth_ref = 0.4;
    int max_detections = 100000;
};

/// One canonical, diffable configuration surface. Flags override file
/// values; defaults match the owning modules.
struct PipelineConfig {
    std::string input_dir;
    std::string output_dir;
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = hardware concurrency
    double fps = 25.0;
    int segment_length = 100;
    double overlap_fraction = 0.25;
    FlowParams flow;
    double grid_spacing = 10.0;
    PruneConfig prune;
    FlowsumConfig flowsum;
    CongestionConfig congestion;
    CountingConfig counting;
    std::string homography_file;
    bool dump_tracklets = false;

    int effective_threads() const {
        return threads > 0 ? threads : default_threads();
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<const char*> known,
                                const std::string& scope) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known)
            if (key == k) { ok = true; break; }
        if (!ok)
            throw Error(Errc::InvalidConfig,
                        "unknown config key \"" + (scope.empty() ? key : scope + "." + key) + "\"");
    }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    detail::reject_unknown_keys(
        j,
        {"schema", "input", "output", "seed", "threads", "fps", "segment_length",
         "overlap_fraction", "flow", "grid_spacing", "prune", "flows", "congestion",
         "counting", "homography_file", "dump_tracklets"},
        "");
    detail::maybe(j, "input", c.input_dir);
    detail::maybe(j, "output", c.output_dir);
    detail::maybe(j, "seed", c.seed);
    detail::maybe(j, "threads", c.threads);
    detail::maybe(j, "fps", c.fps);
    detail::maybe(j, "segment_length", c.segment_length);
    detail::maybe(j, "overlap_fraction", c.overlap_fraction);
    detail::maybe(j, "grid_spacing", c.grid_spacing);
    detail::maybe(j, "homography_file", c.homography_file);
    detail::maybe(j, "dump_tracklets", c.dump_tracklets);

    if (j.contains("flow")) {
        const auto& f = j.at("flow");
        detail::reject_unknown_keys(
            f, {"pyramid_levels", "window", "iterations", "block_stride", "max_flow", "ridge"},
            "flow");
        detail::maybe(f, "pyramid_levels", c.flow.pyramid_levels);
        detail::maybe(f, "window", c.flow.window);
        detail::maybe(f, "iterations", c.flow.iterations);
        detail::maybe(f, "block_stride", c.flow.block_stride);
        detail::maybe(f, "max_flow", c.flow.max_flow);
        detail::maybe(f, "ridge", c.flow.ridge);
    }
    if (j.contains("prune")) {
        const auto& p = j.at("prune");
        detail::reject_unknown_keys(p, {"min_length", "min_net_displacement"}, "prune");
        detail::maybe(p, "min_length", c.prune.min_length);
        detail::maybe(p, "min_net_displacement", c.prune.min_net_displacement);
    }
    if (j.contains("flows")) {
        const auto& f = j.at("flows");
        detail::reject_unknown_keys(
            f, {"lcs_eps", "cut_distance", "min_cluster_size", "width_per_member"}, "flows");
        detail::maybe(f, "lcs_eps", c.flowsum.lcs_eps);
        detail::maybe(f, "cut_distance", c.flowsum.cut_distance);
        detail::maybe(f, "min_cluster_size", c.flowsum.min_cluster_size);
        detail::maybe(f, "width_per_member", c.flowsum.width_per_member);
    }
    if (j.contains("congestion")) {
        const auto& g = j.at("congestion");
        detail::reject_unknown_keys(
            g,
            {"cell_size", "window", "levels", "min_level", "min_region_area",
             "persistence", "match_radius", "rel_floor", "abs_floor"},
            "congestion");
        detail::maybe(g, "cell_size", c.congestion.cell_size);
        detail::maybe(g, "window", c.congestion.window);
        detail::maybe(g, "levels", c.congestion.levels);
        detail::maybe(g, "min_level", c.congestion.min_level);
        detail::maybe(g, "min_region_area", c.congestion.min_region_area);
        detail::maybe(g, "persistence", c.congestion.persistence);
        detail::maybe(g, "match_radius", c.congestion.match_radius);
        detail::maybe(g, "rel_floor", c.congestion.rel_floor);
        detail::maybe(g, "abs_floor", c.congestion.abs_floor);
    }
    if (j.contains("counting")) {
        const auto& k = j.at("counting");
        detail::reject_unknown_keys(
            k,
            {"stride", "perspective_a", "perspective_b", "kernel_file", "score_floor",
             "depth_ref", "max_detections"},
            "counting");
        detail::maybe(k, "stride", c.counting.stride);
        detail::maybe(k, "perspective_a", c.counting.perspective_a);
        detail::maybe(k, "perspective_b", c.counting.perspective_b);
        detail::maybe(k, "kernel_file", c.counting.kernel_file);
        detail::maybe(k, "score_floor", c.counting.score_floor);
        detail::maybe(k, "depth_ref", c.counting.depth_ref);
        detail::maybe(k, "max_detections", c.counting.max_detections);
    }
    return c;
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["schema"] = 1;
    j["input"] = c.input_dir;
    j["output"] = c.output_dir;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["fps"] = c.fps;
    j["segment_length"] = c.segment_length;
    j["overlap_fraction"] = c.overlap_fraction;
    j["grid_spacing"] = c.grid_spacing;
    j["homography_file"] = c.homography_file;
    j["dump_tracklets"] = c.dump_tracklets;
    j["flow"] = {{"pyramid_levels", c.flow.pyramid_levels},
                 {"window", c.flow.window},
                 {"iterations", c.flow.iterations},
                 {"block_stride", c.flow.block_stride},
                 {"max_flow", c.flow.max_flow},
                 {"ridge", c.flow.ridge}};
    j["prune"] = {{"min_length", c.prune.min_length},
                  {"min_net_displacement", c.prune.min_net_displacement}};
    j["flows"] = {{"lcs_eps", c.flowsum.lcs_eps},
                  {"cut_distance", c.flowsum.cut_distance},
                  {"min_cluster_size", c.flowsum.min_cluster_size},
                  {"width_per_member", c.flowsum.width_per_member}};
    j["congestion"] = {{"cell_size", c.congestion.cell_size},
                       {"window", c.congestion.window},
                       {"levels", c.congestion.levels},
                       {"min_level", c.congestion.min_level},
                       {"min_region_area", c.congestion.min_region_area},
                       {"persistence", c.congestion.persistence},
                       {"match_radius", c.congestion.match_radius},
                       {"rel_floor", c.congestion.rel_floor},
                       {"abs_floor", c.congestion.abs_floor}};
    j["counting"] = {{"stride", c.counting.stride},
                     {"perspective_a", c.counting.perspective_a},
                     {"perspective_b", c.counting.perspective_b},
                     {"kernel_file", c.counting.kernel_file},
                     {"score_floor", c.counting.score_floor},
                     {"depth_ref", c.counting.depth_ref},
                     {"max_detections", c.counting.max_detections}};
    return j;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::InvalidConfig, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidConfig, "config parse error: " + std::string(e.what()));
    }
    return config_from_json(j);
}

// --- manifest -------------------------------------------------------------------

namespace detail {

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string hash_string(const std::string& s) {
    return hex64(fnv1a64(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

inline std::string hash_file(const std::filesystem::path& p) {
    const auto bytes = read_file_bytes(p);
    return hex64(fnv1a64(bytes.data(), bytes.size()));
}

} // namespace detail

/// Every run writes run_manifest.json: config hash, version, seed and input
/// checksums. Two runs with identical manifests produce byte-identical
/// JSON outputs.
inline nlohmann::json build_manifest(const PipelineConfig& config,
                                     const std::string& command,
                                     const std::vector<std::filesystem::path>& inputs) {
    nlohmann::json m;
    m["schema"] = 1;
    m["tool"] = "crowdscan";
    m["version"] = "0.1.0";
    m["command"] = command;
    m["seed"] = config.seed;
    m["config"] = config_to_json(config);
    m["config_hash"] = detail::hash_string(m["config"].dump());
    auto arr = nlohmann::json::array();
    for (const auto& p : inputs)
        arr.push_back({{"file", p.filename().string()}, {"fnv64", detail::hash_file(p)}});
    m["inputs"] = std::move(arr);
    return m;
}

// --- run functions ----------------------------------------------------------------

namespace detail {

/// Deferred output writer: nothing touches the disk until commit(), so a
/// failing stage leaves no partial outputs behind.
class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

    void add_json(const std::string& name, const nlohmann::json& j) {
        texts_.emplace_back(name, j.dump(2) + "\n");
    }
    void add_image(const std::string& name, Frame frame) {
        images_.emplace_back(name, std::move(frame));
    }

    std::vector<std::string> commit() {
        std::filesystem::create_directories(dir_);
        std::vector<std::filesystem::path> written;
        std::vector<std::string> names;
        try {
            for (const auto& [name, text] : texts_) {
                const auto path = dir_ / name;
                std::ofstream out(path, std::ios::binary);
                if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
                out << text;
                if (!out) throw Error(Errc::IoError, "short write " + path.string());
                written.push_back(path);
                names.push_back(name);
            }
            for (const auto& [name, frame] : images_) {
                const auto path = dir_ / name;
                save_image(path, frame);
                written.push_back(path);
                names.push_back(name);
            }
        } catch (...) {
            std::error_code ec;
            for (const auto& p : written) std::filesystem::remove(p, ec);
            throw;
        }
        return names;
    }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> texts_;
    std::vector<std::pair<std::string, Frame>> images_;
};

inline std::string segment_tag(int start) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", start);
    return buf;
}

/// Flow fields for one segment, frame pairs computed in parallel.
inline std::vector<FlowField> segment_flows(const std::vector<Frame>& frames,
                                            int start, int length,
                                            const FlowParams& params, int threads) {
    std::vector<FlowField> flows(std::size_t(length) - 1);
    parallel_for(0, flows.size(), threads, [&](std::size_t i) {
        flows[i] = dense_optical_flow(frames[std::size_t(start) + i],
                                      frames[std::size_t(start) + i + 1], params);
    });
    return flows;
}

inline nlohmann::json flows_to_json(int segment_start,
                                    const std::vector<DominantFlow>& flows) {
    nlohmann::json j;
    j["schema"] = 1;
    j["segment_start"] = segment_start;
    auto arr = nlohmann::json::array();
    for (const auto& f : flows) {
        nlohmann::json fj;
        auto path = nlohmann::json::array();
        for (const auto& p : f.path) path.push_back({p.x, p.y});
        fj["path"] = std::move(path);
        fj["mean_speed_px_s"] = f.mean_speed_px_s;
        fj["mean_speed_m_s"] =
            f.mean_speed_m_s ? nlohmann::json(*f.mean_speed_m_s) : nlohmann::json();
        fj["density"] = f.density;
        fj["direction"] = {f.direction.x, f.direction.y};
        fj["color_bin"] = f.color_bin;
        arr.push_back(std::move(fj));
    }
    j["flows"] = std::move(arr);
    return j;
}

} // namespace detail

struct SegmentFlowsResult {
    int segment_start = 0;
    std::vector<DominantFlow> flows;
};

struct RunResult {
    std::vector<std::string> outputs;                 // file names written
    std::vector<SegmentFlowsResult> segment_flows;    // flows runs
    std::vector<CongestionRegion> regions;            // congestion runs
    DetectionSet detections;                          // count runs
    std::optional<DensityGrid> density;
};

/// plan -> flow -> advect -> prune -> similarity -> cluster -> summarize -> render.
inline RunResult run_flows(const PipelineConfig& config) {
    const auto files = list_frame_files(config.input_dir);
    const auto frames = load_frame_sequence(config.input_dir);
    const auto plan = plan_segments(int(frames.size()), config.segment_length,
                                    config.overlap_fraction);

    std::optional<Homography> homography;
    if (!config.homography_file.empty())
        homography = load_homography(config.homography_file);

    detail::OutputSet out(config.output_dir);
    RunResult result;
    const int threads = config.effective_threads();

    for (const int start : plan.starts) {
        const auto flows = detail::segment_flows(frames, start, plan.segment_length,
                                                 config.flow, threads);
        const auto ts = advect_particles(flows, config.grid_spacing, start);
        const auto pruned = prune_tracklets(ts, config.prune.min_length,
                                            config.prune.min_net_displacement, true);

        std::vector<DominantFlow> dominant;
        if (!pruned.tracklets.empty()) {
            const auto sim =
                build_similarity_matrix(pruned, config.flowsum.lcs_eps, threads);
            const auto clusters = cluster_tracklets(sim, config.flowsum.cut_distance,
                                                    config.flowsum.min_cluster_size);
            dominant = summarize_flows(clusters, pruned,
                                       homography ? &*homography : nullptr, config.fps);
        }

        const std::string tag = detail::segment_tag(start);
        out.add_json("flows_" + tag + ".json", detail::flows_to_json(start, dominant));
        const Frame& mid = frames[std::size_t(start) + plan.segment_length / 2];
        out.add_image("overlay_" + tag + ".png",
                      render_flow_overlay(mid, dominant, config.flowsum.width_per_member));
        if (config.dump_tracklets)
            out.add_json("tracklets_" + tag + ".json", tracklets_to_json(pruned));

        result.segment_flows.push_back({start, std::move(dominant)});
    }

    out.add_json("run_manifest.json", build_manifest(config, "flows", files));
    result.outputs = out.commit();
    return result;
}

/// Same front end as run_flows, routed through the oscillation analysis.
inline RunResult run_congestion(const PipelineConfig& config) {
    const auto files = list_frame_files(config.input_dir);
    const auto frames = load_frame_sequence(config.input_dir);
    const auto plan = plan_segments(int(frames.size()), config.segment_length,
                                    config.overlap_fraction);

    detail::OutputSet out(config.output_dir);
    RunResult result;
    const int threads = config.effective_threads();
    const int frame_w = frames.front().width;
    const int frame_h = frames.front().height;

    std::vector<std::pair<int, std::vector<CandidateRegion>>> per_segment;
    for (const int start : plan.starts) {
        const auto flows = detail::segment_flows(frames, start, plan.segment_length,
                                                 config.flow, threads);
        const auto ts = advect_particles(flows, config.grid_spacing, start);
        // congestion keeps low-net-displacement tracklets: oscillation has
        // small net motion by definition
        const auto pruned =
            prune_tracklets(ts, config.congestion.window, 0.0, false);

        std::vector<CandidateRegion> regions;
        const std::string tag = detail::segment_tag(start);
        if (!pruned.tracklets.empty()) {
            const auto map = build_oscillation_map(pruned, config.congestion.cell_size,
                                                   config.congestion.window,
                                                   frame_w, frame_h);
            const auto quant = quantize_map(
                map, config.congestion.levels,
                {config.congestion.rel_floor, config.congestion.abs_floor});
            regions = candidate_regions(quant, config.congestion.min_level,
                                        config.congestion.min_region_area);
            const Frame& mid = frames[std::size_t(start) + plan.segment_length / 2];
            out.add_image("heatmap_" + tag + ".png", render_congestion_heatmap(mid, map));
        }
        per_segment.emplace_back(start, std::move(regions));
    }

    result.regions = localize_congestion(per_segment, config.congestion.persistence,
                                         config.congestion.match_radius);
    out.add_json("congestion.json", congestion_to_json(result.regions));
    out.add_json("run_manifest.json", build_manifest(config, "congestion", files));
    result.outputs = out.commit();
    return result;
}

struct CountOptions {
    std::optional<std::filesystem::path> response_file;  // empty => baseline detector
    bool want_density = false;
    std::optional<GroundRect> density_extent;            // default: frame mapped bounds
};

/// Detections always; density only when a homography is configured.
inline RunResult run_count(const PipelineConfig& config, const Frame& frame,
                           const CountOptions& options = {}) {
    ResponseMap response;
    const PerspectiveModel perspective{config.counting.perspective_a,
                                       config.counting.perspective_b};
    if (options.response_file) {
        response = load_response(*options.response_file, config.counting.stride);
    } else {
        response = baseline_response(frame, perspective, config.counting.stride,
                                     {config.counting.depth_ref});
    }

    ResponseKernel kernel;
    if (!config.counting.kernel_file.empty()) {
        const auto r = load_response(config.counting.kernel_file, 1);
        kernel.radius = r.width / 2;
        kernel.weights.assign(r.values.begin(), r.values.end());
        kernel.validate();
    } else {
        const double r_mid = perspective.radius_at(frame.height / 2.0);
        kernel = ResponseKernel::gaussian(std::max(1, int(std::lround(r_mid))));
    }

    const auto full = upsample_response(response, frame.width, frame.height);
    NmsStop stop;
    stop.max_detections = config.counting.max_detections;
    stop.score_floor = config.counting.score_floor;
    const auto detections =
        nms_least_squares(full, frame.width, frame.height, kernel, perspective, stop);

    detail::OutputSet out(config.output_dir);
    out.add_json("detections.json", detections_to_json(detections));
    out.add_image("detections.png", render_detections(frame, detections));

    RunResult result;
    result.detections = detections;

    if (options.want_density) {
        if (config.homography_file.empty())
            throw Error(Errc::HomographyRequired,
                        "density output requires --homography");
        const Homography h = load_homography(config.homography_file);
        GroundRect extent;
        if (options.density_extent) {
            extent = *options.density_extent;
        } else {
            // map the frame corners to bound the ground extent
            double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
            for (const Vec2 corner : {Vec2{0, 0}, Vec2{double(frame.width - 1), 0},
                                      Vec2{0, double(frame.height - 1)},
                                      Vec2{double(frame.width - 1),
                                           double(frame.height - 1)}}) {
                const Vec2 g = apply_homography(h, corner);
                min_x = std::min(min_x, g.x);
                min_y = std::min(min_y, g.y);
                max_x = std::max(max_x, g.x);
                max_y = std::max(max_y, g.y);
            }
            extent = {min_x, min_y, max_x - min_x, max_y - min_y};
        }
        result.density = density_grid(detections, h, extent);
        out.add_json("density.json", density_to_json(*result.density));
    }

    out.add_json("run_manifest.json", build_manifest(config, "count", {}));
    result.outputs = out.commit();
    return result;
}

} // namespace crowdscan
