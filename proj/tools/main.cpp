// crowdscan command-line tool: rectify, panorama, flows, congestion, count,
// synth and a combined pipeline run.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crowdscan/crowdscan.hpp"

namespace fs = std::filesystem;
using namespace crowdscan;

namespace {

struct CommonArgs {
    std::string input;
    std::string output = ".";
    std::string config_file;
    std::int64_t seed = -1;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_input = true) {
    auto* in = cmd->add_option("--input,-i", args.input, "input directory or file");
    if (needs_input) in->required();
    cmd->add_option("--output,--out,-o", args.output, "output directory");
    cmd->add_option("--config,-c", args.config_file, "pipeline config JSON");
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--threads", args.threads, "worker threads (0 = hardware)");
}

PipelineConfig make_config(const CommonArgs& args) {
    PipelineConfig config;
    if (!args.config_file.empty()) config = load_config(args.config_file);
    if (!args.input.empty()) config.input_dir = args.input;
    if (!args.output.empty()) config.output_dir = args.output;
    if (args.seed >= 0) config.seed = std::uint64_t(args.seed);
    if (args.threads > 0) config.threads = args.threads;
    return config;
}

GroundRect parse_extent(const std::string& text) {
    GroundRect r;
    if (std::sscanf(text.c_str(), "%lf,%lf,%lf,%lf", &r.min_x, &r.min_y, &r.width,
                    &r.height) != 4)
        throw Error(Errc::InvalidConfig,
                    "--extent expects min_x,min_y,width,height");
    return r;
}

int report_error(const Error& e) {
    nlohmann::json j;
    j["schema"] = 1;
    j["error"] = e.name();
    j["message"] = e.what();
    std::cerr << j.dump() << "\n";
    return e.exit_code();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"crowdscan: crowd flow, congestion and counting analytics"};
    app.require_subcommand(1);

    // rectify
    auto* rectify_cmd = app.add_subcommand("rectify", "warp one frame to the ground plane");
    CommonArgs rectify_args;
    std::string rectify_h_file, rectify_pairs_file, rectify_save_h;
    std::string rectify_extent = "0,0,100,100";
    double rectify_resolution = 1.0;
    add_common(rectify_cmd, rectify_args);
    rectify_cmd->add_option("--homography", rectify_h_file, "homography file");
    rectify_cmd->add_option("--correspondences", rectify_pairs_file,
                            "estimate the homography from a `u v X Y` pair file");
    rectify_cmd->add_option("--save-homography", rectify_save_h,
                            "write the homography used to this file");
    rectify_cmd->add_option("--extent", rectify_extent, "ground extent min_x,min_y,w,h (m)");
    rectify_cmd->add_option("--resolution", rectify_resolution, "pixels per meter");

    // panorama
    auto* pano_cmd = app.add_subcommand("panorama", "fuse multiple views on the ground plane");
    CommonArgs pano_args;
    std::vector<std::string> pano_inputs, pano_h_files;
    std::string pano_extent = "0,0,100,100";
    double pano_resolution = 1.0;
    add_common(pano_cmd, pano_args, false);
    pano_cmd->add_option("--frames", pano_inputs, "input frame files")->required();
    pano_cmd->add_option("--homographies", pano_h_files, "one homography file per frame")
        ->required();
    pano_cmd->add_option("--extent", pano_extent, "ground extent min_x,min_y,w,h (m)");
    pano_cmd->add_option("--resolution", pano_resolution, "pixels per meter");

    // flows
    auto* flows_cmd = app.add_subcommand("flows", "dominant-flow summaries per segment");
    CommonArgs flows_args;
    bool flows_dump_tracklets = false;
    add_common(flows_cmd, flows_args);
    flows_cmd->add_flag("--dump-tracklets", flows_dump_tracklets,
                        "also write tracklets_*.json per segment");

    // congestion
    auto* cong_cmd = app.add_subcommand("congestion", "congestion detection and localization");
    CommonArgs cong_args;
    add_common(cong_cmd, cong_args);

    // count
    auto* count_cmd = app.add_subcommand("count", "localize and count individuals");
    CommonArgs count_args;
    std::string count_response, count_perspective, count_homography, count_extent;
    bool count_baseline = false, count_density = false;
    int count_frame_index = -1, count_max_det = -1;
    add_common(count_cmd, count_args);
    count_cmd->add_option("--response", count_response, "CRM1 or PGM response-map file");
    count_cmd->add_flag("--baseline", count_baseline, "use the template-correlation baseline");
    count_cmd->add_option("--perspective", count_perspective, "head radius model a,b (r = a*y + b)");
    count_cmd->add_option("--homography", count_homography, "image-to-ground homography file");
    count_cmd->add_flag("--density", count_density, "emit persons-per-m^2 density grid");
    count_cmd->add_option("--extent", count_extent, "density extent min_x,min_y,w,h (m)");
    count_cmd->add_option("--frame", count_frame_index, "frame index (default: middle)");
    count_cmd->add_option("--max-det", count_max_det, "detection cap");
    std::string count_out_json, count_out_overlay;
    count_cmd->add_option("--out-json", count_out_json, "also write detections JSON here");
    count_cmd->add_option("--out-overlay", count_out_overlay, "also write the dot overlay here");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scenario");
    CommonArgs synth_args;
    std::string synth_scenario = "free_flow";
    add_common(synth_cmd, synth_args, false);
    synth_cmd->add_option("--scenario", synth_scenario,
                          "builtin name or a scenario spec JSON file");

    // pipeline
    auto* pipe_cmd = app.add_subcommand("pipeline", "flows + congestion + count in one run");
    CommonArgs pipe_args;
    add_common(pipe_cmd, pipe_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors map to exit class 2
    }

    try {
        if (rectify_cmd->parsed()) {
            const auto config = make_config(rectify_args);
            const Frame frame = load_image(config.input_dir);
            Homography h;
            if (!rectify_h_file.empty()) {
                h = load_homography(rectify_h_file);
            } else if (!rectify_pairs_file.empty()) {
                h = estimate_homography(load_correspondences(rectify_pairs_file));
            } else {
                throw Error(Errc::InvalidConfig,
                            "rectify needs --homography or --correspondences");
            }
            if (!rectify_save_h.empty()) save_homography(rectify_save_h, h);
            PanoramaLayout layout;
            layout.views = {{0, h}};
            layout.extent = parse_extent(rectify_extent);
            layout.resolution = rectify_resolution;
            const Frame out = rectify(frame, h, layout);
            fs::create_directories(config.output_dir);
            save_image(fs::path(config.output_dir) / "rectified.png", out);
            std::cout << "wrote rectified.png (" << out.width << "x" << out.height << ")\n";
        } else if (pano_cmd->parsed()) {
            const auto config = make_config(pano_args);
            if (pano_inputs.size() != pano_h_files.size())
                throw Error(Errc::LayoutMismatch,
                            "--frames and --homographies must pair up");
            PanoramaLayout layout;
            layout.extent = parse_extent(pano_extent);
            layout.resolution = pano_resolution;
            std::vector<Frame> frames;
            for (std::size_t i = 0; i < pano_inputs.size(); ++i) {
                frames.push_back(load_image(pano_inputs[i]));
                layout.views.emplace_back(int(i), load_homography(pano_h_files[i]));
            }
            const Frame out = fuse_panorama(frames, layout);
            fs::create_directories(config.output_dir);
            save_image(fs::path(config.output_dir) / "panorama.png", out);
            std::cout << "wrote panorama.png (" << out.width << "x" << out.height << ")\n";
        } else if (flows_cmd->parsed()) {
            auto config = make_config(flows_args);
            config.dump_tracklets = config.dump_tracklets || flows_dump_tracklets;
            const auto result = run_flows(config);
            std::cout << "wrote " << result.outputs.size() << " files to "
                      << config.output_dir << "\n";
        } else if (cong_cmd->parsed()) {
            const auto config = make_config(cong_args);
            const auto result = run_congestion(config);
            std::cout << result.regions.size() << " congestion region(s); wrote "
                      << result.outputs.size() << " files to " << config.output_dir << "\n";
        } else if (count_cmd->parsed()) {
            auto config = make_config(count_args);
            if (!count_homography.empty()) config.homography_file = count_homography;
            if (!count_perspective.empty()) {
                double a = 0.0, b = 0.0;
                if (std::sscanf(count_perspective.c_str(), "%lf,%lf", &a, &b) != 2)
                    throw Error(Errc::InvalidConfig, "--perspective expects a,b");
                config.counting.perspective_a = a;
                config.counting.perspective_b = b;
            }
            if (count_max_det > 0) config.counting.max_detections = count_max_det;
            if (count_response.empty() && !count_baseline)
                throw Error(Errc::InvalidConfig,
                            "count needs --response <file> or --baseline");

            const auto files = list_frame_files(config.input_dir);
            const int index = count_frame_index >= 0 ? count_frame_index
                                                     : int(files.size()) / 2;
            if (index < 0 || index >= int(files.size()))
                throw Error(Errc::InvalidConfig, "--frame index out of range");
            const Frame frame = to_gray(load_image(files[std::size_t(index)]));

            CountOptions options;
            if (!count_response.empty()) options.response_file = count_response;
            options.want_density = count_density;
            if (!count_extent.empty()) options.density_extent = parse_extent(count_extent);
            const auto result = run_count(config, frame, options);
            if (!count_out_json.empty())
                fs::copy_file(fs::path(config.output_dir) / "detections.json",
                              count_out_json, fs::copy_options::overwrite_existing);
            if (!count_out_overlay.empty())
                fs::copy_file(fs::path(config.output_dir) / "detections.png",
                              count_out_overlay, fs::copy_options::overwrite_existing);
            std::cout << result.detections.count() << " detections; wrote "
                      << result.outputs.size() << " files to " << config.output_dir << "\n";
        } else if (synth_cmd->parsed()) {
            const auto config = make_config(synth_args);
            ScenarioSpec spec;
            if (fs::exists(synth_scenario) && fs::is_regular_file(synth_scenario)) {
                std::ifstream in(synth_scenario);
                nlohmann::json j;
                in >> j;
                spec = scenario_from_json(j);
            } else {
                spec = builtin_scenario(synth_scenario);
            }
            if (synth_args.seed >= 0) spec.seed = std::uint64_t(synth_args.seed);
            const auto scenario = generate_scenario(spec);
            fs::create_directories(config.output_dir);
            for (std::size_t i = 0; i < scenario.frames.size(); ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "frame_%06zu.pgm", i);
                save_pgm(fs::path(config.output_dir) / name, scenario.frames[i]);
            }
            std::ofstream gt(fs::path(config.output_dir) / "ground_truth.json");
            gt << ground_truth_to_json(scenario.truth).dump(2) << "\n";
            std::cout << "wrote " << scenario.frames.size() << " frames + ground_truth.json to "
                      << config.output_dir << "\n";
        } else if (pipe_cmd->parsed()) {
            auto config = make_config(pipe_args);
            const std::string base = config.output_dir;
            config.output_dir = base + "/flows";
            const auto flows_result = run_flows(config);
            config.output_dir = base + "/congestion";
            const auto congestion_result = run_congestion(config);
            config.output_dir = base + "/count";
            const auto files = list_frame_files(config.input_dir);
            const Frame mid = to_gray(load_image(files[files.size() / 2]));
            const auto count_result = run_count(config, mid);
            std::cout << "pipeline complete: " << flows_result.outputs.size() << " flow files, "
                      << congestion_result.regions.size() << " congestion region(s), "
                      << count_result.detections.count() << " detections\n";
        }
    } catch (const Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        return report_error(Error(Errc::Internal, e.what()));
    }
    return 0;
}
