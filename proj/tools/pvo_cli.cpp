#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

#include "pvo/runner.hpp"

namespace {

// Exit codes: 0 success, 1 runtime failure, 2 bad input or configuration.
constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kBadInput = 2;

struct RunArgs {
    std::string images_dir;
    std::string timestamps;
    std::string intrinsics;
    std::string gt_path;
    bool simulate = false;
    int frames = 40;
    std::string motion = "smooth_random";
    double flow_px = 16.0;
    uint64_t seed = 0;
    std::string preset = "default";
    int patches = -1;
    int window = -1;
    int radius = -1;
    int patch_size = -1;
    std::string provider = "oracle";
    int stride = 1;
    double noise_sigma = 0.0;
    double outlier_fraction = 0.0;
    std::string out = "trajectory.txt";
    std::string manifest;
};

int cmd_run(const RunArgs& args) {
    pvo::PipelineConfig config = args.preset == "fast" ? pvo::PipelineConfig::preset_fast()
                                                       : pvo::PipelineConfig::preset_default();
    if (args.patches > 0) config.patches_per_frame = args.patches;
    if (args.window > 0) config.window = args.window;
    if (args.radius > 0) config.radius = args.radius;
    if (args.patch_size > 0) config.patch_width = args.patch_size;
    config.provider = args.provider;
    config.stride = args.stride;
    config.seed = args.seed;

    const auto errors = config.validate();
    if (!errors.empty()) {
        for (const auto& e : errors) std::cerr << "config error: " << e << "\n";
        return kBadInput;
    }

    pvo::RunResult result;
    if (args.simulate) {
        pvo::SimulatedRunOptions options;
        options.num_frames = args.frames;
        options.motion = pvo::parse_motion(args.motion);
        options.flow_px = args.flow_px;
        options.scene_seed = args.seed;
        options.noise.flow_sigma = args.noise_sigma;
        options.noise.outlier_fraction = args.outlier_fraction;
        options.noise.seed = args.seed;
        result = pvo::run_simulated(config, options);
    } else {
        const std::string timestamps =
            args.timestamps.empty() ? args.images_dir + "/timestamps.txt" : args.timestamps;
        const std::string intrinsics =
            args.intrinsics.empty() ? args.images_dir + "/intrinsics.txt" : args.intrinsics;
        result = pvo::run_images(config, args.images_dir, timestamps, intrinsics, args.gt_path);
    }

    if (result.trajectory.empty()) {
        std::cerr << "run produced no trajectory (no frames admitted)\n";
        return kRuntimeError;
    }

    pvo::write_tum(args.out, result.trajectory);
    result.manifest.trajectory_path = args.out;
    result.manifest.manifest_path =
        args.manifest.empty() ? args.out + ".manifest.json" : args.manifest;
    result.manifest.write(result.manifest.manifest_path);

    std::cout << "frames seen:      " << result.manifest.frames_seen << "\n"
              << "frames admitted:  " << result.manifest.frames_admitted << "\n"
              << "keyframes removed: " << result.manifest.keyframes_removed << "\n";
    if (result.manifest.ate_rmse) {
        std::cout << "ate rmse:         " << *result.manifest.ate_rmse << "\n";
    }
    std::cout << "trajectory:       " << args.out << "\n"
              << "manifest:         " << result.manifest.manifest_path << "\n";
    return kOk;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, bool json) {
    const pvo::Trajectory pred = pvo::read_tum(pred_path);
    const pvo::Trajectory gt = pvo::read_tum(gt_path);

    const auto pairs = pvo::associate(pred, gt);
    if (pairs.size() < 3) {
        std::cerr << "no associations: " << pairs.size()
                  << " timestamp pairs within tolerance (need >= 3)\n";
        return kBadInput;
    }

    const pvo::Sim3 alignment = pvo::umeyama_align(pred, gt);
    const double rmse = pvo::ate(pred, gt, pvo::AteMode::kRmse);
    const double sum = pvo::ate(pred, gt, pvo::AteMode::kSum);

    if (json) {
        nlohmann::json j;
        j["pairs"] = pairs.size();
        j["ate_rmse"] = rmse;
        j["ate_sum"] = sum;
        j["alignment"] = {{"scale", alignment.scale},
                          {"rotation_xyzw",
                           {alignment.rotation.x(), alignment.rotation.y(), alignment.rotation.z(),
                            alignment.rotation.w()}},
                          {"translation",
                           {alignment.translation.x(), alignment.translation.y(),
                            alignment.translation.z()}}};
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << "associated pairs: " << pairs.size() << "\n"
                  << "ate rmse:         " << rmse << "\n"
                  << "ate sum:          " << sum << "\n"
                  << "alignment scale:  " << alignment.scale << "\n"
                  << "alignment trans:  " << alignment.translation.transpose() << "\n";
    }
    return kOk;
}

int cmd_simulate(const std::string& out_dir, int frames, const std::string& motion,
                 double flow_px, uint64_t seed) {
    pvo::SceneOptions options;
    options.target_flow_px = flow_px;
    const pvo::SimulatedScene scene =
        pvo::SimulatedScene::generate(seed, frames, pvo::parse_motion(motion), options);
    pvo::export_scene(scene, out_dir);
    std::cout << "wrote " << frames << " frames to " << out_dir << " (mean flow "
              << scene.mean_flow() << " px)\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse patch-graph visual odometry"};
    app.require_subcommand(1);

    RunArgs run_args;
    CLI::App* run = app.add_subcommand("run", "run VO on an image sequence or simulated scene");
    run->add_option("--images", run_args.images_dir, "directory of grayscale PGM/PNG frames");
    run->add_flag("--simulate", run_args.simulate, "use an internally simulated scene");
    run->add_option("--timestamps", run_args.timestamps, "timestamp file (default <dir>/timestamps.txt)");
    run->add_option("--intrinsics", run_args.intrinsics, "intrinsics file 'fx fy cx cy'");
    run->add_option("--gt", run_args.gt_path, "optional TUM ground truth for manifest metrics");
    run->add_option("--frames", run_args.frames, "simulated frame count");
    run->add_option("--motion", run_args.motion, "constant_velocity|smooth_random|orbit");
    run->add_option("--flow-px", run_args.flow_px, "simulated mean inter-frame flow");
    run->add_option("--preset", run_args.preset, "default (96/10) or fast (48/7)")
        ->check(CLI::IsMember({"default", "fast"}));
    run->add_option("--patches", run_args.patches, "patches per frame");
    run->add_option("--window", run_args.window, "optimization window");
    run->add_option("--radius", run_args.radius, "patch-graph connectivity radius");
    run->add_option("--patch-size", run_args.patch_size, "patch width p");
    run->add_option("--provider", run_args.provider, "oracle|correlation");
    run->add_option("--stride", run_args.stride, "consume every stride-th frame");
    run->add_option("--seed", run_args.seed, "seed for sampling and simulation");
    run->add_option("--noise-sigma", run_args.noise_sigma, "oracle flow noise (px)");
    run->add_option("--outliers", run_args.outlier_fraction, "oracle outlier fraction");
    run->add_option("--out", run_args.out, "output trajectory path (TUM)");
    run->add_option("--manifest", run_args.manifest, "manifest path (default <out>.manifest.json)");

    std::string pred_path, gt_path;
    bool json = false;
    CLI::App* eval = app.add_subcommand("eval", "score a trajectory against ground truth");
    eval->add_option("pred", pred_path, "predicted trajectory (TUM)")->required();
    eval->add_option("gt", gt_path, "ground-truth trajectory (TUM)")->required();
    eval->add_flag("--json", json, "machine-readable output");

    std::string sim_out = "scene";
    int sim_frames = 20;
    std::string sim_motion = "smooth_random";
    double sim_flow = 16.0;
    uint64_t sim_seed = 0;
    CLI::App* simulate = app.add_subcommand("simulate", "export a synthetic scene to disk");
    simulate->add_option("--out", sim_out, "output directory");
    simulate->add_option("--frames", sim_frames, "frame count");
    simulate->add_option("--motion", sim_motion, "constant_velocity|smooth_random|orbit");
    simulate->add_option("--flow-px", sim_flow, "target mean inter-frame flow");
    simulate->add_option("--seed", sim_seed, "scene seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (!run_args.simulate && run_args.images_dir.empty()) {
                std::cerr << "run: need --images DIR or --simulate\n";
                return kBadInput;
            }
            return cmd_run(run_args);
        }
        if (eval->parsed()) return cmd_eval(pred_path, gt_path, json);
        if (simulate->parsed()) return cmd_simulate(sim_out, sim_frames, sim_motion, sim_flow,
                                                    sim_seed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kBadInput;
}
