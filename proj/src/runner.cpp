#include "pvo/runner.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pvo/image.hpp"

namespace pvo {

namespace {

nlohmann::json config_json(const PipelineConfig& config) {
    return {
        {"patches_per_frame", config.patches_per_frame},
        {"window", config.window},
        {"radius", config.radius},
        {"patch_width", config.patch_width},
        {"init_frames", config.init_frames},
        {"init_iterations", config.init_iterations},
        {"init_min_flow_px", config.init_min_flow_px},
        {"keyframe_flow_threshold_px", config.keyframe_flow_threshold_px},
        {"ba_iterations", config.ba_iterations},
        {"damping", config.damping},
        {"depth_fallback", config.depth_fallback},
        {"stride", config.stride},
    };
}

}  // namespace

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["config"] = config_json(config);
    j["provider"] = provider;
    j["seed"] = seed;
    j["source"] = source;
    j["output"] = {{"trajectory", trajectory_path}, {"manifest", manifest_path}};
    j["frames"] = nlohmann::json::array();
    for (const FrameStats& f : frames) {
        j["frames"].push_back({{"index", f.frame_index},
                               {"timestamp", f.timestamp},
                               {"ms", f.milliseconds},
                               {"provider_edges", f.provider_edges},
                               {"ba_residuals", f.ba_residuals},
                               {"removed_keyframe", f.removed_keyframe}});
    }
    j["metrics"] = {{"frames_seen", frames_seen},
                    {"frames_admitted", frames_admitted},
                    {"keyframes_removed", keyframes_removed}};
    if (ate_rmse) j["metrics"]["ate_rmse"] = *ate_rmse;
    if (ate_sum) j["metrics"]["ate_sum"] = *ate_sum;
    return j.dump(2);
}

void RunManifest::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_json() << "\n";
}

MotionModel parse_motion(const std::string& name) {
    if (name == "constant_velocity") return MotionModel::kConstantVelocity;
    if (name == "smooth_random") return MotionModel::kSmoothRandom;
    if (name == "orbit") return MotionModel::kOrbit;
    throw std::invalid_argument("unknown motion model '" + name +
                                "' (expected constant_velocity|smooth_random|orbit)");
}

std::string motion_name(MotionModel motion) {
    switch (motion) {
        case MotionModel::kConstantVelocity: return "constant_velocity";
        case MotionModel::kSmoothRandom: return "smooth_random";
        case MotionModel::kOrbit: return "orbit";
    }
    return "unknown";
}

Intrinsics read_intrinsics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    double fx, fy, cx, cy;
    if (!(in >> fx >> fy >> cx >> cy)) {
        throw std::runtime_error(path + ": expected 4 numbers 'fx fy cx cy'");
    }
    return Intrinsics(fx, fy, cx, cy);
}

RunResult run_simulated(const PipelineConfig& config, const SimulatedRunOptions& options) {
    SceneOptions scene_options = options.scene;
    scene_options.target_flow_px = options.flow_px;
    const SimulatedScene scene =
        SimulatedScene::generate(options.scene_seed, options.num_frames, options.motion,
                                 scene_options);

    NoiseModel noise = options.noise;
    auto provider = make_provider(config.provider, &scene, noise);
    const bool needs_images = config.provider == "correlation";

    Pipeline pipeline(config, scene.intrinsics(), scene.width(), scene.height(),
                      std::move(provider));

    RunResult result;
    result.manifest.config = config;
    result.manifest.provider = config.provider;
    result.manifest.seed = config.seed;
    {
        std::ostringstream source;
        source << "simulate(frames=" << options.num_frames
               << ", motion=" << motion_name(options.motion) << ", flow_px=" << options.flow_px
               << ", scene_seed=" << options.scene_seed << ")";
        result.manifest.source = source.str();
    }

    Image empty;
    for (int k = 0; k < scene.num_frames(); k += config.stride) {
        const Image frame = needs_images ? scene.render(k) : empty;
        pipeline.ingest(frame, scene.timestamp(k));
        ++result.manifest.frames_seen;
    }

    result.trajectory = pipeline.full_trajectory();
    result.manifest.frames = pipeline.frame_stats();
    result.manifest.frames_admitted = pipeline.frames_admitted();
    result.manifest.keyframes_removed = pipeline.frames_removed();
    if (options.compute_ate && result.trajectory.size() >= 3) {
        try {
            result.manifest.ate_rmse = ate(result.trajectory, scene.ground_truth(), AteMode::kRmse);
            result.manifest.ate_sum = ate(result.trajectory, scene.ground_truth(), AteMode::kSum);
        } catch (const std::runtime_error&) {
            // Alignment failed (degenerate run); leave the metrics unset.
        }
    }
    return result;
}

RunResult run_images(const PipelineConfig& config, const std::string& images_dir,
                     const std::string& timestamps_path, const std::string& intrinsics_path,
                     const std::string& gt_path) {
    const Intrinsics intrinsics = read_intrinsics(intrinsics_path);

    std::ifstream in(timestamps_path);
    if (!in) throw std::runtime_error("cannot open " + timestamps_path);
    std::vector<std::pair<double, std::string>> entries;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream fields(line);
        double timestamp;
        std::string filename;
        if (!(fields >> timestamp >> filename)) {
            throw std::runtime_error(timestamps_path + ":" + std::to_string(line_number) +
                                     ": expected 'timestamp filename'");
        }
        entries.emplace_back(timestamp, filename);
    }
    if (entries.empty()) throw std::runtime_error(timestamps_path + ": no frames listed");

    NoiseModel noise;
    noise.seed = config.seed;
    auto provider = make_provider(config.provider, nullptr, noise);

    const Image probe = read_image(images_dir + "/" + entries.front().second);
    Pipeline pipeline(config, intrinsics, probe.width, probe.height, std::move(provider));

    RunResult result;
    result.manifest.config = config;
    result.manifest.provider = config.provider;
    result.manifest.seed = config.seed;
    result.manifest.source = "images(" + images_dir + ")";

    for (size_t k = 0; k < entries.size(); k += static_cast<size_t>(config.stride)) {
        const Image frame = read_image(images_dir + "/" + entries[k].second);
        pipeline.ingest(frame, entries[k].first);
        ++result.manifest.frames_seen;
    }

    result.trajectory = pipeline.full_trajectory();
    result.manifest.frames = pipeline.frame_stats();
    result.manifest.frames_admitted = pipeline.frames_admitted();
    result.manifest.keyframes_removed = pipeline.frames_removed();
    if (!gt_path.empty() && result.trajectory.size() >= 3) {
        const Trajectory gt = read_tum(gt_path);
        result.manifest.ate_rmse = ate(result.trajectory, gt, AteMode::kRmse);
        result.manifest.ate_sum = ate(result.trajectory, gt, AteMode::kSum);
    }
    return result;
}

void export_scene(const SimulatedScene& scene, const std::string& directory) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(directory, ec);
    if (ec) throw std::runtime_error("cannot create directory " + directory);

    std::ofstream timestamps(directory + "/timestamps.txt");
    if (!timestamps) throw std::runtime_error("cannot write timestamps in " + directory);
    timestamps << "# timestamp filename\n";
    timestamps.precision(9);
    timestamps.setf(std::ios::fixed);
    for (int k = 0; k < scene.num_frames(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.pgm", k);
        write_pgm(directory + "/" + name, scene.render(k));
        timestamps << scene.timestamp(k) << " " << name << "\n";
    }

    write_tum(directory + "/groundtruth.txt", scene.ground_truth());

    std::ofstream landmarks(directory + "/landmarks.csv");
    landmarks << "id,x,y,z,depth\n";
    landmarks.precision(9);
    for (const Landmark& lm : scene.landmarks()) {
        landmarks << lm.id << "," << lm.world.x() << "," << lm.world.y() << "," << lm.world.z()
                  << "," << lm.anchor_depth << "\n";
    }

    std::ofstream intrinsics(directory + "/intrinsics.txt");
    const Intrinsics& K = scene.intrinsics();
    intrinsics << K.fx << " " << K.fy << " " << K.cx << " " << K.cy << "\n";
}

}  // namespace pvo
