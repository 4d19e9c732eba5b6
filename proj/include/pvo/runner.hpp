#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pvo/pipeline.hpp"
#include "pvo/simulator.hpp"
#include "pvo/trajectory.hpp"

namespace pvo {

// Record of one pipeline run: configuration snapshot, input descriptor,
// output paths, per-frame timing and final metrics. Serialized as JSON.
struct RunManifest {
    PipelineConfig config;
    std::string provider;
    uint64_t seed = 0;
    std::string source;
    std::string trajectory_path;
    std::string manifest_path;
    std::vector<FrameStats> frames;

    int frames_seen = 0;
    int frames_admitted = 0;
    int keyframes_removed = 0;
    std::optional<double> ate_rmse;  // against ground truth when available
    std::optional<double> ate_sum;

    std::string to_json() const;
    void write(const std::string& path) const;
};

struct RunResult {
    Trajectory trajectory;
    RunManifest manifest;
};

struct SimulatedRunOptions {
    int num_frames = 40;
    MotionModel motion = MotionModel::kSmoothRandom;
    double flow_px = 16.0;
    uint64_t scene_seed = 0;
    NoiseModel noise;            // used by the oracle provider
    SceneOptions scene;          // target_flow_px is overridden by flow_px
    bool compute_ate = true;
};

// Runs the pipeline against an internally generated scene. The correlation
// provider consumes rendered frames; the oracle provider reads the scene
// geometry directly.
RunResult run_simulated(const PipelineConfig& config, const SimulatedRunOptions& options);

// Runs the pipeline over a directory of grayscale images. The timestamps
// file holds "timestamp filename" lines ('#' comments); intrinsics come
// from a 4-number "fx fy cx cy" text file.
RunResult run_images(const PipelineConfig& config, const std::string& images_dir,
                     const std::string& timestamps_path, const std::string& intrinsics_path,
                     const std::string& gt_path = "");

Intrinsics read_intrinsics(const std::string& path);
MotionModel parse_motion(const std::string& name);
std::string motion_name(MotionModel motion);

// Writes rendered frames (PGM), "timestamps.txt", TUM "groundtruth.txt",
// "landmarks.csv" ("id x y z depth") and "intrinsics.txt" into a directory.
void export_scene(const SimulatedScene& scene, const std::string& directory);

}  // namespace pvo
