#pragma once

#include <cstdint>
#include <vector>

#include "pvo/camera.hpp"
#include "pvo/image.hpp"
#include "pvo/se3.hpp"
#include "pvo/trajectory.hpp"

namespace pvo {

enum class MotionModel { kConstantVelocity, kSmoothRandom, kOrbit };

struct NoiseModel {
    double flow_sigma = 0.0;       // pixels, added to oracle flow revisions
    double outlier_fraction = 0.0; // in [0, 1)
    uint64_t seed = 0;
};

struct SceneOptions {
    int image_width = 256;
    int image_height = 256;
    Intrinsics intrinsics{160.0, 160.0, 128.0, 128.0};
    double target_flow_px = 16.0;   // mean inter-frame image motion; 0 keeps the camera still
    int num_landmarks = 0;          // 0 picks 64 + 2 * num_frames
    double dt = 0.05;               // seconds between frames
    int static_tail_frames = 0;     // trailing frames with frozen pose (exercises keyframing)
    double background_depth = 25.0; // world plane behind the landmarks
    double min_landmark_depth = 1.0;
    double max_landmark_depth = 15.0;
    double landmark_size_px = 22.0; // splat side length at the anchor frame
    double rotation_scale = 1.0;    // 0 gives pure-translation motion models
};

// Textured fronto-parallel square splat anchored in one frame.
struct Landmark {
    int id = -1;
    Vec3 world = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();   // anchor view direction
    Vec3 basis_u = Vec3::UnitX();  // in-plane texture axes
    Vec3 basis_v = Vec3::UnitY();
    double half_size = 0;          // world units
    int anchor_frame = 0;
    double anchor_depth = 0;
    uint64_t texture_seed = 0;
    double brightness = 0;
};

// Synthetic scene: a smooth ground-truth camera trajectory over a textured
// background plane with textured landmark splats. All ground-truth
// quantities (poses, depths, flows, rendered images) derive from the same
// analytic geometry, so they are mutually consistent by construction.
class SimulatedScene {
  public:
    static SimulatedScene generate(uint64_t seed, int num_frames, MotionModel motion,
                                   SceneOptions options = {});

    int num_frames() const { return static_cast<int>(poses_.size()); }
    const Pose& pose(int frame) const { return poses_.at(frame); }
    double timestamp(int frame) const { return options_.dt * frame; }
    const Trajectory& ground_truth() const { return ground_truth_; }
    const Intrinsics& intrinsics() const { return options_.intrinsics; }
    int width() const { return options_.image_width; }
    int height() const { return options_.image_height; }
    const std::vector<Landmark>& landmarks() const { return landmarks_; }
    const SceneOptions& options() const { return options_; }
    MotionModel motion() const { return motion_; }

    struct SurfaceHit {
        bool hit = false;
        double depth = 0;   // camera-frame z of the hit point
        int landmark = -1;  // -1 = background plane
        Vec2 uv = Vec2::Zero();
    };
    SurfaceHit cast_ray(int frame, const Vec2& pixel) const;

    // Inverse depth of the rendered surface under a pixel (0 when the ray
    // escapes past the background plane).
    double inverse_depth_at(int frame, const Vec2& pixel) const;

    Vec2 project(const Vec3& world, int frame, bool* in_front = nullptr) const;
    bool visible(const Vec3& world, int frame) const;

    // Displacement of a pixel from frame_i to frame_j under ground-truth
    // poses and the ground-truth surface depth at that pixel.
    Vec2 ground_truth_flow(const Vec2& pixel, int frame_i, int frame_j,
                           bool* visible_out = nullptr) const;
    Vec2 ground_truth_flow(const Patch& patch, int frame_j, bool* visible_out = nullptr) const;

    Image render(int frame) const;

    // Mean landmark flow between consecutive frames of the moving section.
    double mean_flow() const;

    int frame_at_timestamp(double t) const;

  private:
    SceneOptions options_;
    MotionModel motion_ = MotionModel::kSmoothRandom;
    std::vector<Pose> poses_;
    Trajectory ground_truth_;
    std::vector<Landmark> landmarks_;
    uint64_t background_seed_ = 0;
};

// Deterministic band-limited value noise in [0, 1] (quintic-smoothed
// integer lattice, two octaves). Shared by the renderer and tests.
double value_noise(double x, double y, uint64_t seed);
double textured_noise(double x, double y, uint64_t seed);

}  // namespace pvo
