#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pvo/bundle_adjust.hpp"
#include "pvo/flow_provider.hpp"
#include "pvo/patch_graph.hpp"
#include "pvo/trajectory.hpp"

namespace pvo {

struct PipelineConfig {
    int patches_per_frame = 96;
    int window = 10;
    int radius = 13;
    int patch_width = 3;
    int init_frames = 8;
    int init_iterations = 12;
    double init_min_flow_px = 8.0;
    double keyframe_flow_threshold_px = 64.0;
    int ba_iterations = 2;
    double damping = kDefaultDamping;
    double depth_fallback = 0.1;  // inverse depth for patches with no history
    uint64_t seed = 0;
    std::string provider = "oracle";
    int stride = 1;  // consume every stride-th input frame

    static PipelineConfig preset_default();  // 96 patches, window 10
    static PipelineConfig preset_fast();     // 48 patches, window 7

    // All violated constraints, empty when the config is valid.
    std::vector<std::string> validate() const;
};

enum class PipelineMode { kAccumulating, kInitialized };

struct FrameStats {
    int frame_index = -1;
    double timestamp = 0;
    double milliseconds = 0;
    long provider_edges = 0;  // revisions proposed while ingesting this frame
    long ba_residuals = 0;    // residual evaluations across the BA iterations
    bool removed_keyframe = false;
};

// End-to-end VO state machine: accumulate frames gated on image motion,
// initialize on init_frames of them, then per frame expand the patch graph,
// optimize the sliding window and prune redundant keyframes.
class Pipeline {
  public:
    Pipeline(const PipelineConfig& config, const Intrinsics& intrinsics, int image_width,
             int image_height, std::shared_ptr<FlowProvider> provider);

    // Feeds one frame; returns whether it was admitted as a keyframe.
    // Timestamps must be strictly increasing.
    bool ingest(const Image& image, double timestamp);

    PipelineMode mode() const { return mode_; }
    const PipelineConfig& config() const { return config_; }
    const PatchGraph& graph() const { return graph_; }
    PatchGraph& mutable_graph() { return graph_; }
    const RelativePoseLog& relative_log() const { return log_; }
    const std::vector<FrameStats>& frame_stats() const { return stats_; }
    const Tangent& velocity() const { return velocity_; }
    FlowProvider& provider() { return *provider_; }

    int frames_admitted() const { return static_cast<int>(admitted_.size()); }
    int frames_removed() const { return frames_removed_; }

    // Surviving keyframe poses plus removed frames reconstructed from the
    // relative-pose log, one pose per admitted frame, ordered by timestamp.
    Trajectory full_trajectory() const;

    // The steady-state steps (exposed for tests; ingest drives them).
    void expand(const Image& image, double timestamp);
    void optimize();
    void keyframe();

    // Edges of patches sourced within the optimization window (the set the
    // provider revises and the bundle adjustment consumes).
    std::vector<PatchGraph::EdgeKey> active_edges() const;

  private:
    int admit(const Image& image, double timestamp, const Pose& pose);
    double median_recent_inverse_depth() const;
    std::vector<Vec2> sample_centroids();

    PipelineConfig config_;
    PatchGraph graph_;
    std::shared_ptr<FlowProvider> provider_;
    PipelineMode mode_ = PipelineMode::kAccumulating;
    RelativePoseLog log_;
    Tangent velocity_;
    std::mt19937_64 rng_;

    struct AdmittedFrame {
        int frame_index;
        double timestamp;
    };
    std::vector<AdmittedFrame> admitted_;
    std::vector<FrameStats> stats_;
    int frames_removed_ = 0;
    double last_timestamp_ = -std::numeric_limits<double>::infinity();
};

}  // namespace pvo
