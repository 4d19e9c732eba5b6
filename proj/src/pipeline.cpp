#include "pvo/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace pvo {

PipelineConfig PipelineConfig::preset_default() {
    PipelineConfig config;
    config.patches_per_frame = 96;
    config.window = 10;
    return config;
}

PipelineConfig PipelineConfig::preset_fast() {
    PipelineConfig config;
    config.patches_per_frame = 48;
    config.window = 7;
    return config;
}

std::vector<std::string> PipelineConfig::validate() const {
    std::vector<std::string> errors;
    if (patches_per_frame < 1) errors.push_back("patches_per_frame must be >= 1");
    if (window < 3) errors.push_back("window must be >= 3");
    if (radius < 1) errors.push_back("radius must be >= 1");
    if (patch_width < 1) errors.push_back("patch_width must be >= 1");
    if (init_frames < 2) errors.push_back("init_frames must be >= 2");
    if (init_iterations < 1) errors.push_back("init_iterations must be >= 1");
    if (ba_iterations < 1) errors.push_back("ba_iterations must be >= 1");
    if (damping <= 0) errors.push_back("damping must be positive");
    if (stride < 1) errors.push_back("stride must be >= 1");
    if (provider != "oracle" && provider != "correlation") {
        errors.push_back("provider must be oracle or correlation");
    }
    return errors;
}

Pipeline::Pipeline(const PipelineConfig& config, const Intrinsics& intrinsics, int image_width,
                   int image_height, std::shared_ptr<FlowProvider> provider)
    : config_(config),
      graph_(intrinsics, image_width, image_height, config.patch_width),
      provider_(std::move(provider)),
      rng_(config.seed) {
    const auto errors = config.validate();
    if (!errors.empty()) {
        std::string all;
        for (const auto& e : errors) all += e + "; ";
        throw std::invalid_argument("pipeline config: " + all);
    }
    if (!provider_) throw std::invalid_argument("pipeline: null provider");
}

std::vector<Vec2> Pipeline::sample_centroids() {
    const double margin = config_.patch_width;
    std::uniform_real_distribution<double> ux(margin, graph_.image_width() - 1 - margin);
    std::uniform_real_distribution<double> uy(margin, graph_.image_height() - 1 - margin);
    std::vector<Vec2> centroids;
    centroids.reserve(config_.patches_per_frame);
    for (int i = 0; i < config_.patches_per_frame; ++i) {
        centroids.emplace_back(ux(rng_), uy(rng_));
    }
    return centroids;
}

double Pipeline::median_recent_inverse_depth() const {
    // Patches of the previous (up to) 3 keyframes.
    std::vector<int> recent;
    for (auto it = graph_.frames().rbegin(); it != graph_.frames().rend() && recent.size() < 3;
         ++it) {
        recent.push_back(it->first);
    }
    std::vector<double> depths;
    for (const auto& [id, patch] : graph_.patches()) {
        if (std::find(recent.begin(), recent.end(), patch.source_frame) != recent.end()) {
            depths.push_back(patch.inverse_depth);
        }
    }
    if (depths.empty()) return config_.depth_fallback;
    std::sort(depths.begin(), depths.end());
    const size_t n = depths.size();
    return n % 2 == 1 ? depths[n / 2] : 0.5 * (depths[n / 2 - 1] + depths[n / 2]);
}

int Pipeline::admit(const Image& image, double timestamp, const Pose& pose) {
    const int index = graph_.add_frame(timestamp, pose);
    provider_->add_frame(graph_, index, image);
    graph_.set_pyramid(index, provider_->pyramid(index));

    const double depth = median_recent_inverse_depth();
    const std::vector<Vec2> centroids = sample_centroids();
    const std::vector<double> depths(centroids.size(), depth);
    const std::vector<int> ids = graph_.add_patches(index, centroids, depths);
    provider_->add_patches(graph_, index, ids);
    graph_.connect(config_.radius);

    admitted_.push_back({index, timestamp});
    stats_.push_back(FrameStats{index, timestamp, 0, 0, 0, false});
    return index;
}

bool Pipeline::ingest(const Image& image, double timestamp) {
    if (timestamp <= last_timestamp_) {
        throw std::invalid_argument("pipeline: timestamps must be strictly increasing");
    }
    last_timestamp_ = timestamp;
    const auto t_start = std::chrono::steady_clock::now();

    bool admitted = false;
    if (mode_ == PipelineMode::kAccumulating) {
        if (admitted_.empty()) {
            admit(image, timestamp, Pose::identity());
            admitted = true;
        } else {
            const double flow = provider_->candidate_flow(graph_, admitted_.back().frame_index,
                                                          image, timestamp);
            if (flow >= config_.init_min_flow_px) {
                admit(image, timestamp, graph_.frames().rbegin()->second.pose);
                admitted = true;
            }
        }
        if (admitted && frames_admitted() == config_.init_frames) {
            for (int i = 0; i < config_.init_iterations; ++i) optimize();
            mode_ = PipelineMode::kInitialized;
        }
    } else {
        expand(image, timestamp);
        optimize();
        keyframe();
        admitted = true;
    }

    if (admitted) {
        stats_.back().milliseconds =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
                .count();
    }
    return admitted;
}

void Pipeline::expand(const Image& image, double timestamp) {
    if (mode_ != PipelineMode::kInitialized) {
        throw std::logic_error("pipeline: expand before initialization");
    }

    // Constant velocity model from the last two keyframe poses.
    velocity_ = Tangent();
    if (graph_.frames().size() >= 2) {
        auto it = graph_.frames().rbegin();
        const Pose& last = it->second.pose;
        const Pose& prev = std::next(it)->second.pose;
        try {
            velocity_ = log(compose(last, inverse(prev)));
        } catch (const std::domain_error&) {
            velocity_ = Tangent();  // near branch cut; fall back to a static prediction
        }
    }
    const Pose predicted = retract(graph_.frames().rbegin()->second.pose, velocity_);
    admit(image, timestamp, predicted);
}

std::vector<PatchGraph::EdgeKey> Pipeline::active_edges() const {
    // Edges feeding the current optimization: patches sourced within the
    // window keep free depths, so only their revisions are consumed. Older
    // patches stay in the graph for trajectories and keyframing but no
    // longer receive updates.
    std::vector<int> recent;
    for (auto it = graph_.frames().rbegin();
         it != graph_.frames().rend() && static_cast<int>(recent.size()) < config_.window; ++it) {
        recent.push_back(it->first);
    }
    const int oldest = recent.empty() ? 0 : recent.back();

    std::vector<PatchGraph::EdgeKey> edges;
    for (const auto& [key, revision] : graph_.edges()) {
        if (graph_.patch(key.first).source_frame >= oldest) edges.push_back(key);
    }
    return edges;
}

void Pipeline::optimize() {
    const std::vector<PatchGraph::EdgeKey> edges = active_edges();
    if (edges.empty()) return;

    const std::vector<FlowRevision> revisions = provider_->propose(graph_, edges);
    for (size_t i = 0; i < edges.size(); ++i) {
        graph_.set_revision(edges[i], revisions[i]);
    }
    if (!stats_.empty()) stats_.back().provider_edges += static_cast<long>(edges.size());

    WindowOptions options;
    options.window = config_.window;
    options.iterations = config_.ba_iterations;
    options.damping = config_.damping;
    try {
        const BASolution solution = optimize_window(graph_, options);
        if (!stats_.empty()) {
            stats_.back().ba_residuals +=
                static_cast<long>(solution.num_edges) * config_.ba_iterations;
        }
    } catch (const DegenerateProblem&) {
        // Degenerate window: skip the update, poses stay put for this frame.
    }
}

void Pipeline::keyframe() {
    const auto& frames = graph_.frames();
    if (frames.size() < 6) return;  // need keyframes t-5 .. t

    std::vector<int> order;
    order.reserve(frames.size());
    for (const auto& [index, node] : frames) order.push_back(index);
    const int frame_a = order[order.size() - 6];          // t - 5
    const int frame_b = order[order.size() - 4];          // t - 3
    const int candidate = order[order.size() - 5];        // t - 4

    // Mean reprojected displacement over patches seen in both frames.
    double sum = 0;
    int count = 0;
    for (const auto& [patch_id, patch] : graph_.patches()) {
        const auto& edges = graph_.edges();
        if (edges.find({patch_id, frame_a}) == edges.end() ||
            edges.find({patch_id, frame_b}) == edges.end()) {
            continue;
        }
        const Pose& source = graph_.frame(patch.source_frame).pose;
        const PatchReprojection in_a =
            reproject_patch(source, graph_.frame(frame_a).pose, graph_.intrinsics(), patch);
        const PatchReprojection in_b =
            reproject_patch(source, graph_.frame(frame_b).pose, graph_.intrinsics(), patch);
        if (in_a.behind_camera || in_b.behind_camera) continue;
        sum += (in_b.center(patch) - in_a.center(patch)).norm();
        ++count;
    }
    if (count == 0) return;

    if (sum / count < config_.keyframe_flow_threshold_px) {
        graph_.remove_frame(candidate, log_);
        provider_->remove_frame(candidate);
        ++frames_removed_;
        if (!stats_.empty()) stats_.back().removed_keyframe = true;
    }
}

Trajectory Pipeline::full_trajectory() const {
    auto surviving = [this](int frame_index) -> const Pose* {
        auto it = graph_.frames().find(frame_index);
        return it == graph_.frames().end() ? nullptr : &it->second.pose;
    };

    Trajectory trajectory;
    for (const AdmittedFrame& frame : admitted_) {
        if (const Pose* pose = surviving(frame.frame_index)) {
            trajectory.push_back(frame.timestamp, *pose);
        } else {
            trajectory.push_back(frame.timestamp, log_.resolve(frame.frame_index, surviving));
        }
    }
    return trajectory;
}

}  // namespace pvo
