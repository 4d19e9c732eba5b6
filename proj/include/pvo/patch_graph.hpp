#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "pvo/camera.hpp"
#include "pvo/se3.hpp"

namespace pvo {

struct FeaturePyramid;

// Per-edge 2D trajectory correction and per-axis confidence weight.
// Both weight components live strictly inside (0, 1).
struct FlowRevision {
    Vec2 delta = Vec2::Zero();
    Vec2 weight = Vec2::Zero();
};

struct FrameNode {
    int frame_index = -1;
    double timestamp = 0;
    Pose pose;
    // Owned by the flow provider; null for providers that keep no features.
    const FeaturePyramid* pyramid = nullptr;
};

// Log of removed keyframes: enough to reconstruct their absolute poses by
// composing the stored relative pose onto the surviving anchor (chaining
// through the log when the anchor itself was removed later).
class RelativePoseLog {
  public:
    struct Entry {
        int removed_frame = -1;
        int anchor_frame = -1;
        Pose relative;  // pose_removed = relative * pose_anchor
        double timestamp = 0;
    };

    void append(const Entry& entry);
    const std::vector<Entry>& entries() const { return entries_; }

    // Absolute pose of a removed frame given a lookup for surviving poses.
    template <typename SurvivingPoseFn>
    Pose resolve(int frame_index, SurvivingPoseFn&& surviving) const {
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            if (it->removed_frame == frame_index) {
                if (const Pose* anchor = surviving(it->anchor_frame)) {
                    return compose(it->relative, *anchor);
                }
                return compose(it->relative, resolve(it->anchor_frame, surviving));
            }
        }
        throw std::out_of_range("relative pose log: frame " + std::to_string(frame_index) +
                                " was never removed");
    }

  private:
    std::vector<Entry> entries_;
};

// Bipartite dynamic graph of patches x frames. Edges carry optional flow
// revisions. Single writer; hand read-only copies to other threads.
class PatchGraph {
  public:
    using EdgeKey = std::pair<int, int>;  // (patch_id, target frame_index)

    PatchGraph(const Intrinsics& intrinsics, int image_width, int image_height,
               int patch_width = 3);

    int add_frame(double timestamp, const Pose& initial_pose);
    std::vector<int> add_patches(int frame_index, const std::vector<Vec2>& centroids,
                                 const std::vector<double>& inverse_depths);

    // Links every patch to every existing frame whose index is within
    // distance `radius` of the patch's source frame (|i - j| <= radius - 1),
    // so each patch reaches at most 2*radius - 1 frames over its lifetime.
    // Returns the newly added edges.
    std::vector<EdgeKey> connect(int radius);

    // Deletes the frame, its incident edges and the patches sourced there,
    // and appends the relative pose to the surviving predecessor to `log`.
    // The most recent 3 frames cannot be removed.
    void remove_frame(int frame_index, RelativePoseLog& log);

    // Reprojected patch center in every connected frame, in frame order.
    // Behind-camera points are flagged, not dropped.
    struct TrajectoryPoint {
        int frame_index;
        Vec2 point;
        bool behind_camera;
    };
    std::vector<TrajectoryPoint> trajectory(int patch_id) const;

    // One line per edge: "k j dx dy wx wy" (zeros when no revision is set).
    void dump_edges(std::ostream& out) const;

    const Intrinsics& intrinsics() const { return intrinsics_; }
    int image_width() const { return image_width_; }
    int image_height() const { return image_height_; }
    int patch_width() const { return patch_width_; }

    const std::map<int, FrameNode>& frames() const { return frames_; }
    const std::map<int, Patch>& patches() const { return patches_; }
    const std::map<EdgeKey, std::optional<FlowRevision>>& edges() const { return edges_; }

    bool has_frame(int frame_index) const { return frames_.count(frame_index) > 0; }
    const FrameNode& frame(int frame_index) const { return frames_.at(frame_index); }
    const Patch& patch(int patch_id) const { return patches_.at(patch_id); }

    void set_pose(int frame_index, const Pose& pose) { frames_.at(frame_index).pose = pose; }
    void set_inverse_depth(int patch_id, double d) { patches_.at(patch_id).inverse_depth = d; }
    void set_pyramid(int frame_index, const FeaturePyramid* pyramid) {
        frames_.at(frame_index).pyramid = pyramid;
    }
    void set_revision(const EdgeKey& key, const FlowRevision& revision);

    // Edges (key order) whose patch is the given one.
    std::vector<EdgeKey> edges_of_patch(int patch_id) const;

    int num_edges_of_patch(int patch_id) const;
    int next_patch_id() const { return next_patch_id_; }

  private:
    Intrinsics intrinsics_;
    int image_width_;
    int image_height_;
    int patch_width_;
    int next_patch_id_ = 0;

    std::map<int, FrameNode> frames_;
    std::map<int, Patch> patches_;
    std::map<EdgeKey, std::optional<FlowRevision>> edges_;
};

}  // namespace pvo
