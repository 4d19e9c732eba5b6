#include "pvo/patch_graph.hpp"

#include <algorithm>
#include <stdexcept>

namespace pvo {

void RelativePoseLog::append(const Entry& entry) {
    for (const auto& existing : entries_) {
        if (existing.removed_frame == entry.removed_frame) {
            throw std::invalid_argument("relative pose log: frame " +
                                        std::to_string(entry.removed_frame) + " already logged");
        }
    }
    entries_.push_back(entry);
}

PatchGraph::PatchGraph(const Intrinsics& intrinsics, int image_width, int image_height,
                       int patch_width)
    : intrinsics_(intrinsics),
      image_width_(image_width),
      image_height_(image_height),
      patch_width_(patch_width) {
    if (patch_width < 1) throw std::invalid_argument("patch graph: patch width must be >= 1");
}

int PatchGraph::add_frame(double timestamp, const Pose& initial_pose) {
    if (!frames_.empty() && timestamp <= frames_.rbegin()->second.timestamp) {
        throw std::invalid_argument("patch graph: timestamp must exceed the last frame's");
    }
    const int index = frames_.empty() ? 0 : frames_.rbegin()->first + 1;
    frames_[index] = FrameNode{index, timestamp, initial_pose, nullptr};
    return index;
}

std::vector<int> PatchGraph::add_patches(int frame_index, const std::vector<Vec2>& centroids,
                                         const std::vector<double>& inverse_depths) {
    if (!has_frame(frame_index)) {
        throw std::invalid_argument("patch graph: no frame " + std::to_string(frame_index));
    }
    if (centroids.size() != inverse_depths.size()) {
        throw std::invalid_argument("patch graph: centroid/depth count mismatch");
    }

    const double half = 0.5 * (patch_width_ - 1);
    std::vector<int> ids;
    ids.reserve(centroids.size());
    for (size_t k = 0; k < centroids.size(); ++k) {
        const Vec2& c = centroids[k];
        if (c.x() - half < 0 || c.y() - half < 0 || c.x() + half > image_width_ - 1 ||
            c.y() + half > image_height_ - 1) {
            throw std::invalid_argument("patch graph: centroid (" + std::to_string(c.x()) + ", " +
                                        std::to_string(c.y()) + ") leaves the image bounds");
        }
        const int id = next_patch_id_++;
        patches_.emplace(id, Patch::make(frame_index, c, patch_width_, inverse_depths[k]));
        ids.push_back(id);
    }
    return ids;
}

std::vector<PatchGraph::EdgeKey> PatchGraph::connect(int radius) {
    if (radius < 1) throw std::invalid_argument("patch graph: radius must be >= 1");

    // Distance is measured in keyframe order over the surviving frames, not
    // raw indices: removals compress the ordering, and the optimization
    // window counts keyframes too. Keeping both in the same space
    // guarantees window patches always reach anchored poses.
    std::map<int, int> position;
    {
        int pos = 0;
        for (const auto& [frame_index, node] : frames_) position[frame_index] = pos++;
    }

    std::vector<EdgeKey> added;
    for (const auto& [patch_id, patch] : patches_) {
        const int source_pos = position.at(patch.source_frame);
        for (const auto& [frame_index, node] : frames_) {
            if (std::abs(position.at(frame_index) - source_pos) > radius - 1) continue;
            const EdgeKey key{patch_id, frame_index};
            if (edges_.emplace(key, std::nullopt).second) added.push_back(key);
        }
    }
    return added;
}

void PatchGraph::remove_frame(int frame_index, RelativePoseLog& log) {
    auto it = frames_.find(frame_index);
    if (it == frames_.end()) {
        throw std::invalid_argument("patch graph: no frame " + std::to_string(frame_index));
    }
    int newer = 0;
    for (auto r = frames_.rbegin(); r != frames_.rend() && newer < 3; ++r) {
        if (r->first == frame_index) {
            throw std::invalid_argument("patch graph: frame " + std::to_string(frame_index) +
                                        " is among the most recent 3 keyframes");
        }
        ++newer;
    }
    if (it == frames_.begin()) {
        throw std::invalid_argument("patch graph: the oldest frame has no predecessor to anchor");
    }

    auto pred = std::prev(it);
    log.append({frame_index, pred->first,
                compose(it->second.pose, inverse(pred->second.pose)), it->second.timestamp});

    // Edges targeting the frame.
    for (auto e = edges_.begin(); e != edges_.end();) {
        if (e->first.second == frame_index) {
            e = edges_.erase(e);
        } else {
            ++e;
        }
    }
    // Patches sourced at the frame, with their remaining edges.
    for (auto p = patches_.begin(); p != patches_.end();) {
        if (p->second.source_frame == frame_index) {
            const int id = p->first;
            edges_.erase(edges_.lower_bound({id, std::numeric_limits<int>::min()}),
                         edges_.upper_bound({id, std::numeric_limits<int>::max()}));
            p = patches_.erase(p);
        } else {
            ++p;
        }
    }
    frames_.erase(it);
}

std::vector<PatchGraph::TrajectoryPoint> PatchGraph::trajectory(int patch_id) const {
    const Patch& p = patch(patch_id);
    const FrameNode& source = frame(p.source_frame);

    std::vector<TrajectoryPoint> points;
    for (const EdgeKey& key : edges_of_patch(patch_id)) {
        const FrameNode& target = frame(key.second);
        const PatchReprojection reproj =
            reproject_patch(source.pose, target.pose, intrinsics_, p);
        points.push_back({key.second, reproj.center(p), reproj.behind_camera});
    }
    return points;
}

void PatchGraph::dump_edges(std::ostream& out) const {
    for (const auto& [key, revision] : edges_) {
        const Vec2 delta = revision ? revision->delta : Vec2::Zero();
        const Vec2 weight = revision ? revision->weight : Vec2::Zero();
        out << key.first << " " << key.second << " " << delta.x() << " " << delta.y() << " "
            << weight.x() << " " << weight.y() << "\n";
    }
}

void PatchGraph::set_revision(const EdgeKey& key, const FlowRevision& revision) {
    auto it = edges_.find(key);
    if (it == edges_.end()) {
        throw std::invalid_argument("patch graph: no edge (" + std::to_string(key.first) + ", " +
                                    std::to_string(key.second) + ")");
    }
    if (revision.weight.x() <= 0 || revision.weight.x() >= 1 || revision.weight.y() <= 0 ||
        revision.weight.y() >= 1) {
        throw std::invalid_argument("patch graph: revision weights must lie in (0, 1)");
    }
    it->second = revision;
}

std::vector<PatchGraph::EdgeKey> PatchGraph::edges_of_patch(int patch_id) const {
    std::vector<EdgeKey> keys;
    for (auto it = edges_.lower_bound({patch_id, std::numeric_limits<int>::min()});
         it != edges_.end() && it->first.first == patch_id; ++it) {
        keys.push_back(it->first);
    }
    return keys;
}

int PatchGraph::num_edges_of_patch(int patch_id) const {
    return static_cast<int>(edges_of_patch(patch_id).size());
}

}  // namespace pvo
