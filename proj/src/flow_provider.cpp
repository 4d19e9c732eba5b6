#include "pvo/flow_provider.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pvo {

OracleFlowProvider::OracleFlowProvider(const SimulatedScene& scene, const NoiseModel& noise)
    : scene_(scene), noise_(noise), rng_(noise.seed) {}

int OracleFlowProvider::scene_frame(const PatchGraph& graph, int frame_index) const {
    return scene_.frame_at_timestamp(graph.frame(frame_index).timestamp);
}

void OracleFlowProvider::add_frame(const PatchGraph&, int, const Image&) {}

void OracleFlowProvider::add_patches(const PatchGraph& graph, int frame_index,
                                     const std::vector<int>& patch_ids) {
    const int sim = scene_frame(graph, frame_index);
    for (int id : patch_ids) {
        gt_inverse_depth_[id] = scene_.inverse_depth_at(sim, graph.patch(id).center());
        frame_patches_[frame_index].push_back(id);
    }
}

void OracleFlowProvider::remove_frame(int frame_index) {
    if (auto it = frame_patches_.find(frame_index); it != frame_patches_.end()) {
        for (int id : it->second) gt_inverse_depth_.erase(id);
        frame_patches_.erase(it);
    }
}

std::vector<FlowRevision> OracleFlowProvider::propose(
    const PatchGraph& graph, const std::vector<PatchGraph::EdgeKey>& edges) {
    std::normal_distribution<double> gauss(0.0, noise_.flow_sigma);
    std::uniform_real_distribution<double> uniform(-32.0, 32.0);

    const double sigma2 = noise_.flow_sigma * noise_.flow_sigma;
    const double weight = std::clamp(1.0 / (1.0 + sigma2), 0.01, 0.99);

    std::vector<FlowRevision> revisions;
    revisions.reserve(edges.size());
    for (const auto& [patch_id, frame_j] : edges) {
        const Patch& patch = graph.patch(patch_id);
        const int sim_i = scene_frame(graph, patch.source_frame);
        const int sim_j = scene_frame(graph, frame_j);

        // Ground-truth reprojection of the patch center.
        Patch probe = Patch::make(0, patch.center(), 1, gt_inverse_depth_.at(patch_id));
        const PatchReprojection gt = reproject_patch(scene_.pose(sim_i), scene_.pose(sim_j),
                                                     scene_.intrinsics(), probe);

        // Current-state reprojection.
        const PatchReprojection current =
            reproject_patch(graph.frame(patch.source_frame).pose, graph.frame(frame_j).pose,
                            graph.intrinsics(), patch);

        FlowRevision revision;
        if (gt.behind_camera || current.behind_camera) {
            revision.delta = Vec2::Zero();
            revision.weight = Vec2(0.01, 0.01);
        } else {
            revision.delta = gt.points[0] - current.center(patch);
            if (noise_.flow_sigma > 0) revision.delta += Vec2(gauss(rng_), gauss(rng_));
            // The learned factor head revises trajectories incrementally and
            // cannot be confident beyond its working range: clamp oversized
            // revisions and drop their weight to the floor. This keeps the
            // linearized solver inside its basin when the state is far off
            // (initialization) and mutes edges that degenerated numerically.
            const bool in_range = std::abs(revision.delta.x()) <= kMaxRevisionPx &&
                                  std::abs(revision.delta.y()) <= kMaxRevisionPx;
            revision.delta.x() = std::clamp(revision.delta.x(), -kMaxRevisionPx, kMaxRevisionPx);
            revision.delta.y() = std::clamp(revision.delta.y(), -kMaxRevisionPx, kMaxRevisionPx);
            revision.weight = in_range ? Vec2(weight, weight) : Vec2(0.01, 0.01);
        }
        revisions.push_back(revision);
    }

    // Exactly floor(fraction * E) edges become uniform-noise outliers.
    const size_t num_outliers =
        static_cast<size_t>(noise_.outlier_fraction * static_cast<double>(edges.size()));
    if (num_outliers > 0) {
        std::vector<size_t> index(edges.size());
        for (size_t i = 0; i < index.size(); ++i) index[i] = i;
        std::shuffle(index.begin(), index.end(), rng_);
        for (size_t i = 0; i < num_outliers; ++i) {
            revisions[index[i]].delta = Vec2(uniform(rng_), uniform(rng_));
            revisions[index[i]].weight = Vec2(0.01, 0.01);
        }
    }
    return revisions;
}

double OracleFlowProvider::candidate_flow(const PatchGraph& graph, int frame_index, const Image&,
                                          double candidate_timestamp) {
    const int sim_i = scene_frame(graph, frame_index);
    const int sim_j = scene_.frame_at_timestamp(candidate_timestamp);

    double sum = 0;
    int count = 0;
    for (int id : frame_patches_[frame_index]) {
        const Patch& patch = graph.patch(id);
        sum += scene_.ground_truth_flow(patch.center(), sim_i, sim_j).norm();
        ++count;
    }
    return count > 0 ? sum / count : 0.0;
}

CorrelationFlowProvider::CorrelationFlowProvider(int channels) : channels_(channels) {
    if (channels != 1 && channels != 3) {
        throw std::invalid_argument("correlation provider: channels must be 1 or 3");
    }
}

void CorrelationFlowProvider::add_frame(const PatchGraph& graph, int frame_index,
                                        const Image& image) {
    const double timestamp = graph.frame(frame_index).timestamp;
    if (pending_ && pending_timestamp_ == timestamp) {
        pyramids_[frame_index] = std::move(pending_);
    } else {
        pyramids_[frame_index] = std::make_unique<FeaturePyramid>(extract_features(image, channels_));
    }
    pending_.reset();
    pending_timestamp_ = -1;
}

void CorrelationFlowProvider::add_patches(const PatchGraph& graph, int frame_index,
                                          const std::vector<int>& patch_ids) {
    const auto& pyramid = pyramids_.at(frame_index);
    for (int id : patch_ids) {
        patch_features_[id] = crop_patch_features(*pyramid, graph.patch(id));
        frame_patches_[frame_index].push_back(id);
    }
}

void CorrelationFlowProvider::remove_frame(int frame_index) {
    pyramids_.erase(frame_index);
    if (auto it = frame_patches_.find(frame_index); it != frame_patches_.end()) {
        for (int id : it->second) patch_features_.erase(id);
        frame_patches_.erase(it);
    }
}

const FeaturePyramid* CorrelationFlowProvider::pyramid(int frame_index) const {
    auto it = pyramids_.find(frame_index);
    return it == pyramids_.end() ? nullptr : it->second.get();
}

namespace {

// One parabola step of length h around the current position along one axis.
double parabola_refine(const float* feature, int channels, const FeatureGrid& grid, double x,
                       double y, bool along_x, double h) {
    const double f0 = correlate_at_cubic(feature, channels, grid, x - (along_x ? h : 0),
                                         y - (along_x ? 0 : h));
    const double f1 = correlate_at_cubic(feature, channels, grid, x, y);
    const double f2 = correlate_at_cubic(feature, channels, grid, x + (along_x ? h : 0),
                                         y + (along_x ? 0 : h));
    const double denom = f0 - 2 * f1 + f2;
    if (std::abs(denom) < 1e-12 || denom > 0) return 0.0;  // not a local max
    return std::clamp(0.5 * h * (f0 - f2) / denom, -h, h);
}

// Subpixel peak of the 7x7 correlation slice of one level, in level cells.
// `on_border` reports a discrete peak on the outer ring, where the true
// offset may lie outside the search grid.
Vec2 subpixel_peak(const float* feature, int channels, const FeatureGrid& grid, const Vec2& base,
                   bool* on_border) {
    int best_a = kCorrRadius, best_b = kCorrRadius;
    double best = -std::numeric_limits<double>::infinity();
    for (int alpha = 0; alpha < kCorrSize; ++alpha) {
        for (int beta = 0; beta < kCorrSize; ++beta) {
            const double v = correlate_at(feature, channels, grid, base.x() + beta - kCorrRadius,
                                          base.y() + alpha - kCorrRadius);
            if (v > best) {
                best = v;
                best_a = alpha;
                best_b = beta;
            }
        }
    }
    if (on_border) {
        *on_border = best_a == 0 || best_a == kCorrSize - 1 || best_b == 0 ||
                     best_b == kCorrSize - 1;
    }
    double dx = best_b - kCorrRadius;
    double dy = best_a - kCorrRadius;
    double current = correlate_at_cubic(feature, channels, grid, base.x() + dx, base.y() + dy);
    for (const double h : {0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625}) {
        for (const bool along_x : {true, false}) {
            const double step =
                parabola_refine(feature, channels, grid, base.x() + dx, base.y() + dy, along_x, h);
            if (step == 0.0) continue;
            const double nx = dx + (along_x ? step : 0);
            const double ny = dy + (along_x ? 0 : step);
            const double value =
                correlate_at_cubic(feature, channels, grid, base.x() + nx, base.y() + ny);
            if (value >= current) {  // hill climb only
                dx = nx;
                dy = ny;
                current = value;
            }
        }
    }
    return Vec2(dx, dy);
}

}  // namespace

CorrelationFlowProvider::Measurement CorrelationFlowProvider::measure(
    const PatchFeatures& features, const FeaturePyramid& pyramid, const Vec2& center) const {
    Measurement m;
    const int center_pixel = features.width * features.width / 2;
    const float* g0 = features.descriptor(0, center_pixel);
    const float* g1 = features.descriptor(1, center_pixel);

    // Discrete level-0 slice drives the flatness and sharpness scores.
    const Vec2 base0 = center / kFeatureStride;
    double values[kCorrSize * kCorrSize];
    double peak = -std::numeric_limits<double>::infinity();
    double minimum = std::numeric_limits<double>::infinity();
    double mean = 0;
    int peak_a = 0, peak_b = 0;
    for (int alpha = 0; alpha < kCorrSize; ++alpha) {
        for (int beta = 0; beta < kCorrSize; ++beta) {
            const double v =
                correlate_at(g0, features.channels, pyramid.level0,
                             base0.x() + beta - kCorrRadius, base0.y() + alpha - kCorrRadius);
            values[alpha * kCorrSize + beta] = v;
            mean += v;
            minimum = std::min(minimum, v);
            if (v > peak) {
                peak = v;
                peak_a = alpha;
                peak_b = beta;
            }
        }
    }
    mean /= kCorrSize * kCorrSize;

    const double peak_to_mean = (peak - minimum) / (mean - minimum + 1e-9);
    if (!(peak_to_mean >= 1.05)) {
        m.flat = true;
        return m;  // delta (0,0), weight (0.01, 0.01)
    }

    // Sharpness: peak margin over the best non-adjacent competitor. The
    // peak itself is a cosine response, so its absolute level carries
    // match quality too; both feed the logistic squashing.
    double second = -std::numeric_limits<double>::infinity();
    for (int alpha = 0; alpha < kCorrSize; ++alpha) {
        for (int beta = 0; beta < kCorrSize; ++beta) {
            if (std::max(std::abs(alpha - peak_a), std::abs(beta - peak_b)) <= 1) continue;
            second = std::max(second, values[alpha * kCorrSize + beta]);
        }
    }
    const double score = 2.0 * (peak - 0.75) + (peak - second - 0.08);
    double confidence = std::clamp(1.0 / (1.0 + std::exp(-12.0 * score)), 0.01, 0.99);

    bool border0 = false, border1 = false;
    const Vec2 peak0 = subpixel_peak(g0, features.channels, pyramid.level0, base0, &border0);
    const Vec2 peak1 = subpixel_peak(g1, features.channels, pyramid.level1,
                                     center / (kFeatureStride * kFeatureStride), &border1);
    const Vec2 e0 = kFeatureStride * peak0;
    const Vec2 e1 = kFeatureStride * kFeatureStride * peak1;

    if (border0 && border1) {
        // True offset beyond both search ranges: nothing trustworthy.
        m.out_of_range = true;
        return m;
    }
    if (border0) {
        m.delta = e1;  // coarse level still brackets the motion
        confidence = std::min(confidence, 0.25);
    } else {
        // The fine level carries the estimate; the coarse level acts as a
        // cross-check (its own subpixel precision at 16 px pitch is far too
        // coarse to average in without washing out the fine fit).
        m.delta = e0;
        if (!border1 && (e1 - e0).norm() > 2.0 * kFeatureStride * kFeatureStride) {
            confidence = std::min(confidence, 0.25);  // levels disagree
        }
    }
    m.weight = Vec2(confidence, confidence);
    return m;
}

std::vector<FlowRevision> CorrelationFlowProvider::propose(
    const PatchGraph& graph, const std::vector<PatchGraph::EdgeKey>& edges) {
    std::vector<FlowRevision> revisions;
    revisions.reserve(edges.size());
    for (const auto& [patch_id, frame_j] : edges) {
        const Patch& patch = graph.patch(patch_id);
        const PatchFeatures& features = patch_features_.at(patch_id);
        const FeaturePyramid& target = *pyramids_.at(frame_j);

        const PatchReprojection reproj =
            reproject_patch(graph.frame(patch.source_frame).pose, graph.frame(frame_j).pose,
                            graph.intrinsics(), patch);

        FlowRevision revision;
        if (reproj.behind_camera) {
            revision.weight = Vec2(0.01, 0.01);
        } else {
            const int center = patch.size() / 2;
            const Measurement m = measure(features, target, reproj.points[center]);
            revision.delta = m.delta;
            revision.weight = m.weight;
        }
        revisions.push_back(revision);
    }
    return revisions;
}

double CorrelationFlowProvider::candidate_flow(const PatchGraph& graph, int frame_index,
                                               const Image& candidate,
                                               double candidate_timestamp) {
    if (!pending_ || pending_timestamp_ != candidate_timestamp) {
        pending_ = std::make_unique<FeaturePyramid>(extract_features(candidate, channels_));
        pending_timestamp_ = candidate_timestamp;
    }

    double sum = 0;
    int count = 0;
    for (int id : frame_patches_[frame_index]) {
        const Patch& patch = graph.patch(id);
        const PatchFeatures& features = patch_features_.at(id);
        // Zero-motion hypothesis: search around the patch's own coordinates.
        const Measurement m = measure(features, *pending_, patch.center());
        if (m.flat) continue;  // textureless: no flow evidence either way
        // A border-pinned peak means the motion exceeds the search range.
        sum += m.out_of_range
                   ? kCorrRadius * kFeatureStride * kFeatureStride + kFeatureStride
                   : m.delta.norm();
        ++count;
    }
    return count > 0 ? sum / count : 0.0;
}

std::unique_ptr<FlowProvider> make_provider(const std::string& name, const SimulatedScene* scene,
                                            const NoiseModel& noise) {
    if (name == "oracle") {
        if (!scene) {
            throw std::invalid_argument("oracle provider needs a simulated scene");
        }
        return std::make_unique<OracleFlowProvider>(*scene, noise);
    }
    if (name == "correlation") {
        return std::make_unique<CorrelationFlowProvider>();
    }
    throw std::invalid_argument("unknown provider '" + name + "' (expected oracle|correlation)");
}

}  // namespace pvo
