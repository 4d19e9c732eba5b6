#pragma once

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pvo/correlation.hpp"
#include "pvo/features.hpp"
#include "pvo/image.hpp"
#include "pvo/patch_graph.hpp"
#include "pvo/simulator.hpp"

namespace pvo {

// Produces (delta, weight) flow revisions for patch-graph edges. Providers
// are interchangeable behind this interface so the pipeline stays
// provider-agnostic; selection by name through the pipeline configuration.
class FlowProvider {
  public:
    virtual ~FlowProvider() = default;
    virtual std::string name() const = 0;

    // Lifecycle notifications from the pipeline.
    virtual void add_frame(const PatchGraph& graph, int frame_index, const Image& image) = 0;
    virtual void add_patches(const PatchGraph& graph, int frame_index,
                             const std::vector<int>& patch_ids) = 0;
    virtual void remove_frame(int frame_index) = 0;

    // Frame's cached feature pyramid, or null when the provider keeps none.
    virtual const FeaturePyramid* pyramid(int /*frame_index*/) const { return nullptr; }

    // One revision per edge, in edge order, at the current graph state.
    virtual std::vector<FlowRevision> propose(const PatchGraph& graph,
                                              const std::vector<PatchGraph::EdgeKey>& edges) = 0;

    // Mean flow magnitude of the frame's patches into a not-yet-admitted
    // image (drives the initialization admission gate).
    virtual double candidate_flow(const PatchGraph& graph, int frame_index, const Image& candidate,
                                  double candidate_timestamp) = 0;
};

// Largest per-component trajectory revision any provider proposes, matching
// the incremental output of the learned factor head (training targets flows
// up to ~72 px per frame).
constexpr double kMaxRevisionPx = 64.0;

// Test provider standing in for the trained network: revisions point at the
// ground-truth reprojection (clamped to the revision bound), optionally
// corrupted with Gaussian noise and a fixed fraction of uniform outliers.
class OracleFlowProvider : public FlowProvider {
  public:
    OracleFlowProvider(const SimulatedScene& scene, const NoiseModel& noise);

    std::string name() const override { return "oracle"; }
    void add_frame(const PatchGraph& graph, int frame_index, const Image& image) override;
    void add_patches(const PatchGraph& graph, int frame_index,
                     const std::vector<int>& patch_ids) override;
    void remove_frame(int frame_index) override;
    std::vector<FlowRevision> propose(const PatchGraph& graph,
                                      const std::vector<PatchGraph::EdgeKey>& edges) override;
    double candidate_flow(const PatchGraph& graph, int frame_index, const Image& candidate,
                          double candidate_timestamp) override;

  private:
    int scene_frame(const PatchGraph& graph, int frame_index) const;

    const SimulatedScene& scene_;
    NoiseModel noise_;
    std::mt19937_64 rng_;
    std::map<int, double> gt_inverse_depth_;    // patch id -> surface inverse depth
    std::map<int, std::vector<int>> frame_patches_;
};

// Classical correlation matcher: locally normalized intensity features,
// two-level inner-product correlation around the current reprojection,
// subpixel peak via quadratic fits with fractional resampling, confidence
// from peak sharpness.
class CorrelationFlowProvider : public FlowProvider {
  public:
    explicit CorrelationFlowProvider(int channels = 1);

    std::string name() const override { return "correlation"; }
    void add_frame(const PatchGraph& graph, int frame_index, const Image& image) override;
    void add_patches(const PatchGraph& graph, int frame_index,
                     const std::vector<int>& patch_ids) override;
    void remove_frame(int frame_index) override;
    const FeaturePyramid* pyramid(int frame_index) const override;
    std::vector<FlowRevision> propose(const PatchGraph& graph,
                                      const std::vector<PatchGraph::EdgeKey>& edges) override;
    double candidate_flow(const PatchGraph& graph, int frame_index, const Image& candidate,
                          double candidate_timestamp) override;

    // Flow measurement for one patch's center descriptors against a pyramid
    // around a full-resolution center coordinate. Exposed for tests.
    struct Measurement {
        Vec2 delta = Vec2::Zero();
        Vec2 weight = Vec2(0.01, 0.01);
        bool flat = false;          // no usable correlation signal
        bool out_of_range = false;  // peak pinned to the border on both levels
    };
    Measurement measure(const PatchFeatures& features, const FeaturePyramid& pyramid,
                        const Vec2& center) const;

  private:
    int channels_;
    std::map<int, std::unique_ptr<FeaturePyramid>> pyramids_;
    std::map<int, PatchFeatures> patch_features_;
    std::map<int, std::vector<int>> frame_patches_;
    // Pyramid built for the last admission probe, adopted if the frame is admitted.
    double pending_timestamp_ = -1;
    std::unique_ptr<FeaturePyramid> pending_;
};

// Provider factory for the names accepted by the pipeline configuration;
// `scene` may be null for providers that do not need it.
std::unique_ptr<FlowProvider> make_provider(const std::string& name, const SimulatedScene* scene,
                                            const NoiseModel& noise);

}  // namespace pvo
