#include "pvo/correlation.hpp"

#include <cmath>
#include <stdexcept>

namespace pvo {

double correlate_at(const float* feature, int channels, const FeatureGrid& grid, double x,
                    double y) {
    // Inner product against the unit-normalized bilinear sample. Without
    // the normalization the interpolated descriptors shrink between cells
    // and the correlation surface grows scalloped corner maxima, which
    // wrecks subpixel fits; with it the surface peaks exactly where the
    // sampled descriptor aligns with the query.
    double dot = 0;
    double norm_sq = 0;
    for (int c = 0; c < channels; ++c) {
        const double v = grid.sample_zero_padded(x, y, c);
        dot += feature[c] * v;
        norm_sq += v * v;
    }
    return norm_sq > 1e-12 ? dot / std::sqrt(norm_sq) : 0.0;
}

double correlate_at_cubic(const float* feature, int channels, const FeatureGrid& grid, double x,
                          double y) {
    double dot = 0;
    double norm_sq = 0;
    for (int c = 0; c < channels; ++c) {
        const double v = grid.sample_cubic(x, y, c);
        dot += feature[c] * v;
        norm_sq += v * v;
    }
    return norm_sq > 1e-12 ? dot / std::sqrt(norm_sq) : 0.0;
}

CorrelationGrid correlate(const PatchFeatures& patch_features, const FeaturePyramid& pyramid,
                          const std::vector<Vec2>& reprojection) {
    const int p = patch_features.width;
    if (static_cast<int>(reprojection.size()) != p * p) {
        throw std::invalid_argument("correlate: reprojection size mismatch");
    }
    for (const Vec2& point : reprojection) {
        if (!point.allFinite()) throw std::invalid_argument("correlate: non-finite reprojection");
    }

    CorrelationGrid grid;
    grid.patch_width = p;
    const FeatureGrid* levels[2] = {&pyramid.level0, &pyramid.level1};
    for (int level = 0; level < 2; ++level) {
        const double scale = kFeatureStride * (level == 0 ? 1.0 : kFeatureStride);
        grid.values[level].resize(static_cast<size_t>(p) * p * kCorrSize * kCorrSize);
        size_t idx = 0;
        for (int v = 0; v < p; ++v) {
            for (int u = 0; u < p; ++u) {
                const float* g =
                    patch_features.descriptor(level, static_cast<int>(v) * p + u);
                const Vec2 base = reprojection[static_cast<size_t>(v) * p + u] / scale;
                for (int alpha = 0; alpha < kCorrSize; ++alpha) {
                    for (int beta = 0; beta < kCorrSize; ++beta) {
                        grid.values[level][idx++] = static_cast<float>(
                            correlate_at(g, patch_features.channels, *levels[level],
                                         base.x() + (beta - kCorrRadius),
                                         base.y() + (alpha - kCorrRadius)));
                    }
                }
            }
        }
    }
    return grid;
}

}  // namespace pvo
