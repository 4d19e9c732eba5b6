#pragma once

#include <array>
#include <vector>

#include "pvo/features.hpp"

namespace pvo {

// Half extent of the 7x7 integer offset grid centered at 0.
constexpr int kCorrRadius = 3;
constexpr int kCorrSize = 2 * kCorrRadius + 1;

// Correlation of one patch against one frame: a p x p x 7 x 7 grid per
// pyramid level. Entry (u, v, 3, 3) is the zero offset; alpha indexes the
// y offset and beta the x offset (offset = (beta - 3, alpha - 3)).
struct CorrelationGrid {
    int patch_width = 0;
    std::array<std::vector<float>, 2> values;  // levels 0 and 1

    float at(int level, int u, int v, int alpha, int beta) const {
        return values[level][((static_cast<size_t>(v) * patch_width + u) * kCorrSize + alpha) *
                                 kCorrSize +
                             beta];
    }
};

// Inner-product correlation (Eq-style lookup): for each patch pixel (u, v),
// correlates its feature vector against bilinear samples of the frame
// features on the 7x7 grid around the pixel's reprojection. Level 0 uses
// the reprojected coordinates divided by 4, level 1 divides by 4 again.
// Samples falling outside the grid are zero-padded.
CorrelationGrid correlate(const PatchFeatures& patch_features, const FeaturePyramid& pyramid,
                          const std::vector<Vec2>& reprojection);

// Correlation of a single feature vector at a free (level-space) position.
// The sampled descriptor is unit-normalized before the inner product.
double correlate_at(const float* feature, int channels, const FeatureGrid& grid, double x,
                    double y);

// Catmull-Rom variant: the bilinear surface is only C0 and its kinks bias
// parabola fits at sub-cell phases; the refinement path samples with this.
double correlate_at_cubic(const float* feature, int channels, const FeatureGrid& grid, double x,
                          double y);

}  // namespace pvo
