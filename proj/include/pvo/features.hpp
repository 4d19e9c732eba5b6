#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

#include "pvo/camera.hpp"
#include "pvo/image.hpp"

namespace pvo {

// Dense feature map, row-major with interleaved channels.
struct FeatureGrid {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    FeatureGrid() = default;
    FeatureGrid(int w, int h, int c)
        : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, 0.0f) {}

    float at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    float& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    // Bilinear sample of one channel; everything outside the grid is zero.
    double sample_zero_padded(double x, double y, int c) const;

    // Catmull-Rom sample of one channel, zero-padded.
    double sample_cubic(double x, double y, int c) const;
};

// Two-level matching-feature pyramid: level0 at quarter image resolution,
// level1 its 4x4 stride-4 average pooling.
struct FeaturePyramid {
    FeatureGrid level0;
    FeatureGrid level1;
};

// Ratio between image pixels and level0 feature cells.
constexpr double kFeatureStride = 4.0;

// Features for one patch: p x p grids of feature vectors cropped with
// bilinear interpolation at the patch coordinates divided by the level
// stride (4 and 16). Learned features correlate across pyramid levels;
// hand-crafted descriptors need a per-level crop, as pyramidal
// Lucas-Kanade trackers keep per-level reference windows.
struct PatchFeatures {
    int width = 0;
    int channels = 0;
    std::vector<float> level0;  // p*p*channels, row-major
    std::vector<float> level1;

    const std::vector<float>& level(int l) const { return l == 0 ? level0 : level1; }
    // Descriptor of patch pixel k at the given level.
    const float* descriptor(int l, int k) const {
        return level(l).data() + static_cast<size_t>(k) * channels;
    }
};

// Quarter-resolution whitened grid: the image is average-pooled into 4x4
// cells, the 5x5-neighborhood mean is removed and each cell is normalized
// by the local residual RMS (constant regions get unit variance
// substituted). base_channels = 1 keeps the whitened intensity alone,
// base_channels = 3 appends its central-difference gradients.
FeatureGrid whiten_features(const Image& image, int base_channels = 1);

// Stacks each cell's 5x5 neighborhood into its channel dimension
// (zero-padded at the border) and unit-normalizes the stacked descriptor,
// 25x the channels. A scalar whitened intensity cannot drive inner-product
// matching (the product rewards magnitude, not alignment); stacking the
// neighborhood turns the correlation lookup into a matched filter over a
// 20 px receptive field, playing the role the learned features' channel
// dimension plays.
FeatureGrid lift_neighborhood(const FeatureGrid& base);

// Matching-feature pyramid: level0 lifts the whitened grid, level1 lifts
// its 4x4 stride-4 average pooling (pooling happens on the whitened base
// so the coarse descriptors match coarse structure at their own pitch).
FeaturePyramid extract_features(const Image& image, int base_channels = 1);

PatchFeatures crop_patch_features(const FeaturePyramid& pyramid, const Patch& patch);

// Convenience wrapper: pyramid plus per-centroid patch features.
std::pair<FeaturePyramid, std::vector<PatchFeatures>> extract_features(
    const Image& image, const std::vector<Vec2>& centroids, int patch_width,
    int base_channels = 1);

}  // namespace pvo
