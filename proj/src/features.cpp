#include "pvo/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pvo {

double FeatureGrid::sample_zero_padded(double x, double y, int c) const {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double ax = x - x0;
    const double ay = y - y0;

    auto value = [this, c](int xi, int yi) -> double {
        if (xi < 0 || yi < 0 || xi >= width || yi >= height) return 0.0;
        return at(xi, yi, c);
    };
    return (1 - ax) * (1 - ay) * value(x0, y0) + ax * (1 - ay) * value(x0 + 1, y0) +
           (1 - ax) * ay * value(x0, y0 + 1) + ax * ay * value(x0 + 1, y0 + 1);
}

double FeatureGrid::sample_cubic(double x, double y, int c) const {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double tx = x - x0;
    const double ty = y - y0;

    auto weights = [](double t, double w[4]) {
        w[0] = ((-0.5 * t + 1.0) * t - 0.5) * t;
        w[1] = (1.5 * t - 2.5) * t * t + 1.0;
        w[2] = ((-1.5 * t + 2.0) * t + 0.5) * t;
        w[3] = (0.5 * t - 0.5) * t * t;
    };
    double wx[4], wy[4];
    weights(tx, wx);
    weights(ty, wy);

    double v = 0;
    for (int j = 0; j < 4; ++j) {
        const int yi = y0 - 1 + j;
        if (yi < 0 || yi >= height) continue;
        double row = 0;
        for (int i = 0; i < 4; ++i) {
            const int xi = x0 - 1 + i;
            if (xi < 0 || xi >= width) continue;
            row += wx[i] * at(xi, yi, c);
        }
        v += wy[j] * row;
    }
    return v;
}

namespace {

// Quarter-resolution intensity grid: mean over 4x4 blocks.
FeatureGrid pool_image(const Image& image) {
    const int w = image.width / 4;
    const int h = image.height / 4;
    FeatureGrid grid(w, h, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float sum = 0;
            for (int dy = 0; dy < 4; ++dy) {
                for (int dx = 0; dx < 4; ++dx) {
                    sum += image.at(4 * x + dx, 4 * y + dy);
                }
            }
            grid.at(x, y, 0) = sum / 16.0f;
        }
    }
    return grid;
}

FeatureGrid pool_features(const FeatureGrid& grid) {
    FeatureGrid out(grid.width / 4, grid.height / 4, grid.channels);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            for (int c = 0; c < grid.channels; ++c) {
                float sum = 0;
                for (int dy = 0; dy < 4; ++dy) {
                    for (int dx = 0; dx < 4; ++dx) {
                        sum += grid.at(4 * x + dx, 4 * y + dy, c);
                    }
                }
                out.at(x, y, c) = sum / 16.0f;
            }
        }
    }
    return out;
}

}  // namespace

FeatureGrid whiten_features(const Image& image, int base_channels) {
    if (base_channels != 1 && base_channels != 3) {
        throw std::invalid_argument("features: base channel count must be 1 or 3");
    }
    if (image.width < 12 || image.height < 12) {
        throw std::invalid_argument("features: image too small");
    }

    const FeatureGrid raw = pool_image(image);
    const int w = raw.width;
    const int h = raw.height;

    // Residual against the 5x5 local mean (window clipped at the border).
    FeatureGrid rough(w, h, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0;
            int count = 0;
            for (int dy = -2; dy <= 2; ++dy) {
                for (int dx = -2; dx <= 2; ++dx) {
                    const int xi = x + dx, yi = y + dy;
                    if (xi < 0 || yi < 0 || xi >= w || yi >= h) continue;
                    sum += raw.at(xi, yi, 0);
                    ++count;
                }
            }
            rough.at(x, y, 0) = raw.at(x, y, 0) - static_cast<float>(sum / count);
        }
    }

    // Binomial smoothing keeps neighboring cells correlated enough for
    // stable bilinear cropping and subpixel fits.
    FeatureGrid residual(w, h, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0, weight = 0;
            static const double kernel[3] = {1, 2, 1};
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xi = x + dx, yi = y + dy;
                    if (xi < 0 || yi < 0 || xi >= w || yi >= h) continue;
                    const double k = kernel[dx + 1] * kernel[dy + 1];
                    sum += k * rough.at(xi, yi, 0);
                    weight += k;
                }
            }
            residual.at(x, y, 0) = static_cast<float>(sum / weight);
        }
    }

    // Normalize by the local residual RMS.
    FeatureGrid grid(w, h, base_channels);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum_sq = 0;
            int count = 0;
            for (int dy = -2; dy <= 2; ++dy) {
                for (int dx = -2; dx <= 2; ++dx) {
                    const int xi = x + dx, yi = y + dy;
                    if (xi < 0 || yi < 0 || xi >= w || yi >= h) continue;
                    sum_sq += residual.at(xi, yi, 0) * residual.at(xi, yi, 0);
                    ++count;
                }
            }
            const double rms = std::sqrt(sum_sq / count);
            grid.at(x, y, 0) =
                rms > 1e-6 ? residual.at(x, y, 0) / static_cast<float>(rms) : 0.0f;
        }
    }

    if (base_channels == 3) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const float gx = 0.5f * (grid.at(std::min(x + 1, w - 1), y, 0) -
                                         grid.at(std::max(x - 1, 0), y, 0));
                const float gy = 0.5f * (grid.at(x, std::min(y + 1, h - 1), 0) -
                                         grid.at(x, std::max(y - 1, 0), 0));
                grid.at(x, y, 1) = gx;
                grid.at(x, y, 2) = gy;
            }
        }
    }
    return grid;
}

FeatureGrid lift_neighborhood(const FeatureGrid& base) {
    FeatureGrid out(base.width, base.height, 25 * base.channels);
    for (int y = 0; y < base.height; ++y) {
        for (int x = 0; x < base.width; ++x) {
            int channel = 0;
            for (int dy = -2; dy <= 2; ++dy) {
                for (int dx = -2; dx <= 2; ++dx) {
                    const int xi = x + dx, yi = y + dy;
                    const bool inside =
                        xi >= 0 && yi >= 0 && xi < base.width && yi < base.height;
                    for (int c = 0; c < base.channels; ++c) {
                        out.at(x, y, channel++) = inside ? base.at(xi, yi, c) : 0.0f;
                    }
                }
            }
            // Unit-normalize the stacked descriptor: the inner product then
            // ranks alignment instead of local texture energy.
            double norm_sq = 0;
            for (int c = 0; c < out.channels; ++c) norm_sq += out.at(x, y, c) * out.at(x, y, c);
            if (norm_sq > 1e-12) {
                const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
                for (int c = 0; c < out.channels; ++c) out.at(x, y, c) *= inv;
            }
        }
    }
    return out;
}

FeaturePyramid extract_features(const Image& image, int base_channels) {
    const FeatureGrid base = whiten_features(image, base_channels);
    FeaturePyramid pyramid;
    pyramid.level0 = lift_neighborhood(base);
    pyramid.level1 = lift_neighborhood(pool_features(base));
    return pyramid;
}

PatchFeatures crop_patch_features(const FeaturePyramid& pyramid, const Patch& patch) {
    PatchFeatures features;
    features.width = patch.width;
    features.channels = pyramid.level0.channels;

    const FeatureGrid* grids[2] = {&pyramid.level0, &pyramid.level1};
    for (int level = 0; level < 2; ++level) {
        const FeatureGrid& grid = *grids[level];
        const double stride = level == 0 ? kFeatureStride : kFeatureStride * kFeatureStride;
        std::vector<float>& out = level == 0 ? features.level0 : features.level1;
        out.resize(static_cast<size_t>(patch.size()) * grid.channels);
        for (int k = 0; k < patch.size(); ++k) {
            for (int c = 0; c < grid.channels; ++c) {
                out[static_cast<size_t>(k) * grid.channels + c] = static_cast<float>(
                    grid.sample_cubic(patch.x[k] / stride, patch.y[k] / stride, c));
            }
        }
    }
    return features;
}

std::pair<FeaturePyramid, std::vector<PatchFeatures>> extract_features(
    const Image& image, const std::vector<Vec2>& centroids, int patch_width, int base_channels) {
    FeaturePyramid pyramid = extract_features(image, base_channels);
    std::vector<PatchFeatures> per_patch;
    per_patch.reserve(centroids.size());
    for (const Vec2& c : centroids) {
        per_patch.push_back(
            crop_patch_features(pyramid, Patch::make(0, c, patch_width, 1.0)));
    }
    return {std::move(pyramid), std::move(per_patch)};
}

}  // namespace pvo
