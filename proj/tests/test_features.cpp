#include <doctest.h>

#include <random>

#include "pvo/correlation.hpp"
#include "pvo/features.hpp"
#include "pvo/flow_provider.hpp"
#include "pvo/simulator.hpp"
#include "sim_fixtures.hpp"

using namespace pvo;

namespace {

// Noise image with smooth multi-octave texture, shifted by (shift_x, shift_y).
Image noise_image(int w, int h, uint64_t seed, double shift_x = 0, double shift_y = 0) {
    Image image(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            image.at(x, y) = static_cast<float>(
                textured_noise((x - shift_x) / 18.0, (y - shift_y) / 18.0, seed));
        }
    }
    return image;
}

std::vector<Vec2> patch_coords(const Vec2& centroid, int p) {
    const Patch patch = Patch::make(0, centroid, p, 1.0);
    std::vector<Vec2> coords;
    for (int k = 0; k < patch.size(); ++k) coords.emplace_back(patch.x[k], patch.y[k]);
    return coords;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("a constant image normalizes to all-zero features") {
    Image image(64, 64);
    for (float& p : image.pixels) p = 0.37f;
    const FeaturePyramid pyramid = extract_features(image, 1);
    for (float v : pyramid.level0.data) CHECK(v == doctest::Approx(0.0));
    for (float v : pyramid.level1.data) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("the coarse level pools 4x4 blocks with stride 4") {
    const Image image = noise_image(128, 128, 5);
    const FeaturePyramid pyramid = extract_features(image, 1);
    CHECK(pyramid.level0.width == 32);
    CHECK(pyramid.level1.width == 8);
    CHECK(pyramid.level1.height == pyramid.level0.height / 4);

    // The pooling acts on the whitened base grid (the lifted descriptors
    // are assembled per level on top of it): a pooled base cell is the mean
    // of its 4x4 block. The lift places the cell's own value at the center
    // channel up to the descriptor normalization, so compare directions.
    const FeatureGrid base = whiten_features(image, 1);
    for (int y = 1; y < pyramid.level1.height - 1; ++y) {
        for (int x = 1; x < pyramid.level1.width - 1; ++x) {
            float mean = 0;
            for (int dy = 0; dy < 4; ++dy) {
                for (int dx = 0; dx < 4; ++dx) {
                    mean += base.at(4 * x + dx, 4 * y + dy, 0) / 16.0f;
                }
            }
            // Recover the normalization scale from a reference channel pair
            // and check the center channel against the pooled mean.
            double lifted_sq = 0;
            for (int c = 0; c < pyramid.level1.channels; ++c) {
                lifted_sq += pyramid.level1.at(x, y, c) * pyramid.level1.at(x, y, c);
            }
            CHECK(lifted_sq == doctest::Approx(1.0).epsilon(1e-4));
            // Direction check: center channel / norm-free ratio against a
            // neighbor channel equals the same ratio of pooled means.
            float mean_right = 0;
            for (int dy = 0; dy < 4; ++dy) {
                for (int dx = 0; dx < 4; ++dx) {
                    mean_right += base.at(4 * (x + 1) + dx, 4 * y + dy, 0) / 16.0f;
                }
            }
            const float lifted_center = pyramid.level1.at(x, y, 12);
            const float lifted_right = pyramid.level1.at(x, y, 13);
            CHECK(lifted_center * mean_right ==
                  doctest::Approx(lifted_right * mean).epsilon(1e-3));
        }
    }
}

TEST_CASE("level0 cross-correlation peaks at the true integer shift") {
    // Shift by whole level0 cells (multiples of 4 px) and search exhaustively.
    const int shift_cells_x = 2, shift_cells_y = -1;
    const Image a = noise_image(160, 160, 9);
    const Image b = noise_image(160, 160, 9, 4.0 * shift_cells_x, 4.0 * shift_cells_y);
    const FeatureGrid fa = extract_features(a, 1).level0;
    const FeatureGrid fb = extract_features(b, 1).level0;

    double best = -1e30;
    int best_dx = 0, best_dy = 0;
    for (int dy = -4; dy <= 4; ++dy) {
        for (int dx = -4; dx <= 4; ++dx) {
            double dot = 0;
            for (int y = 8; y < fa.height - 8; ++y) {
                for (int x = 8; x < fa.width - 8; ++x) {
                    dot += fa.at(x, y, 0) * fb.at(x + dx, y + dy, 0);
                }
            }
            if (dot > best) {
                best = dot;
                best_dx = dx;
                best_dy = dy;
            }
        }
    }
    CHECK(best_dx == shift_cells_x);
    CHECK(best_dy == shift_cells_y);
}

TEST_CASE("gradient channels are appended when requested") {
    const Image image = noise_image(96, 96, 11);
    const FeatureGrid base = whiten_features(image, 3);
    CHECK(base.channels == 3);
    const float expected = 0.5f * (base.at(6, 5, 0) - base.at(4, 5, 0));
    CHECK(base.at(5, 5, 1) == doctest::Approx(expected));
}

TEST_CASE("neighborhood lift stacks the 5x5 ring into unit descriptors") {
    const Image image = noise_image(96, 96, 12);
    const FeatureGrid base = whiten_features(image, 1);
    const FeatureGrid lifted = lift_neighborhood(base);
    CHECK(lifted.channels == 25);

    // Channel order is row-major over (dy, dx) offsets; channel 12 is the
    // cell itself. Descriptors are unit-normalized.
    double norm_sq = 0;
    for (int c = 0; c < 25; ++c) norm_sq += lifted.at(7, 9, c) * lifted.at(7, 9, c);
    CHECK(norm_sq == doctest::Approx(1.0).epsilon(1e-5));
    const float scale = lifted.at(7, 9, 12) / base.at(7, 9, 0);
    CHECK(lifted.at(7, 9, 0) == doctest::Approx(scale * base.at(5, 7, 0)).epsilon(1e-4));
    CHECK(lifted.at(7, 9, 24) == doctest::Approx(scale * base.at(9, 11, 0)).epsilon(1e-4));
    // Zero padding at the border.
    CHECK(lifted.at(0, 0, 0) == 0.0f);
}

TEST_CASE("self-match correlation peaks at the center entry for every pixel") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(30.0, 220.0);
    const Image image = noise_image(256, 256, 17);
    const FeaturePyramid pyramid = extract_features(image, 1);

    for (int trial = 0; trial < 20; ++trial) {
        const Vec2 centroid(u(rng), u(rng));
        const Patch patch = Patch::make(0, centroid, 3, 1.0);
        const PatchFeatures features = crop_patch_features(pyramid, patch);
        const CorrelationGrid grid = correlate(features, pyramid, patch_coords(centroid, 3));

        for (int v = 0; v < 3; ++v) {
            for (int uu = 0; uu < 3; ++uu) {
                const float center = grid.at(0, uu, v, 3, 3);
                for (int alpha = 0; alpha < 7; ++alpha) {
                    for (int beta = 0; beta < 7; ++beta) {
                        CHECK(center >= grid.at(0, uu, v, alpha, beta) - 1e-6f);
                    }
                }
            }
        }
    }
}

TEST_CASE("a zero feature map correlates to an all-zero grid") {
    FeaturePyramid pyramid;
    pyramid.level0 = FeatureGrid(32, 32, 1);
    pyramid.level1 = FeatureGrid(8, 8, 1);
    PatchFeatures features;
    features.width = 3;
    features.channels = 1;
    features.level0.assign(9, 1.0f);
    features.level1.assign(9, 1.0f);
    const CorrelationGrid grid = correlate(features, pyramid, patch_coords(Vec2(60, 60), 3));
    for (int level = 0; level < 2; ++level) {
        for (float v : grid.values[level]) CHECK(v == 0.0f);
    }
}

TEST_CASE("displacing the reprojection shifts the peak opposite") {
    const Image image = noise_image(256, 256, 23);
    const FeaturePyramid pyramid = extract_features(image, 1);
    const Vec2 centroid(120, 132);
    const Patch patch = Patch::make(0, centroid, 3, 1.0);
    const PatchFeatures features = crop_patch_features(pyramid, patch);

    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 8; ++trial) {
        const int a = static_cast<int>(rng() % 7) - 3;  // level0 cells
        const int b = static_cast<int>(rng() % 7) - 3;
        // Displace the reprojection by (a, b) level0 cells = (4a, 4b) px.
        std::vector<Vec2> displaced = patch_coords(centroid, 3);
        for (Vec2& point : displaced) point += Vec2(4.0 * a, 4.0 * b);
        const CorrelationGrid grid = correlate(features, pyramid, displaced);

        // Center-pixel slice: the peak appears opposite the displacement.
        float best = -1e30f;
        int best_alpha = -1, best_beta = -1;
        for (int alpha = 0; alpha < 7; ++alpha) {
            for (int beta = 0; beta < 7; ++beta) {
                if (grid.at(0, 1, 1, alpha, beta) > best) {
                    best = grid.at(0, 1, 1, alpha, beta);
                    best_alpha = alpha;
                    best_beta = beta;
                }
            }
        }
        CHECK(best_alpha == 3 - b);
        CHECK(best_beta == 3 - a);
    }
}

TEST_CASE("correlation is linear in the patch features") {
    const Image image = noise_image(256, 256, 29);
    const FeaturePyramid pyramid = extract_features(image, 1);
    const auto coords = patch_coords(Vec2(100, 80), 3);

    std::mt19937_64 rng(15);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    PatchFeatures g1, g2, sum;
    g1.width = g2.width = sum.width = 3;
    g1.channels = g2.channels = sum.channels = pyramid.level0.channels;
    for (int k = 0; k < 9 * g1.channels; ++k) {
        g1.level0.push_back(gauss(rng));
        g2.level0.push_back(gauss(rng));
        sum.level0.push_back(g1.level0[k] + g2.level0[k]);
        g1.level1.push_back(gauss(rng));
        g2.level1.push_back(gauss(rng));
        sum.level1.push_back(g1.level1[k] + g2.level1[k]);
    }

    const CorrelationGrid c1 = correlate(g1, pyramid, coords);
    const CorrelationGrid c2 = correlate(g2, pyramid, coords);
    const CorrelationGrid cs = correlate(sum, pyramid, coords);
    for (int level = 0; level < 2; ++level) {
        for (size_t i = 0; i < cs.values[level].size(); ++i) {
            CHECK(cs.values[level][i] ==
                  doctest::Approx(c1.values[level][i] + c2.values[level][i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("self-match measurement is zero within 0.05 px with confident weight") {
    const Image image = noise_image(256, 256, 31);
    const FeaturePyramid pyramid = extract_features(image, 1);
    CorrelationFlowProvider provider;

    std::mt19937_64 rng(16);
    std::uniform_real_distribution<double> u(20.0, 235.0);
    int confident = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Vec2 centroid(u(rng), u(rng));
        const Patch patch = Patch::make(0, centroid, 3, 1.0);
        const PatchFeatures features = crop_patch_features(pyramid, patch);
        const auto m = provider.measure(features, pyramid, centroid);
        CHECK(m.delta.norm() < 0.05);
        if (m.weight.x() > 0.5) ++confident;
    }
    CHECK(confident > 90);
}

TEST_CASE("measurement is translation-equivariant at integer shifts") {
    std::mt19937_64 rng(18);
    std::uniform_real_distribution<double> u(40.0, 215.0);
    CorrelationFlowProvider provider;

    // Subpixel accuracy on a 4 px feature pitch is limited by resampling
    // bias ~ (pitch / wavelength)^3, so this tight bound uses texture a
    // step smoother than the ordinary fixtures.
    auto smooth_noise = [](uint64_t seed, double sx, double sy) {
        Image image(256, 256);
        for (int y = 0; y < 256; ++y) {
            for (int x = 0; x < 256; ++x) {
                image.at(x, y) = static_cast<float>(
                    textured_noise((x - sx) / 22.0, (y - sy) / 22.0, seed));
            }
        }
        return image;
    };

    double worst = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const uint64_t seed = 100 + trial;
        const int a = static_cast<int>(rng() % 17) - 8;
        const int b = static_cast<int>(rng() % 17) - 8;
        const Image source = smooth_noise(seed, 0, 0);
        const Image target = smooth_noise(seed, a, b);
        const FeaturePyramid source_pyramid = extract_features(source, 1);
        const FeaturePyramid target_pyramid = extract_features(target, 1);

        const Vec2 centroid(u(rng), u(rng));
        const Patch patch = Patch::make(0, centroid, 3, 1.0);
        const PatchFeatures features = crop_patch_features(source_pyramid, patch);
        const auto m = provider.measure(features, target_pyramid, centroid);
        worst = std::max(worst, (m.delta - Vec2(a, b)).norm());
    }
    CHECK(worst < 0.25);
}

TEST_CASE("a 2 px pure-x shift lands in the specified bands") {
    CorrelationFlowProvider provider;
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(40.0, 215.0);
    for (int trial = 0; trial < 10; ++trial) {
        const uint64_t seed = 300 + trial;
        const Image source = noise_image(256, 256, seed);
        const Image target = noise_image(256, 256, seed, 2.0, 0.0);
        const FeaturePyramid sp = extract_features(source, 1);
        const FeaturePyramid tp = extract_features(target, 1);

        const Vec2 centroid(u(rng), u(rng));
        const Patch patch = Patch::make(0, centroid, 3, 1.0);
        const PatchFeatures features = crop_patch_features(sp, patch);
        const auto m = provider.measure(features, tp, centroid);
        CHECK(m.delta.x() >= 1.5);
        CHECK(m.delta.x() <= 2.5);
        CHECK(m.delta.y() >= -0.5);
        CHECK(m.delta.y() <= 0.5);
    }
}

TEST_CASE("flat regions report near-zero confidence") {
    Image flat(256, 256);
    for (float& p : flat.pixels) p = 0.5f;
    const FeaturePyramid pyramid = extract_features(flat, 1);
    CorrelationFlowProvider provider;

    PatchFeatures features;
    features.width = 3;
    features.channels = pyramid.level0.channels;
    features.level0.assign(9 * features.channels, 0.0f);
    features.level1.assign(9 * features.channels, 0.0f);
    const auto m = provider.measure(features, pyramid, Vec2(128, 128));
    CHECK(m.flat);
    CHECK(m.delta.norm() == doctest::Approx(0.0));
    CHECK(m.weight.x() == doctest::Approx(0.01));
    CHECK(m.weight.y() == doctest::Approx(0.01));
}

TEST_CASE("oracle revisions vanish at the ground-truth state") {
    const SimulatedScene scene = SimulatedScene::generate(77, 8, MotionModel::kSmoothRandom);
    PatchGraph graph = testutil::graph_at_ground_truth(scene, 16, 4, 7);

    NoiseModel noise;  // sigma = 0, no outliers
    OracleFlowProvider provider(scene, noise);
    for (const auto& [index, node] : graph.frames()) {
        std::vector<int> ids;
        for (const auto& [id, patch] : graph.patches()) {
            if (patch.source_frame == index) ids.push_back(id);
        }
        provider.add_patches(graph, index, ids);
    }

    std::vector<PatchGraph::EdgeKey> edges;
    for (const auto& [key, rev] : graph.edges()) edges.push_back(key);
    const auto revisions = provider.propose(graph, edges);
    REQUIRE(revisions.size() == edges.size());
    for (const auto& rev : revisions) {
        CHECK(rev.delta.norm() < 1e-9);
        CHECK(rev.weight.x() == doctest::Approx(0.99));
        CHECK(rev.weight.y() == doctest::Approx(0.99));
    }
}

TEST_CASE("oracle outlier fraction is exact") {
    const SimulatedScene scene = SimulatedScene::generate(78, 6, MotionModel::kSmoothRandom);
    PatchGraph graph = testutil::graph_at_ground_truth(scene, 20, 4, 8);

    NoiseModel noise;
    noise.outlier_fraction = 0.1;
    noise.seed = 3;
    OracleFlowProvider provider(scene, noise);
    for (const auto& [index, node] : graph.frames()) {
        std::vector<int> ids;
        for (const auto& [id, patch] : graph.patches()) {
            if (patch.source_frame == index) ids.push_back(id);
        }
        provider.add_patches(graph, index, ids);
    }

    std::vector<PatchGraph::EdgeKey> edges;
    for (const auto& [key, rev] : graph.edges()) edges.push_back(key);
    const auto revisions = provider.propose(graph, edges);

    int outliers = 0;
    for (const auto& rev : revisions) {
        if (rev.weight.x() == doctest::Approx(0.01)) ++outliers;
    }
    CHECK(outliers == static_cast<int>(0.1 * edges.size()));
}

TEST_CASE("provider factory resolves names and rejects unknowns") {
    const SimulatedScene scene = SimulatedScene::generate(79, 4, MotionModel::kConstantVelocity);
    NoiseModel noise;
    CHECK(make_provider("oracle", &scene, noise)->name() == "oracle");
    CHECK(make_provider("correlation", nullptr, noise)->name() == "correlation");
    CHECK_THROWS_AS(make_provider("oracle", nullptr, noise), std::invalid_argument);
    CHECK_THROWS_AS(make_provider("lucas_kanade", nullptr, noise), std::invalid_argument);
}

}  // TEST_SUITE
