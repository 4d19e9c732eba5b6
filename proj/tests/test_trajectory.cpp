#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "pvo/trajectory.hpp"

using namespace pvo;

namespace {

Sim3 random_sim3(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Sim3 s;
    s.scale = 0.25 + 3.0 * u(rng);
    s.rotation = testutil::random_pose(rng).rotation();
    s.translation = Vec3(u(rng) * 4 - 2, u(rng) * 4 - 2, u(rng) * 4 - 2);
    return s;
}

Trajectory random_trajectory(std::mt19937_64& rng, int n, double dt = 0.1) {
    Trajectory t;
    for (int i = 0; i < n; ++i) {
        t.push_back(i * dt, testutil::random_pose(rng, 2.0, 2.0));
    }
    return t;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("trajectory") {

TEST_CASE("timestamps must strictly increase") {
    Trajectory t;
    t.push_back(0.0, Pose::identity());
    CHECK_THROWS_AS(t.push_back(0.0, Pose::identity()), std::invalid_argument);
    CHECK_THROWS_AS(t.push_back(-1.0, Pose::identity()), std::invalid_argument);
    CHECK_NOTHROW(t.push_back(0.5, Pose::identity()));
}

TEST_CASE("aligning a trajectory with itself yields the identity") {
    std::mt19937_64 rng(20);
    const Trajectory t = random_trajectory(rng, 20);
    const Sim3 alignment = umeyama_align(t, t);
    CHECK(alignment.scale == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rotation_angle(Pose(alignment.rotation, Vec3::Zero())) < 1e-9);
    CHECK(alignment.translation.norm() < 1e-9);
}

TEST_CASE("a known Sim3 is recovered as its inverse") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const Trajectory gt = random_trajectory(rng, 15);
        const Sim3 a = random_sim3(rng);
        const Trajectory pred = a.apply(gt);

        const Sim3 alignment = umeyama_align(pred, gt);
        const Sim3 composed = alignment * a;
        CHECK(std::abs(composed.scale - 1.0) < 1e-9);
        CHECK(rotation_angle(Pose(composed.rotation, Vec3::Zero())) < 1e-9);
        CHECK(composed.translation.norm() < 1e-9);
    }
}

TEST_CASE("alignment residual tracks the injected noise level") {
    std::mt19937_64 rng(22);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sigma_component = 0.05;
    const double expected_rmse = std::sqrt(3.0) * sigma_component;

    double mean_rmse = 0;
    const int seeds = 100;
    for (int seed = 0; seed < seeds; ++seed) {
        const Trajectory gt = random_trajectory(rng, 100);
        Trajectory pred;
        for (const auto& entry : gt) {
            const Vec3 noise(gauss(rng), gauss(rng), gauss(rng));
            pred.push_back(entry.timestamp,
                           Pose(entry.pose.rotation(),
                                entry.pose.translation() + sigma_component * noise));
        }
        mean_rmse += ate(pred, gt, AteMode::kRmse);
    }
    mean_rmse /= seeds;
    CHECK(std::abs(mean_rmse - expected_rmse) <= 0.2 * expected_rmse);
}

TEST_CASE("ate of a trajectory against itself is zero in both modes") {
    std::mt19937_64 rng(23);
    const Trajectory t = random_trajectory(rng, 12);
    CHECK(ate(t, t, AteMode::kRmse) == doctest::Approx(0.0));
    CHECK(ate(t, t, AteMode::kSum) == doctest::Approx(0.0));
}

TEST_CASE("ate matches the hand-derived planar construction") {
    // Ground truth on the unit square in the xy-plane; predictions offset
    // along z by +-h in a pattern whose cross terms vanish. Umeyama then
    // gives R = I, t = 0 and scale s = 2 / (2 + h^2), so every residual has
    // squared norm 2 (s - 1)^2 + s^2 h^2.
    const double h = 0.1;
    const Vec3 g[4] = {{1, 1, 0}, {1, -1, 0}, {-1, 1, 0}, {-1, -1, 0}};
    const double sign[4] = {1, -1, -1, 1};

    Trajectory gt, pred;
    for (int i = 0; i < 4; ++i) {
        gt.push_back(i * 0.1, Pose(Quat::Identity(), g[i]));
        pred.push_back(i * 0.1, Pose(Quat::Identity(), g[i] + Vec3(0, 0, sign[i] * h)));
    }

    const double s = 2.0 / (2.0 + h * h);
    const double expected = std::sqrt(2.0 * (s - 1) * (s - 1) + s * s * h * h);

    const Sim3 alignment = umeyama_align(pred, gt);
    CHECK(alignment.scale == doctest::Approx(s).epsilon(1e-12));
    CHECK(alignment.translation.norm() < 1e-12);
    CHECK(ate(pred, gt, AteMode::kRmse) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(ate(pred, gt, AteMode::kSum) == doctest::Approx(4.0 * expected).epsilon(1e-9));
}

TEST_CASE("sum mode obeys the Cauchy-Schwarz bound") {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 20; ++trial) {
        const Trajectory gt = random_trajectory(rng, 30);
        Trajectory pred;
        std::normal_distribution<double> gauss(0.0, 0.1);
        for (const auto& entry : gt) {
            pred.push_back(entry.timestamp,
                           Pose(entry.pose.rotation(),
                                entry.pose.translation() + Vec3(gauss(rng), gauss(rng),
                                                                gauss(rng))));
        }
        const double rmse = ate(pred, gt, AteMode::kRmse);
        const double sum = ate(pred, gt, AteMode::kSum);
        CHECK(sum <= 30.0 * rmse + 1e-12);
    }
}

TEST_CASE("ate is invariant under a Sim3 warp of the predictions") {
    std::mt19937_64 rng(25);
    const Trajectory gt = random_trajectory(rng, 25);
    Trajectory pred;
    std::normal_distribution<double> gauss(0.0, 0.05);
    for (const auto& entry : gt) {
        pred.push_back(entry.timestamp,
                       Pose(entry.pose.rotation(),
                            entry.pose.translation() + Vec3(gauss(rng), gauss(rng), gauss(rng))));
    }
    const double base = ate(pred, gt, AteMode::kRmse);
    for (int trial = 0; trial < 10; ++trial) {
        const Sim3 warp = random_sim3(rng);
        CHECK(std::abs(ate(warp.apply(pred), gt, AteMode::kRmse) - base) < 1e-9);
    }
}

TEST_CASE("alignment needs 3 pairs and a non-collinear configuration") {
    Trajectory two, gt2;
    two.push_back(0.0, Pose::identity());
    two.push_back(0.1, Pose(Quat::Identity(), Vec3(1, 0, 0)));
    gt2.push_back(0.0, Pose::identity());
    gt2.push_back(0.1, Pose(Quat::Identity(), Vec3(1, 0, 0)));
    CHECK_THROWS_AS(umeyama_align(two, gt2), std::runtime_error);

    Trajectory line, line_gt;
    for (int i = 0; i < 5; ++i) {
        line.push_back(i * 0.1, Pose(Quat::Identity(), Vec3(i, 0, 0)));
        line_gt.push_back(i * 0.1, Pose(Quat::Identity(), Vec3(2 * i, 0, 0)));
    }
    CHECK_THROWS_AS(umeyama_align(line, line_gt), std::runtime_error);
}

TEST_CASE("associations require timestamps within tolerance") {
    Trajectory a, b;
    for (int i = 0; i < 5; ++i) a.push_back(i * 1.0, Pose::identity());
    for (int i = 0; i < 5; ++i) b.push_back(i * 1.0 + 0.5, Pose::identity());
    CHECK(associate(a, b).empty());
    CHECK_THROWS_AS(umeyama_align(a, b), std::runtime_error);
}

TEST_CASE("tum identity line parses") {
    const std::string path = temp_path("pvo_test_identity.txt");
    {
        std::ofstream out(path);
        out << "# comment line\n";
        out << "0.0 0 0 0 0 0 0 1\n";
    }
    const Trajectory t = read_tum(path);
    REQUIRE(t.size() == 1);
    CHECK(t[0].timestamp == 0.0);
    CHECK(t[0].pose.translation().norm() == doctest::Approx(0.0));
    CHECK(rotation_angle(t[0].pose) == doctest::Approx(0.0));
    std::remove(path.c_str());
}

TEST_CASE("tum write/read round trip stays within 1e-9") {
    std::mt19937_64 rng(26);
    const Trajectory t = random_trajectory(rng, 1000, 0.05);
    const std::string path = temp_path("pvo_test_roundtrip.txt");
    write_tum(path, t);
    const Trajectory back = read_tum(path);
    REQUIRE(back.size() == t.size());
    double worst = 0;
    for (size_t i = 0; i < t.size(); ++i) {
        worst = std::max(worst, std::abs(back[i].timestamp - t[i].timestamp));
        worst = std::max(worst,
                         (back[i].pose.translation() - t[i].pose.translation()).cwiseAbs()
                             .maxCoeff());
        Quat qa = back[i].pose.rotation();
        Quat qb = t[i].pose.rotation();
        if (qa.dot(qb) < 0) qa.coeffs() = -qa.coeffs();
        worst = std::max(worst, (qa.coeffs() - qb.coeffs()).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-9);
    std::remove(path.c_str());
}

TEST_CASE("malformed tum lines report their line number") {
    const std::string path = temp_path("pvo_test_malformed.txt");
    {
        std::ofstream out(path);
        out << "0.0 0 0 0 0 0 0 1\n";
        out << "0.1 0 0 0 0 0 0\n";  // 7 fields
    }
    try {
        read_tum(path);
        FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("non-unit quaternions are normalized on read") {
    const std::string path = temp_path("pvo_test_nonunit.txt");
    {
        std::ofstream out(path);
        out << "0.0 1 2 3 0 0 0 2\n";  // norm 2 quaternion
    }
    const Trajectory t = read_tum(path);
    REQUIRE(t.size() == 1);
    CHECK(t[0].pose.rotation().norm() == doctest::Approx(1.0));
    std::remove(path.c_str());
}

}  // TEST_SUITE
