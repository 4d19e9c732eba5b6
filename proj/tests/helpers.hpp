#pragma once

#include <random>

#include "pvo/se3.hpp"

namespace pvo::testutil {

inline Vec3 random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec3 v(gauss(rng), gauss(rng), gauss(rng));
    while (v.norm() < 1e-6) v = Vec3(gauss(rng), gauss(rng), gauss(rng));
    return v.normalized();
}

inline Tangent random_twist(std::mt19937_64& rng, double trans_scale, double max_angle) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Vec3 trans = trans_scale * Vec3(gauss(rng), gauss(rng), gauss(rng));
    const Vec3 rot = unit(rng) * max_angle * random_unit(rng);
    return Tangent(trans, rot);
}

inline Pose random_pose(std::mt19937_64& rng, double trans_scale = 1.0,
                        double max_angle = 2.5) {
    return exp(random_twist(rng, trans_scale, max_angle));
}

}  // namespace pvo::testutil
