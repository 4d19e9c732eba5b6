#pragma once

#include <vector>

#include "pvo/se3.hpp"

namespace pvo {

// Ideal pinhole camera.
struct Intrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;

    Intrinsics() = default;
    Intrinsics(double fx_, double fy_, double cx_, double cy_);

    Vec2 project(const Vec3& p_cam) const {
        return Vec2(fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy);
    }
    // Unit-depth ray through a pixel.
    Vec3 unproject(const Vec2& pixel) const {
        return Vec3((pixel.x() - cx) / fx, (pixel.y() - cy) / fy, 1.0);
    }
};

// Square p x p image patch anchored in its source frame. All p^2 pixels
// share one inverse depth, so the patch is a fronto-parallel plane in the
// frame it was extracted from.
struct Patch {
    int source_frame = -1;
    int width = 0;                 // p
    std::vector<double> x, y;      // p^2 pixel coordinates, row-major
    double inverse_depth = 0.0;    // >= 0; 0 means point at infinity

    static Patch make(int source_frame, const Vec2& centroid, int width, double inverse_depth);

    int size() const { return width * width; }
    Vec2 center() const;
};

// Threshold below which a reprojected point counts as behind the camera.
// Tested against the homogeneous depth coordinate (the dehomogenization
// denominator), which is also what would blow up numerically.
constexpr double kDepthEpsilon = 1e-6;

struct PatchReprojection {
    std::vector<Vec2> points;    // one per patch pixel, row-major
    bool behind_camera = false;  // any point with homogeneous depth <= kDepthEpsilon

    Vec2 center(const Patch& patch) const { return points[patch.size() / 2]; }
};

// Reprojection of a patch from its source frame i into frame j:
// each homogeneous patch pixel (x, y, 1, d) is mapped by K T_j T_i^-1 K^-1
// and dehomogenized by dividing by the third element. When T_i and T_j are
// bitwise equal the input coordinates are returned unchanged.
PatchReprojection reproject_patch(const Pose& pose_i, const Pose& pose_j, const Intrinsics& K,
                                  const Patch& patch);

struct ReprojectionJacobians {
    Vec2 center;                              // reprojected patch center
    Eigen::Matrix<double, 2, 6> d_pose_i;     // wrt retraction tangent of T_i
    Eigen::Matrix<double, 2, 6> d_pose_j;     // wrt retraction tangent of T_j
    Vec2 d_inverse_depth;
    bool behind_camera = false;
};

// Analytic Jacobians of the dehomogenized center coordinates with respect
// to the left-multiplicative retraction tangents of both poses and the
// patch inverse depth. Tangent ordering matches Tangent: translation
// first, then rotation.
ReprojectionJacobians reprojection_jacobians(const Pose& pose_i, const Pose& pose_j,
                                             const Intrinsics& K, const Patch& patch);

}  // namespace pvo
