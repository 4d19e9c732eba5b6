#include "pvo/camera.hpp"

#include <algorithm>
#include <stdexcept>

namespace pvo {

Intrinsics::Intrinsics(double fx_, double fy_, double cx_, double cy_)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
    if (fx <= 0 || fy <= 0) {
        throw std::invalid_argument("intrinsics: focal lengths must be positive");
    }
}

Patch Patch::make(int source_frame, const Vec2& centroid, int width, double inverse_depth) {
    if (width < 1) throw std::invalid_argument("patch: width must be >= 1");
    if (inverse_depth < 0) throw std::invalid_argument("patch: inverse depth must be >= 0");
    Patch patch;
    patch.source_frame = source_frame;
    patch.width = width;
    patch.inverse_depth = inverse_depth;
    patch.x.reserve(width * width);
    patch.y.reserve(width * width);
    const double half = 0.5 * (width - 1);
    for (int row = 0; row < width; ++row) {
        for (int col = 0; col < width; ++col) {
            patch.x.push_back(centroid.x() + col - half);
            patch.y.push_back(centroid.y() + row - half);
        }
    }
    return patch;
}

Vec2 Patch::center() const {
    if (width % 2 == 1) {
        const int mid = size() / 2;
        return Vec2(x[mid], y[mid]);
    }
    double sx = 0, sy = 0;
    for (int k = 0; k < size(); ++k) {
        sx += x[k];
        sy += y[k];
    }
    return Vec2(sx / size(), sy / size());
}

PatchReprojection reproject_patch(const Pose& pose_i, const Pose& pose_j, const Intrinsics& K,
                                  const Patch& patch) {
    PatchReprojection out;
    out.points.reserve(patch.size());

    if (pose_i.bitwise_equal(pose_j)) {
        for (int k = 0; k < patch.size(); ++k) {
            out.points.emplace_back(patch.x[k], patch.y[k]);
        }
        return out;
    }

    const Pose relative = compose(pose_j, inverse(pose_i));
    const Mat3 r = relative.rotation_matrix();
    const Vec3 t_scaled = relative.translation() * patch.inverse_depth;

    for (int k = 0; k < patch.size(); ++k) {
        const Vec3 ray = K.unproject(Vec2(patch.x[k], patch.y[k]));
        const Vec3 q = r * ray + t_scaled;
        if (q.z() <= kDepthEpsilon) out.behind_camera = true;
        const double z = std::max(q.z(), kDepthEpsilon);
        out.points.emplace_back(K.fx * q.x() / z + K.cx, K.fy * q.y() / z + K.cy);
    }
    return out;
}

ReprojectionJacobians reprojection_jacobians(const Pose& pose_i, const Pose& pose_j,
                                             const Intrinsics& K, const Patch& patch) {
    const Pose relative = compose(pose_j, inverse(pose_i));
    const Mat3 r = relative.rotation_matrix();
    const Vec3 t = relative.translation();
    const double d = patch.inverse_depth;

    const Vec3 ray = K.unproject(patch.center());
    const Vec3 q = r * ray + t * d;

    ReprojectionJacobians jac;
    jac.behind_camera = q.z() <= kDepthEpsilon;
    const double z = std::max(q.z(), kDepthEpsilon);

    jac.center = Vec2(K.fx * q.x() / z + K.cx, K.fy * q.y() / z + K.cy);

    Eigen::Matrix<double, 2, 3> d_pixel_d_q;
    d_pixel_d_q << K.fx / z, 0, -K.fx * q.x() / (z * z),
                   0, K.fy / z, -K.fy * q.y() / (z * z);

    // q = R_ji * ray + t_ji * d with left-multiplicative pose increments:
    //   T_j <- exp(eps) T_j gives dq = eps_trans * d - [q]x eps_rot
    //   T_i <- exp(eps) T_i gives dq = -R_ji (eps_trans * d - [ray]x eps_rot)
    Eigen::Matrix<double, 3, 6> d_q_d_xi_j;
    d_q_d_xi_j.leftCols<3>() = d * Mat3::Identity();
    d_q_d_xi_j.rightCols<3>() = -skew(q);

    Eigen::Matrix<double, 3, 6> d_q_d_xi_i;
    d_q_d_xi_i.leftCols<3>() = -d * r;
    d_q_d_xi_i.rightCols<3>() = r * skew(ray);

    jac.d_pose_j = d_pixel_d_q * d_q_d_xi_j;
    jac.d_pose_i = d_pixel_d_q * d_q_d_xi_i;
    jac.d_inverse_depth = d_pixel_d_q * t;
    return jac;
}

}  // namespace pvo
