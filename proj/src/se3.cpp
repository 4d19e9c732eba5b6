#include "pvo/se3.hpp"

#include <cmath>
#include <stdexcept>

namespace pvo {

namespace {

constexpr double kSmallAngle = 1e-8;
constexpr double kBranchCutMargin = 1e-6;

}  // namespace

Mat4 Pose::matrix() const {
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = q_.toRotationMatrix();
    m.block<3, 1>(0, 3) = t_;
    return m;
}

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

Pose exp(const Tangent& xi) {
    const Vec3& omega = xi.rotational;
    const double theta2 = omega.squaredNorm();
    const double theta = std::sqrt(theta2);

    Quat q;
    Mat3 v;
    if (theta < kSmallAngle) {
        // sin(t/2)/t -> 1/2, V -> I + 1/2 [w]x + 1/6 [w]x^2
        q = Quat(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
        const Mat3 w = skew(omega);
        v = Mat3::Identity() + 0.5 * w + (1.0 / 6.0) * w * w;
    } else {
        const double half = 0.5 * theta;
        const Vec3 axis_scaled = (std::sin(half) / theta) * omega;
        q = Quat(std::cos(half), axis_scaled.x(), axis_scaled.y(), axis_scaled.z());
        const Mat3 w = skew(omega);
        const double a = (1.0 - std::cos(theta)) / theta2;
        const double b = (theta - std::sin(theta)) / (theta2 * theta);
        v = Mat3::Identity() + a * w + b * w * w;
    }
    return Pose(q, v * xi.translational);
}

Tangent log(const Pose& pose) {
    Quat q = pose.rotation();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();

    const double vec_norm = q.vec().norm();
    const double theta = 2.0 * std::atan2(vec_norm, q.w());
    if (theta >= M_PI - kBranchCutMargin) {
        throw std::domain_error("se3 log: rotation angle within 1e-6 of pi");
    }

    Vec3 omega;
    if (theta < kSmallAngle || vec_norm < kSmallAngle) {
        omega = 2.0 * q.vec();
    } else {
        omega = (theta / vec_norm) * q.vec();
    }

    const double theta2 = omega.squaredNorm();
    Mat3 v_inv;
    const Mat3 w = skew(omega);
    if (theta2 < kSmallAngle * kSmallAngle) {
        v_inv = Mat3::Identity() - 0.5 * w + (1.0 / 12.0) * w * w;
    } else {
        const double t = std::sqrt(theta2);
        const double c = (1.0 - t * std::sin(t) / (2.0 * (1.0 - std::cos(t)))) / theta2;
        v_inv = Mat3::Identity() - 0.5 * w + c * w * w;
    }
    return Tangent(v_inv * pose.translation(), omega);
}

Pose compose(const Pose& a, const Pose& b) {
    return Pose(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

Pose inverse(const Pose& a) {
    const Quat q_inv = a.rotation().conjugate();
    return Pose(q_inv, -(q_inv * a.translation()));
}

Pose retract(const Pose& a, const Tangent& xi) {
    return compose(exp(xi), a);
}

double rotation_angle(const Pose& a) {
    Quat q = a.rotation();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return 2.0 * std::atan2(q.vec().norm(), q.w());
}

double pose_distance(const Pose& a, const Pose& b, double* rotation_angle_out) {
    const Pose delta = compose(a, inverse(b));
    if (rotation_angle_out) *rotation_angle_out = rotation_angle(delta);
    return delta.translation().norm();
}

}  // namespace pvo
