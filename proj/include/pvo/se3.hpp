#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace pvo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

// 6-dof local parameterization of SE(3): translational part first,
// rotational part as an axis-angle vector in radians.
struct Tangent {
    Vec3 translational = Vec3::Zero();
    Vec3 rotational = Vec3::Zero();

    Tangent() = default;
    Tangent(const Vec3& trans, const Vec3& rot) : translational(trans), rotational(rot) {}
    explicit Tangent(const Vec6& xi) : translational(xi.head<3>()), rotational(xi.tail<3>()) {}

    Vec6 vector() const {
        Vec6 xi;
        xi << translational, rotational;
        return xi;
    }
    double norm() const { return vector().norm(); }
};

// Rigid body transform, element of SE(3). Maps world points into the
// camera frame: x_cam = R * x_world + t. Stored as a unit quaternion
// plus translation; the quaternion is renormalized after every
// composing operation.
class Pose {
  public:
    Pose() : q_(Quat::Identity()), t_(Vec3::Zero()) {}
    Pose(const Quat& q, const Vec3& t) : q_(q.normalized()), t_(t) {}

    static Pose identity() { return Pose(); }

    const Quat& rotation() const { return q_; }
    const Vec3& translation() const { return t_; }

    Vec3 apply(const Vec3& p_world) const { return q_ * p_world + t_; }
    Vec3 operator*(const Vec3& p_world) const { return apply(p_world); }

    Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }
    Mat4 matrix() const;

    bool bitwise_equal(const Pose& other) const {
        return q_.coeffs() == other.q_.coeffs() && t_ == other.t_;
    }

  private:
    Quat q_;
    Vec3 t_;
};

Mat3 skew(const Vec3& v);

// SE(3) exponential map. exp of the zero twist is the identity pose; the
// small-angle branch is handled with a series expansion.
Pose exp(const Tangent& xi);

// Principal-branch inverse of exp. Throws std::domain_error when the
// rotation angle is within 1e-6 of pi (branch cut).
Tangent log(const Pose& pose);

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& a);

// Solver retraction chart: retract(a, xi) = exp(xi) * a.
Pose retract(const Pose& a, const Tangent& xi);

// Rotation angle in [0, pi] and translation distance between two poses,
// measured on a * inverse(b).
double rotation_angle(const Pose& a);
double pose_distance(const Pose& a, const Pose& b, double* rotation_angle_out = nullptr);

}  // namespace pvo
