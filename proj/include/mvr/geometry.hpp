#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mvr/errors.hpp"

namespace mvr {

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;

// Column-per-point cloud in world coordinates (meters).
template <typename Scalar>
using PointCloud = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;
using PointCloudd = PointCloud<double>;

/// Wraps an angle into (-pi, pi].
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  constexpr Scalar kPi = std::numbers::pi_v<Scalar>;
  constexpr Scalar kTwoPi = 2 * std::numbers::pi_v<Scalar>;
  a = std::fmod(a, kTwoPi);
  if (a <= -kPi) a += kTwoPi;
  if (a > kPi) a -= kTwoPi;
  return a;
}

template <typename Scalar>
constexpr Scalar deg2rad(Scalar d) { return d * std::numbers::pi_v<Scalar> / 180; }
template <typename Scalar>
constexpr Scalar rad2deg(Scalar r) { return r * 180 / std::numbers::pi_v<Scalar>; }

/// Rigid transform in SE(3). Maps points of the source frame into the target
/// frame: p_target = R * p_source + t.
template <typename Scalar>
class Pose3 {
 public:
  Pose3() : rotation_(Matrix3<Scalar>::Identity()), translation_(Vector3<Scalar>::Zero()) {}
  Pose3(const Matrix3<Scalar>& rotation, const Vector3<Scalar>& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose3 identity() { return Pose3(); }

  static Pose3 from_matrix(const Matrix4<Scalar>& m) {
    return Pose3(m.template topLeftCorner<3, 3>(), m.template topRightCorner<3, 1>());
  }

  const Matrix3<Scalar>& rotation() const { return rotation_; }
  const Vector3<Scalar>& translation() const { return translation_; }

  Matrix4<Scalar> matrix() const {
    Matrix4<Scalar> m = Matrix4<Scalar>::Identity();
    m.template topLeftCorner<3, 3>() = rotation_;
    m.template topRightCorner<3, 1>() = translation_;
    return m;
  }

  Vector3<Scalar> operator*(const Vector3<Scalar>& p) const { return rotation_ * p + translation_; }

  template <typename Derived>
  PointCloud<Scalar> transform(const Eigen::MatrixBase<Derived>& points) const {
    PointCloud<Scalar> out = rotation_ * points;
    out.colwise() += translation_;
    return out;
  }

  Pose3 operator*(const Pose3& other) const {
    return Pose3(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
  }

  Pose3 inverse() const {
    const Matrix3<Scalar> rt = rotation_.transpose();
    return Pose3(rt, -rt * translation_);
  }

  // Orthonormal with det +1, to tolerance.
  bool is_rigid(Scalar tol = Scalar(1e-9)) const {
    const Matrix3<Scalar> e = rotation_.transpose() * rotation_ - Matrix3<Scalar>::Identity();
    return e.cwiseAbs().maxCoeff() <= tol && std::abs(rotation_.determinant() - 1) <= tol;
  }

  template <typename Other>
  Pose3<Other> cast() const {
    return Pose3<Other>(rotation_.template cast<Other>(), translation_.template cast<Other>());
  }

 private:
  Matrix3<Scalar> rotation_;
  Vector3<Scalar> translation_;
};

template <typename Scalar>
Pose3<Scalar> compose(const Pose3<Scalar>& a, const Pose3<Scalar>& b) { return a * b; }

template <typename Scalar>
Pose3<Scalar> invert(const Pose3<Scalar>& a) { return a.inverse(); }

using Pose3d = Pose3<double>;

/// Rotation about the table normal (world z) plus an in-plane translation.
template <typename Scalar>
class PlanarTransform {
 public:
  PlanarTransform() = default;
  PlanarTransform(Scalar yaw, Scalar tx, Scalar ty) : yaw_(wrap_angle(yaw)), tx_(tx), ty_(ty) {}

  Scalar yaw() const { return yaw_; }
  Scalar tx() const { return tx_; }
  Scalar ty() const { return ty_; }
  Vector2<Scalar> translation() const { return {tx_, ty_}; }

  Pose3<Scalar> lift() const {
    Matrix3<Scalar> r = Eigen::AngleAxis<Scalar>(yaw_, Vector3<Scalar>::UnitZ()).toRotationMatrix();
    return Pose3<Scalar>(r, Vector3<Scalar>(tx_, ty_, 0));
  }

  PlanarTransform operator*(const PlanarTransform& b) const {
    const Scalar c = std::cos(yaw_), s = std::sin(yaw_);
    return PlanarTransform(yaw_ + b.yaw_, c * b.tx_ - s * b.ty_ + tx_, s * b.tx_ + c * b.ty_ + ty_);
  }

  PlanarTransform inverse() const {
    const Scalar c = std::cos(yaw_), s = std::sin(yaw_);
    return PlanarTransform(-yaw_, -(c * tx_ + s * ty_), -(-s * tx_ + c * ty_));
  }

  Vector2<Scalar> apply(const Vector2<Scalar>& p) const {
    const Scalar c = std::cos(yaw_), s = std::sin(yaw_);
    return {c * p.x() - s * p.y() + tx_, s * p.x() + c * p.y() + ty_};
  }

 private:
  Scalar yaw_ = 0;
  Scalar tx_ = 0;
  Scalar ty_ = 0;
};

template <typename Scalar>
PlanarTransform<Scalar> compose(const PlanarTransform<Scalar>& a, const PlanarTransform<Scalar>& b) {
  return a * b;
}

template <typename Scalar>
PlanarTransform<Scalar> invert(const PlanarTransform<Scalar>& a) { return a.inverse(); }

/// Drops the out-of-plane part of a pose: yaw from the rotation's xy block,
/// translation from its x and y components.
template <typename Scalar>
PlanarTransform<Scalar> to_planar(const Pose3<Scalar>& p) {
  const auto& r = p.rotation();
  return PlanarTransform<Scalar>(std::atan2(r(1, 0), r(0, 0)), p.translation().x(),
                                 p.translation().y());
}

using PlanarTransformd = PlanarTransform<double>;

template <typename Scalar>
struct CameraIntrinsics {
  Scalar fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 0, height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && cx > 0 && cx < width && cy > 0 && cy < height;
  }

  Matrix3<Scalar> matrix() const {
    Matrix3<Scalar> k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
};

using CameraIntrinsicsd = CameraIntrinsics<double>;

/// A 3-vector of unit Euclidean norm.
template <typename Scalar>
class UnitVec3 {
 public:
  UnitVec3() : v_(Vector3<Scalar>::UnitZ()) {}

  // Normalizes `v`; throws DegenerateObservation for a (near) zero input.
  static UnitVec3 normalized(const Vector3<Scalar>& v, Scalar min_norm = Scalar(1e-12)) {
    const Scalar n = v.norm();
    if (!(n >= min_norm)) throw DegenerateObservation("cannot normalize a zero-length vector");
    UnitVec3 u;
    u.v_ = v / n;
    return u;
  }

  // Adopts `v` as is; for values that were unit when stored.
  static UnitVec3 from_unit(const Vector3<Scalar>& v) {
    UnitVec3 u;
    u.v_ = v;
    return u;
  }

  const Vector3<Scalar>& vec() const { return v_; }
  Scalar x() const { return v_.x(); }
  Scalar y() const { return v_.y(); }
  Scalar z() const { return v_.z(); }

  Scalar azimuth() const { return std::atan2(v_.y(), v_.x()); }
  Scalar polar() const { return std::acos(std::clamp(v_.z(), Scalar(-1), Scalar(1))); }

 private:
  Vector3<Scalar> v_;
};

using UnitVec3d = UnitVec3<double>;

template <typename Derived>
Vector3<typename Derived::Scalar> centroid(const Eigen::MatrixBase<Derived>& cloud) {
  return cloud.rowwise().mean();
}

/// Unit vector from the cloud's centroid toward the viewpoint position.
template <typename Scalar, typename Derived>
UnitVec3<Scalar> observation_vector(const Pose3<Scalar>& viewpoint,
                                    const Eigen::MatrixBase<Derived>& cloud) {
  if (cloud.cols() == 0) throw DegenerateObservation("observation vector of an empty cloud");
  const Vector3<Scalar> d = viewpoint.translation() - centroid(cloud);
  if (d.norm() < Scalar(1e-6)) {
    throw DegenerateObservation("viewpoint coincides with the cloud centroid");
  }
  return UnitVec3<Scalar>::normalized(d);
}

/// Norm of (azimuth difference wrapped into (-pi, pi], polar-angle difference).
/// Lies in [0, pi * sqrt(2)].
template <typename Scalar>
Scalar angular_distance(const UnitVec3<Scalar>& a, const UnitVec3<Scalar>& b) {
  const Scalar d_azimuth = wrap_angle(a.azimuth() - b.azimuth());
  const Scalar d_polar = a.polar() - b.polar();
  return std::hypot(d_azimuth, d_polar);
}

template <typename Scalar>
struct Projection {
  Scalar u, v, depth;
};

template <typename Scalar>
Projection<Scalar> project(const CameraIntrinsics<Scalar>& intr, const Pose3<Scalar>& world_to_cam,
                           const Vector3<Scalar>& point) {
  const Vector3<Scalar> pc = world_to_cam * point;
  if (pc.z() <= Scalar(1e-6)) throw BehindCamera("point is not in front of the camera");
  return {intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy, pc.z()};
}

template <typename Scalar>
Vector3<Scalar> back_project(const CameraIntrinsics<Scalar>& intr, const Pose3<Scalar>& cam_to_world,
                             Scalar u, Scalar v, Scalar depth) {
  const Vector3<Scalar> pc((u - intr.cx) / intr.fx * depth, (v - intr.cy) / intr.fy * depth, depth);
  return cam_to_world * pc;
}

/// Camera-in-world pose looking from `eye` at `target`. Camera axes follow
/// the pinhole convention: x right, y down, z forward.
template <typename Scalar>
Pose3<Scalar> look_at(const Vector3<Scalar>& eye, const Vector3<Scalar>& target,
                      Vector3<Scalar> up = Vector3<Scalar>::UnitZ()) {
  const Vector3<Scalar> z = (target - eye).normalized();
  if (z.cross(up).norm() < Scalar(1e-9)) up = Vector3<Scalar>::UnitY();
  const Vector3<Scalar> x = z.cross(up).normalized();
  const Vector3<Scalar> y = z.cross(x);
  Matrix3<Scalar> r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose3<Scalar>(r, eye);
}

template <typename Scalar>
struct PlanarityTolerance {
  Scalar max_tilt = deg2rad(Scalar(10));  // out-of-plane rotation, radians
  Scalar max_vertical = Scalar(0.02);     // meters
};
using PlanarityToleranced = PlanarityTolerance<double>;

template <typename Scalar>
struct PlanarError {
  Scalar rotation_deg;
  Scalar translation_cm;
};
using PlanarErrord = PlanarError<double>;

// Angle between the rotated z axis and the table normal.
template <typename Scalar>
Scalar tilt_angle(const Pose3<Scalar>& p) {
  return std::acos(std::clamp(p.rotation()(2, 2), Scalar(-1), Scalar(1)));
}

template <typename Scalar>
bool is_planar(const Pose3<Scalar>& p, const PlanarityTolerance<Scalar>& tol = {}) {
  return tilt_angle(p) <= tol.max_tilt && std::abs(p.translation().z()) <= tol.max_vertical;
}

template <typename Scalar>
PlanarError<Scalar> planar_error(const Pose3<Scalar>& estimate, const PlanarTransform<Scalar>& truth,
                                 const PlanarityTolerance<Scalar>& tol = {}) {
  if (!is_planar(estimate, tol)) {
    throw NonPlanarEstimate("estimate has out-of-plane rotation or vertical translation");
  }
  const PlanarTransform<Scalar> e = to_planar(estimate);
  const Scalar dyaw = std::abs(wrap_angle(e.yaw() - truth.yaw()));
  const Scalar dt = (e.translation() - truth.translation()).norm();
  return {rad2deg(dyaw), dt * 100};
}

}  // namespace mvr
