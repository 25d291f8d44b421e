#pragma once

// Rigid-transform algebra and pinhole projection.
//
// Frame naming follows the A_T_B convention: a transform named
// world_T_cam maps points expressed in the camera frame into the world
// frame. Camera frame is +z forward, +x right, +y down; pixels have their
// origin at the top-left corner.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ars/error.hpp"

namespace ars {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Rotations whose |R^T R - I| exceeds this (max entry) are rejected.
inline constexpr double kRotationRejectTolerance = 1e-6;
/// Below this deviation a rotation is stored untouched.
inline constexpr double kRotationExactTolerance = 1e-12;

/// Largest absolute entry of R^T R - I.
inline double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

/// Closest rotation in the Frobenius sense (orthogonal polar factor).
/// Assumes det(m) > 0.
inline Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  /// Validating constructor. Rotations within kRotationRejectTolerance of
  /// orthonormal are snapped to the nearest rotation; anything else,
  /// reflections included, raises InvalidPose.
  static RigidTransform from_rotation_translation(const Mat3& rotation, const Vec3& translation) {
    if (!rotation.allFinite() || !translation.allFinite())
      throw Error(ErrorCode::InvalidPose, "non-finite pose entries");
    const double err = orthonormality_error(rotation);
    if (err > kRotationRejectTolerance)
      throw Error(ErrorCode::InvalidPose,
                  "rotation is not orthonormal (deviation " + std::to_string(err) + ")");
    if (rotation.determinant() <= 0.0)
      throw Error(ErrorCode::InvalidPose, "rotation has negative determinant (reflection)");
    if (err <= kRotationExactTolerance) return RigidTransform(rotation, translation);
    return RigidTransform(nearest_rotation(rotation), translation);
  }

  /// From a 4x4 homogeneous matrix; the last row must be (0,0,0,1).
  static RigidTransform from_matrix(const Mat4& m) {
    if (!m.allFinite()) throw Error(ErrorCode::InvalidPose, "non-finite pose entries");
    const Eigen::RowVector4d last = m.row(3);
    if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > kRotationRejectTolerance)
      throw Error(ErrorCode::InvalidPose, "homogeneous matrix last row must be 0 0 0 1");
    return from_rotation_translation(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
  }

  static RigidTransform from_quaternion(const Eigen::Quaterniond& q, const Vec3& translation) {
    const double n = q.norm();
    if (!(n > 1e-12) || !std::isfinite(n))
      throw Error(ErrorCode::InvalidPose, "quaternion has zero or non-finite norm");
    return RigidTransform(q.normalized().toRotationMatrix(), translation);
  }

  static RigidTransform translate(double x, double y, double z) {
    return RigidTransform(Mat3::Identity(), Vec3(x, y, z));
  }

  static RigidTransform from_axis_angle(const Vec3& axis, double angle_rad,
                                        const Vec3& translation = Vec3::Zero()) {
    return from_quaternion(Eigen::Quaterniond(Eigen::AngleAxisd(angle_rad, axis.normalized())),
                           translation);
  }

  static RigidTransform rot_z(double angle_rad, const Vec3& translation = Vec3::Zero()) {
    return from_axis_angle(Vec3::UnitZ(), angle_rad, translation);
  }

  [[nodiscard]] const Mat3& rotation() const noexcept { return rotation_; }
  [[nodiscard]] const Vec3& translation() const noexcept { return translation_; }

  [[nodiscard]] Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  [[nodiscard]] Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation_); }

  [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }

  friend RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
  friend RigidTransform invert(const RigidTransform& t);

 private:
  RigidTransform(Mat3 rotation, Vec3 translation)
      : rotation_(std::move(rotation)), translation_(std::move(translation)) {}

  Mat3 rotation_;
  Vec3 translation_;
};

/// X_T_Z = X_T_Y * Y_T_Z.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform(a.rotation_ * b.rotation_, a.rotation_ * b.translation_ + a.translation_);
}

inline RigidTransform invert(const RigidTransform& t) {
  const Mat3 rt = t.rotation_.transpose();
  return RigidTransform(rt, -rt * t.translation_);
}

inline std::vector<Vec3> transform_points(const RigidTransform& t, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(t.apply(p));
  return out;
}

/// Pinhole intrinsics, no distortion.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  bool operator==(const CameraModel&) const = default;
};

inline void validate(const CameraModel& cam) {
  const bool finite = std::isfinite(cam.fx) && std::isfinite(cam.fy) && std::isfinite(cam.cx) &&
                      std::isfinite(cam.cy);
  if (!finite || !(cam.fx > 0.0) || !(cam.fy > 0.0) || cam.width <= 0 || cam.height <= 0)
    throw Error(ErrorCode::InvalidCamera, "camera requires fx, fy > 0 and positive image size");
}

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;

  bool operator==(const PixelPoint&) const = default;
};

/// Projects a camera-frame point. Points with z <= 0 raise DegenerateDepth;
/// callers clip against a near plane first.
inline PixelPoint project_point(const CameraModel& cam, const Vec3& p_cam) {
  if (!(p_cam.z() > 0.0) || !p_cam.allFinite())
    throw Error(ErrorCode::DegenerateDepth, "point is not in front of the camera");
  return {cam.fx * p_cam.x() / p_cam.z() + cam.cx, cam.fy * p_cam.y() / p_cam.z() + cam.cy};
}

}  // namespace ars
