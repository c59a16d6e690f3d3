#pragma once

#include <Eigen/Dense>

namespace handtwin {

/// Proper rigid motion: rotation then translation, meters.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform rotation_about(const Eigen::Vector3d& unit_axis, double angle) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(angle, unit_axis).toRotationMatrix();
    return t;
  }
  static RigidTransform translation_by(const Eigen::Vector3d& v) {
    RigidTransform t;
    t.translation = v;
    return t;
  }

  RigidTransform operator*(const RigidTransform& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    RigidTransform t;
    t.rotation = rotation.transpose();
    t.translation = -(t.rotation * translation);
    return t;
  }

  /// RᵀR = I and det R = +1 within tol.
  bool is_proper(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }

  bool operator==(const RigidTransform& o) const {
    return rotation == o.rotation && translation == o.translation;
  }
};

}  // namespace handtwin
