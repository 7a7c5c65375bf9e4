#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "softrecon/errors.hpp"

namespace softrecon::geom {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Eigen::Vector3d vec() const { return {x, y, z}; }
  static Point3 from(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
  bool finite() const;
};

Point3 operator+(const Point3& a, const Point3& b);
Point3 operator-(const Point3& a, const Point3& b);
double distance(const Point3& a, const Point3& b);

/// An ordered set of labelled markers. Order of `points` and `ids` match.
struct PointSet {
  std::vector<Point3> points;
  std::vector<std::string> ids;

  std::size_t size() const { return points.size(); }
  void push_back(std::string id, Point3 p);
  const Point3* find(const std::string& id) const;
  /// Throws SizeMismatch unless |points| == |ids| >= 3 with unique ids.
  void validate() const;
};

struct RotationMatrix {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

  static RotationMatrix identity() { return {}; }
  static RotationMatrix about_x_deg(double deg);
  static RotationMatrix about_y_deg(double deg);
  static RotationMatrix about_z_deg(double deg);

  /// R^T R = I and det = +1, both within tol (Frobenius).
  bool orthonormal(double tol = 1e-9) const;
  RotationMatrix transposed() const { return {m.transpose()}; }
};

RotationMatrix operator*(const RotationMatrix& a, const RotationMatrix& b);

struct RigidTransform {
  RotationMatrix rotation;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();  // mm

  static RigidTransform identity() { return {}; }
};

RigidTransform inverse(const RigidTransform& t);
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);  // a after b

/// Intrinsic z-y'-x'' (yaw, pitch, roll) angles in degrees.
/// yaw, roll in (-180, 180], pitch in [-90, 90].
struct EulerAngles {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

/// Least-squares rigid transform src -> dst via the unit-quaternion
/// eigen-formulation. Correspondence comes from matching id order.
/// Throws SizeMismatch on count/id disagreement, CollinearPoints when the
/// centered source spans less than a plane.
RigidTransform solve_rigid_transform(const PointSet& src, const PointSet& dst);

Point3 apply_transform(const RigidTransform& t, const Point3& p);
PointSet apply_transform(const RigidTransform& t, const PointSet& ps);

/// Decompose into intrinsic yaw-pitch-roll, degrees. At gimbal lock
/// (|pitch| = 90 deg within 1e-7) roll is set to 0 by convention.
EulerAngles rotation_to_tait_bryan(const RotationMatrix& r);

/// Recompose Rz(yaw) * Ry(pitch) * Rx(roll), degrees in.
RotationMatrix tait_bryan_to_rotation(const EulerAngles& e);

/// Closest rotation to an arbitrary 3x3 matrix in the Frobenius norm
/// (polar projection). Throws DegenerateMatrix when the smallest singular
/// value falls under 1e-9.
RotationMatrix nearest_rotation(const Eigen::Matrix3d& m);

/// Component-wise |euler(pred) - euler(truth)| with wrap-around on
/// (-180, 180], so 179.5 vs -179.5 is a 1 degree error.
EulerAngles rotation_error(const RotationMatrix& pred, const RotationMatrix& truth);

/// Sum of squared distances |dst_i - (R src_i + T)|^2; the energy the solver
/// minimizes.
double transform_energy(const PointSet& src, const PointSet& dst, const RigidTransform& t);

double deg_to_rad(double deg);
double rad_to_deg(double rad);
/// Wrap an angle difference into (-180, 180].
double wrap_angle_deg(double deg);

}  // namespace softrecon::geom
