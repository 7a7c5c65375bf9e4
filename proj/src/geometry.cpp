#include "softrecon/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace softrecon::geom {

namespace {

// Largest-eigenvalue eigenvector of a symmetric 4x4 by cyclic Jacobi sweeps.
// Self-contained so the transform solve does not depend on any external
// eigensolver's convergence behavior.
Eigen::Vector4d dominant_eigenvector_sym4(Eigen::Matrix4d a) {
  Eigen::Matrix4d v = Eigen::Matrix4d::Identity();
  constexpr int kMaxSweeps = 100;
  constexpr double kTol = 1e-12;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < 4; ++p)
      for (int q = p + 1; q < 4; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= kTol * std::max(1.0, a.norm())) break;

    for (int p = 0; p < 4; ++p) {
      for (int q = p + 1; q < 4; ++q) {
        if (std::abs(a(p, q)) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Eigen::Matrix4d j = Eigen::Matrix4d::Identity();
        j(p, p) = c;
        j(q, q) = c;
        j(p, q) = s;
        j(q, p) = -s;
        a = j.transpose() * a * j;
        v = v * j;
      }
    }
  }

  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (a(i, i) > a(best, best)) best = i;
  Eigen::Vector4d q = v.col(best);
  // Fix the sign so results are reproducible bit for bit.
  int big = 0;
  for (int i = 1; i < 4; ++i)
    if (std::abs(q[i]) > std::abs(q[big])) big = i;
  if (q[big] < 0) q = -q;
  return q.normalized();
}

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z;
  return r;
}

}  // namespace

bool Point3::finite() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
}

Point3 operator+(const Point3& a, const Point3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Point3 operator-(const Point3& a, const Point3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }

double distance(const Point3& a, const Point3& b) { return (a.vec() - b.vec()).norm(); }

void PointSet::push_back(std::string id, Point3 p) {
  ids.push_back(std::move(id));
  points.push_back(p);
}

const Point3* PointSet::find(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return &points[i];
  return nullptr;
}

void PointSet::validate() const {
  if (points.size() != ids.size())
    throw SizeMismatch("point/id count mismatch");
  if (points.size() < 3)
    throw SizeMismatch("point set needs at least 3 markers, got " + std::to_string(points.size()));
  std::set<std::string> seen(ids.begin(), ids.end());
  if (seen.size() != ids.size()) throw SizeMismatch("duplicate marker ids");
}

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

double wrap_angle_deg(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w > 180.0) w -= 360.0;
  if (w <= -180.0) w += 360.0;
  return w;
}

RotationMatrix RotationMatrix::about_x_deg(double deg) {
  const double c = std::cos(deg_to_rad(deg)), s = std::sin(deg_to_rad(deg));
  RotationMatrix r;
  r.m << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

RotationMatrix RotationMatrix::about_y_deg(double deg) {
  const double c = std::cos(deg_to_rad(deg)), s = std::sin(deg_to_rad(deg));
  RotationMatrix r;
  r.m << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

RotationMatrix RotationMatrix::about_z_deg(double deg) {
  const double c = std::cos(deg_to_rad(deg)), s = std::sin(deg_to_rad(deg));
  RotationMatrix r;
  r.m << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

bool RotationMatrix::orthonormal(double tol) const {
  if (!m.allFinite()) return false;
  const double ortho = (m.transpose() * m - Eigen::Matrix3d::Identity()).norm();
  return ortho <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

RotationMatrix operator*(const RotationMatrix& a, const RotationMatrix& b) {
  return {a.m * b.m};
}

RigidTransform inverse(const RigidTransform& t) {
  RigidTransform inv;
  inv.rotation.m = t.rotation.m.transpose();
  inv.translation = -(inv.rotation.m * t.translation);
  return inv;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform c;
  c.rotation.m = a.rotation.m * b.rotation.m;
  c.translation = a.rotation.m * b.translation + a.translation;
  return c;
}

RigidTransform solve_rigid_transform(const PointSet& src, const PointSet& dst) {
  src.validate();
  dst.validate();
  const std::size_t n = src.size();
  if (n != dst.size()) throw SizeMismatch("source and destination sizes differ");
  for (std::size_t i = 0; i < n; ++i)
    if (src.ids[i] != dst.ids[i])
      throw SizeMismatch("marker id order differs at index " + std::to_string(i));

  Eigen::Vector3d c_src = Eigen::Vector3d::Zero(), c_dst = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    c_src += src.points[i].vec();
    c_dst += dst.points[i].vec();
  }
  c_src /= double(n);
  c_dst /= double(n);

  Eigen::MatrixXd centered(3, n);
  Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d a = src.points[i].vec() - c_src;
    const Eigen::Vector3d b = dst.points[i].vec() - c_dst;
    centered.col(i) = a;
    s += a * b.transpose();
  }

  // Collinearity: second singular value of the centered source matrix. The
  // absolute floor catches all-coincident sets, where sv[0] is itself zero.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto& sv = svd.singularValues();
  if (sv[0] <= 0.0 || sv[1] < 1e-9 * sv[0])
    throw CollinearPoints("source markers are collinear");

  const double sxx = s(0, 0), sxy = s(0, 1), sxz = s(0, 2);
  const double syx = s(1, 0), syy = s(1, 1), syz = s(1, 2);
  const double szx = s(2, 0), szy = s(2, 1), szz = s(2, 2);
  Eigen::Matrix4d n4;
  n4 << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
      syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
      szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
      sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;

  const Eigen::Vector4d q = dominant_eigenvector_sym4(n4);

  RigidTransform t;
  t.rotation.m = quaternion_to_matrix(q);
  t.translation = c_dst - t.rotation.m * c_src;
  return t;
}

Point3 apply_transform(const RigidTransform& t, const Point3& p) {
  return Point3::from(t.rotation.m * p.vec() + t.translation);
}

PointSet apply_transform(const RigidTransform& t, const PointSet& ps) {
  PointSet out;
  out.ids = ps.ids;
  out.points.reserve(ps.points.size());
  for (const auto& p : ps.points) out.points.push_back(apply_transform(t, p));
  return out;
}

EulerAngles rotation_to_tait_bryan(const RotationMatrix& r) {
  const auto& m = r.m;
  EulerAngles e;
  const double sp = std::clamp(-m(2, 0), -1.0, 1.0);
  e.pitch = rad_to_deg(std::asin(sp));
  if (std::abs(std::abs(sp) - 1.0) < 1e-7) {
    // Gimbal lock: yaw and roll share an axis; put everything in yaw.
    e.roll = 0.0;
    e.yaw = rad_to_deg(std::atan2(-m(0, 1), m(1, 1)));
  } else {
    e.yaw = rad_to_deg(std::atan2(m(1, 0), m(0, 0)));
    e.roll = rad_to_deg(std::atan2(m(2, 1), m(2, 2)));
  }
  return e;
}

RotationMatrix tait_bryan_to_rotation(const EulerAngles& e) {
  return RotationMatrix::about_z_deg(e.yaw) * RotationMatrix::about_y_deg(e.pitch) *
         RotationMatrix::about_x_deg(e.roll);
}

RotationMatrix nearest_rotation(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) throw DegenerateMatrix("matrix has non-finite entries");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()[2] < 1e-9)
    throw DegenerateMatrix("matrix is rank deficient within 1e-9");
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (u * v.transpose()).determinant() < 0 ? -1.0 : 1.0);
  return {u * d.asDiagonal() * v.transpose()};
}

EulerAngles rotation_error(const RotationMatrix& pred, const RotationMatrix& truth) {
  const EulerAngles a = rotation_to_tait_bryan(pred);
  const EulerAngles b = rotation_to_tait_bryan(truth);
  EulerAngles e;
  e.yaw = std::abs(wrap_angle_deg(a.yaw - b.yaw));
  e.pitch = std::abs(wrap_angle_deg(a.pitch - b.pitch));
  e.roll = std::abs(wrap_angle_deg(a.roll - b.roll));
  return e;
}

double transform_energy(const PointSet& src, const PointSet& dst, const RigidTransform& t) {
  double e = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Eigen::Vector3d r =
        dst.points[i].vec() - (t.rotation.m * src.points[i].vec() + t.translation);
    e += r.squaredNorm();
  }
  return e;
}

}  // namespace softrecon::geom
