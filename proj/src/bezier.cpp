#include "softrecon/bezier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

namespace softrecon::bezier {

namespace {

// Pascal's triangle up to the maximum supported degree; exact in doubles.
constexpr int kMaxDegree = 8;

double binomial(int m, int i) {
  static const auto table = [] {
    std::array<std::array<double, kMaxDegree + 1>, kMaxDegree + 1> t{};
    for (int r = 0; r <= kMaxDegree; ++r) {
      t[r][0] = 1.0;
      for (int c = 1; c <= r; ++c)
        t[r][c] = t[r - 1][c - 1] + (c <= r - 1 ? t[r - 1][c] : 0.0);
    }
    return t;
  }();
  return table[m][i];
}

std::vector<double> basis_row(int degree, double u) {
  std::vector<double> b(degree + 1);
  for (int i = 0; i <= degree; ++i) b[i] = bernstein(i, degree, u);
  return b;
}

}  // namespace

ControlGrid ControlGrid::zeros(int degree_u, int degree_v) {
  ControlGrid g;
  g.degree_u = degree_u;
  g.degree_v = degree_v;
  g.points.assign(std::size_t(degree_u + 1) * (degree_v + 1), geom::Point3{});
  g.validate();
  return g;
}

void ControlGrid::validate() const {
  if (degree_u < 1 || degree_u > kMaxDegree || degree_v < 1 || degree_v > kMaxDegree)
    throw IndexOutOfRange("surface degrees must be in [1, 8]");
  if (points.size() != std::size_t(rows()) * cols())
    throw SizeMismatch("control point count does not match degrees");
  for (const auto& p : points)
    if (!p.finite()) throw Error("non-finite control point");
}

const UV* MarkerParamTable::find(const std::string& id) const {
  for (const auto& e : entries)
    if (e.id == id) return &e.uv;
  return nullptr;
}

void MarkerParamTable::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries)
    if (!seen.insert(e.id).second) throw SizeMismatch("duplicate marker id in uv table: " + e.id);
  const std::size_t need = std::size_t(degree_u + 1) * (degree_v + 1);
  if (entries.size() < need)
    throw RankDeficient("uv table has " + std::to_string(entries.size()) + " markers, need >= " +
                        std::to_string(need) + " for the configured degrees");
}

double bernstein(int i, int m, double u) {
  if (m < 1 || m > kMaxDegree) throw IndexOutOfRange("degree out of range");
  if (i < 0 || i > m) throw IndexOutOfRange("basis index out of range");
  // 0^0 = 1 at the endpoints.
  double a = 1.0, b = 1.0;
  for (int k = 0; k < i; ++k) a *= u;
  for (int k = 0; k < m - i; ++k) b *= 1.0 - u;
  return binomial(m, i) * a * b;
}

geom::Point3 evaluate_surface(const BezierSurface& s, const UV& p) {
  const auto& g = s.grid;
  const auto bu = basis_row(g.degree_u, p.u);
  const auto bv = basis_row(g.degree_v, p.v);
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (int i = 0; i <= g.degree_u; ++i)
    for (int j = 0; j <= g.degree_v; ++j) acc += bu[i] * bv[j] * g.at(i, j).vec();
  return geom::Point3::from(acc);
}

MarkerParamTable assign_uv(const geom::PointSet& flat_markers, const Rect& bounds,
                           int degree_u, int degree_v) {
  const double w = bounds.x_max - bounds.x_min;
  const double h = bounds.y_max - bounds.y_min;
  if (w < 1.0 || h < 1.0) throw DegenerateBounds("uv bounds narrower than 1 mm");

  MarkerParamTable table;
  table.degree_u = degree_u;
  table.degree_v = degree_v;
  for (std::size_t k = 0; k < flat_markers.size(); ++k) {
    const auto& p = flat_markers.points[k];
    UV uv{(p.x - bounds.x_min) / w, (p.y - bounds.y_min) / h};
    // Tolerate up to 1 mm outside the rectangle.
    if (uv.u < -1.0 / w || uv.u > 1.0 + 1.0 / w || uv.v < -1.0 / h || uv.v > 1.0 + 1.0 / h)
      throw DegenerateBounds("flat marker " + flat_markers.ids[k] + " lies outside the bounds");
    uv.u = std::clamp(uv.u, 0.0, 1.0);
    uv.v = std::clamp(uv.v, 0.0, 1.0);
    table.entries.push_back({flat_markers.ids[k], uv});
  }
  table.validate();
  return table;
}

FitResult fit_surface(const geom::PointSet& markers, const MarkerParamTable& params,
                      int degree_u, int degree_v) {
  const int ku = degree_u + 1, kv = degree_v + 1;
  const int cols = ku * kv;
  const Eigen::Index n = Eigen::Index(markers.size());
  if (n < cols)
    throw RankDeficient("need at least " + std::to_string(cols) + " markers for a " +
                        std::to_string(ku) + "x" + std::to_string(kv) + " grid");

  Eigen::MatrixXd a(n, cols);
  Eigen::MatrixXd rhs(n, 3);
  for (Eigen::Index k = 0; k < n; ++k) {
    const UV* uv = params.find(markers.ids[k]);
    if (!uv) throw MissingMarker("no uv entry for marker " + markers.ids[k]);
    const auto bu = basis_row(degree_u, uv->u);
    const auto bv = basis_row(degree_v, uv->v);
    for (int i = 0; i < ku; ++i)
      for (int j = 0; j < kv; ++j) a(k, i * kv + j) = bu[i] * bv[j];
    rhs.row(k) = markers.points[k].vec().transpose();
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  if (sv[cols - 1] < 1e-10 * sv[0])
    throw RankDeficient("design matrix is rank deficient (clustered uv values?)");

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd c = qr.solve(rhs);

  // Stationarity of the normal equations, relative to the data scale.
  const Eigen::MatrixXd grad = a.transpose() * (a * c - rhs);
  const double scale = std::max(1.0, (a.transpose() * rhs).norm());
  if (grad.norm() > 1e-8 * scale)
    throw Error("least-squares fit failed the stationarity check");

  FitResult out;
  out.surface.grid.degree_u = degree_u;
  out.surface.grid.degree_v = degree_v;
  out.surface.grid.points.resize(std::size_t(cols));
  for (int r = 0; r < cols; ++r)
    out.surface.grid.points[std::size_t(r)] = geom::Point3::from(c.row(r).transpose());
  out.surface.grid.validate();
  out.residual_rms_mm = std::sqrt((a * c - rhs).squaredNorm() / double(n));
  return out;
}

std::vector<geom::Point3> sample_grid(const BezierSurface& s, int res_u, int res_v) {
  if (res_u < 2 || res_v < 2) throw IndexOutOfRange("grid resolution must be >= 2");
  std::vector<geom::Point3> out;
  out.reserve(std::size_t(res_u) * res_v);
  for (int i = 0; i < res_u; ++i)
    for (int j = 0; j < res_v; ++j)
      out.push_back(evaluate_surface(s, {double(i) / (res_u - 1), double(j) / (res_v - 1)}));
  return out;
}

ResidualReport fitting_residual(const BezierSurface& s, const geom::PointSet& markers,
                                const MarkerParamTable& params) {
  ResidualReport rep;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t k = 0; k < markers.size(); ++k) {
    const UV* uv = params.find(markers.ids[k]);
    if (!uv) throw MissingMarker("no uv entry for marker " + markers.ids[k]);
    const double d = geom::distance(markers.points[k], evaluate_surface(s, *uv));
    rep.ids.push_back(markers.ids[k]);
    rep.distances_mm.push_back(d);
    sum += d;
    sum2 += d * d;
    rep.max_mm = std::max(rep.max_mm, d);
  }
  const double n = double(rep.distances_mm.size());
  if (n > 0) {
    rep.mean_mm = sum / n;
    rep.std_mm = std::sqrt(std::max(0.0, sum2 / n - rep.mean_mm * rep.mean_mm));
  }
  return rep;
}

}  // namespace softrecon::bezier
