#pragma once

#include <string>
#include <vector>

#include "softrecon/geometry.hpp"

namespace softrecon::bezier {

struct UV {
  double u = 0.0;
  double v = 0.0;
};

/// (m+1) x (n+1) control points, row-major over (i, j) with i along u.
struct ControlGrid {
  int degree_u = 4;
  int degree_v = 4;
  std::vector<geom::Point3> points;

  int rows() const { return degree_u + 1; }
  int cols() const { return degree_v + 1; }
  geom::Point3& at(int i, int j) { return points[std::size_t(i) * cols() + j]; }
  const geom::Point3& at(int i, int j) const { return points[std::size_t(i) * cols() + j]; }
  static ControlGrid zeros(int degree_u, int degree_v);
  void validate() const;  // 1 <= degrees <= 8, counts match, finite
};

struct BezierSurface {
  ControlGrid grid;
};

struct MarkerParamEntry {
  std::string id;
  UV uv;
};

/// Frozen per-marker surface parameters, assigned once from the flat pose.
struct MarkerParamTable {
  std::vector<MarkerParamEntry> entries;
  int degree_u = 4;
  int degree_v = 4;

  const UV* find(const std::string& id) const;
  void validate() const;  // unique ids, N >= (m+1)(n+1)
};

struct Rect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
};

/// Bernstein basis value B_{i,m}(u). Throws IndexOutOfRange unless 0 <= i <= m.
double bernstein(int i, int m, double u);

geom::Point3 evaluate_surface(const BezierSurface& s, const UV& p);

/// uv from the marker's planar position in the flat pose: u spans x across
/// `bounds`, v spans y. Positions up to 1 mm outside are clamped into [0,1].
/// Throws DegenerateBounds when a side is under 1 mm.
MarkerParamTable assign_uv(const geom::PointSet& flat_markers, const Rect& bounds,
                           int degree_u, int degree_v);

struct FitResult {
  BezierSurface surface;
  double residual_rms_mm = 0.0;  // sqrt(mean squared marker distance)
};

/// Least-squares control grid for the captured markers at their frozen uv
/// parameters. QR on the tensor design matrix, one factorization for all
/// three coordinates. Throws RankDeficient when the design matrix loses rank.
FitResult fit_surface(const geom::PointSet& markers, const MarkerParamTable& params,
                      int degree_u, int degree_v);

/// Row-major res_u x res_v sampling at uniform parameters.
std::vector<geom::Point3> sample_grid(const BezierSurface& s, int res_u, int res_v);

struct ResidualReport {
  std::vector<std::string> ids;
  std::vector<double> distances_mm;
  double mean_mm = 0.0;
  double std_mm = 0.0;
  double max_mm = 0.0;
};

/// Distance from each captured marker to the surface point at its uv.
/// Throws MissingMarker when the table lacks an entry.
ResidualReport fitting_residual(const BezierSurface& s, const geom::PointSet& markers,
                                const MarkerParamTable& params);

}  // namespace softrecon::bezier
