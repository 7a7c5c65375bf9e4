// softrecon._core: the reconstruction operations behind the CLI, exposed to
// python with numpy in/out. Shapes follow the C++ conventions: marker sets
// are N x 3 (mm), rotations 3 x 3, control grids (m+1)(n+1) x 3 row-major.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "softrecon/bezier.hpp"
#include "softrecon/dataset.hpp"
#include "softrecon/errors.hpp"
#include "softrecon/geometry.hpp"
#include "softrecon/io_util.hpp"
#include "softrecon/models.hpp"
#include "softrecon/version.hpp"

namespace py = pybind11;
using namespace softrecon;

namespace {

geom::PointSet point_set(const Eigen::MatrixXd& pts) {
  if (pts.cols() != 3) throw DimMismatch("points must be N x 3");
  geom::PointSet s;
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    s.push_back("m" + std::to_string(i), {pts(i, 0), pts(i, 1), pts(i, 2)});
  return s;
}

Eigen::MatrixXd to_matrix(const std::vector<geom::Point3>& pts) {
  Eigen::MatrixXd m(Eigen::Index(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i)
    m.row(Eigen::Index(i)) << pts[i].x, pts[i].y, pts[i].z;
  return m;
}

bezier::ControlGrid control_grid(const Eigen::MatrixXd& control, int degree_u,
                                 int degree_v) {
  bezier::ControlGrid g = bezier::ControlGrid::zeros(degree_u, degree_v);
  if (control.rows() != Eigen::Index(g.points.size()) || control.cols() != 3)
    throw DimMismatch("control must be (degree_u+1)*(degree_v+1) x 3");
  for (Eigen::Index i = 0; i < control.rows(); ++i)
    g.points[std::size_t(i)] = {control(i, 0), control(i, 1), control(i, 2)};
  return g;
}

bezier::MarkerParamTable uv_table(const Eigen::MatrixXd& uv, int degree_u, int degree_v) {
  if (uv.cols() != 2) throw DimMismatch("uv must be N x 2");
  bezier::MarkerParamTable t;
  t.degree_u = degree_u;
  t.degree_v = degree_v;
  for (Eigen::Index i = 0; i < uv.rows(); ++i)
    t.entries.push_back({"m" + std::to_string(i), {uv(i, 0), uv(i, 1)}});
  return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "soft-robot deformation sensing and reconstruction core";
  m.attr("__version__") = kVersion;

  py::register_exception<Error>(m, "Error");

  // ---- rigid geometry
  m.def(
      "solve_rigid",
      [](const Eigen::MatrixXd& src, const Eigen::MatrixXd& dst) {
        if (src.rows() != dst.rows()) throw DimMismatch("src/dst row counts differ");
        const geom::RigidTransform t =
            geom::solve_rigid_transform(point_set(src), point_set(dst));
        return py::make_tuple(t.rotation.m, t.translation);
      },
      py::arg("src"), py::arg("dst"),
      "Least-squares (R, t) with R @ src[i] + t ~ dst[i]; rows correspond.");

  m.def(
      "apply_rigid",
      [](const Eigen::Matrix3d& r, const Eigen::Vector3d& t, const Eigen::MatrixXd& pts) {
        geom::RigidTransform tf{{r}, t};
        return to_matrix(geom::apply_transform(tf, point_set(pts)).points);
      },
      py::arg("rotation"), py::arg("translation"), py::arg("points"));

  m.def(
      "nearest_rotation",
      [](const Eigen::Matrix3d& m_) { return geom::nearest_rotation(m_).m; },
      py::arg("matrix"), "Polar projection onto SO(3).");

  m.def(
      "rotation_to_tait_bryan",
      [](const Eigen::Matrix3d& r) {
        const geom::EulerAngles e = geom::rotation_to_tait_bryan({r});
        return py::make_tuple(e.yaw, e.pitch, e.roll);
      },
      py::arg("rotation"), "Intrinsic z-y'-x'' (yaw, pitch, roll), degrees.");

  m.def(
      "tait_bryan_to_rotation",
      [](double yaw, double pitch, double roll) {
        return geom::tait_bryan_to_rotation({yaw, pitch, roll}).m;
      },
      py::arg("yaw"), py::arg("pitch"), py::arg("roll"));

  m.def(
      "rotation_error",
      [](const Eigen::Matrix3d& pred, const Eigen::Matrix3d& truth) {
        const geom::EulerAngles e = geom::rotation_error({pred}, {truth});
        return py::make_tuple(e.yaw, e.pitch, e.roll);
      },
      py::arg("pred"), py::arg("truth"),
      "Component-wise wrapped |angle difference| in degrees.");

  // ---- Bezier surfaces
  m.def(
      "fit_surface",
      [](const Eigen::MatrixXd& points, const Eigen::MatrixXd& uv, int degree_u,
         int degree_v) {
        if (points.rows() != uv.rows()) throw DimMismatch("points/uv row counts differ");
        const bezier::FitResult fit = bezier::fit_surface(
            point_set(points), uv_table(uv, degree_u, degree_v), degree_u, degree_v);
        return py::make_tuple(to_matrix(fit.surface.grid.points), fit.residual_rms_mm);
      },
      py::arg("points"), py::arg("uv"), py::arg("degree_u") = 4, py::arg("degree_v") = 4,
      "Least-squares control grid; returns (control, residual_rms_mm).");

  m.def(
      "evaluate_surface",
      [](const Eigen::MatrixXd& control, int degree_u, int degree_v, double u, double v) {
        const bezier::BezierSurface s{control_grid(control, degree_u, degree_v)};
        const geom::Point3 p = bezier::evaluate_surface(s, {u, v});
        return Eigen::Vector3d(p.x, p.y, p.z);
      },
      py::arg("control"), py::arg("degree_u"), py::arg("degree_v"), py::arg("u"),
      py::arg("v"));

  m.def(
      "sample_grid",
      [](const Eigen::MatrixXd& control, int degree_u, int degree_v, int res) {
        const bezier::BezierSurface s{control_grid(control, degree_u, degree_v)};
        return to_matrix(bezier::sample_grid(s, res, res));
      },
      py::arg("control"), py::arg("degree_u"), py::arg("degree_v"), py::arg("res"),
      "Row-major res x res surface sampling, returned (res*res) x 3.");

  // ---- shape decoding
  m.def(
      "decode_joint",
      [](const Eigen::VectorXd& p) {
        const geom::RigidTransform t = model::decode_joint(p);
        return py::make_tuple(t.rotation.m, t.translation);
      },
      py::arg("prediction"),
      "12-entry prediction -> (R projected to SO(3), translation mm).");

  m.def(
      "decode_membrane",
      [](const Eigen::VectorXd& p, int degree_u, int degree_v) {
        const bezier::BezierSurface s = model::decode_membrane(p, degree_u, degree_v);
        return to_matrix(s.grid.points);
      },
      py::arg("prediction"), py::arg("degree_u") = 4, py::arg("degree_v") = 4);

  // ---- normalization + trained models
  py::class_<data::NormStats>(m, "NormStats")
      .def_property_readonly("mean",
                             [](const data::NormStats& s) { return s.mean; })
      .def_property_readonly("stddev",
                             [](const data::NormStats& s) { return s.stddev; })
      .def(
          "apply",
          [](const data::NormStats& s, const Eigen::MatrixXd& inputs) {
            return data::apply_normalizer(s, inputs, int(s.mean.size()));
          },
          py::arg("inputs"),
          "Z-scores raw windows (rows, step-major) per sensor channel.");

  m.def(
      "load_norm_stats",
      [](const std::string& path) { return data::norm_stats_from_json(io::read_file(path)); },
      py::arg("path"));

  py::class_<model::Regressor>(m, "Model")
      .def_property_readonly(
          "kind", [](const model::Regressor& r) { return model::to_string(r.config.kind); })
      .def_property_readonly("input_dim",
                             [](const model::Regressor& r) { return r.config.input_dim; })
      .def_property_readonly("output_dim",
                             [](const model::Regressor& r) { return r.config.output_dim; })
      .def_property_readonly("window_len",
                             [](const model::Regressor& r) { return r.config.window_len; })
      .def_property_readonly("channels",
                             [](const model::Regressor& r) { return r.config.channels; })
      .def_property_readonly(
          "norm_stats_digest",
          [](const model::Regressor& r) { return r.norm_stats_digest; })
      .def("predict", &model::Regressor::predict, py::arg("input"),
           "One normalized window in, one raw label vector out.")
      .def("predict_batch", &model::Regressor::predict_batch, py::arg("inputs"));

  m.def("load_model", &model::load_model, py::arg("path"));
}
