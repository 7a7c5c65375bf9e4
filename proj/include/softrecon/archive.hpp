#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "softrecon/bezier.hpp"
#include "softrecon/dataset.hpp"

namespace softrecon::data {

/// One split of a prepared dataset. truth rows (simulator ground truth) and
/// marker frames (membrane eval reference) align with `samples`; truth is
/// 0 x 0 and markers empty when the sidecars were not written.
struct RoleData {
  std::vector<WindowedSample> samples;
  Eigen::MatrixXd truth;
  std::vector<geom::PointSet> markers;
};

/// A prepared dataset directory: role CSVs, normalization stats, drop
/// accounting, task metadata, and optional truth/marker sidecars.
struct DatasetArchive {
  std::string task;  // "joint" | "membrane"
  int channels = 12;
  int window_len = 10;
  int label_dim = 12;
  int degree_u = 4;  // membrane
  int degree_v = 4;
  bezier::MarkerParamTable uv_table;       // membrane
  std::map<std::string, Role> batch_roles;
  std::map<std::string, DropReport> batch_drops;
  NormStats stats;

  RoleData train, validation, test;

  DropReport total_drops() const;
  const RoleData& role(Role r) const;
};

void write_archive(const DatasetArchive& archive, const std::string& dir);
DatasetArchive load_archive(const std::string& dir);

/// Stacked raw inputs / labels, one sample per row.
Eigen::MatrixXd inputs_matrix(const std::vector<WindowedSample>& samples);
Eigen::MatrixXd labels_matrix(const std::vector<WindowedSample>& samples);

/// t_us -> label vector read from a simulator truth.csv (columns p0..pK;
/// extra columns are ignored).
std::map<std::int64_t, Eigen::VectorXd> read_truth_csv(const std::string& path,
                                                       int label_dim);

}  // namespace softrecon::data
