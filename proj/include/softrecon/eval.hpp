#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "softrecon/bezier.hpp"
#include "softrecon/geometry.hpp"
#include "softrecon/models.hpp"

namespace softrecon::eval {

/// 30 uniform bins from 0 to the 99.5th percentile plus one overflow bin.
struct Histogram {
  std::vector<double> edges;  // 31 ascending edges for the uniform bins
  std::vector<long> counts;   // 31 entries; the last is the overflow bin

  long total() const;
};

Histogram make_histogram(const std::vector<double>& values);

/// One error target (yaw, pitch, roll, translation, or marker distance).
struct TargetStats {
  std::string name;              // e.g. "yaw_deg", "translation_mm", "marker_mm"
  double mean = 0.0;
  double stddev = 0.0;
  double max = 0.0;
  Histogram hist;
  std::vector<double> raw;       // per-sample errors, the dump source
};

TargetStats make_target(const std::string& name, std::vector<double> raw);

struct MetricReport {
  std::string model_id;
  std::string dataset_id;
  long samples = 0;                  // evaluated frames
  std::vector<TargetStats> targets;

  const TargetStats* find(const std::string& name) const;
};

/// Joint metrics: wrapped |Delta yaw/pitch/roll| in degrees and the magnitude
/// of the translation error vector in mm. y rows are raw 12-entry labels.
MetricReport eval_joint(const model::Regressor& reg, const Eigen::MatrixXd& x,
                        const Eigen::MatrixXd& y_truth, const std::string& model_id,
                        const std::string& dataset_id);

/// Membrane metric: distance from each captured marker to the predicted
/// surface point at its frozen uv. markers[i] pairs with x.row(i).
MetricReport eval_membrane(const model::Regressor& reg, const Eigen::MatrixXd& x,
                           const std::vector<geom::PointSet>& markers,
                           const bezier::MarkerParamTable& uv_table, int degree_u,
                           int degree_v, const std::string& model_id,
                           const std::string& dataset_id);

/// Everything the studies need from one prepared dataset archive.
struct EvalData {
  std::string dataset_id;
  std::string task;  // "joint" | "membrane"
  Eigen::MatrixXd x_train, y_train;
  Eigen::MatrixXd x_val, y_val;
  Eigen::MatrixXd x_test, y_test;

  // membrane only
  std::vector<geom::PointSet> train_markers, val_markers, test_markers;
  bezier::MarkerParamTable uv_table;
  int degree_u = 4;
  int degree_v = 4;
};

struct ComparisonRow {
  std::string label;  // model kind or ablation subset name
  MetricReport report;
  double train_seconds = 0.0;
};

/// Trains each config on the same data (same seed policy per family) and
/// evaluates on the test split. Rows come back in config order.
std::vector<ComparisonRow> compare_models(const std::vector<model::ModelConfig>& configs,
                                          const EvalData& data);

struct AblationSpec {
  struct Subset {
    std::string name;
    std::vector<int> channels;  // sensor indices kept
  };
  std::vector<Subset> subsets;

  void validate(int channels) const;  // nonempty subsets, indices in range
};

/// Drops the excluded sensor columns out of every window of x (step-major
/// layout) so retraining sees genuinely narrower inputs.
Eigen::MatrixXd select_channels(const Eigen::MatrixXd& x, int channels,
                                const std::vector<int>& keep);

/// Retrains `config` per sensor subset and evaluates each on the test split.
/// Subsets run in parallel, at most `threads` at a time; row order follows
/// the spec regardless of completion order.
std::vector<ComparisonRow> ablation(const model::ModelConfig& config, const EvalData& data,
                                    const AblationSpec& spec, int channels, int threads);

struct ResolutionRow {
  int degree = 0;            // grid is (degree+1) x (degree+1)
  double fit_mean_mm = 0.0;  // surface fitting residual against the markers
  double pred_mean_mm = 0.0; // trained-model prediction error
  double train_seconds = 0.0;
};

/// Refits labels from the raw markers at each degree, trains the base config
/// on them, and reports fitting vs prediction error per grid size.
std::vector<ResolutionRow> resolution_study(const EvalData& data,
                                            const std::vector<int>& degrees,
                                            const model::ModelConfig& base);

struct LatencyReport {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
  double rate_hz = 0.0;  // 1000 / mean_ms
  long n = 0;
  std::string hardware;
};

/// Wall-clock over n single-thread predictions including decode; `task`
/// selects the decode path ("joint" or "membrane").
LatencyReport latency_benchmark(const model::Regressor& reg, const Eigen::VectorXd& probe,
                                int n, const std::string& task, int degree_u, int degree_v);

/// Long-format raw dump `target,index,error` at 17 significant digits, enough
/// to recompute every statistic bit-exactly.
std::string raw_dump_csv(const MetricReport& report);

/// JSON summary of a report; `raw_path` records where the dump went.
std::string report_to_json(const MetricReport& report, const std::string& raw_path);

/// Wide CSV, one row per entry: label, samples, then mean/std/max per target.
std::string comparison_to_csv(const std::vector<ComparisonRow>& rows);

std::string resolution_to_csv(const std::vector<ResolutionRow>& rows);

std::string latency_to_json(const LatencyReport& report);

}  // namespace softrecon::eval
