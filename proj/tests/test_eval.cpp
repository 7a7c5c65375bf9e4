#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "softrecon/errors.hpp"
#include "softrecon/eval.hpp"

using namespace softrecon;
using namespace softrecon::eval;

TEST_CASE("histogram bins up to the 99.5th percentile plus overflow") {
  std::vector<double> values;
  for (int i = 0; i < 998; ++i) values.push_back(i / 998.0);  // [0, 1)
  values.push_back(50.0);
  values.push_back(60.0);  // the top 0.5 percent
  const Histogram h = make_histogram(values);
  REQUIRE(h.edges.size() == 31);
  REQUIRE(h.counts.size() == 31);
  CHECK(h.edges.front() == 0.0);
  CHECK(h.edges.back() < 50.0);  // cut before the outliers
  CHECK(h.total() == 1000);
  CHECK(h.counts.back() >= 2);  // the two outliers overflow
  long in_bins = 0;
  for (std::size_t i = 0; i + 1 < h.counts.size(); ++i) in_bins += h.counts[i];
  CHECK(in_bins + h.counts.back() == 1000);

  const Histogram empty = make_histogram({});
  CHECK(empty.total() == 0);
}

TEST_CASE("target stats summarize the raw errors") {
  const TargetStats t = make_target("yaw_deg", {1.0, 2.0, 3.0, 4.0});
  CHECK(t.name == "yaw_deg");
  CHECK(t.mean == doctest::Approx(2.5));
  CHECK(t.max == 4.0);
  CHECK(t.stddev == doctest::Approx(std::sqrt(1.25)));
  CHECK(t.raw.size() == 4);
}

namespace {

// A regressor that echoes selected label entries: identity weights make the
// eval paths exact and easy to reason about.
model::Regressor echo_model(int input_dim, int output_dim) {
  model::Regressor r;
  r.config.kind = model::ModelKind::MVLR;
  r.config.input_dim = input_dim;
  r.config.output_dim = output_dim;
  r.label_tf = model::LabelTransform::identity(output_dim);
  r.mvlr_w = Eigen::MatrixXd::Zero(input_dim + 1, output_dim);
  const int copy = std::min(input_dim, output_dim);
  for (int i = 0; i < copy; ++i) r.mvlr_w(i, i) = 1.0;
  return r;
}

}  // namespace

TEST_CASE("joint eval wraps angles and reports translation magnitude") {
  // The model reproduces its input, so feeding encoded poses as x makes the
  // predictions exact; the truth is a slightly different pose.
  const geom::RigidTransform pred{geom::tait_bryan_to_rotation({179.0, 0.0, 0.0}),
                                  {1.0, 2.0, 2.0}};
  const geom::RigidTransform truth{geom::tait_bryan_to_rotation({-179.0, 0.0, 0.0}),
                                   {1.0, 2.0, 5.0}};
  Eigen::MatrixXd x(1, 12), y(1, 12);
  x.row(0) = model::encode_joint(pred).transpose();
  y.row(0) = model::encode_joint(truth).transpose();

  const MetricReport rep = eval_joint(echo_model(12, 12), x, y, "m", "d");
  CHECK(rep.samples == 1);
  REQUIRE(rep.find("yaw_deg") != nullptr);
  CHECK(rep.find("yaw_deg")->mean == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(rep.find("pitch_deg")->mean == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(rep.find("roll_deg")->mean == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(rep.find("translation_mm")->mean == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(rep.find("nope") == nullptr);
}

TEST_CASE("membrane eval measures marker-to-surface distances") {
  using namespace softrecon::bezier;
  // Truth surface: flat sheet at z = 0. The echoed prediction raises it 2 mm.
  ControlGrid flat = ControlGrid::zeros(2, 2);
  for (int i = 0; i <= 2; ++i)
    for (int j = 0; j <= 2; ++j) flat.at(i, j) = {50.0 * i, 50.0 * j, 2.0};

  MarkerParamTable table;
  table.degree_u = table.degree_v = 2;
  std::vector<geom::PointSet> markers(1);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const std::string id = "s" + std::to_string(i * 3 + j);
      const UV uv{i / 2.0, j / 2.0};
      table.entries.push_back({id, uv});
      // Captured markers on the z = 0 sheet at matching xy; the control
      // lattice spans 0..100, so the surface point at (u, v) is (100u, 100v).
      markers[0].push_back(id, {100.0 * uv.u, 100.0 * uv.v, 0.0});
    }

  Eigen::MatrixXd x(1, 27);
  x.row(0) = model::encode_membrane(flat).transpose();
  const MetricReport rep =
      eval_membrane(echo_model(27, 27), x, markers, table, 2, 2, "m", "d");
  CHECK(rep.samples == 1);
  REQUIRE(rep.find("marker_mm") != nullptr);
  CHECK(rep.find("marker_mm")->mean == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(rep.find("marker_mm")->raw.size() == 9);
}

TEST_CASE("select_channels keeps the chosen sensors in every step") {
  Eigen::MatrixXd x(2, 8);  // 2 samples, 2 steps x 4 channels
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 8; ++c) x(r, c) = 10.0 * r + c;
  const Eigen::MatrixXd sel = select_channels(x, 4, {0, 2});
  REQUIRE(sel.rows() == 2);
  REQUIRE(sel.cols() == 4);
  // Step 0 keeps channels 0 and 2; step 1 keeps 4 and 6.
  CHECK(sel(0, 0) == 0.0);
  CHECK(sel(0, 1) == 2.0);
  CHECK(sel(0, 2) == 4.0);
  CHECK(sel(0, 3) == 6.0);
  CHECK(sel(1, 0) == 10.0);

  AblationSpec spec;
  spec.subsets.push_back({"pair", {0, 2}});
  spec.validate(4);
  spec.subsets.push_back({"bad", {5}});
  CHECK_THROWS_AS(spec.validate(4), ConfigError);
  CHECK_THROWS_AS(AblationSpec{}.validate(4), ConfigError);
}

TEST_CASE("csv and json renderings have the promised shape") {
  MetricReport rep;
  rep.model_id = "m";
  rep.dataset_id = "d";
  rep.samples = 3;
  rep.targets.push_back(make_target("yaw_deg", {0.5, 1.5, 2.5}));
  rep.targets.push_back(make_target("translation_mm", {1.0, 1.0, 4.0}));

  const std::string raw = raw_dump_csv(rep);
  std::istringstream lines(raw);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "target,index,error");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 6);

  const std::string json = report_to_json(rep, "raw_errors.csv");
  CHECK(json.find("\"yaw_deg\"") != std::string::npos);
  CHECK(json.find("raw_errors.csv") != std::string::npos);

  ComparisonRow row;
  row.label = "mvlr";
  row.report = rep;
  const std::string comp = comparison_to_csv({row});
  std::istringstream cs(comp);
  std::getline(cs, line);
  CHECK(line.rfind("label,samples", 0) == 0);
  CHECK(line.find("yaw_deg_mean") != std::string::npos);
  std::getline(cs, line);
  CHECK(line.rfind("mvlr,3,", 0) == 0);
  // Wall-clock columns would break byte-identical reruns.
  CHECK(comp.find("seconds") == std::string::npos);

  const std::string res = resolution_to_csv({ResolutionRow{4, 0.5, 1.25, 9.0}});
  CHECK(res.find("degree") != std::string::npos);
  CHECK(res.find("4,") != std::string::npos);
  CHECK(res.find("9") == std::string::npos);  // train_seconds stays out

  LatencyReport lat;
  lat.mean_ms = 1.5;
  lat.n = 100;
  const std::string lj = latency_to_json(lat);
  CHECK(lj.find("\"mean_ms\"") != std::string::npos);
}

TEST_CASE("latency benchmark fills every percentile") {
  auto rng = std::mt19937_64(51);
  std::normal_distribution<double> n;
  Eigen::MatrixXd x(30, 12), y(30, 12);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x.data()[i] = n(rng);
    y.data()[i] = n(rng);
  }
  model::ModelConfig cfg;
  cfg.kind = model::ModelKind::MVLR;
  cfg.input_dim = 12;
  cfg.output_dim = 12;
  const model::Regressor r = model::train_mvlr(x, y, cfg);

  const LatencyReport rep =
      latency_benchmark(r, x.row(0).transpose(), 50, "joint", 4, 4);
  CHECK(rep.n == 50);
  CHECK(rep.mean_ms > 0.0);
  CHECK(rep.p50_ms <= rep.p95_ms);
  CHECK(rep.p95_ms <= rep.p99_ms);
  CHECK(rep.p99_ms <= rep.max_ms);
  CHECK(rep.rate_hz == doctest::Approx(1000.0 / rep.mean_ms));
  CHECK_FALSE(rep.hardware.empty());
}

TEST_CASE("compare_models trains every config on the same data") {
  auto rng = std::mt19937_64(52);
  std::normal_distribution<double> n;
  EvalData data;
  data.dataset_id = "synth";
  data.task = "joint";
  const int dim = 12;
  const auto fill = [&](Eigen::MatrixXd& m, int rows) {
    m.resize(rows, dim);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  };
  fill(data.x_train, 40);
  fill(data.x_val, 10);
  fill(data.x_test, 10);
  // Labels must decode as joint poses: encode noise-projected transforms.
  const auto poses = [&](Eigen::MatrixXd& m, const Eigen::MatrixXd& x) {
    m.resize(x.rows(), 12);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const geom::RigidTransform t{
          geom::tait_bryan_to_rotation({20.0 * x(i, 0), 10.0 * x(i, 1), 5.0 * x(i, 2)}),
          {x(i, 3), x(i, 4), 55.0}};
      m.row(i) = model::encode_joint(t).transpose();
    }
  };
  poses(data.y_train, data.x_train);
  poses(data.y_val, data.x_val);
  poses(data.y_test, data.x_test);

  model::ModelConfig mvlr;
  mvlr.kind = model::ModelKind::MVLR;
  mvlr.input_dim = dim;
  mvlr.output_dim = 12;
  model::ModelConfig fnn = mvlr;
  fnn.kind = model::ModelKind::FNN;
  fnn.hidden_size = 16;
  fnn.head = model::OutputHead::Mixed;
  fnn.tanh_lead = 9;
  fnn.opt.max_epochs = 30;

  const auto rows = compare_models({mvlr, fnn}, data);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].label == "mvlr");
  CHECK(rows[1].label == "fnn");
  for (const auto& r : rows) {
    CHECK(r.report.samples == 10);
    CHECK(r.report.find("yaw_deg") != nullptr);
    CHECK(r.train_seconds >= 0.0);
  }
}

TEST_CASE("ablation preserves spec order whatever the thread count") {
  auto rng = std::mt19937_64(53);
  std::normal_distribution<double> n;
  EvalData data;
  data.dataset_id = "synth";
  data.task = "joint";
  const int channels = 6, steps = 2;
  const auto fill = [&](Eigen::MatrixXd& m, int rows, int cols) {
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  };
  fill(data.x_train, 30, channels * steps);
  fill(data.x_val, 8, channels * steps);
  fill(data.x_test, 8, channels * steps);
  const auto poses = [&](Eigen::MatrixXd& m, const Eigen::MatrixXd& x) {
    m.resize(x.rows(), 12);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const geom::RigidTransform t{
          geom::tait_bryan_to_rotation({15.0 * x(i, 0), 0.0, 0.0}), {0.0, 0.0, 58.0}};
      m.row(i) = model::encode_joint(t).transpose();
    }
  };
  poses(data.y_train, data.x_train);
  poses(data.y_val, data.x_val);
  poses(data.y_test, data.x_test);

  model::ModelConfig cfg;
  cfg.kind = model::ModelKind::MVLR;
  cfg.input_dim = channels * steps;
  cfg.output_dim = 12;

  AblationSpec spec;
  spec.subsets.push_back({"all", {0, 1, 2, 3, 4, 5}});
  spec.subsets.push_back({"half", {0, 2, 4}});
  spec.subsets.push_back({"one", {3}});

  const auto serial = ablation(cfg, data, spec, channels, 1);
  const auto parallel = ablation(cfg, data, spec, channels, 3);
  REQUIRE(serial.size() == 3);
  REQUIRE(parallel.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(serial[i].label == spec.subsets[i].name);
    CHECK(parallel[i].label == serial[i].label);
    // Thread count changes scheduling, never results.
    CHECK(parallel[i].report.find("yaw_deg")->mean ==
          serial[i].report.find("yaw_deg")->mean);
  }
}
