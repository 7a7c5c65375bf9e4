#include "softrecon/eval.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "softrecon/errors.hpp"
#include "softrecon/io_util.hpp"

namespace softrecon::eval {

namespace {

constexpr int kBins = 30;

double percentile(std::vector<double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const std::size_t idx = std::min(
      sorted.size() - 1,
      std::size_t(std::max(0.0, std::ceil(q * double(sorted.size())) - 1.0)));
  return sorted[idx];
}

}  // namespace

long Histogram::total() const {
  long t = 0;
  for (long c : counts) t += c;
  return t;
}

Histogram make_histogram(const std::vector<double>& values) {
  Histogram h;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const double hi = std::max(percentile(sorted, 0.995), 1e-12);
  const double width = hi / kBins;
  h.edges.resize(kBins + 1);
  for (int i = 0; i <= kBins; ++i) h.edges[std::size_t(i)] = width * i;
  h.counts.assign(kBins + 1, 0);
  for (double v : values) {
    if (v > hi)
      ++h.counts[kBins];
    else
      ++h.counts[std::size_t(std::min(kBins - 1, int(v / width)))];
  }
  return h;
}

TargetStats make_target(const std::string& name, std::vector<double> raw) {
  TargetStats t;
  t.name = name;
  double mean = 0.0;
  for (double v : raw) mean += v;
  if (!raw.empty()) mean /= double(raw.size());
  double var = 0.0;
  for (double v : raw) var += (v - mean) * (v - mean);
  if (!raw.empty()) var /= double(raw.size());
  t.mean = mean;
  t.stddev = std::sqrt(var);
  t.max = raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
  t.hist = make_histogram(raw);
  t.raw = std::move(raw);
  return t;
}

const TargetStats* MetricReport::find(const std::string& name) const {
  for (const TargetStats& t : targets)
    if (t.name == name) return &t;
  return nullptr;
}

MetricReport eval_joint(const model::Regressor& reg, const Eigen::MatrixXd& x,
                        const Eigen::MatrixXd& y_truth, const std::string& model_id,
                        const std::string& dataset_id) {
  if (reg.config.output_dim != 12) throw DimMismatch("joint eval needs a 12-output model");
  if (x.rows() != y_truth.rows()) throw DimMismatch("inputs and truth row counts differ");
  if (y_truth.cols() != 12) throw DimMismatch("joint truth must have 12 columns");

  const Eigen::MatrixXd pred = reg.predict_batch(x);
  std::vector<double> yaw, pitch, roll, trans;
  yaw.reserve(std::size_t(x.rows()));
  pitch.reserve(std::size_t(x.rows()));
  roll.reserve(std::size_t(x.rows()));
  trans.reserve(std::size_t(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const geom::RigidTransform p = model::decode_joint(pred.row(i).transpose());
    const geom::RigidTransform t = model::decode_joint(y_truth.row(i).transpose());
    const geom::EulerAngles e = geom::rotation_error(p.rotation, t.rotation);
    yaw.push_back(e.yaw);
    pitch.push_back(e.pitch);
    roll.push_back(e.roll);
    trans.push_back((p.translation - t.translation).norm());
  }

  MetricReport r;
  r.model_id = model_id;
  r.dataset_id = dataset_id;
  r.samples = long(x.rows());
  r.targets.push_back(make_target("yaw_deg", std::move(yaw)));
  r.targets.push_back(make_target("pitch_deg", std::move(pitch)));
  r.targets.push_back(make_target("roll_deg", std::move(roll)));
  r.targets.push_back(make_target("translation_mm", std::move(trans)));
  return r;
}

MetricReport eval_membrane(const model::Regressor& reg, const Eigen::MatrixXd& x,
                           const std::vector<geom::PointSet>& markers,
                           const bezier::MarkerParamTable& uv_table, int degree_u,
                           int degree_v, const std::string& model_id,
                           const std::string& dataset_id) {
  const int dim = 3 * (degree_u + 1) * (degree_v + 1);
  if (reg.config.output_dim != dim)
    throw DimMismatch("model output does not match the control grid size");
  if (std::size_t(x.rows()) != markers.size())
    throw DimMismatch("inputs and marker frames differ in count");

  const Eigen::MatrixXd pred = reg.predict_batch(x);
  std::vector<double> dist;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const bezier::BezierSurface s =
        model::decode_membrane(pred.row(i).transpose(), degree_u, degree_v);
    const geom::PointSet& frame = markers[std::size_t(i)];
    for (std::size_t m = 0; m < frame.size(); ++m) {
      const bezier::UV* uv = uv_table.find(frame.ids[m]);
      if (uv == nullptr)
        throw MissingMarker("marker '" + frame.ids[m] + "' has no uv entry");
      dist.push_back(geom::distance(frame.points[m], bezier::evaluate_surface(s, *uv)));
    }
  }

  MetricReport r;
  r.model_id = model_id;
  r.dataset_id = dataset_id;
  r.samples = long(x.rows());
  r.targets.push_back(make_target("marker_mm", std::move(dist)));
  return r;
}

namespace {

ComparisonRow train_and_eval(const model::ModelConfig& cfg, const EvalData& data,
                             const std::string& label) {
  const auto t0 = std::chrono::steady_clock::now();
  const model::Regressor reg =
      model::train_model(data.x_train, data.y_train, data.x_val, data.y_val, cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ComparisonRow row;
  row.label = label;
  row.train_seconds = secs;
  if (data.task == "membrane")
    row.report = eval_membrane(reg, data.x_test, data.test_markers, data.uv_table,
                               data.degree_u, data.degree_v, label, data.dataset_id);
  else
    row.report = eval_joint(reg, data.x_test, data.y_test, label, data.dataset_id);
  return row;
}

}  // namespace

std::vector<ComparisonRow> compare_models(const std::vector<model::ModelConfig>& configs,
                                          const EvalData& data) {
  std::vector<ComparisonRow> rows;
  rows.reserve(configs.size());
  for (const model::ModelConfig& cfg : configs)
    rows.push_back(train_and_eval(cfg, data, model::to_string(cfg.kind)));
  return rows;
}

void AblationSpec::validate(int channels) const {
  if (subsets.empty()) throw ConfigError("ablation spec lists no subsets");
  for (const Subset& s : subsets) {
    if (s.channels.empty())
      throw ConfigError("ablation subset '" + s.name + "' keeps no sensors");
    std::vector<int> sorted = s.channels;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("ablation subset '" + s.name + "' repeats a sensor");
    if (sorted.front() < 0 || sorted.back() >= channels)
      throw ConfigError("ablation subset '" + s.name + "' indexes outside the sensor set");
  }
}

Eigen::MatrixXd select_channels(const Eigen::MatrixXd& x, int channels,
                                const std::vector<int>& keep) {
  if (channels < 1 || x.cols() % channels != 0)
    throw SizeMismatch("input width is not a multiple of the channel count");
  const Eigen::Index steps = x.cols() / channels;
  Eigen::MatrixXd out(x.rows(), steps * Eigen::Index(keep.size()));
  for (Eigen::Index s = 0; s < steps; ++s)
    for (std::size_t a = 0; a < keep.size(); ++a)
      out.col(s * Eigen::Index(keep.size()) + Eigen::Index(a)) =
          x.col(s * channels + keep[a]);
  return out;
}

std::vector<ComparisonRow> ablation(const model::ModelConfig& config, const EvalData& data,
                                    const AblationSpec& spec, int channels, int threads) {
  spec.validate(channels);
  const int cap = std::max(1, threads);

  std::vector<ComparisonRow> rows(spec.subsets.size());
  std::size_t next = 0;
  while (next < spec.subsets.size()) {
    std::vector<std::pair<std::size_t, std::future<ComparisonRow>>> batch;
    for (int lane = 0; lane < cap && next < spec.subsets.size(); ++lane, ++next) {
      const AblationSpec::Subset& sub = spec.subsets[next];
      batch.emplace_back(next, std::async(std::launch::async, [&config, &data, &sub,
                                                               channels]() {
        EvalData narrowed;
        narrowed.dataset_id = data.dataset_id;
        narrowed.task = data.task;
        narrowed.x_train = select_channels(data.x_train, channels, sub.channels);
        narrowed.y_train = data.y_train;
        narrowed.x_val = select_channels(data.x_val, channels, sub.channels);
        narrowed.y_val = data.y_val;
        narrowed.x_test = select_channels(data.x_test, channels, sub.channels);
        narrowed.y_test = data.y_test;
        narrowed.test_markers = data.test_markers;
        narrowed.uv_table = data.uv_table;
        narrowed.degree_u = data.degree_u;
        narrowed.degree_v = data.degree_v;

        model::ModelConfig cfg = config;
        cfg.channels = int(sub.channels.size());
        cfg.input_dim = int(narrowed.x_train.cols());
        return train_and_eval(cfg, narrowed, sub.name);
      }));
    }
    for (auto& [idx, fut] : batch) rows[idx] = fut.get();
  }
  return rows;
}

std::vector<ResolutionRow> resolution_study(const EvalData& data,
                                            const std::vector<int>& degrees,
                                            const model::ModelConfig& base) {
  if (data.task != "membrane")
    throw ConfigError("resolution study applies to membrane datasets");
  if (degrees.empty()) throw ConfigError("resolution study needs at least one degree");

  auto refit = [&](const std::vector<geom::PointSet>& frames, int d, double* residual_sum,
                   long* residual_n) {
    Eigen::MatrixXd y(Eigen::Index(frames.size()), 3 * (d + 1) * (d + 1));
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const bezier::FitResult fit = bezier::fit_surface(frames[i], data.uv_table, d, d);
      y.row(Eigen::Index(i)) = model::encode_membrane(fit.surface.grid).transpose();
      if (residual_sum != nullptr) {
        const bezier::ResidualReport rep =
            bezier::fitting_residual(fit.surface, frames[i], data.uv_table);
        for (double v : rep.distances_mm) *residual_sum += v;
        *residual_n += long(rep.distances_mm.size());
      }
    }
    return y;
  };

  std::vector<ResolutionRow> rows;
  for (int d : degrees) {
    EvalData scoped = data;
    scoped.degree_u = d;
    scoped.degree_v = d;
    double residual_sum = 0.0;
    long residual_n = 0;
    scoped.y_train = refit(data.train_markers, d, nullptr, nullptr);
    scoped.y_val = refit(data.val_markers, d, nullptr, nullptr);
    scoped.y_test = refit(data.test_markers, d, &residual_sum, &residual_n);

    model::ModelConfig cfg = base;
    cfg.output_dim = 3 * (d + 1) * (d + 1);

    const ComparisonRow trained =
        train_and_eval(cfg, scoped, "degree" + std::to_string(d));
    ResolutionRow row;
    row.degree = d;
    row.fit_mean_mm = residual_n > 0 ? residual_sum / double(residual_n) : 0.0;
    row.pred_mean_mm = trained.report.find("marker_mm")->mean;
    row.train_seconds = trained.train_seconds;
    rows.push_back(row);
  }
  return rows;
}

LatencyReport latency_benchmark(const model::Regressor& reg, const Eigen::VectorXd& probe,
                                int n, const std::string& task, int degree_u, int degree_v) {
  if (n < 1) throw ConfigError("latency benchmark needs n >= 1");

  double sink = 0.0;  // keeps the decode from being optimized away
  auto once = [&]() {
    const Eigen::VectorXd p = reg.predict(probe);
    if (task == "membrane") {
      const bezier::BezierSurface s = model::decode_membrane(p, degree_u, degree_v);
      sink += s.grid.points.back().z;
    } else {
      const geom::RigidTransform t = model::decode_joint(p);
      sink += t.translation.z();
    }
  };

  for (int i = 0; i < 32; ++i) once();  // warm up caches

  std::vector<double> ms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    once();
    ms[std::size_t(i)] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
  }

  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  LatencyReport r;
  r.n = n;
  for (double v : ms) r.mean_ms += v;
  r.mean_ms /= double(n);
  r.p50_ms = percentile(sorted, 0.50);
  r.p95_ms = percentile(sorted, 0.95);
  r.p99_ms = percentile(sorted, 0.99);
  r.max_ms = sorted.back();
  r.rate_hz = r.mean_ms > 0.0 ? 1000.0 / r.mean_ms : 0.0;

  utsname u{};
  uname(&u);
  r.hardware = std::string(u.sysname) + " " + u.machine + ", " +
               std::to_string(std::thread::hardware_concurrency()) + " hw threads";
  if (!std::isfinite(sink)) r.hardware += "?";  // unreachable, defeats DCE
  return r;
}

std::string raw_dump_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "target,index,error\n";
  for (const TargetStats& t : report.targets)
    for (std::size_t i = 0; i < t.raw.size(); ++i)
      os << t.name << ',' << i << ',' << io::fmt_g(t.raw[i], 17) << "\n";
  return os.str();
}

std::string report_to_json(const MetricReport& report, const std::string& raw_path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["model_id"] = report.model_id;
  j["dataset_id"] = report.dataset_id;
  j["samples"] = report.samples;
  j["raw_dump"] = raw_path;
  nlohmann::json targets = nlohmann::json::array();
  for (const TargetStats& t : report.targets) {
    nlohmann::json jt;
    jt["name"] = t.name;
    jt["count"] = t.raw.size();
    jt["mean"] = t.mean;
    jt["stddev"] = t.stddev;
    jt["max"] = t.max;
    jt["hist_edges"] = t.hist.edges;
    jt["hist_counts"] = t.hist.counts;
    targets.push_back(jt);
  }
  j["targets"] = targets;
  return j.dump(2) + "\n";
}

namespace {

const char* kCsvTargets[5] = {"yaw_deg", "pitch_deg", "roll_deg", "translation_mm",
                              "marker_mm"};

}  // namespace

std::string comparison_to_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "label,samples";
  for (const char* t : kCsvTargets)
    os << ',' << t << "_mean," << t << "_std," << t << "_max";
  os << "\n";
  for (const ComparisonRow& row : rows) {
    os << row.label << ',' << row.report.samples;
    for (const char* t : kCsvTargets) {
      const TargetStats* s = row.report.find(t);
      if (s == nullptr)
        os << ",,,";
      else
        os << ',' << io::fmt_g(s->mean) << ',' << io::fmt_g(s->stddev) << ','
           << io::fmt_g(s->max);
    }
    os << "\n";
  }
  return os.str();
}

std::string resolution_to_csv(const std::vector<ResolutionRow>& rows) {
  std::ostringstream os;
  os << "degree,grid,fit_mean_mm,pred_mean_mm\n";
  for (const ResolutionRow& r : rows)
    os << r.degree << ',' << (r.degree + 1) << 'x' << (r.degree + 1) << ','
       << io::fmt_g(r.fit_mean_mm) << ',' << io::fmt_g(r.pred_mean_mm) << "\n";
  return os.str();
}

std::string latency_to_json(const LatencyReport& report) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["n"] = report.n;
  j["mean_ms"] = report.mean_ms;
  j["p50_ms"] = report.p50_ms;
  j["p95_ms"] = report.p95_ms;
  j["p99_ms"] = report.p99_ms;
  j["max_ms"] = report.max_ms;
  j["rate_hz"] = report.rate_hz;
  j["hardware"] = report.hardware;
  return j.dump(2) + "\n";
}

}  // namespace softrecon::eval
