// Command-line front end: simulate | prepare | train | eval | ablate |
// resolution | replay | export-grid. Every command writes a manifest.json
// describing its inputs, config digest, seed, and output digests.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli_support.hpp"
#include "softrecon/archive.hpp"
#include "softrecon/bezier.hpp"
#include "softrecon/dataset.hpp"
#include "softrecon/errors.hpp"
#include "softrecon/eval.hpp"
#include "softrecon/geometry.hpp"
#include "softrecon/io_util.hpp"
#include "softrecon/models.hpp"
#include "softrecon/simulator.hpp"
#include "softrecon/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace softrecon;

namespace {

json parse_config(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

void require_version(const json& j, const char* what) {
  if (j.value("format_version", 0) != kFormatVersion)
    throw ConfigError(std::string(what) + ": unsupported or missing format_version");
}

/// Config text with an optional --seed override patched in before parsing.
std::string patch_seed(const std::string& text, const std::optional<std::uint64_t>& seed,
                       const char* what) {
  if (!seed) return text;
  json j = parse_config(text, what);
  j["seed"] = *seed;
  return j.dump();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string dataset_id_of(const std::string& data_dir) {
  const fs::path p = fs::path(data_dir).lexically_normal();
  std::string id = p.filename().string();
  if (id.empty() || id == ".") id = p.string();
  return id;
}

/// Model config from JSON text; when the file names no output head, the task
/// picks it (joint: bounded rotation entries, membrane: linear).
model::ModelConfig load_model_config(const std::string& text, const std::string& task,
                                     const char* what) {
  json j = parse_config(text, what);
  if (!j.contains("head"))
    j["head"] = model::to_string(task == "joint" ? model::OutputHead::Mixed
                                                 : model::OutputHead::Linear);
  // Membrane labels all carry the same unit (mm), so one pooled scale keeps
  // low-variance control coordinates from being amplified into noise targets.
  if (!j.contains("label_scale") && task == "membrane")
    j["label_scale"] = model::to_string(model::LabelScale::Shared);
  return model::model_config_from_json(j.dump());
}

/// Input/output geometry always comes from the archive, not the config file.
void apply_dims(model::ModelConfig& c, const data::DatasetArchive& a) {
  c.channels = a.channels;
  c.window_len = a.window_len;
  c.input_dim = a.channels * a.window_len;
  c.output_dim = a.label_dim;
}

void add_archive_inputs(cli::Manifest& man, const std::string& data_dir) {
  for (const char* f : {"train.csv", "validation.csv", "test.csv", "norm_stats.json",
                        "meta.json"})
    man.add_input(join(data_dir, f));
}

std::vector<double> parse_csv_row(const std::string& line, long lineno,
                                  std::size_t expect) {
  const auto fields = io::split(line, ',');
  if (fields.size() != expect)
    throw ParseError("expected " + std::to_string(expect) + " fields, got " +
                         std::to_string(fields.size()),
                     lineno);
  std::vector<double> out(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::string& f = fields[i];
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), out[i]);
    if (ec != std::errc{} || ptr != f.data() + f.size())
      throw ParseError("bad number '" + f + "'", lineno);
  }
  return out;
}

// ---------------------------------------------------------------- simulate

void cmd_simulate(const std::string& config_path, const std::string& out,
                  const std::optional<std::uint64_t>& seed) {
  const std::string text = io::read_file(config_path);
  const std::string patched = patch_seed(text, seed, "scenario");
  const std::string task = sim::scenario_task(patched);

  ensure_dir(out);
  cli::Manifest man("simulate");
  man.set_config(config_path, text);
  man.add_input(config_path);

  std::vector<std::string> paths;
  std::uint64_t eff_seed = 0;
  std::size_t marker_frames = 0, sensor_frames = 0;
  if (task == "joint") {
    const sim::JointScenario sc = sim::parse_joint_scenario(patched);
    eff_seed = sc.seed;
    const sim::JointStreams streams = sim::gen_joint(sc);
    marker_frames = streams.markers.frames.size();
    sensor_frames = streams.sensors.frames.size();
    paths = sim::emit_logs(streams, out);
  } else {
    const sim::MembraneScenario sc = sim::parse_membrane_scenario(patched);
    eff_seed = sc.seed;
    const sim::MembraneStreams streams = sim::gen_membrane(sc);
    marker_frames = streams.markers.frames.size();
    sensor_frames = streams.sensors.frames.size();
    paths = sim::emit_logs(streams, out);
  }

  man.set_seed(eff_seed);
  for (const std::string& p : paths) man.add_output(p);
  man.write(out);
  std::printf("simulate: task=%s marker_frames=%zu sensor_frames=%zu -> %s\n",
              task.c_str(), marker_frames, sensor_frames, out.c_str());
}

// ----------------------------------------------------------------- prepare

data::Role role_from_string(const std::string& s) {
  if (s == "train") return data::Role::Train;
  if (s == "validation") return data::Role::Validation;
  if (s == "test") return data::Role::Test;
  throw ConfigError("unknown role '" + s + "' (want train|validation|test)");
}

void cmd_prepare(const std::string& config_path, const std::string& out,
                 const std::optional<std::uint64_t>& seed) {
  const std::string text = io::read_file(config_path);
  json j = parse_config(text, "prepare config");
  require_version(j, "prepare config");

  data::DatasetArchive a;
  std::string layout_path;
  struct BatchSpec {
    std::string name, role, sensors, markers, truth;
  };
  std::vector<BatchSpec> batches;
  try {
    a.window_len = j.value("window_len", 10);
    layout_path = j.at("layout").get<std::string>();
    for (const json& jb : j.at("batches")) {
      BatchSpec b;
      b.name = jb.at("name").get<std::string>();
      b.role = jb.at("role").get<std::string>();
      b.sensors = jb.at("sensors").get<std::string>();
      b.markers = jb.at("markers").get<std::string>();
      b.truth = jb.value("truth", "");
      batches.push_back(std::move(b));
    }
    a.degree_u = j.value("degree_u", 4);
    a.degree_v = j.value("degree_v", 4);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("prepare config: ") + e.what());
  }
  if (a.window_len < 1) throw ConfigError("window_len must be positive");
  if (batches.empty()) throw ConfigError("prepare config: batches is empty");

  const std::string layout_text = io::read_file(layout_path);
  a.task = sim::layout_task(layout_text);
  if (j.contains("task") && j["task"].get<std::string>() != a.task)
    throw ConfigError("config task '" + j["task"].get<std::string>() +
                      "' does not match layout task '" + a.task + "'");

  data::JointLayout jl;
  data::MembraneLayout ml;
  if (a.task == "joint") {
    jl = sim::joint_layout_from_json(layout_text);
    a.label_dim = 12;
  } else {
    ml = sim::membrane_layout_from_json(layout_text);
    a.label_dim = 3 * (a.degree_u + 1) * (a.degree_v + 1);
    a.uv_table = ml.uv_table;
    a.uv_table.degree_u = a.degree_u;
    a.uv_table.degree_v = a.degree_v;
    a.uv_table.validate();
  }

  bool roles_seen[3] = {false, false, false};
  for (const BatchSpec& b : batches) roles_seen[int(role_from_string(b.role))] = true;
  for (int r = 0; r < 3; ++r)
    if (!roles_seen[r])
      throw ConfigError("no batch assigned to role '" +
                        data::to_string(data::Role(r)) + "'");

  cli::Manifest man("prepare");
  man.set_config(config_path, text);
  if (seed) man.set_seed(*seed);
  man.add_input(config_path);
  man.add_input(layout_path);

  std::vector<Eigen::VectorXd> truth_rows[3];
  bool truth_complete[3] = {true, true, true};
  a.channels = -1;

  for (const BatchSpec& b : batches) {
    if (a.batch_roles.count(b.name))
      throw ConfigError("duplicate batch name '" + b.name + "'");
    const data::Role role = role_from_string(b.role);
    a.batch_roles[b.name] = role;
    man.add_input(b.sensors);
    man.add_input(b.markers);

    const data::SensorLog sensors = data::load_sensor_log(b.sensors);
    if (a.channels < 0)
      a.channels = sensors.channels;
    else if (sensors.channels != a.channels)
      throw DimMismatch("batch '" + b.name + "' has " +
                        std::to_string(sensors.channels) + " channels, expected " +
                        std::to_string(a.channels));
    const data::MarkerLog markers = data::load_marker_log(b.markers);
    const data::SyncResult sync = data::synchronize(sensors, markers, a.window_len);
    a.batch_drops[b.name] = sync.report;

    std::map<std::int64_t, Eigen::VectorXd> truth_map;
    if (!b.truth.empty()) {
      man.add_input(b.truth);
      truth_map = data::read_truth_csv(b.truth, a.label_dim);
    } else {
      truth_complete[int(role)] = false;
    }

    data::RoleData& rd = role == data::Role::Train        ? a.train
                         : role == data::Role::Validation ? a.validation
                                                          : a.test;
    for (const data::SyncedSample& s : sync.samples) {
      data::WindowedSample ws =
          a.task == "joint"
              ? data::label_joint(markers, s, jl)
              : data::label_membrane(markers, s, ml, a.degree_u, a.degree_v);
      ws.batch = b.name;
      if (!b.truth.empty()) {
        const auto it = truth_map.find(ws.t_us);
        if (it == truth_map.end())
          throw CorruptFile(b.truth + " has no row for t_us=" +
                            std::to_string(ws.t_us));
        truth_rows[int(role)].push_back(it->second);
      }
      if (a.task == "membrane")
        rd.markers.push_back(data::aligned_membrane_markers(markers, s, ml));
      rd.samples.push_back(std::move(ws));
    }

    const data::DropReport& r = sync.report;
    std::printf(
        "batch %s: role=%s kept=%ld dropped=%ld "
        "(incomplete=%ld unmatched=%ld short_window=%ld gap=%ld)\n",
        b.name.c_str(), b.role.c_str(), r.kept, r.dropped(), r.incomplete, r.unmatched,
        r.short_window, r.gap);
  }

  const data::DropReport total = a.total_drops();
  if (total.kept == 0) throw EmptyDataset("no samples survived synchronization");
  if (2 * total.dropped() > total.total_marker_frames)
    throw Error("synchronization dropped " + std::to_string(total.dropped()) + " of " +
                std::to_string(total.total_marker_frames) + " marker frames (>50%)");

  data::RoleData* role_data[3] = {&a.train, &a.validation, &a.test};
  for (int r = 0; r < 3; ++r) {
    if (!truth_complete[r] || truth_rows[r].empty()) continue;
    Eigen::MatrixXd m(Eigen::Index(truth_rows[r].size()), a.label_dim);
    for (std::size_t i = 0; i < truth_rows[r].size(); ++i)
      m.row(Eigen::Index(i)) = truth_rows[r][i];
    role_data[r]->truth = std::move(m);
  }

  a.stats = data::fit_normalizer(a.train.samples, a.channels);
  ensure_dir(out);
  data::write_archive(a, out);

  std::vector<std::string> written;
  for (const auto& entry : fs::directory_iterator(out))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
      written.push_back(entry.path().string());
  std::sort(written.begin(), written.end());
  for (const std::string& p : written) man.add_output(p);
  man.write(out);

  std::printf("prepare: task=%s kept=%ld dropped=%ld train=%zu validation=%zu test=%zu -> %s\n",
              a.task.c_str(), total.kept, total.dropped(), a.train.samples.size(),
              a.validation.samples.size(), a.test.samples.size(), out.c_str());
}

// ------------------------------------------------------------------- train

void cmd_train(const std::string& config_path, const std::string& data_dir,
               const std::string& out, const std::optional<std::uint64_t>& seed) {
  const std::string text = io::read_file(config_path);
  const std::string patched = patch_seed(text, seed, "model config");

  const data::DatasetArchive archive = data::load_archive(data_dir);
  model::ModelConfig cfg = load_model_config(patched, archive.task, "model config");
  apply_dims(cfg, archive);

  const eval::EvalData d = cli::build_eval_data(archive, dataset_id_of(data_dir));
  model::Regressor reg = model::train_model(d.x_train, d.y_train, d.x_val, d.y_val, cfg);
  reg.norm_stats_digest = io::sha256_file(join(data_dir, "norm_stats.json"));

  ensure_dir(out);
  const std::string model_path = join(out, "model.json");
  model::save_model(reg, model_path);

  json rep;
  rep["format_version"] = kFormatVersion;
  rep["kind"] = model::to_string(cfg.kind);
  rep["epochs_run"] = reg.report.epochs_run;
  rep["best_epoch"] = reg.report.best_epoch;
  rep["best_val_loss"] = reg.report.best_val_loss;
  rep["train_loss"] = reg.report.train_loss;
  rep["val_loss"] = reg.report.val_loss;
  const std::string report_path = join(out, "train_report.json");
  io::write_file(report_path, rep.dump(2) + "\n");

  cli::Manifest man("train");
  man.set_config(config_path, text);
  man.set_seed(cfg.seed);
  man.add_input(config_path);
  add_archive_inputs(man, data_dir);
  man.add_output(model_path);
  man.add_output(report_path);
  man.write(out);

  std::printf("train: kind=%s samples=%ld epochs=%d best_epoch=%d best_val_loss=%.6g wall=%.1fs\n",
              model::to_string(cfg.kind).c_str(), long(d.x_train.rows()),
              reg.report.epochs_run, reg.report.best_epoch, reg.report.best_val_loss,
              reg.report.wall_seconds);
}

// -------------------------------------------------------------------- eval

void print_report(const eval::MetricReport& report) {
  for (const eval::TargetStats& t : report.targets)
    std::printf("  %-14s mean=%.4g std=%.4g max=%.4g\n", t.name.c_str(), t.mean,
                t.stddev, t.max);
}

void check_model_matches(const model::Regressor& reg, const data::DatasetArchive& archive,
                         const std::string& data_dir) {
  const std::string digest = io::sha256_file(join(data_dir, "norm_stats.json"));
  if (reg.norm_stats_digest != digest)
    throw ConfigError("model was trained against different normalization stats than " +
                      data_dir);
  if (reg.config.input_dim != archive.channels * archive.window_len ||
      reg.config.output_dim != archive.label_dim)
    throw ConfigError("model dimensions do not match dataset " + data_dir);
}

void cmd_eval(const std::string& model_path, const std::string& compare_path,
              const std::string& data_dir, const std::string& out,
              const std::optional<std::uint64_t>& seed, int latency_n) {
  if (model_path.empty() == compare_path.empty())
    throw ConfigError("eval needs exactly one of --model or --compare");

  const data::DatasetArchive archive = data::load_archive(data_dir);
  const eval::EvalData d = cli::build_eval_data(archive, dataset_id_of(data_dir));

  ensure_dir(out);
  cli::Manifest man("eval");
  add_archive_inputs(man, data_dir);

  if (!model_path.empty()) {
    man.add_input(model_path);
    const model::Regressor reg = model::load_model(model_path);
    check_model_matches(reg, archive, data_dir);
    const std::string model_id = model::to_string(reg.config.kind);

    const eval::MetricReport report =
        archive.task == "joint"
            ? eval::eval_joint(reg, d.x_test, d.y_test, model_id, d.dataset_id)
            : eval::eval_membrane(reg, d.x_test, d.test_markers, d.uv_table, d.degree_u,
                                  d.degree_v, model_id, d.dataset_id);

    const std::string raw_path = join(out, "raw_errors.csv");
    const std::string metrics_path = join(out, "metrics.json");
    io::write_file(raw_path, eval::raw_dump_csv(report));
    io::write_file(metrics_path, eval::report_to_json(report, "raw_errors.csv"));
    man.add_output(raw_path);
    man.add_output(metrics_path);

    std::printf("eval: model=%s dataset=%s samples=%ld\n", model_id.c_str(),
                d.dataset_id.c_str(), long(report.samples));
    print_report(report);

    if (latency_n > 0) {
      if (d.x_test.rows() == 0) throw EmptyDataset("no test samples for latency probe");
      const eval::LatencyReport lat = eval::latency_benchmark(
          reg, d.x_test.row(0).transpose(), latency_n, archive.task, d.degree_u,
          d.degree_v);
      const std::string lat_path = join(out, "latency.json");
      io::write_file(lat_path, eval::latency_to_json(lat));
      man.add_output(lat_path);
      std::printf("  latency: mean=%.3fms p95=%.3fms p99=%.3fms rate=%.0fHz\n",
                  lat.mean_ms, lat.p95_ms, lat.p99_ms, lat.rate_hz);
    }
  } else {
    man.add_input(compare_path);
    const std::string text = io::read_file(compare_path);
    man.set_config(compare_path, text);
    json j = parse_config(text, "compare config");
    require_version(j, "compare config");

    std::vector<model::ModelConfig> cfgs;
    try {
      for (json je : j.at("models")) {
        je["format_version"] = kFormatVersion;
        if (seed && !je.contains("seed")) je["seed"] = *seed;
        model::ModelConfig c = load_model_config(je.dump(), archive.task, "compare entry");
        apply_dims(c, archive);
        cfgs.push_back(c);
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("compare config: ") + e.what());
    }
    if (cfgs.empty()) throw ConfigError("compare config: models is empty");

    const std::vector<eval::ComparisonRow> rows = eval::compare_models(cfgs, d);
    const std::string cmp_path = join(out, "comparison.csv");
    io::write_file(cmp_path, eval::comparison_to_csv(rows));
    man.add_output(cmp_path);

    std::printf("eval: compared %zu models on %s\n", rows.size(), d.dataset_id.c_str());
    for (const eval::ComparisonRow& r : rows) {
      std::printf(" %-8s train=%.1fs\n", r.label.c_str(), r.train_seconds);
      print_report(r.report);
    }
  }
  if (seed) man.set_seed(*seed);
  man.write(out);
}

// ------------------------------------------------------------------ ablate

void cmd_ablate(const std::string& config_path, const std::string& data_dir,
                const std::string& out, const std::optional<std::uint64_t>& seed) {
  const std::string text = io::read_file(config_path);
  const std::string patched = patch_seed(text, seed, "ablation config");

  const data::DatasetArchive archive = data::load_archive(data_dir);
  const eval::EvalData d = cli::build_eval_data(archive, dataset_id_of(data_dir));

  model::ModelConfig cfg = load_model_config(patched, archive.task, "ablation config");
  apply_dims(cfg, archive);

  json j = parse_config(patched, "ablation config");
  eval::AblationSpec spec;
  try {
    for (const json& js : j.at("subsets")) {
      eval::AblationSpec::Subset s;
      s.name = js.at("name").get<std::string>();
      for (const json& c : js.at("channels")) s.channels.push_back(c.get<int>());
      spec.subsets.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ablation config: ") + e.what());
  }
  spec.validate(archive.channels);

  const int threads = cli::thread_cap();
  const std::vector<eval::ComparisonRow> rows =
      eval::ablation(cfg, d, spec, archive.channels, threads);

  ensure_dir(out);
  const std::string csv_path = join(out, "ablation.csv");
  io::write_file(csv_path, eval::comparison_to_csv(rows));

  cli::Manifest man("ablate");
  man.set_config(config_path, text);
  man.set_seed(cfg.seed);
  man.add_input(config_path);
  add_archive_inputs(man, data_dir);
  man.add_output(csv_path);
  man.write(out);

  std::printf("ablate: %zu subsets, %d threads\n", rows.size(), threads);
  for (const eval::ComparisonRow& r : rows) {
    std::printf(" %-10s train=%.1fs\n", r.label.c_str(), r.train_seconds);
    print_report(r.report);
  }
}

// -------------------------------------------------------------- resolution

void cmd_resolution(const std::string& config_path, const std::string& data_dir,
                    const std::string& out, const std::optional<std::uint64_t>& seed) {
  const std::string text = io::read_file(config_path);
  const std::string patched = patch_seed(text, seed, "resolution config");

  const data::DatasetArchive archive = data::load_archive(data_dir);
  const eval::EvalData d = cli::build_eval_data(archive, dataset_id_of(data_dir));

  model::ModelConfig cfg = load_model_config(patched, archive.task, "resolution config");
  apply_dims(cfg, archive);

  json j = parse_config(patched, "resolution config");
  std::vector<int> degrees;
  try {
    for (const json& dg : j.at("degrees")) degrees.push_back(dg.get<int>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("resolution config: ") + e.what());
  }

  const std::vector<eval::ResolutionRow> rows = eval::resolution_study(d, degrees, cfg);

  ensure_dir(out);
  const std::string csv_path = join(out, "resolution.csv");
  io::write_file(csv_path, eval::resolution_to_csv(rows));

  cli::Manifest man("resolution");
  man.set_config(config_path, text);
  man.set_seed(cfg.seed);
  man.add_input(config_path);
  add_archive_inputs(man, data_dir);
  man.add_output(csv_path);
  man.write(out);

  std::printf("resolution: %zu grid sizes\n", rows.size());
  for (const eval::ResolutionRow& r : rows)
    std::printf("  degree=%d fit=%.4gmm pred=%.4gmm train=%.1fs\n", r.degree,
                r.fit_mean_mm, r.pred_mean_mm, r.train_seconds);
}

// ------------------------------------------------------------------ replay

void cmd_replay(const std::string& model_path, const std::string& log_path,
                const std::string& stats_path, const std::string& out, bool realtime,
                const std::string& task_flag) {
  const model::Regressor reg = model::load_model(model_path);
  const std::string stats_text = io::read_file(stats_path);
  if (io::sha256_hex(stats_text) != reg.norm_stats_digest)
    throw ConfigError(stats_path + " is not the stats file this model was trained with");
  const data::NormStats stats = data::norm_stats_from_json(stats_text);

  const int channels = reg.config.channels;
  const int window_len = reg.config.window_len;
  if (int(stats.mean.size()) != channels)
    throw ConfigError("stats cover " + std::to_string(stats.mean.size()) +
                      " channels, model expects " + std::to_string(channels));

  std::string task = task_flag.empty()
                         ? (reg.config.output_dim == 12 ? "joint" : "membrane")
                         : task_flag;
  if (task == "joint" && reg.config.output_dim != 12)
    throw ConfigError("joint replay needs a 12-output model");

  cli::FrameQueue queue(64);
  std::exception_ptr reader_err;
  std::thread reader([&] {
    try {
      std::ifstream in(log_path);
      if (!in) throw IoError("cannot open " + log_path);
      std::string line;
      long lineno = 1;
      if (!std::getline(in, line)) throw ParseError("empty sensor log", 1);
      const int ch = data::parse_sensor_header(line);
      if (ch != channels)
        throw ConfigError(log_path + " has " + std::to_string(ch) +
                          " channels, model expects " + std::to_string(channels));
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        queue.push(data::parse_sensor_row(line, ch, lineno));
      }
    } catch (...) {
      reader_err = std::current_exception();
    }
    queue.close();
  });

  using clock = std::chrono::steady_clock;
  cli::TickWindower windower(window_len);
  std::string csv = "t_us";
  for (int i = 0; i < reg.config.output_dim; ++i) csv += ",p" + std::to_string(i);
  csv += "\n";

  std::vector<double> compute_ms;
  long overruns = 0;
  bool have_anchor = false;
  clock::time_point anchor{};
  std::int64_t anchor_t_us = 0;
  constexpr double kBudgetMs = 20.0;

  const auto process = [&](const cli::TickWindower::Tick& tick) {
    if (realtime) {
      if (!have_anchor) {
        have_anchor = true;
        anchor = clock::now();
        anchor_t_us = tick.t_us;
      } else {
        std::this_thread::sleep_until(
            anchor + std::chrono::microseconds(tick.t_us - anchor_t_us));
      }
    }
    const auto t0 = clock::now();
    Eigen::MatrixXd row(1, window_len * channels);
    for (int s = 0; s < window_len; ++s)
      for (int c = 0; c < channels; ++c)
        row(0, s * channels + c) = tick.window[std::size_t(s)].readings[std::size_t(c)];
    const Eigen::MatrixXd norm = data::apply_normalizer(stats, row, channels);
    Eigen::VectorXd pred = reg.predict(norm.row(0).transpose());
    if (task == "joint") pred = model::encode_joint(model::decode_joint(pred));
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    compute_ms.push_back(ms);
    if (ms > kBudgetMs) {
      ++overruns;
      if (overruns <= 10)
        std::fprintf(stderr, "replay: tick t_us=%lld took %.1f ms (budget %.0f ms)\n",
                     static_cast<long long>(tick.t_us), ms, kBudgetMs);
    }
    csv += std::to_string(tick.t_us);
    for (Eigen::Index i = 0; i < pred.size(); ++i) csv += "," + io::fmt_g(pred[i]);
    csv += "\n";
  };

  const auto wall0 = clock::now();
  try {
    while (auto frame = queue.pop()) {
      windower.push(*frame);
      while (auto tick = windower.pop()) process(*tick);
    }
    windower.finish();
    while (auto tick = windower.pop()) process(*tick);
  } catch (...) {
    queue.close();
    reader.join();
    throw;
  }
  reader.join();
  if (reader_err) std::rethrow_exception(reader_err);
  const double wall_s = std::chrono::duration<double>(clock::now() - wall0).count();

  ensure_dir(out);
  const std::string pred_path = join(out, "predictions.csv");
  io::write_file(pred_path, csv);

  cli::Manifest man("replay");
  man.add_input(model_path);
  man.add_input(log_path);
  man.add_input(stats_path);
  man.set_extra("realtime", realtime);
  man.add_output(pred_path);
  man.write(out);

  const long ticks = long(compute_ms.size());
  double mean = 0.0, p95 = 0.0;
  if (ticks > 0) {
    for (double v : compute_ms) mean += v;
    mean /= double(ticks);
    std::vector<double> sorted = compute_ms;
    std::sort(sorted.begin(), sorted.end());
    p95 = sorted[std::size_t(std::min<long>(ticks - 1, (95 * ticks + 99) / 100))];
  }
  std::printf(
      "replay: ticks=%ld skipped=%lld overruns=%ld mean=%.3fms p95=%.3fms rate=%.1fHz\n",
      ticks, static_cast<long long>(windower.skipped()), overruns, mean, p95,
      wall_s > 0 ? double(ticks) / wall_s : 0.0);
}

// ------------------------------------------------------------- export-grid

void cmd_export_grid(const std::string& pred_path, const std::string& out, int res,
                     int degree_u, int degree_v, const std::string& task_flag) {
  if (res < 2) throw ConfigError("--res must be at least 2");
  const std::string text = io::read_file(pred_path);
  std::istringstream in(text);
  std::string line;
  long lineno = 1;
  if (!std::getline(in, line)) throw ParseError("empty predictions file", 1);
  const auto header = io::split(line, ',');
  if (header.size() < 2 || header[0] != "t_us")
    throw ParseError("predictions header must start with t_us", 1);
  for (std::size_t i = 1; i < header.size(); ++i)
    if (header[i] != "p" + std::to_string(i - 1))
      throw ParseError("unexpected column '" + header[i] + "'", 1);
  const int dim = int(header.size()) - 1;

  std::string task = task_flag;
  if (task.empty()) task = dim == 12 ? "joint" : "membrane";
  if (task == "joint" && dim != 12)
    throw ConfigError("joint export needs 12 prediction columns, got " +
                      std::to_string(dim));
  if (task == "membrane" && dim != 3 * (degree_u + 1) * (degree_v + 1))
    throw ConfigError("membrane export with degrees " + std::to_string(degree_u) + "x" +
                      std::to_string(degree_v) + " needs " +
                      std::to_string(3 * (degree_u + 1) * (degree_v + 1)) +
                      " columns, got " + std::to_string(dim));

  std::string csv;
  if (task == "joint")
    csv = "t_us,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n";
  else
    csv = "t_us,i,j,x,y,z\n";

  long frames = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<double> row = parse_csv_row(line, lineno, std::size_t(dim) + 1);
    const auto t_us = static_cast<std::int64_t>(row[0]);
    Eigen::VectorXd p(dim);
    for (int i = 0; i < dim; ++i) p[i] = row[std::size_t(i) + 1];

    if (task == "joint") {
      const Eigen::VectorXd v = model::encode_joint(model::decode_joint(p));
      csv += std::to_string(t_us);
      for (Eigen::Index i = 0; i < v.size(); ++i) csv += "," + io::fmt_g(v[i]);
      csv += "\n";
    } else {
      const bezier::BezierSurface s = model::decode_membrane(p, degree_u, degree_v);
      const std::vector<geom::Point3> pts = bezier::sample_grid(s, res, res);
      for (int i = 0; i < res; ++i)
        for (int jj = 0; jj < res; ++jj) {
          const geom::Point3& q = pts[std::size_t(i) * std::size_t(res) + std::size_t(jj)];
          csv += std::to_string(t_us) + "," + std::to_string(i) + "," +
                 std::to_string(jj) + "," + io::fmt_g(q.x) + "," + io::fmt_g(q.y) +
                 "," + io::fmt_g(q.z) + "\n";
        }
    }
    ++frames;
  }

  ensure_dir(out);
  const std::string out_name = task == "joint" ? "transforms.csv" : "grid.csv";
  const std::string out_path = join(out, out_name);
  io::write_file(out_path, csv);

  cli::Manifest man("export-grid");
  man.add_input(pred_path);
  man.set_extra("task", task);
  man.set_extra("res", res);
  man.add_output(out_path);
  man.write(out);

  std::printf("export-grid: task=%s frames=%ld -> %s\n", task.c_str(), frames,
              out_path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"soft-robot deformation sensing and reconstruction toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  int rc = 0;

  // Shared option storage; CLI11 copies values in before the callbacks run.
  std::string config, out, model_path, data_dir, log_path, stats_path, compare_path;
  std::string pred_path, task_flag;
  std::optional<std::uint64_t> seed;
  bool realtime = false;
  int latency_n = 0, res = 30, degree_u = 4, degree_v = 4;

  CLI::App* simulate = app.add_subcommand("simulate", "Generate synthetic logs");
  simulate->add_option("--config", config, "Scenario JSON")->required();
  simulate->add_option("--out", out, "Output directory")->required();
  simulate->add_option("--seed", seed, "Override the scenario seed");
  simulate->callback([&] { rc = cli::run_mapped([&] { cmd_simulate(config, out, seed); }); });

  CLI::App* prepare = app.add_subcommand("prepare", "Sync, label, and split logs");
  prepare->add_option("--config", config, "Preparation JSON")->required();
  prepare->add_option("--out", out, "Archive directory")->required();
  prepare->add_option("--seed", seed, "Recorded in the manifest");
  prepare->callback([&] { rc = cli::run_mapped([&] { cmd_prepare(config, out, seed); }); });

  CLI::App* train = app.add_subcommand("train", "Train a model on an archive");
  train->add_option("--config", config, "Model JSON")->required();
  train->add_option("--data", data_dir, "Prepared archive directory")->required();
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--seed", seed, "Override the model seed");
  train->callback(
      [&] { rc = cli::run_mapped([&] { cmd_train(config, data_dir, out, seed); }); });

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a model or compare kinds");
  eval_cmd->add_option("--model", model_path, "Trained model JSON");
  eval_cmd->add_option("--compare", compare_path, "Comparison config JSON");
  eval_cmd->add_option("--data", data_dir, "Prepared archive directory")->required();
  eval_cmd->add_option("--out", out, "Output directory")->required();
  eval_cmd->add_option("--seed", seed, "Seed for --compare retraining");
  eval_cmd->add_option("--latency", latency_n, "Also time N single predictions");
  eval_cmd->callback([&] {
    rc = cli::run_mapped(
        [&] { cmd_eval(model_path, compare_path, data_dir, out, seed, latency_n); });
  });

  CLI::App* ablate = app.add_subcommand("ablate", "Retrain on sensor subsets");
  ablate->add_option("--config", config, "Ablation JSON (model + subsets)")->required();
  ablate->add_option("--data", data_dir, "Prepared archive directory")->required();
  ablate->add_option("--out", out, "Output directory")->required();
  ablate->add_option("--seed", seed, "Override the model seed");
  ablate->callback(
      [&] { rc = cli::run_mapped([&] { cmd_ablate(config, data_dir, out, seed); }); });

  CLI::App* resolution = app.add_subcommand("resolution", "Grid resolution study");
  resolution->add_option("--config", config, "Study JSON (model + degrees)")->required();
  resolution->add_option("--data", data_dir, "Prepared archive directory")->required();
  resolution->add_option("--out", out, "Output directory")->required();
  resolution->add_option("--seed", seed, "Override the model seed");
  resolution->callback(
      [&] { rc = cli::run_mapped([&] { cmd_resolution(config, data_dir, out, seed); }); });

  CLI::App* replay = app.add_subcommand("replay", "Stream a sensor log through a model");
  replay->add_option("--model", model_path, "Trained model JSON")->required();
  replay->add_option("--log", log_path, "Sensor CSV to stream")->required();
  replay->add_option("--stats", stats_path, "norm_stats.json the model was trained with")
      ->required();
  replay->add_option("--out", out, "Output directory")->required();
  replay->add_flag("--realtime", realtime, "Pace ticks against the wall clock");
  replay->add_option("--task", task_flag, "joint|membrane (defaults from the model)")
      ->check(CLI::IsMember({"joint", "membrane"}));
  replay->callback([&] {
    rc = cli::run_mapped(
        [&] { cmd_replay(model_path, log_path, stats_path, out, realtime, task_flag); });
  });

  CLI::App* export_grid = app.add_subcommand("export-grid", "Expand predictions to shapes");
  export_grid->add_option("--pred", pred_path, "predictions.csv from replay")->required();
  export_grid->add_option("--out", out, "Output directory")->required();
  export_grid->add_option("--res", res, "Samples per grid axis");
  export_grid->add_option("--degree-u", degree_u, "Surface degree u");
  export_grid->add_option("--degree-v", degree_v, "Surface degree v");
  export_grid->add_option("--task", task_flag, "joint|membrane (defaults from column count)")
      ->check(CLI::IsMember({"joint", "membrane"}));
  export_grid->callback([&] {
    rc = cli::run_mapped(
        [&] { cmd_export_grid(pred_path, out, res, degree_u, degree_v, task_flag); });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return rc;
}
