#include "cli_support.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <thread>
#include <utility>

#include "softrecon/errors.hpp"
#include "softrecon/io_util.hpp"
#include "softrecon/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace softrecon::cli {

int run_mapped(const std::function<void()>& body) {
  const auto fail = [](const char* what) {
    std::fprintf(stderr, "softrecon: error: %s\n", what);
  };
  try {
    body();
    return 0;
  } catch (const ConfigError& e) {
    fail(e.what());
    return 2;
  } catch (const ParseError& e) {
    fail(e.what());
    return 2;
  } catch (const UnknownBatch& e) {
    fail(e.what());
    return 2;
  } catch (const VersionMismatch& e) {
    fail(e.what());
    return 2;
  } catch (const CorruptFile& e) {
    fail(e.what());
    return 2;
  } catch (const IoError& e) {
    fail(e.what());
    return 3;
  } catch (const std::exception& e) {
    fail(e.what());
    return 4;
  }
}

int thread_cap() {
  const char* env = std::getenv("SOFTRECON_THREADS");
  if (env == nullptr || *env == '\0') {
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }
  int n = 0;
  const char* last = env + std::string_view(env).size();
  auto [ptr, ec] = std::from_chars(env, last, n);
  if (ec != std::errc{} || ptr != last || n <= 0)
    throw ConfigError(std::string("SOFTRECON_THREADS must be a positive integer, got '") +
                      env + "'");
  return n;
}

std::string now_iso8601() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Manifest::Manifest(const std::string& command) {
  j_["format_version"] = kFormatVersion;
  j_["tool_version"] = kVersion;
  j_["command"] = command;
  j_["started_at"] = now_iso8601();
  j_["inputs"] = json::array();
}

void Manifest::set_config(const std::string& path, const std::string& content) {
  j_["config_path"] = path;
  j_["config_sha256"] = io::sha256_hex(content);
}

void Manifest::set_seed(std::uint64_t seed) { j_["seed"] = seed; }

void Manifest::add_input(const std::string& path) { j_["inputs"].push_back(path); }

void Manifest::add_output(const std::string& path) { outputs_.push_back(path); }

void Manifest::set_extra(const std::string& key, const json& value) { j_[key] = value; }

void Manifest::write(const std::string& out_dir) {
  j_["finished_at"] = now_iso8601();
  json outs = json::object();
  for (const std::string& p : outputs_) {
    std::string key = fs::proximate(p, out_dir).generic_string();
    outs[key] = io::sha256_file(p);
  }
  j_["outputs"] = outs;
  io::write_file((fs::path(out_dir) / "manifest.json").string(), j_.dump(2) + "\n");
}

void FrameQueue::push(data::SensorFrame f) {
  std::unique_lock lk(m_);
  cv_.wait(lk, [&] { return q_.size() < cap_ || closed_; });
  if (closed_) return;
  q_.push_back(std::move(f));
  cv_.notify_all();
}

void FrameQueue::close() {
  std::lock_guard lk(m_);
  closed_ = true;
  cv_.notify_all();
}

std::optional<data::SensorFrame> FrameQueue::pop() {
  std::unique_lock lk(m_);
  cv_.wait(lk, [&] { return !q_.empty() || closed_; });
  if (q_.empty()) return std::nullopt;
  data::SensorFrame f = std::move(q_.front());
  q_.pop_front();
  cv_.notify_all();
  return f;
}

namespace {
constexpr std::int64_t kTickUs = 10'000;  // 100 Hz prediction clock
constexpr std::int64_t kPairUs = 500;
constexpr std::int64_t kGapUs = 1'500;
}  // namespace

TickWindower::TickWindower(int window_len) : window_len_(window_len) {
  if (window_len < 1) throw ConfigError("window length must be positive");
}

void TickWindower::push(const data::SensorFrame& f) {
  if (!buf_.empty() && f.t_us <= buf_.back().t_us)
    throw NonMonotonicTime("sensor stream time went backwards at t_us=" +
                           std::to_string(f.t_us));
  if (!started_) {
    started_ = true;
    next_tick_ = (f.t_us + kTickUs - 1) / kTickUs * kTickUs;
  }
  buf_.push_back(f);
  resolve(false);
}

void TickWindower::finish() { resolve(true); }

std::optional<TickWindower::Tick> TickWindower::pop() {
  if (ready_.empty()) return std::nullopt;
  Tick t = std::move(ready_.front());
  ready_.pop_front();
  return t;
}

void TickWindower::resolve(bool at_end) {
  if (!started_) return;
  while (!buf_.empty()) {
    const std::int64_t newest = buf_.back().t_us;
    if (newest <= next_tick_ + kPairUs) {
      // A closer frame could still arrive; at EOF, ticks past the last
      // frame's reach stay unmatched forever.
      if (!at_end) return;
      if (next_tick_ > newest + kPairUs) return;
    }
    int best = -1;
    std::int64_t best_d = kPairUs + 1;
    for (int i = 0; i < static_cast<int>(buf_.size()); ++i) {
      const std::int64_t d = std::abs(buf_[i].t_us - next_tick_);
      if (d < best_d) {  // strict: ties keep the earlier frame
        best_d = d;
        best = i;
      }
    }
    bool ok = best >= window_len_ - 1;
    if (ok) {
      for (int i = best - window_len_ + 1; i < best; ++i) {
        const std::int64_t dt = buf_[i + 1].t_us - buf_[i].t_us;
        if (dt <= 0 || dt > kGapUs) {
          ok = false;
          break;
        }
      }
    }
    if (ok) {
      Tick t;
      t.t_us = next_tick_;
      t.window.assign(buf_.begin() + (best - window_len_ + 1), buf_.begin() + best + 1);
      ready_.push_back(std::move(t));
    } else {
      ++skipped_;
    }
    next_tick_ += kTickUs;
    const std::int64_t floor_t = next_tick_ - kPairUs - (window_len_ - 1) * kGapUs;
    while (!buf_.empty() && buf_.front().t_us < floor_t) buf_.pop_front();
  }
}

eval::EvalData build_eval_data(const data::DatasetArchive& archive,
                               const std::string& dataset_id) {
  eval::EvalData d;
  d.dataset_id = dataset_id;
  d.task = archive.task;
  const auto norm = [&](const std::vector<data::WindowedSample>& s) {
    return data::apply_normalizer(archive.stats, data::inputs_matrix(s), archive.channels);
  };
  d.x_train = norm(archive.train.samples);
  d.y_train = data::labels_matrix(archive.train.samples);
  d.x_val = norm(archive.validation.samples);
  d.y_val = data::labels_matrix(archive.validation.samples);
  d.x_test = norm(archive.test.samples);
  // Test labels come from the simulator truth sidecar when the archive has
  // one, so reported errors are against ground truth rather than the
  // marker-derived labels.
  d.y_test = archive.test.truth.size() > 0 ? archive.test.truth
                                           : data::labels_matrix(archive.test.samples);
  d.train_markers = archive.train.markers;
  d.val_markers = archive.validation.markers;
  d.test_markers = archive.test.markers;
  d.uv_table = archive.uv_table;
  d.degree_u = archive.degree_u;
  d.degree_v = archive.degree_v;
  return d;
}

}  // namespace softrecon::cli
