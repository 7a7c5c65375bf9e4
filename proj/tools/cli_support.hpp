#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "softrecon/archive.hpp"
#include "softrecon/dataset.hpp"
#include "softrecon/eval.hpp"

namespace softrecon::cli {

/// Runs a command body and maps exceptions onto the exit-code contract:
/// 0 ok, 2 invalid config/content, 3 I/O, 4 numeric or data failure.
int run_mapped(const std::function<void()>& body);

/// SOFTRECON_THREADS, defaulting to the hardware thread count; must be a
/// positive integer when set.
int thread_cap();

std::string now_iso8601();

/// Collects the run description and writes manifest.json next to the outputs.
class Manifest {
 public:
  explicit Manifest(const std::string& command);

  void set_config(const std::string& path, const std::string& content);
  void set_seed(std::uint64_t seed);
  void add_input(const std::string& path);
  void add_output(const std::string& path);  // digested at write() time
  void set_extra(const std::string& key, const nlohmann::json& value);

  /// Digests outputs (keys relative to out_dir) and writes out_dir/manifest.json.
  void write(const std::string& out_dir);

 private:
  nlohmann::json j_;
  std::vector<std::string> outputs_;
};

/// Bounded single-producer single-consumer frame queue for the replay
/// pipeline. push blocks when full; pop returns nullopt after close().
class FrameQueue {
 public:
  explicit FrameQueue(std::size_t cap) : cap_(cap) {}

  void push(data::SensorFrame f);
  void close();
  std::optional<data::SensorFrame> pop();

 private:
  std::mutex m_;
  std::condition_variable cv_;
  std::deque<data::SensorFrame> q_;
  std::size_t cap_;
  bool closed_ = false;
};

/// Streaming 100 Hz tick windower: feed 1000 Hz frames in order, collect
/// (tick, trailing window) pairs once enough lookahead has arrived. Applies
/// the same pairing rules as dataset synchronization (0.5 ms match, 1.5 ms
/// max gap, window_len consecutive frames ending at the matched frame).
class TickWindower {
 public:
  struct Tick {
    std::int64_t t_us = 0;
    std::vector<data::SensorFrame> window;
  };

  explicit TickWindower(int window_len);

  void push(const data::SensorFrame& f);
  void finish();
  std::optional<Tick> pop();  // next ready tick, in order

  std::int64_t skipped() const { return skipped_; }  // ticks without a valid window

 private:
  void resolve(bool at_end);

  int window_len_;
  std::deque<data::SensorFrame> buf_;
  std::deque<Tick> ready_;
  std::int64_t next_tick_ = -1;
  std::int64_t skipped_ = 0;
  bool started_ = false;
};

/// Assembles the eval module's bundle from a loaded archive: normalized
/// inputs, raw labels (truth sidecar preferred for the test split), marker
/// frames for membrane datasets.
eval::EvalData build_eval_data(const data::DatasetArchive& archive,
                               const std::string& dataset_id);

}  // namespace softrecon::cli
