#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "softrecon/bezier.hpp"
#include "softrecon/dataset.hpp"
#include "softrecon/geometry.hpp"

namespace softrecon::sim {

struct NoiseConfig {
  double marker_mm = 0.2;   // std-dev per marker coordinate
  double sensor = 0.005;    // std-dev per reading, dimensionless
  double occlusion = 0.0;   // fraction of marker cells left empty
};

/// One LED/LDR channel: reading = gain / d^exponent + leakage + bias, put
/// through a first-order lag, noised, clamped to [0,1].
struct SensorChannel {
  double gain = 1.0;
  double bias = 0.02;
  double exponent = 2.0;
  double lag_ms = 15.0;
  std::vector<double> leakage;  // per source channel, self entry 0
};

struct SensorModel {
  std::vector<SensorChannel> channels;

  void validate() const;  // gain > 0, lag >= 0, leakage square
};

/// Stateful evaluator: keeps the per-channel lag filter between samples.
class SensorRig {
 public:
  explicit SensorRig(const SensorModel& model);

  /// One sample from per-channel distances d (mm). gain_scale models the
  /// load-dependent brightness shift; dt advances the lag filter.
  Eigen::VectorXd step(const Eigen::VectorXd& d, double gain_scale, double dt_s,
                       double noise_sigma, std::mt19937_64& rng);

 private:
  const SensorModel& model_;
  Eigen::VectorXd state_;  // empty until the first step
};

struct JointScenario {
  double duration_s = 10.0;
  std::vector<geom::RigidTransform> way_poses;  // visited evenly over duration
  std::vector<std::pair<double, double>> load_schedule_g;  // (t_s, grams), step-held
  NoiseConfig noise;
  SensorModel sensors;
  std::uint64_t seed = 0;

  void validate() const;  // duration > 0, |pitch|,|roll| <= 45 deg at way poses
};

struct Wave {
  double amp = 0.0;
  double freq_hz = 0.0;
  double phase_rad = 0.0;
};

struct PressureChannel {
  double offset = 0.0;
  std::vector<Wave> waves;

  double at(double t_s) const;  // clamped to [0,1]
};

struct MembraneScenario {
  double duration_s = 10.0;
  std::array<PressureChannel, 4> pressures;
  Eigen::Matrix4d coupling = Eigen::Matrix4d::Identity();
  int degree_u = 4;
  int degree_v = 4;
  NoiseConfig noise;
  SensorModel sensors;
  std::uint64_t seed = 0;

  void validate() const;  // duration > 0, coupling rows sum in [0.5, 2]
};

struct JointTruthFrame {
  std::int64_t t_us = 0;
  geom::RigidTransform pose;
  double load_g = 0.0;
};

struct MembraneTruthFrame {
  std::int64_t t_us = 0;
  bezier::ControlGrid grid;
  Eigen::Vector4d coupled;  // effective module drives after coupling
};

struct JointStreams {
  std::vector<JointTruthFrame> truth;  // 100 Hz
  data::MarkerLog markers;             // 100 Hz
  data::SensorLog sensors;             // 1000 Hz
  data::JointLayout layout;
};

struct MembraneStreams {
  std::vector<MembraneTruthFrame> truth;
  data::MarkerLog markers;
  data::SensorLog sensors;
  data::MembraneLayout layout;
};

/// Factory-default 12-channel rigs (3 bellows x 4 LDRs / 4 modules x 3 probes).
SensorModel default_joint_sensors(double lag_ms = 15.0);
SensorModel default_membrane_sensors(double lag_ms = 15.0);

/// Rest-pose marker layout shared by the generator and the labeling step.
data::JointLayout joint_layout();
data::MembraneLayout membrane_layout();

/// Evenly spaced random way poses within the working envelope; the first is
/// always the rest pose.
std::vector<geom::RigidTransform> random_way_poses(int count, std::uint64_t seed);

/// Random per-module pressure waveforms with `components` sinusoids each.
std::array<PressureChannel, 4> random_pressures(int components, std::uint64_t seed);

/// Commanded pose at time t: smoothstep-eased slerp between way poses.
geom::RigidTransform joint_pose_at(const JointScenario& s, double t_s);

/// Control grid at time t (noise-free geometry; fixed xy, pressure-driven z).
bezier::ControlGrid membrane_grid_at(const MembraneScenario& s, double t_s);

JointStreams gen_joint(const JointScenario& scenario);
MembraneStreams gen_membrane(const MembraneScenario& scenario);

/// Scenario files are JSON with format_version = 1 and task "joint" or
/// "membrane"; throws ConfigError on anything malformed.
std::string scenario_task(const std::string& json_text);
JointScenario parse_joint_scenario(const std::string& json_text);
MembraneScenario parse_membrane_scenario(const std::string& json_text);

/// Writes sensors.csv / markers.csv / truth.csv / layout.json under out_dir
/// using the dataset module's schemas; returns the file paths written.
std::vector<std::string> emit_logs(const JointStreams& streams, const std::string& out_dir);
std::vector<std::string> emit_logs(const MembraneStreams& streams, const std::string& out_dir);

/// layout.json round trip (prepare reads these back).
std::string layout_task(const std::string& json_text);
std::string layout_to_json(const data::JointLayout& layout);
std::string layout_to_json(const data::MembraneLayout& layout);
data::JointLayout joint_layout_from_json(const std::string& json_text);
data::MembraneLayout membrane_layout_from_json(const std::string& json_text);

}  // namespace softrecon::sim
