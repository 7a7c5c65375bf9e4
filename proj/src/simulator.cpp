#include "softrecon/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "softrecon/errors.hpp"
#include "softrecon/io_util.hpp"
#include "softrecon/models.hpp"

namespace softrecon::sim {

namespace {

// Joint rig geometry (mm): marker triangles of radius 40 at z = 0 / 60,
// bellow anchors on a radius-35 circle, 4 LDRs spread inside each bellow.
constexpr double kTopHeight = 60.0;
constexpr double kMarkerRadius = 40.0;
constexpr double kAnchorRadius = 35.0;
constexpr double kMarkerAngleDeg[3] = {90.0, 210.0, 330.0};
constexpr double kBellowAngleDeg[3] = {30.0, 150.0, 270.0};
constexpr double kLdrOffsetDeg[4] = {-18.0, -6.0, 6.0, 18.0};
// Top-plate reflectors are strapped in the reverse order of their LDRs, so each
// pair spans a different azimuthal gap and twist changes the gaps asymmetrically.
constexpr double kReflectorOffsetDeg[4] = {18.0, 6.0, -6.0, -18.0};
constexpr double kSagMmPerGram = 0.006;      // 3 mm at 500 g
constexpr double kGainShiftPerGram = 1e-4;   // +5% brightness at 500 g

// Membrane rig geometry (mm): 200x200 active area inside a rigid frame,
// 4 pressure modules under the quadrant centers, probes 25 mm deep.
constexpr double kMembraneHalf = 100.0;
constexpr double kFrameHalf = 105.0;
constexpr double kInflationAmp = 35.0;
constexpr double kWeightSigma = 55.0;
constexpr double kProbeDepth = 25.0;
constexpr double kModuleXY[4][2] = {{-50.0, -50.0}, {50.0, -50.0}, {-50.0, 50.0}, {50.0, 50.0}};
constexpr double kProbeUvOffset[3][2] = {{0.0, 0.0}, {0.15, 0.06}, {-0.09, 0.13}};
// Low-tension spots between the chambers flutter while the pumps cycle; the
// ripple pattern is a fixed property of the membrane, its phase is not.
constexpr double kRippleXY[][2] = {{-66.0, -22.0}, {34.0, -22.0}, {30.0, 78.0},
                                   {-20.0, -40.0}, {78.0, 60.0},  {-64.0, 74.0}};
constexpr int kNumRipples = int(std::size(kRippleXY));
constexpr double kRippleSigma = 32.0;
constexpr double kRippleAmp = 4.0;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double smoothstep(double x) { return x * x * (3.0 - 2.0 * x); }

double gauss(std::mt19937_64& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  std::normal_distribution<double> n(0.0, sigma);
  return n(rng);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return u(rng);
}

void check_noise(const NoiseConfig& n) {
  if (n.marker_mm < 0.0 || n.sensor < 0.0) throw ConfigError("noise sigmas must be >= 0");
  if (n.occlusion < 0.0 || n.occlusion >= 1.0)
    throw ConfigError("occlusion fraction must lie in [0, 1)");
}

double load_at(const std::vector<std::pair<double, double>>& schedule, double t_s) {
  double g = 0.0;
  for (const auto& [t, grams] : schedule) {
    if (t > t_s) break;
    g = grams;
  }
  return g;
}

Eigen::Vector3d anchor(double angle_deg, double z) {
  const double a = geom::deg_to_rad(angle_deg);
  return {kAnchorRadius * std::cos(a), kAnchorRadius * std::sin(a), z};
}

Eigen::VectorXd joint_distances(const geom::RigidTransform& pose) {
  Eigen::VectorXd d(12);
  for (int i = 0; i < 12; ++i) {
    const double base_ang = kBellowAngleDeg[i / 4] + kLdrOffsetDeg[i % 4];
    const double top_ang = kBellowAngleDeg[i / 4] + kReflectorOffsetDeg[i % 4];
    const Eigen::Vector3d top = pose.rotation.m * anchor(top_ang, kTopHeight) + pose.translation;
    d[i] = (top - anchor(base_ang, 0.0)).norm();
  }
  return d;
}

geom::Point3 noised(const geom::Point3& p, double sigma, std::mt19937_64& rng) {
  return {p.x + gauss(rng, sigma), p.y + gauss(rng, sigma), p.z + gauss(rng, sigma)};
}

}  // namespace

void SensorModel::validate() const {
  if (channels.empty()) throw ConfigError("sensor model has no channels");
  for (const SensorChannel& c : channels) {
    if (!(c.gain > 0.0)) throw ConfigError("sensor gain must be > 0");
    if (c.lag_ms < 0.0) throw ConfigError("sensor lag must be >= 0");
    if (c.exponent <= 0.0) throw ConfigError("distance exponent must be > 0");
    if (c.leakage.size() != channels.size())
      throw ConfigError("leakage row length must equal the channel count");
  }
}

SensorRig::SensorRig(const SensorModel& model) : model_(model) { model_.validate(); }

Eigen::VectorXd SensorRig::step(const Eigen::VectorXd& d, double gain_scale, double dt_s,
                                double noise_sigma, std::mt19937_64& rng) {
  const int n = int(model_.channels.size());
  if (d.size() != n) throw SizeMismatch("distance vector does not match the sensor count");

  Eigen::VectorXd primary(n);
  for (int i = 0; i < n; ++i) {
    const SensorChannel& c = model_.channels[std::size_t(i)];
    primary[i] = gain_scale * c.gain / std::pow(d[i], c.exponent);
  }
  Eigen::VectorXd clean(n);
  for (int i = 0; i < n; ++i) {
    const SensorChannel& c = model_.channels[std::size_t(i)];
    double v = primary[i] + c.bias;
    for (int j = 0; j < n; ++j) v += c.leakage[std::size_t(j)] * primary[j];
    clean[i] = v;
  }

  if (state_.size() == 0) state_ = clean;  // start the filter at steady state
  for (int i = 0; i < n; ++i) {
    const double tau = model_.channels[std::size_t(i)].lag_ms / 1000.0;
    state_[i] += dt_s / (tau + dt_s) * (clean[i] - state_[i]);
  }

  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) out[i] = clamp01(state_[i] + gauss(rng, noise_sigma));
  return out;
}

SensorModel default_joint_sensors(double lag_ms) {
  SensorModel m;
  m.channels.resize(12);
  const Eigen::VectorXd rest = joint_distances(geom::RigidTransform::identity());
  for (int i = 0; i < 12; ++i) {
    SensorChannel& c = m.channels[std::size_t(i)];
    c.exponent = 2.2 + 0.3 * (i % 4);
    c.gain = 0.38 * std::pow(rest[i], c.exponent);  // 0.38 at the rest pose
    c.bias = 0.02;
    c.lag_ms = lag_ms;
    c.leakage.assign(12, 0.0);
    for (int j = 0; j < 12; ++j) {
      if (j == i) continue;
      c.leakage[std::size_t(j)] = (j / 4 == i / 4) ? 0.03 : 0.008;
    }
  }
  return m;
}

SensorModel default_membrane_sensors(double lag_ms) {
  SensorModel m;
  m.channels.resize(12);
  for (int i = 0; i < 12; ++i) {
    SensorChannel& c = m.channels[std::size_t(i)];
    c.exponent = 1.6 + 0.2 * (i % 3);
    c.gain = 0.6 * std::pow(kProbeDepth, c.exponent);  // 0.6 against the flat membrane
    c.bias = 0.02;
    c.lag_ms = lag_ms;
    c.leakage.assign(12, 0.0);
    for (int j = 0; j < 12; ++j) {
      if (j == i) continue;
      c.leakage[std::size_t(j)] = (j / 3 == i / 3) ? 0.04 : 0.01;
    }
  }
  return m;
}

data::JointLayout joint_layout() {
  data::JointLayout layout;
  layout.bottom_ids = {"b0", "b1", "b2"};
  layout.reference_id = "b0";
  for (int k = 0; k < 3; ++k) {
    const double a = geom::deg_to_rad(kMarkerAngleDeg[k]);
    layout.flat_top.push_back("t" + std::to_string(k),
                              {kMarkerRadius * std::cos(a), kMarkerRadius * std::sin(a),
                               kTopHeight});
  }
  return layout;
}

data::MembraneLayout membrane_layout() {
  data::MembraneLayout layout;
  layout.fixed_ids = {"f0", "f1", "f2", "f3"};
  layout.uv_table.degree_u = 4;
  layout.uv_table.degree_v = 4;
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j)
      layout.uv_table.entries.push_back(
          {"g" + std::to_string(i) + std::to_string(j), {i / 8.0, j / 8.0}});
  return layout;
}

std::vector<geom::RigidTransform> random_way_poses(int count, std::uint64_t seed) {
  if (count < 1) throw ConfigError("way pose count must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<geom::RigidTransform> poses;
  poses.push_back(geom::RigidTransform::identity());  // start at rest
  const Eigen::Vector3d rest_center(0.0, 0.0, kTopHeight);
  for (int k = 1; k < count; ++k) {
    // Constant-curvature kinematics: the joint twists about its backbone and
    // bends as a circular arc, so the tip center is slaved to the bend aside
    // from millimetre-scale elastic scatter.
    const double psi = geom::deg_to_rad(uniform(rng, -50.0, 50.0));
    const double theta = geom::deg_to_rad(uniform(rng, 0.0, 26.0));
    const double phi = geom::deg_to_rad(uniform(rng, 0.0, 360.0));
    const double chord = theta < 1e-9 ? kTopHeight : kTopHeight / theta;
    const Eigen::Vector3d arc_center(chord * (1.0 - std::cos(theta)) * std::cos(phi),
                                     chord * (1.0 - std::cos(theta)) * std::sin(phi),
                                     chord * std::sin(theta));
    const Eigen::Vector3d center =
        arc_center + Eigen::Vector3d(uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5),
                                     uniform(rng, -2.0, 2.0));
    geom::RigidTransform t;
    t.rotation.m =
        (Eigen::AngleAxisd(theta, Eigen::Vector3d(-std::sin(phi), std::cos(phi), 0.0)) *
         Eigen::AngleAxisd(psi, Eigen::Vector3d::UnitZ()))
            .toRotationMatrix();
    t.translation = center - t.rotation.m * rest_center;
    poses.push_back(t);
  }
  return poses;
}

std::array<PressureChannel, 4> random_pressures(int components, std::uint64_t seed) {
  if (components < 1) throw ConfigError("pressure component count must be >= 1");
  std::mt19937_64 rng(seed);
  std::array<PressureChannel, 4> out;
  for (PressureChannel& ch : out) {
    ch.offset = uniform(rng, 0.15, 0.45);
    for (int c = 0; c < components; ++c) {
      Wave w;
      w.amp = uniform(rng, 0.08, 0.28);
      w.freq_hz = uniform(rng, 0.05, 0.35);
      w.phase_rad = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      ch.waves.push_back(w);
    }
  }
  return out;
}

double PressureChannel::at(double t_s) const {
  double v = offset;
  for (const Wave& w : waves)
    v += w.amp * std::sin(2.0 * std::numbers::pi * w.freq_hz * t_s + w.phase_rad);
  return clamp01(v);
}

void JointScenario::validate() const {
  if (!(duration_s > 0.0)) throw ConfigError("duration must be > 0");
  if (way_poses.empty()) throw ConfigError("scenario needs at least one way pose");
  for (const geom::RigidTransform& t : way_poses) {
    if (!t.rotation.orthonormal(1e-6)) throw ConfigError("way pose rotation is not in SO(3)");
    const geom::EulerAngles e = geom::rotation_to_tait_bryan(t.rotation);
    if (std::abs(e.pitch) > 45.0 + 1e-9 || std::abs(e.roll) > 45.0 + 1e-9)
      throw ConfigError("way pose exceeds the 45 degree pitch/roll envelope");
  }
  double prev_t = -1.0;
  for (const auto& [t, grams] : load_schedule_g) {
    if (t < prev_t) throw ConfigError("load schedule times must be nondecreasing");
    if (grams < 0.0) throw ConfigError("load must be >= 0 grams");
    prev_t = t;
  }
  check_noise(noise);
  sensors.validate();
}

void MembraneScenario::validate() const {
  if (!(duration_s > 0.0)) throw ConfigError("duration must be > 0");
  if (degree_u < 1 || degree_u > 8 || degree_v < 1 || degree_v > 8)
    throw ConfigError("surface degrees must lie in [1, 8]");
  for (int r = 0; r < 4; ++r) {
    const double s = coupling.row(r).sum();
    if (s < 0.5 || s > 2.0)
      throw ConfigError("coupling row " + std::to_string(r) + " sums to " +
                        std::to_string(s) + ", outside [0.5, 2]");
  }
  check_noise(noise);
  sensors.validate();
}

geom::RigidTransform joint_pose_at(const JointScenario& s, double t_s) {
  const std::size_t n = s.way_poses.size();
  geom::RigidTransform pose;
  if (n == 1) {
    pose = s.way_poses[0];
  } else {
    const double seg = s.duration_s / double(n - 1);
    std::size_t k = std::min(std::size_t(t_s / seg), n - 2);
    const double u = std::clamp((t_s - double(k) * seg) / seg, 0.0, 1.0);
    const double e = smoothstep(u);
    const geom::RigidTransform& a = s.way_poses[k];
    const geom::RigidTransform& b = s.way_poses[k + 1];
    Eigen::Quaterniond qa(a.rotation.m);
    Eigen::Quaterniond qb(b.rotation.m);
    pose.rotation.m = qa.slerp(e, qb).toRotationMatrix();
    pose.translation = (1.0 - e) * a.translation + e * b.translation;
  }
  pose.translation.z() -= kSagMmPerGram * load_at(s.load_schedule_g, t_s);
  return pose;
}

namespace {

// Gaussian influence of module m on control point (i, j) of a grid whose
// xy positions are fixed on a uniform lattice over the active area.
double module_weight(int m, double x, double y) {
  const double dx = x - kModuleXY[m][0];
  const double dy = y - kModuleXY[m][1];
  return std::exp(-(dx * dx + dy * dy) / (2.0 * kWeightSigma * kWeightSigma));
}

double grid_x(int i, int degree_u) {
  return -kMembraneHalf + 2.0 * kMembraneHalf * double(i) / double(degree_u);
}

double grid_y(int j, int degree_v) {
  return -kMembraneHalf + 2.0 * kMembraneHalf * double(j) / double(degree_v);
}

Eigen::Vector4d coupled_drives(const MembraneScenario& s, double t_s) {
  Eigen::Vector4d p;
  for (int m = 0; m < 4; ++m) p[m] = s.pressures[std::size_t(m)].at(t_s);
  Eigen::Vector4d q = s.coupling * p;
  for (int m = 0; m < 4; ++m) q[m] = clamp01(q[m]);
  return q;
}

double ripple_weight(int w, double x, double y) {
  const double dx = x - kRippleXY[w][0];
  const double dy = y - kRippleXY[w][1];
  return std::exp(-(dx * dx + dy * dy) / (2.0 * kRippleSigma * kRippleSigma));
}

// Each ripple flutters as two sinusoids with scenario-specific phases and
// rates, fast enough to move between sensor frames.
std::array<PressureChannel, kNumRipples> ripple_drives(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedf01dull);
  std::array<PressureChannel, kNumRipples> out;
  for (PressureChannel& ch : out) {
    ch.offset = 0.0;
    for (int c = 0; c < 2; ++c) {
      Wave w;
      w.amp = uniform(rng, 0.25, 0.45);
      w.freq_hz = uniform(rng, 2.0, 5.0);
      w.phase_rad = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      ch.waves.push_back(w);
    }
  }
  return out;
}

// Ripple relief in mm, bypassing the [0, 1] pressure clamp: the sheet bulges
// and dents on both sides of rest.
double ripple_mm(const PressureChannel& ch, double t_s) {
  double v = 0.0;
  for (const Wave& w : ch.waves)
    v += w.amp * std::sin(2.0 * std::numbers::pi * w.freq_hz * t_s + w.phase_rad);
  return kRippleAmp * v;
}

}  // namespace

bezier::ControlGrid membrane_grid_at(const MembraneScenario& s, double t_s) {
  const Eigen::Vector4d q = coupled_drives(s, t_s);
  const std::array<PressureChannel, kNumRipples> wr = ripple_drives(s.seed);
  bezier::ControlGrid grid = bezier::ControlGrid::zeros(s.degree_u, s.degree_v);
  for (int i = 0; i <= s.degree_u; ++i) {
    for (int j = 0; j <= s.degree_v; ++j) {
      const double x = grid_x(i, s.degree_u);
      const double y = grid_y(j, s.degree_v);
      double z = 0.0;
      for (int m = 0; m < 4; ++m) z += kInflationAmp * module_weight(m, x, y) * smoothstep(q[m]);
      for (int w = 0; w < kNumRipples; ++w)
        z += ripple_weight(w, x, y) * ripple_mm(wr[std::size_t(w)], t_s);
      grid.at(i, j) = {x, y, z};
    }
  }
  return grid;
}

JointStreams gen_joint(const JointScenario& scenario) {
  scenario.validate();
  JointStreams out;
  out.layout = joint_layout();

  std::mt19937_64 rng_sensor(scenario.seed ^ 0x5a5a5a5a5a5a5a5aull);
  std::mt19937_64 rng_marker(scenario.seed ^ 0xa5a5a5a5a5a5a5a5ull);
  std::mt19937_64 rng_occl(scenario.seed ^ 0xc3c3c3c3c3c3c3c3ull);

  const long n_fast = std::lround(scenario.duration_s * 1000.0);
  const long n_slow = std::lround(scenario.duration_s * 100.0);

  SensorRig rig(scenario.sensors);
  out.sensors.channels = int(scenario.sensors.channels.size());
  out.sensors.frames.reserve(std::size_t(n_fast));
  for (long k = 0; k < n_fast; ++k) {
    const double t = double(k) / 1000.0;
    const geom::RigidTransform pose = joint_pose_at(scenario, t);
    const double gain_scale = 1.0 + kGainShiftPerGram * load_at(scenario.load_schedule_g, t);
    const Eigen::VectorXd r =
        rig.step(joint_distances(pose), gain_scale, 1e-3, scenario.noise.sensor, rng_sensor);
    data::SensorFrame f;
    f.t_us = k * 1000;
    f.readings.assign(r.data(), r.data() + r.size());
    out.sensors.frames.push_back(std::move(f));
  }

  geom::PointSet flat_bottom;
  for (int k = 0; k < 3; ++k) {
    const double a = geom::deg_to_rad(kMarkerAngleDeg[k]);
    flat_bottom.push_back("b" + std::to_string(k),
                          {kMarkerRadius * std::cos(a), kMarkerRadius * std::sin(a), 0.0});
  }

  out.markers.ids = {"b0", "b1", "b2", "t0", "t1", "t2"};
  out.markers.frames.reserve(std::size_t(n_slow));
  out.truth.reserve(std::size_t(n_slow));
  for (long k = 0; k < n_slow; ++k) {
    const double t = double(k) / 100.0;
    const geom::RigidTransform pose = joint_pose_at(scenario, t);
    out.truth.push_back({k * 10000, pose, load_at(scenario.load_schedule_g, t)});

    data::MarkerFrame f;
    f.t_us = k * 10000;
    std::vector<geom::Point3> world;
    for (const geom::Point3& p : flat_bottom.points)
      world.push_back(noised(p, scenario.noise.marker_mm, rng_marker));
    for (const geom::Point3& p : out.layout.flat_top.points)
      world.push_back(noised(geom::apply_transform(pose, p), scenario.noise.marker_mm,
                             rng_marker));
    for (const geom::Point3& p : world) {
      const bool drop = scenario.noise.occlusion > 0.0 &&
                        uniform(rng_occl, 0.0, 1.0) < scenario.noise.occlusion;
      if (drop)
        f.positions.emplace_back(std::nullopt);
      else
        f.positions.emplace_back(p);
    }
    f.complete = std::all_of(f.positions.begin(), f.positions.end(),
                             [](const auto& p) { return p.has_value(); });
    out.markers.frames.push_back(std::move(f));
  }
  return out;
}

MembraneStreams gen_membrane(const MembraneScenario& scenario) {
  scenario.validate();
  MembraneStreams out;
  out.layout = membrane_layout();
  out.layout.uv_table.degree_u = scenario.degree_u;
  out.layout.uv_table.degree_v = scenario.degree_v;

  std::mt19937_64 rng_sensor(scenario.seed ^ 0x5a5a5a5a5a5a5a5aull);
  std::mt19937_64 rng_marker(scenario.seed ^ 0xa5a5a5a5a5a5a5a5ull);
  std::mt19937_64 rng_occl(scenario.seed ^ 0xc3c3c3c3c3c3c3c3ull);

  const long n_fast = std::lround(scenario.duration_s * 1000.0);
  const long n_slow = std::lround(scenario.duration_s * 100.0);

  // Influence of each deformation source (4 chambers + the ripple spots) on
  // each probe's surface height, folded through the Bernstein basis once.
  const int nch = int(scenario.sensors.channels.size());
  Eigen::MatrixXd probe_w(nch, 4 + kNumRipples);
  for (int c = 0; c < nch; ++c) {
    const int m = c / 3;
    const double u = clamp01((kModuleXY[m][0] + kMembraneHalf) / (2.0 * kMembraneHalf) +
                             kProbeUvOffset[c % 3][0]);
    const double v = clamp01((kModuleXY[m][1] + kMembraneHalf) / (2.0 * kMembraneHalf) +
                             kProbeUvOffset[c % 3][1]);
    for (int src = 0; src < 4 + kNumRipples; ++src) {
      double w = 0.0;
      for (int i = 0; i <= scenario.degree_u; ++i)
        for (int j = 0; j <= scenario.degree_v; ++j) {
          const double gx = grid_x(i, scenario.degree_u);
          const double gy = grid_y(j, scenario.degree_v);
          w += bezier::bernstein(i, scenario.degree_u, u) *
               bezier::bernstein(j, scenario.degree_v, v) *
               (src < 4 ? module_weight(src, gx, gy) : ripple_weight(src - 4, gx, gy));
        }
      probe_w(c, src) = w;
    }
  }

  const std::array<PressureChannel, kNumRipples> wr = ripple_drives(scenario.seed);
  SensorRig rig(scenario.sensors);
  out.sensors.channels = nch;
  out.sensors.frames.reserve(std::size_t(n_fast));
  for (long k = 0; k < n_fast; ++k) {
    const double t = double(k) / 1000.0;
    const Eigen::Vector4d q = coupled_drives(scenario, t);
    Eigen::VectorXd s(4 + kNumRipples);
    for (int m = 0; m < 4; ++m) s[m] = kInflationAmp * smoothstep(q[m]);
    for (int w = 0; w < kNumRipples; ++w) s[4 + w] = ripple_mm(wr[std::size_t(w)], t);
    const Eigen::VectorXd d = (kProbeDepth + (probe_w * s).array()).matrix();
    const Eigen::VectorXd r = rig.step(d, 1.0, 1e-3, scenario.noise.sensor, rng_sensor);
    data::SensorFrame f;
    f.t_us = k * 1000;
    f.readings.assign(r.data(), r.data() + r.size());
    out.sensors.frames.push_back(std::move(f));
  }

  const geom::Point3 corners[4] = {{-kFrameHalf, -kFrameHalf, 0.0},
                                   {kFrameHalf, -kFrameHalf, 0.0},
                                   {kFrameHalf, kFrameHalf, 0.0},
                                   {-kFrameHalf, kFrameHalf, 0.0}};

  out.markers.ids = out.layout.fixed_ids;
  for (const auto& e : out.layout.uv_table.entries) out.markers.ids.push_back(e.id);
  out.markers.frames.reserve(std::size_t(n_slow));
  out.truth.reserve(std::size_t(n_slow));
  for (long k = 0; k < n_slow; ++k) {
    const double t = double(k) / 100.0;
    bezier::ControlGrid grid = membrane_grid_at(scenario, t);
    bezier::BezierSurface surface{grid};

    data::MarkerFrame f;
    f.t_us = k * 10000;
    std::vector<geom::Point3> world;
    for (const geom::Point3& c : corners)
      world.push_back(noised(c, scenario.noise.marker_mm, rng_marker));
    for (const auto& e : out.layout.uv_table.entries)
      world.push_back(
          noised(bezier::evaluate_surface(surface, e.uv), scenario.noise.marker_mm, rng_marker));
    for (const geom::Point3& p : world) {
      const bool drop = scenario.noise.occlusion > 0.0 &&
                        uniform(rng_occl, 0.0, 1.0) < scenario.noise.occlusion;
      if (drop)
        f.positions.emplace_back(std::nullopt);
      else
        f.positions.emplace_back(p);
    }
    f.complete = std::all_of(f.positions.begin(), f.positions.end(),
                             [](const auto& p) { return p.has_value(); });
    out.markers.frames.push_back(std::move(f));

    out.truth.push_back({k * 10000, std::move(grid), coupled_drives(scenario, t)});
  }
  return out;
}

namespace {

void write_sensor_csv(const data::SensorLog& log, const std::string& path) {
  std::ostringstream os;
  os << "t_us";
  for (int c = 0; c < log.channels; ++c) os << ",s" << c;
  os << "\n";
  for (const data::SensorFrame& f : log.frames) {
    os << f.t_us;
    for (double v : f.readings) os << ',' << io::fmt_g(v);
    os << "\n";
  }
  io::write_file(path, os.str());
}

void write_marker_csv(const data::MarkerLog& log, const std::string& path) {
  std::ostringstream os;
  os << "t_us";
  for (const std::string& id : log.ids) os << ',' << id << "_x," << id << "_y," << id << "_z";
  os << "\n";
  for (const data::MarkerFrame& f : log.frames) {
    os << f.t_us;
    for (const auto& p : f.positions) {
      if (p.has_value())
        os << ',' << io::fmt_g(p->x) << ',' << io::fmt_g(p->y) << ',' << io::fmt_g(p->z);
      else
        os << ",,,";
    }
    os << "\n";
  }
  io::write_file(path, os.str());
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

}  // namespace

std::vector<std::string> emit_logs(const JointStreams& streams, const std::string& out_dir) {
  ensure_dir(out_dir);
  const std::string sensors = out_dir + "/sensors.csv";
  const std::string markers = out_dir + "/markers.csv";
  const std::string truth = out_dir + "/truth.csv";
  const std::string layout = out_dir + "/layout.json";

  write_sensor_csv(streams.sensors, sensors);
  write_marker_csv(streams.markers, markers);

  std::ostringstream os;
  os << "t_us";
  for (int i = 0; i < 12; ++i) os << ",p" << i;
  os << ",load_g\n";
  for (const JointTruthFrame& f : streams.truth) {
    os << f.t_us;
    const Eigen::VectorXd p = model::encode_joint(f.pose);
    for (Eigen::Index i = 0; i < p.size(); ++i) os << ',' << io::fmt_g(p[i]);
    os << ',' << io::fmt_g(f.load_g) << "\n";
  }
  io::write_file(truth, os.str());
  io::write_file(layout, layout_to_json(streams.layout));
  return {sensors, markers, truth, layout};
}

std::vector<std::string> emit_logs(const MembraneStreams& streams, const std::string& out_dir) {
  ensure_dir(out_dir);
  const std::string sensors = out_dir + "/sensors.csv";
  const std::string markers = out_dir + "/markers.csv";
  const std::string truth = out_dir + "/truth.csv";
  const std::string layout = out_dir + "/layout.json";

  write_sensor_csv(streams.sensors, sensors);
  write_marker_csv(streams.markers, markers);

  std::ostringstream os;
  const int label_dim = streams.truth.empty()
                            ? 0
                            : 3 * streams.truth[0].grid.rows() * streams.truth[0].grid.cols();
  os << "t_us";
  for (int i = 0; i < label_dim; ++i) os << ",p" << i;
  os << ",q0,q1,q2,q3\n";
  for (const MembraneTruthFrame& f : streams.truth) {
    os << f.t_us;
    const Eigen::VectorXd p = model::encode_membrane(f.grid);
    for (Eigen::Index i = 0; i < p.size(); ++i) os << ',' << io::fmt_g(p[i]);
    for (int m = 0; m < 4; ++m) os << ',' << io::fmt_g(f.coupled[m]);
    os << "\n";
  }
  io::write_file(truth, os.str());
  io::write_file(layout, layout_to_json(streams.layout));
  return {sensors, markers, truth, layout};
}

namespace {

nlohmann::json parse_json(const std::string& text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

void check_version(const nlohmann::json& j, const char* what) {
  if (!j.contains("format_version") || !j["format_version"].is_number_integer() ||
      j["format_version"].get<int>() != 1)
    throw ConfigError(std::string(what) + ": unsupported or missing format_version");
}

}  // namespace

std::string layout_task(const std::string& json_text) {
  const nlohmann::json j = parse_json(json_text, "layout");
  check_version(j, "layout");
  if (!j.contains("task")) throw ConfigError("layout: missing task");
  const std::string task = j["task"].get<std::string>();
  if (task != "joint" && task != "membrane")
    throw ConfigError("layout: unknown task '" + task + "'");
  return task;
}

std::string layout_to_json(const data::JointLayout& layout) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["task"] = "joint";
  j["bottom_ids"] = layout.bottom_ids;
  j["reference_id"] = layout.reference_id;
  nlohmann::json top;
  top["ids"] = layout.flat_top.ids;
  nlohmann::json pts = nlohmann::json::array();
  for (const geom::Point3& p : layout.flat_top.points) pts.push_back({p.x, p.y, p.z});
  top["points"] = pts;
  j["flat_top"] = top;
  return j.dump(2) + "\n";
}

std::string layout_to_json(const data::MembraneLayout& layout) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["task"] = "membrane";
  j["fixed_ids"] = layout.fixed_ids;
  j["degree_u"] = layout.uv_table.degree_u;
  j["degree_v"] = layout.uv_table.degree_v;
  nlohmann::json uv = nlohmann::json::array();
  for (const auto& e : layout.uv_table.entries)
    uv.push_back({{"id", e.id}, {"u", e.uv.u}, {"v", e.uv.v}});
  j["uv"] = uv;
  return j.dump(2) + "\n";
}

data::JointLayout joint_layout_from_json(const std::string& json_text) {
  const nlohmann::json j = parse_json(json_text, "layout");
  check_version(j, "layout");
  try {
    if (j.at("task").get<std::string>() != "joint")
      throw ConfigError("layout: expected task 'joint'");
    data::JointLayout layout;
    layout.bottom_ids = j.at("bottom_ids").get<std::vector<std::string>>();
    layout.reference_id = j.at("reference_id").get<std::string>();
    const auto& top = j.at("flat_top");
    const auto ids = top.at("ids").get<std::vector<std::string>>();
    const auto& pts = top.at("points");
    if (pts.size() != ids.size()) throw ConfigError("layout: flat_top ids/points disagree");
    for (std::size_t i = 0; i < ids.size(); ++i)
      layout.flat_top.push_back(ids[i], {pts[i][0].get<double>(), pts[i][1].get<double>(),
                                         pts[i][2].get<double>()});
    return layout;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("layout: ") + e.what());
  }
}

data::MembraneLayout membrane_layout_from_json(const std::string& json_text) {
  const nlohmann::json j = parse_json(json_text, "layout");
  check_version(j, "layout");
  try {
    if (j.at("task").get<std::string>() != "membrane")
      throw ConfigError("layout: expected task 'membrane'");
    data::MembraneLayout layout;
    layout.fixed_ids = j.at("fixed_ids").get<std::vector<std::string>>();
    layout.uv_table.degree_u = j.at("degree_u").get<int>();
    layout.uv_table.degree_v = j.at("degree_v").get<int>();
    for (const auto& e : j.at("uv"))
      layout.uv_table.entries.push_back(
          {e.at("id").get<std::string>(), {e.at("u").get<double>(), e.at("v").get<double>()}});
    return layout;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("layout: ") + e.what());
  }
}

std::string scenario_task(const std::string& json_text) {
  const nlohmann::json j = parse_json(json_text, "scenario");
  check_version(j, "scenario");
  if (!j.contains("task")) throw ConfigError("scenario: missing task");
  const std::string task = j["task"].get<std::string>();
  if (task != "joint" && task != "membrane")
    throw ConfigError("scenario: unknown task '" + task + "'");
  return task;
}

namespace {

NoiseConfig parse_noise(const nlohmann::json& j) {
  NoiseConfig n;
  if (!j.contains("noise")) return n;
  const auto& jn = j["noise"];
  if (jn.contains("marker_mm")) n.marker_mm = jn["marker_mm"].get<double>();
  if (jn.contains("sensor")) n.sensor = jn["sensor"].get<double>();
  if (jn.contains("occlusion")) n.occlusion = jn["occlusion"].get<double>();
  return n;
}

}  // namespace

JointScenario parse_joint_scenario(const std::string& json_text) {
  const nlohmann::json j = parse_json(json_text, "scenario");
  check_version(j, "scenario");
  try {
    if (j.at("task").get<std::string>() != "joint")
      throw ConfigError("scenario: expected task 'joint'");
    JointScenario s;
    s.duration_s = j.at("duration_s").get<double>();
    s.seed = j.value("seed", std::uint64_t(0));
    s.noise = parse_noise(j);
    s.sensors = default_joint_sensors(j.value("lag_ms", 15.0));

    const auto& wp = j.at("way_poses");
    if (wp.is_object()) {
      s.way_poses = random_way_poses(wp.at("count").get<int>(), s.seed ^ 0x77u);
    } else if (wp.is_array()) {
      for (const auto& e : wp) {
        geom::EulerAngles ang;
        ang.yaw = e.value("yaw_deg", 0.0);
        ang.pitch = e.value("pitch_deg", 0.0);
        ang.roll = e.value("roll_deg", 0.0);
        Eigen::Vector3d center(0.0, 0.0, kTopHeight);
        if (e.contains("center_mm")) {
          const auto& c = e["center_mm"];
          if (c.size() != 3) throw ConfigError("scenario: center_mm needs 3 entries");
          center = {c[0].get<double>(), c[1].get<double>(), c[2].get<double>()};
        }
        geom::RigidTransform t;
        t.rotation = geom::tait_bryan_to_rotation(ang);
        t.translation = center - t.rotation.m * Eigen::Vector3d(0.0, 0.0, kTopHeight);
        s.way_poses.push_back(t);
      }
    } else {
      throw ConfigError("scenario: way_poses must be a list or {count: N}");
    }

    if (j.contains("load_g"))
      for (const auto& e : j["load_g"]) {
        if (e.size() != 2) throw ConfigError("scenario: load_g entries are [t_s, grams]");
        s.load_schedule_g.emplace_back(e[0].get<double>(), e[1].get<double>());
      }

    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

MembraneScenario parse_membrane_scenario(const std::string& json_text) {
  const nlohmann::json j = parse_json(json_text, "scenario");
  check_version(j, "scenario");
  try {
    if (j.at("task").get<std::string>() != "membrane")
      throw ConfigError("scenario: expected task 'membrane'");
    MembraneScenario s;
    s.duration_s = j.at("duration_s").get<double>();
    s.seed = j.value("seed", std::uint64_t(0));
    s.noise = parse_noise(j);
    s.degree_u = j.value("degree_u", 4);
    s.degree_v = j.value("degree_v", 4);
    s.sensors = default_membrane_sensors(j.value("lag_ms", 15.0));

    const auto& pr = j.at("pressures");
    if (pr.is_object()) {
      s.pressures = random_pressures(pr.at("components").get<int>(), s.seed ^ 0x99u);
    } else if (pr.is_array() && pr.size() == 4) {
      for (int m = 0; m < 4; ++m) {
        const auto& e = pr[std::size_t(m)];
        PressureChannel ch;
        ch.offset = e.value("offset", 0.0);
        if (e.contains("waves"))
          for (const auto& w : e["waves"])
            ch.waves.push_back({w.value("amp", 0.0), w.value("freq_hz", 0.0),
                                w.value("phase_rad", 0.0)});
        s.pressures[std::size_t(m)] = ch;
      }
    } else {
      throw ConfigError("scenario: pressures must be 4 channels or {components: N}");
    }

    if (j.contains("coupling")) {
      const auto& c = j["coupling"];
      if (c.size() != 4) throw ConfigError("scenario: coupling must be 4x4");
      for (int r = 0; r < 4; ++r) {
        if (c[std::size_t(r)].size() != 4) throw ConfigError("scenario: coupling must be 4x4");
        for (int k = 0; k < 4; ++k)
          s.coupling(r, k) = c[std::size_t(r)][std::size_t(k)].get<double>();
      }
    } else {
      s.coupling.setConstant(0.05);
      s.coupling.diagonal().setConstant(0.85);
    }

    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

}  // namespace softrecon::sim
