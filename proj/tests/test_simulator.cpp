#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "softrecon/errors.hpp"
#include "softrecon/models.hpp"
#include "softrecon/simulator.hpp"

using namespace softrecon;
using namespace softrecon::sim;

namespace {

JointScenario quiet_joint(double duration_s = 1.0) {
  JointScenario s;
  s.duration_s = duration_s;
  s.way_poses = {geom::RigidTransform::identity()};
  s.noise = {0.0, 0.0, 0.0};
  s.sensors = default_joint_sensors();
  s.seed = 7;
  return s;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  JointScenario s = quiet_joint();
  s.way_poses = random_way_poses(3, 5);
  s.noise = {0.2, 0.005, 0.01};
  const JointStreams a = gen_joint(s);
  const JointStreams b = gen_joint(s);
  REQUIRE(a.sensors.frames.size() == b.sensors.frames.size());
  for (std::size_t i = 0; i < a.sensors.frames.size(); ++i)
    CHECK(a.sensors.frames[i].readings == b.sensors.frames[i].readings);
  for (std::size_t i = 0; i < a.markers.frames.size(); ++i)
    for (std::size_t m = 0; m < a.markers.frames[i].positions.size(); ++m) {
      const auto &pa = a.markers.frames[i].positions[m], &pb = b.markers.frames[i].positions[m];
      REQUIRE(pa.has_value() == pb.has_value());
      if (pa) CHECK(geom::distance(*pa, *pb) == 0.0);
    }

  s.seed = 8;
  const JointStreams c = gen_joint(s);
  CHECK(a.sensors.frames[50].readings != c.sensors.frames[50].readings);
}

TEST_CASE("stream clocks run at 1 kHz and 100 Hz") {
  const JointStreams s = gen_joint(quiet_joint(0.5));
  REQUIRE(s.sensors.frames.size() == 500);
  REQUIRE(s.markers.frames.size() == 50);
  REQUIRE(s.truth.size() == 50);
  CHECK(s.sensors.frames[1].t_us - s.sensors.frames[0].t_us == 1000);
  CHECK(s.markers.frames[1].t_us - s.markers.frames[0].t_us == 10000);
  CHECK(s.truth[3].t_us == s.markers.frames[3].t_us);
  CHECK(s.sensors.channels == 12);
  CHECK(s.markers.ids.size() == 6);  // bottom and top triangles
}

TEST_CASE("a single way pose holds the rig still") {
  const JointStreams s = gen_joint(quiet_joint());
  for (const JointTruthFrame& f : s.truth) {
    CHECK((f.pose.rotation.m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(f.pose.translation.cwiseAbs().maxCoeff() < 1e-12);
  }
  // After the lag filters settle, noise-free readings are constant.
  const auto& early = s.sensors.frames[300].readings;
  const auto& late = s.sensors.frames[499].readings;
  for (std::size_t c = 0; c < early.size(); ++c)
    CHECK(late[c] == doctest::Approx(early[c]).epsilon(1e-9));
  for (double v : late) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("readings stay in [0,1] under heavy noise") {
  JointScenario s = quiet_joint();
  s.way_poses = random_way_poses(4, 9);
  s.noise = {0.5, 0.2, 0.0};
  const JointStreams out = gen_joint(s);
  for (const auto& f : out.sensors.frames)
    for (double v : f.readings) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
}

TEST_CASE("occlusion drops roughly the configured fraction of cells") {
  JointScenario s = quiet_joint(2.0);
  s.noise.occlusion = 0.3;
  const JointStreams out = gen_joint(s);
  long holes = 0, cells = 0;
  for (const auto& f : out.markers.frames)
    for (const auto& p : f.positions) {
      ++cells;
      if (!p) ++holes;
    }
  CHECK(double(holes) / double(cells) == doctest::Approx(0.3).epsilon(0.25));
  CHECK(holes > 0);
}

TEST_CASE("the lag filter steps towards a changed distance") {
  SensorModel model = default_joint_sensors(15.0);
  SensorRig rig(model);
  auto rng = std::mt19937_64(1);
  const int n = int(model.channels.size());
  const Eigen::VectorXd near = Eigen::VectorXd::Constant(n, 55.0);
  const Eigen::VectorXd far = Eigen::VectorXd::Constant(n, 70.0);

  // Settle on the near distance, then jump away and watch the first-order
  // response: monotone towards the new fixed point, no overshoot.
  Eigen::VectorXd settled;
  for (int i = 0; i < 3000; ++i) settled = rig.step(near, 1.0, 0.001, 0.0, rng);
  Eigen::VectorXd target;
  {
    SensorRig fresh(model);
    for (int i = 0; i < 3000; ++i) target = fresh.step(far, 1.0, 0.001, 0.0, rng);
  }
  Eigen::VectorXd prev = settled;
  for (int i = 0; i < 40; ++i) {
    const Eigen::VectorXd cur = rig.step(far, 1.0, 0.001, 0.0, rng);
    for (int c = 0; c < n; ++c) {
      // Distances grew, so readings decay towards the lower fixed point.
      CHECK(cur[c] <= prev[c] + 1e-12);
      CHECK(cur[c] >= target[c] - 1e-12);
    }
    prev = cur;
  }
  // 40 ms is under three time constants: visibly short of the target.
  CHECK((prev - target).cwiseAbs().maxCoeff() > 1e-4);
}

TEST_CASE("readings respond monotonically to distance") {
  SensorModel model = default_joint_sensors(0.0);  // no lag: pure physics
  auto rng = std::mt19937_64(2);
  const int n = int(model.channels.size());
  double last = 1e9;
  for (double d : {45.0, 55.0, 65.0, 75.0}) {
    SensorRig rig(model);
    const Eigen::VectorXd r =
        rig.step(Eigen::VectorXd::Constant(n, d), 1.0, 0.001, 0.0, rng);
    CHECK(r[0] < last);
    last = r[0];
  }
}

TEST_CASE("way poses are revisited in order") {
  JointScenario s = quiet_joint(2.0);
  s.way_poses = random_way_poses(5, 17);
  REQUIRE(s.way_poses.size() == 5);
  // The first way pose is the rest pose.
  CHECK((s.way_poses[0].rotation.m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() ==
        0.0);

  // The eased path hits each way pose at its segment boundary.
  const int segs = int(s.way_poses.size()) - 1;
  for (int k = 0; k <= segs; ++k) {
    const double t = s.duration_s * double(k) / segs;
    const geom::RigidTransform p = joint_pose_at(s, std::min(t, s.duration_s));
    const geom::RigidTransform& want = s.way_poses[std::size_t(k)];
    CHECK((p.rotation.m - want.rotation.m).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((p.translation - want.translation).cwiseAbs().maxCoeff() < 1e-9);
  }

  // Every way pose respects the working envelope; the translation encodes
  // where the top-plate center (rest height 60 mm) lands.
  for (const auto& w : s.way_poses) {
    const geom::EulerAngles e = rotation_to_tait_bryan(w.rotation);
    CHECK(std::abs(e.yaw) <= 60.0);
    CHECK(std::abs(e.pitch) <= 35.0);
    CHECK(std::abs(e.roll) <= 35.0);
    const Eigen::Vector3d center =
        w.rotation.m * Eigen::Vector3d(0.0, 0.0, 60.0) + w.translation;
    CHECK(std::abs(center.x()) <= 15.0);
    CHECK(std::abs(center.y()) <= 15.0);
    CHECK(center.z() >= 50.0);
    CHECK(center.z() <= 66.0);
  }
}

TEST_CASE("joint markers are consistent with the truth pose") {
  JointScenario s = quiet_joint(1.0);
  s.way_poses = random_way_poses(3, 21);
  const JointStreams out = gen_joint(s);
  const data::JointLayout& lay = out.layout;

  // Noise-free markers: re-deriving the label from the marker frame must
  // reproduce the truth pose exactly.
  for (std::size_t i : {std::size_t(20), std::size_t(77)}) {
    data::SyncedSample sample;
    sample.marker = out.markers.frames[i];
    sample.window.assign(1, out.sensors.frames[0]);
    const data::WindowedSample w = data::label_joint(out.markers, sample, lay);
    const Eigen::VectorXd want = model::encode_joint(out.truth[i].pose);
    CHECK((w.label - want).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("membrane flat pressures leave only ripple-scale relief") {
  MembraneScenario s;
  s.duration_s = 0.5;
  for (auto& p : s.pressures) p = PressureChannel{};  // zero drive
  s.noise = {0.0, 0.0, 0.0};
  s.sensors = default_membrane_sensors();
  s.seed = 3;
  const MembraneStreams out = gen_membrane(s);
  for (const MembraneTruthFrame& f : out.truth) {
    // No chamber lift; what is left is the flutter-ripple relief, well under
    // the inflation scale and both signs.
    for (const geom::Point3& p : f.grid.points) CHECK(std::abs(p.z) < 5.0);
    CHECK(f.coupled.cwiseAbs().maxCoeff() < 1e-12);
  }
  // Surface markers stay on the same near-flat sheet.
  const auto& frame = out.markers.frames[10];
  for (std::size_t m = 0; m < frame.positions.size(); ++m)
    CHECK(std::abs(frame.positions[m]->z) < 5.0);
}

TEST_CASE("membrane pressure lifts the sheet") {
  MembraneScenario s;
  s.duration_s = 0.3;
  s.pressures = random_pressures(2, 11);
  for (auto& p : s.pressures) p.offset = std::max(p.offset, 0.6);
  s.noise = {0.0, 0.0, 0.0};
  s.sensors = default_membrane_sensors();
  const MembraneStreams out = gen_membrane(s);
  double peak = 0.0;
  for (const auto& f : out.truth)
    for (const auto& p : f.grid.points) peak = std::max(peak, p.z);
  CHECK(peak > 5.0);

  // Pressure clamps keep every effective drive in [0,1].
  for (const auto& f : out.truth) {
    CHECK(f.coupled.minCoeff() >= 0.0);
    CHECK(f.coupled.maxCoeff() <= 1.0);
  }
}

TEST_CASE("scenario json round trips with defaults") {
  const std::string text = R"({
    "format_version": 1, "task": "joint", "duration_s": 2.5, "seed": 42,
    "lag_ms": 12.0, "noise": {"marker_mm": 0.1, "sensor": 0.004, "occlusion": 0.02},
    "way_poses": {"count": 4},
    "load_g": [[0.0, 0.0], [1.0, 150.0]]
  })";
  CHECK(scenario_task(text) == "joint");
  const JointScenario s = parse_joint_scenario(text);
  CHECK(s.duration_s == 2.5);
  CHECK(s.seed == 42);
  CHECK(s.noise.sensor == 0.004);
  CHECK(s.way_poses.size() == 4);
  CHECK(s.load_schedule_g.size() == 2);
  CHECK(s.load_schedule_g[1].second == 150.0);
  CHECK(s.sensors.channels.size() == 12);
  CHECK(s.sensors.channels[0].lag_ms == 12.0);

  const std::string explicit_poses = R"({
    "format_version": 1, "task": "joint", "duration_s": 1.0, "seed": 1,
    "way_poses": [{"yaw_deg": 10, "pitch_deg": -5, "roll_deg": 2,
                   "center_mm": [1, 2, 58]}]
  })";
  const JointScenario e = parse_joint_scenario(explicit_poses);
  REQUIRE(e.way_poses.size() == 1);
  const geom::EulerAngles a = rotation_to_tait_bryan(e.way_poses[0].rotation);
  CHECK(a.yaw == doctest::Approx(10.0));
  const Eigen::Vector3d center =
      e.way_poses[0].rotation.m * Eigen::Vector3d(0.0, 0.0, 60.0) +
      e.way_poses[0].translation;
  CHECK(center.x() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(center.z() == doctest::Approx(58.0).epsilon(1e-12));

  CHECK_THROWS_AS(parse_joint_scenario("{]"), ConfigError);
  CHECK_THROWS_AS(parse_joint_scenario(R"({"format_version": 9, "task": "joint"})"),
                  ConfigError);
  CHECK_THROWS_AS(scenario_task(R"({"format_version": 1, "task": "wheel"})"), ConfigError);

  const std::string membrane = R"({
    "format_version": 1, "task": "membrane", "duration_s": 1.5, "seed": 9,
    "degree_u": 3, "degree_v": 5, "pressures": {"components": 2}
  })";
  CHECK(scenario_task(membrane) == "membrane");
  const MembraneScenario m = parse_membrane_scenario(membrane);
  CHECK(m.degree_u == 3);
  CHECK(m.degree_v == 5);
  CHECK(m.sensors.channels.size() == 12);
  CHECK_THROWS_AS(parse_membrane_scenario(text), ConfigError);  // task is joint
}

TEST_CASE("layout json round trips") {
  const data::JointLayout jl = joint_layout();
  const data::JointLayout jback = joint_layout_from_json(layout_to_json(jl));
  CHECK(jback.bottom_ids == jl.bottom_ids);
  CHECK(jback.reference_id == jl.reference_id);
  REQUIRE(jback.flat_top.size() == jl.flat_top.size());
  for (std::size_t i = 0; i < jl.flat_top.size(); ++i) {
    CHECK(jback.flat_top.ids[i] == jl.flat_top.ids[i]);
    CHECK(geom::distance(jback.flat_top.points[i], jl.flat_top.points[i]) == 0.0);
  }
  CHECK(layout_task(layout_to_json(jl)) == "joint");

  const data::MembraneLayout ml = membrane_layout();
  const data::MembraneLayout mback = membrane_layout_from_json(layout_to_json(ml));
  CHECK(mback.fixed_ids == ml.fixed_ids);
  REQUIRE(mback.uv_table.entries.size() == ml.uv_table.entries.size());
  CHECK(mback.uv_table.degree_u == ml.uv_table.degree_u);
  for (std::size_t i = 0; i < ml.uv_table.entries.size(); ++i) {
    CHECK(mback.uv_table.entries[i].id == ml.uv_table.entries[i].id);
    CHECK(mback.uv_table.entries[i].uv.u == ml.uv_table.entries[i].uv.u);
  }
  CHECK(layout_task(layout_to_json(ml)) == "membrane");
  CHECK_THROWS_AS(joint_layout_from_json(layout_to_json(ml)), ConfigError);
}

TEST_CASE("scenario validation rejects out-of-envelope poses") {
  JointScenario s = quiet_joint();
  s.way_poses.push_back({geom::tait_bryan_to_rotation({0.0, 50.0, 0.0}), {0, 0, 58}});
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = quiet_joint();
  s.duration_s = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);

  MembraneScenario m;
  m.sensors = default_membrane_sensors();
  m.coupling.row(2).setConstant(10.0);
  CHECK_THROWS_AS(m.validate(), ConfigError);
}
