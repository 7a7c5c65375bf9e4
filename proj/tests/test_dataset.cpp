#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include "softrecon/dataset.hpp"
#include "softrecon/errors.hpp"
#include "softrecon/models.hpp"

using namespace softrecon;
using namespace softrecon::data;

namespace {

SensorLog regular_sensors(std::int64_t start_us, long count, int channels,
                          std::int64_t step_us = 1000) {
  SensorLog log;
  log.channels = channels;
  for (long i = 0; i < count; ++i) {
    SensorFrame f;
    f.t_us = start_us + i * step_us;
    f.readings.assign(std::size_t(channels), 0.5);
    log.frames.push_back(std::move(f));
  }
  return log;
}

MarkerLog regular_markers(std::int64_t start_us, long count, std::int64_t step_us = 10000) {
  MarkerLog log;
  log.ids = {"a", "b", "c"};
  for (long i = 0; i < count; ++i) {
    MarkerFrame f;
    f.t_us = start_us + i * step_us;
    f.positions.assign(3, geom::Point3{1.0, 2.0, 3.0});
    f.complete = true;
    log.frames.push_back(std::move(f));
  }
  return log;
}

std::string write_temp(const std::string& name, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "softrecon_dataset_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream out(p);
  out << text;
  return p.string();
}

// Independent re-derivation of the sync rules for cross-checking.
DropReport reference_sync(const SensorLog& sensors, const MarkerLog& markers, int wl) {
  DropReport r;
  r.total_marker_frames = long(markers.frames.size());
  for (const MarkerFrame& mf : markers.frames) {
    if (!mf.complete) {
      ++r.incomplete;
      continue;
    }
    long best_i = -1;
    std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
    for (long i = 0; i < long(sensors.frames.size()); ++i) {
      const std::int64_t d = std::abs(sensors.frames[std::size_t(i)].t_us - mf.t_us);
      if (d < best_d) {
        best_d = d;
        best_i = i;
      }
    }
    if (best_i < 0 || best_d > 500) {
      ++r.unmatched;
      continue;
    }
    if (best_i + 1 < wl) {
      ++r.short_window;
      continue;
    }
    bool broken = false;
    for (long k = best_i - wl + 1; k < best_i; ++k) {
      const std::int64_t dt =
          sensors.frames[std::size_t(k + 1)].t_us - sensors.frames[std::size_t(k)].t_us;
      if (dt <= 0 || dt > 1500) broken = true;
    }
    if (broken)
      ++r.gap;
    else
      ++r.kept;
  }
  return r;
}

}  // namespace

TEST_CASE("aligned 1 kHz / 100 Hz logs keep all but the first frame") {
  // One second of perfectly aligned capture: the t=0 marker frame has no
  // trailing window yet, every later one does.
  const SensorLog sensors = regular_sensors(0, 1000, 12);
  const MarkerLog markers = regular_markers(0, 100);
  const SyncResult r = synchronize(sensors, markers, 10);
  CHECK(r.report.total_marker_frames == 100);
  CHECK(r.report.kept == 99);
  CHECK(r.report.short_window == 1);
  CHECK(r.report.unmatched == 0);
  CHECK(r.report.gap == 0);
  CHECK(r.samples.size() == 99);

  // Windows are the ten sensor frames ending at the matched timestamp.
  const SyncedSample& s = r.samples.front();
  REQUIRE(s.window.size() == 10);
  CHECK(s.marker.t_us == 10000);
  CHECK(s.window.front().t_us == 1000);
  CHECK(s.window.back().t_us == 10000);
}

TEST_CASE("drop causes are classified") {
  SensorLog sensors = regular_sensors(0, 100, 2);
  MarkerLog markers = regular_markers(0, 10);

  SUBCASE("occluded frames count as incomplete") {
    markers.frames[4].positions[1] = std::nullopt;
    markers.frames[4].complete = false;
    const SyncResult r = synchronize(sensors, markers, 10);
    CHECK(r.report.incomplete == 1);
    CHECK(r.report.kept == 8);
  }

  SUBCASE("a marker far from any sensor frame is unmatched") {
    // Past the last sensor frame (99 ms) by more than the 0.5 ms tolerance.
    markers.frames[5].t_us = 99501;
    const SyncResult r = synchronize(sensors, markers, 10);
    CHECK(r.report.unmatched == 1);
    CHECK(r.report.kept == 8);
  }

  SUBCASE("a 501 us offset misses, a 500 us offset still pairs") {
    markers.frames[5].t_us += 500;
    const SyncResult r = synchronize(sensors, markers, 10);
    CHECK(r.report.unmatched == 0);
    CHECK(r.report.kept == 9);
  }

  SUBCASE("a dropped sensor frame breaks the windows spanning it") {
    sensors.frames.erase(sensors.frames.begin() + 45);
    const SyncResult r = synchronize(sensors, markers, 10);
    // Markers at 50..130 ms have the 45 ms frame inside their window span;
    // only the one whose 10-frame window strides the 2 ms hole drops.
    CHECK(r.report.gap == 1);
    CHECK(r.report.kept == 8);
  }
}

TEST_CASE("nearest pairing breaks ties towards the earlier frame") {
  SensorLog sensors;
  sensors.channels = 1;
  for (std::int64_t t : {1000, 2000}) {
    SensorFrame f;
    f.t_us = t;
    f.readings = {double(t)};
    sensors.frames.push_back(f);
  }
  MarkerLog markers = regular_markers(1500, 1);
  const SyncResult r = synchronize(sensors, markers, 1);
  REQUIRE(r.report.kept == 1);
  CHECK(r.samples[0].window[0].t_us == 1000);
}

TEST_CASE("synchronize matches a brute-force reference on jittered logs") {
  auto rng = std::mt19937_64(41);
  std::uniform_int_distribution<std::int64_t> sensor_jitter(-200, 200);
  std::uniform_int_distribution<std::int64_t> marker_jitter(-700, 700);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  for (int trial = 0; trial < 20; ++trial) {
    SensorLog sensors;
    sensors.channels = 3;
    std::int64_t t = 0;
    for (int i = 0; i < 400; ++i) {
      t += 1000 + sensor_jitter(rng);
      if (u(rng) < 0.05) continue;  // dropout
      SensorFrame f;
      f.t_us = t;
      f.readings = {0.1, 0.2, 0.3};
      sensors.frames.push_back(f);
    }
    MarkerLog markers;
    markers.ids = {"a", "b"};
    for (int i = 0; i < 40; ++i) {
      MarkerFrame f;
      f.t_us = 10000 * (i + 1) + marker_jitter(rng);
      f.complete = u(rng) > 0.1;
      f.positions.assign(2, f.complete ? std::optional<geom::Point3>({0, 0, 0})
                                       : std::nullopt);
      markers.frames.push_back(f);
    }

    const DropReport want = reference_sync(sensors, markers, 10);
    const SyncResult got = synchronize(sensors, markers, 10);
    CHECK(got.report.kept == want.kept);
    CHECK(got.report.incomplete == want.incomplete);
    CHECK(got.report.unmatched == want.unmatched);
    CHECK(got.report.short_window == want.short_window);
    CHECK(got.report.gap == want.gap);
  }
}

TEST_CASE("sensor csv round trip and failure modes") {
  const std::string good = "t_us,s0,s1\n0,0.1,0.2\n1000,0.3,0.4\n";
  const SensorLog log = load_sensor_log(write_temp("good_sensors.csv", good));
  CHECK(log.channels == 2);
  REQUIRE(log.frames.size() == 2);
  CHECK(log.frames[1].t_us == 1000);
  CHECK(log.frames[1].readings[1] == 0.4);

  CHECK_THROWS_AS(load_sensor_log(write_temp("h.csv", "time,s0\n0,0.1\n")), ParseError);
  CHECK_THROWS_AS(load_sensor_log(write_temp("c.csv", "t_us,s0,x1\n0,0.1,0.2\n")), ParseError);
  CHECK_THROWS_AS(load_sensor_log(write_temp("n.csv", "t_us,s0\n0,abc\n")), ParseError);
  CHECK_THROWS_AS(load_sensor_log(write_temp("w.csv", "t_us,s0\n0,0.1,0.2\n")), ParseError);
  CHECK_THROWS_AS(load_sensor_log(write_temp("m.csv", "t_us,s0\n2000,0.1\n1000,0.2\n")),
                  NonMonotonicTime);
  CHECK_THROWS_AS(load_sensor_log(write_temp("e.csv", "")), ParseError);
  CHECK_THROWS_AS(load_sensor_log("/nonexistent/sensors.csv"), IoError);
}

TEST_CASE("marker csv handles occlusion cells") {
  const std::string text =
      "t_us,a_x,a_y,a_z,b_x,b_y,b_z\n"
      "0,1,2,3,4,5,6\n"
      "10000,1,2,3,,,\n";
  const MarkerLog log = load_marker_log(write_temp("markers.csv", text));
  REQUIRE(log.ids == std::vector<std::string>{"a", "b"});
  REQUIRE(log.frames.size() == 2);
  CHECK(log.frames[0].complete);
  CHECK_FALSE(log.frames[1].complete);
  CHECK_FALSE(log.frames[1].positions[1].has_value());
  CHECK(log.frames[1].positions[0]->x == 1.0);
  CHECK(log.index_of("b") == 1);
  CHECK(log.index_of("zz") == -1);

  // A marker present in only one coordinate is corrupt, not occluded.
  CHECK_THROWS_AS(
      load_marker_log(write_temp("part.csv", "t_us,a_x,a_y,a_z\n0,1,,3\n")), ParseError);
  CHECK_THROWS_AS(
      load_marker_log(write_temp("trip.csv", "t_us,a_x,a_y\n0,1,2\n")), ParseError);
}

TEST_CASE("labels are computed in the robot frame") {
  // Bottom triangle at rest spans world = robot frame: centroid at the
  // origin, normal +z, reference marker b0 on +y.
  JointLayout layout;
  layout.bottom_ids = {"b0", "b1", "b2"};
  layout.reference_id = "b0";
  MarkerLog log;
  log.ids = {"b0", "b1", "b2", "t0", "t1", "t2"};
  std::vector<geom::Point3> bottom;
  for (double deg : {90.0, 210.0, 330.0})
    bottom.push_back({40.0 * std::cos(geom::deg_to_rad(deg)),
                      40.0 * std::sin(geom::deg_to_rad(deg)), 0.0});
  std::vector<geom::Point3> top;
  for (double deg : {90.0, 210.0, 330.0})
    top.push_back({40.0 * std::cos(geom::deg_to_rad(deg)),
                   40.0 * std::sin(geom::deg_to_rad(deg)), 60.0});
  for (int i = 0; i < 3; ++i) layout.flat_top.push_back("t" + std::to_string(i), top[i]);

  const geom::RigidTransform pose{geom::tait_bryan_to_rotation({25.0, -10.0, 5.0}),
                                  {3.0, -2.0, 4.0}};

  const auto make_sample = [&](const geom::RigidTransform& world) {
    MarkerFrame f;
    f.t_us = 10000;
    for (const geom::Point3& p : bottom)
      f.positions.push_back(apply_transform(world, p));
    for (int i = 0; i < 3; ++i)
      f.positions.push_back(
          apply_transform(world, apply_transform(pose, top[std::size_t(i)])));
    f.complete = true;
    log.frames = {f};
    SyncedSample s;
    s.marker = f;
    for (int step = 0; step < 10; ++step) {
      SensorFrame sf;
      sf.t_us = 1000 * (step + 1);
      for (int ch = 0; ch < 12; ++ch) sf.readings.push_back(step + 0.01 * ch);
      s.window.push_back(sf);
    }
    return s;
  };

  SUBCASE("identity world: the label is the pose itself") {
    const WindowedSample w = label_joint(log, make_sample(geom::RigidTransform::identity()),
                                         layout);
    REQUIRE(w.label.size() == 12);
    const Eigen::VectorXd want = model::encode_joint(pose);
    CHECK((w.label - want).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(w.t_us == 10000);

    // Input flattening is step-major, oldest step first.
    REQUIRE(w.input.size() == 120);
    CHECK(w.input[0] == 0.0);
    CHECK(w.input[3] == doctest::Approx(0.03));
    CHECK(w.input[12 * 7 + 4] == doctest::Approx(7.04));
  }

  SUBCASE("a moved world leaves the robot-frame label unchanged") {
    auto rng = std::mt19937_64(42);
    std::uniform_real_distribution<double> ang(-25.0, 25.0), shift(-300.0, 300.0);
    for (int trial = 0; trial < 10; ++trial) {
      // Tilts stay under 90 deg so the bottom normal keeps a +z component.
      const geom::RigidTransform world{
          geom::tait_bryan_to_rotation({ang(rng) * 7, ang(rng), ang(rng)}),
          {shift(rng), shift(rng), shift(rng)}};
      const WindowedSample w = label_joint(log, make_sample(world), layout);
      CHECK((w.label - model::encode_joint(pose)).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("membrane labels recover the generating grid") {
  using namespace softrecon::bezier;
  MembraneLayout layout;
  layout.fixed_ids = {"f0", "f1", "f2", "f3"};
  layout.uv_table.degree_u = layout.uv_table.degree_v = 3;

  ControlGrid truth = ControlGrid::zeros(3, 3);
  auto rng = std::mt19937_64(43);
  std::normal_distribution<double> bump(0.0, 8.0);
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; j <= 3; ++j)
      truth.at(i, j) = {-100.0 + 200.0 * i / 3, -100.0 + 200.0 * j / 3, bump(rng)};
  const BezierSurface surf{truth};

  MarkerLog log;
  log.ids = {"f0", "f1", "f2", "f3"};
  std::vector<geom::Point3> fixed = {
      {-105, -105, 0}, {105, -105, 0}, {105, 105, 0}, {-105, 105, 0}};
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const std::string id = "s" + std::to_string(i * 6 + j);
      log.ids.push_back(id);
      layout.uv_table.entries.push_back({id, {i / 5.0, j / 5.0}});
    }

  const auto make_sample = [&](const geom::RigidTransform& world) {
    MarkerFrame f;
    f.t_us = 20000;
    for (const geom::Point3& p : fixed) f.positions.push_back(apply_transform(world, p));
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        f.positions.push_back(
            apply_transform(world, evaluate_surface(surf, {i / 5.0, j / 5.0})));
    f.complete = true;
    log.frames = {f};
    SyncedSample s;
    s.marker = f;
    SensorFrame sf;
    sf.t_us = 20000;
    sf.readings = {0.4, 0.5, 0.6};
    s.window = {sf};
    return s;
  };

  const Eigen::VectorXd want = model::encode_membrane(truth);
  SUBCASE("identity world") {
    const WindowedSample w = label_membrane(log, make_sample(geom::RigidTransform::identity()),
                                            layout, 3, 3);
    REQUIRE(w.label.size() == 48);
    CHECK((w.label - want).cwiseAbs().maxCoeff() < 1e-8);

    const geom::PointSet aligned =
        aligned_membrane_markers(log, make_sample(geom::RigidTransform::identity()), layout);
    REQUIRE(aligned.size() == 36);
    CHECK(aligned.ids[0] == "s0");
    CHECK(geom::distance(aligned.points[0], evaluate_surface(surf, {0.0, 0.0})) < 1e-9);
  }

  SUBCASE("moved world") {
    const geom::RigidTransform world{geom::tait_bryan_to_rotation({140.0, 20.0, -15.0}),
                                     {500.0, -200.0, 80.0}};
    const WindowedSample w = label_membrane(log, make_sample(world), layout, 3, 3);
    CHECK((w.label - want).cwiseAbs().maxCoeff() < 1e-7);
    const geom::PointSet aligned = aligned_membrane_markers(log, make_sample(world), layout);
    CHECK(geom::distance(aligned.points[7], evaluate_surface(surf, {1 / 5.0, 1 / 5.0})) <
          1e-8);
  }
}

TEST_CASE("split routes by batch tag and rejects strays") {
  std::vector<WindowedSample> samples;
  for (int i = 0; i < 9; ++i) {
    WindowedSample w;
    w.batch = i % 3 == 0 ? "a" : (i % 3 == 1 ? "b" : "c");
    w.t_us = i;
    samples.push_back(w);
  }
  SplitSpec spec;
  spec.batch_to_role = {{"a", Role::Train}, {"b", Role::Train}, {"c", Role::Test}};
  const SplitResult r = split(samples, spec);
  CHECK(r.train.size() == 6);
  CHECK(r.validation.size() == 0);
  CHECK(r.test.size() == 3);
  // Order within a role follows the input order.
  CHECK(r.train[0].t_us == 0);
  CHECK(r.train[1].t_us == 1);
  CHECK(r.train[2].t_us == 3);

  spec.batch_to_role.erase("c");
  CHECK_THROWS_AS(split(samples, spec), UnknownBatch);
  CHECK_THROWS_AS(split(samples, SplitSpec{}), ConfigError);
}

TEST_CASE("normalizer fits on train only and skips constant channels") {
  auto rng = std::mt19937_64(44);
  std::normal_distribution<double> n(0.3, 0.07);
  std::vector<WindowedSample> train;
  for (int i = 0; i < 50; ++i) {
    WindowedSample w;
    w.input.resize(6);  // 2 steps x 3 channels
    for (int step = 0; step < 2; ++step) {
      w.input[step * 3 + 0] = n(rng);
      w.input[step * 3 + 1] = 10.0 * n(rng) - 2.0;
      w.input[step * 3 + 2] = 0.125;  // dead channel
    }
    train.push_back(w);
  }
  const NormStats stats = fit_normalizer(train, 3);
  REQUIRE(stats.mean.size() == 3);
  CHECK(stats.constant == std::vector<bool>{false, false, true});
  CHECK(stats.mean[2] == 0.125);

  const auto normed = apply_normalizer(stats, train);
  double sum = 0.0, sq = 0.0;
  for (const auto& w : normed)
    for (int step = 0; step < 2; ++step) {
      sum += w.input[step * 3 + 1];
      sq += w.input[step * 3 + 1] * w.input[step * 3 + 1];
    }
  const double mean = sum / 100.0;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(sq / 100.0 - mean * mean == doctest::Approx(1.0).epsilon(1e-6));
  // The constant channel is centered but never scaled.
  CHECK(normed[7].input[2] == 0.0);

  // The matrix overload agrees with the per-sample one.
  Eigen::MatrixXd m(train.size(), 6);
  for (std::size_t i = 0; i < train.size(); ++i) m.row(Eigen::Index(i)) = train[i].input;
  const Eigen::MatrixXd nm = apply_normalizer(stats, m, 3);
  for (std::size_t i = 0; i < train.size(); ++i)
    CHECK((nm.row(Eigen::Index(i)).transpose() - normed[i].input).cwiseAbs().maxCoeff() ==
          0.0);

  CHECK_THROWS_AS(fit_normalizer({}, 3), EmptyDataset);
}

TEST_CASE("norm stats survive json exactly") {
  NormStats stats;
  stats.mean = {0.1, -2.5e-17, 3.0};
  stats.stddev = {1.0, 0.07071067811865475, 1.0};
  stats.constant = {false, false, true};
  const NormStats back = norm_stats_from_json(norm_stats_to_json(stats));
  CHECK(back.mean == stats.mean);  // bitwise via the hex side channel
  CHECK(back.stddev == stats.stddev);
  CHECK(back.constant == stats.constant);

  CHECK_THROWS_AS(norm_stats_from_json("{}"), CorruptFile);
  CHECK_THROWS_AS(norm_stats_from_json("not json"), CorruptFile);
}
