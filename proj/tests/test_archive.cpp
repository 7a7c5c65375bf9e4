#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "softrecon/archive.hpp"
#include "softrecon/errors.hpp"

using namespace softrecon;
using namespace softrecon::data;

namespace {

WindowedSample sample_at(std::mt19937_64& rng, int input_dim, int label_dim,
                         const std::string& batch, std::int64_t t_us) {
  std::normal_distribution<double> n;
  WindowedSample w;
  w.input.resize(input_dim);
  w.label.resize(label_dim);
  for (Eigen::Index i = 0; i < w.input.size(); ++i) w.input[i] = n(rng);
  for (Eigen::Index i = 0; i < w.label.size(); ++i) w.label[i] = n(rng);
  w.batch = batch;
  w.t_us = t_us;
  return w;
}

}  // namespace

TEST_CASE("matrix views stack samples by row") {
  auto rng = std::mt19937_64(61);
  std::vector<WindowedSample> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(sample_at(rng, 6, 3, "a", 1000 * i));
  const Eigen::MatrixXd x = inputs_matrix(samples);
  const Eigen::MatrixXd y = labels_matrix(samples);
  REQUIRE(x.rows() == 4);
  REQUIRE(x.cols() == 6);
  REQUIRE(y.cols() == 3);
  CHECK((x.row(2).transpose() - samples[2].input).cwiseAbs().maxCoeff() == 0.0);
  CHECK((y.row(3).transpose() - samples[3].label).cwiseAbs().maxCoeff() == 0.0);
  CHECK(inputs_matrix({}).size() == 0);
  CHECK(labels_matrix({}).size() == 0);
}

TEST_CASE("a joint archive survives write and load") {
  namespace fs = std::filesystem;
  auto rng = std::mt19937_64(62);
  const std::string dir =
      (fs::temp_directory_path() / "softrecon_archive_joint").string();
  fs::remove_all(dir);

  DatasetArchive a;
  a.task = "joint";
  a.channels = 3;
  a.window_len = 2;
  a.label_dim = 12;
  a.batch_roles = {{"b1", Role::Train}, {"b2", Role::Validation}, {"b3", Role::Test}};
  DropReport drops;
  drops.total_marker_frames = 100;
  drops.kept = 97;
  drops.short_window = 1;
  drops.gap = 2;
  a.batch_drops = {{"b1", drops}, {"b2", {}}, {"b3", {}}};
  a.stats.mean = {0.25, 1.0 / 3.0, -7.5e-11};
  a.stats.stddev = {1.0, 0.1234567890123456789, 2.0};
  a.stats.constant = {false, false, true};
  for (int i = 0; i < 8; ++i) a.train.samples.push_back(sample_at(rng, 6, 12, "b1", i));
  for (int i = 0; i < 3; ++i)
    a.validation.samples.push_back(sample_at(rng, 6, 12, "b2", i));
  for (int i = 0; i < 3; ++i) a.test.samples.push_back(sample_at(rng, 6, 12, "b3", i));
  a.test.truth.resize(3, 12);
  std::normal_distribution<double> n;
  for (Eigen::Index i = 0; i < a.test.truth.size(); ++i) a.test.truth.data()[i] = n(rng);

  write_archive(a, dir);
  const DatasetArchive b = load_archive(dir);

  CHECK(b.task == "joint");
  CHECK(b.channels == 3);
  CHECK(b.window_len == 2);
  CHECK(b.label_dim == 12);
  CHECK(b.batch_roles == a.batch_roles);
  REQUIRE(b.batch_drops.count("b1") == 1);
  CHECK(b.batch_drops.at("b1").kept == 97);
  CHECK(b.batch_drops.at("b1").gap == 2);
  CHECK(b.total_drops().kept == 97);
  CHECK(b.stats.mean == a.stats.mean);
  CHECK(b.stats.stddev == a.stats.stddev);
  CHECK(b.stats.constant == a.stats.constant);

  REQUIRE(b.train.samples.size() == 8);
  REQUIRE(b.validation.samples.size() == 3);
  REQUIRE(b.test.samples.size() == 3);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(b.train.samples[i].batch == "b1");
    CHECK(b.train.samples[i].t_us == a.train.samples[i].t_us);
    // Role CSVs carry 9 significant digits, so values come back to ~1e-9
    // relative of unit-scale data, not bitwise.
    CHECK((b.train.samples[i].input - a.train.samples[i].input).cwiseAbs().maxCoeff() <
          1e-8);
    CHECK((b.train.samples[i].label - a.train.samples[i].label).cwiseAbs().maxCoeff() <
          1e-8);
  }
  REQUIRE(b.test.truth.rows() == 3);
  CHECK((b.test.truth - a.test.truth).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(b.train.truth.size() == 0);
  CHECK(b.role(Role::Validation).samples.size() == 3);

  CHECK_THROWS_AS(load_archive((fs::temp_directory_path() / "no_such_dir").string()),
                  IoError);
}

TEST_CASE("a membrane archive carries uv table and marker sidecars") {
  namespace fs = std::filesystem;
  auto rng = std::mt19937_64(63);
  const std::string dir =
      (fs::temp_directory_path() / "softrecon_archive_membrane").string();
  fs::remove_all(dir);

  DatasetArchive a;
  a.task = "membrane";
  a.channels = 2;
  a.window_len = 1;
  a.degree_u = 2;
  a.degree_v = 3;
  a.label_dim = 3 * 3 * 4;
  a.batch_roles = {{"m", Role::Train}};
  a.batch_drops = {{"m", {}}};
  a.stats.mean = {0.5, 0.5};
  a.stats.stddev = {1.0, 1.0};
  a.stats.constant = {false, false};
  a.uv_table.degree_u = 2;
  a.uv_table.degree_v = 3;
  std::normal_distribution<double> n;
  for (int k = 0; k < 14; ++k)
    a.uv_table.entries.push_back(
        {"s" + std::to_string(k), {k / 13.0, (13 - k) / 13.0}});
  for (int i = 0; i < 5; ++i) {
    a.train.samples.push_back(sample_at(rng, 2, a.label_dim, "m", i));
    geom::PointSet ps;
    for (int k = 0; k < 14; ++k)
      ps.push_back("s" + std::to_string(k), {n(rng), n(rng), n(rng)});
    a.train.markers.push_back(ps);
  }

  write_archive(a, dir);
  const DatasetArchive b = load_archive(dir);

  CHECK(b.task == "membrane");
  CHECK(b.degree_u == 2);
  CHECK(b.degree_v == 3);
  REQUIRE(b.uv_table.entries.size() == 14);
  CHECK(b.uv_table.entries[5].id == "s5");
  CHECK(b.uv_table.entries[5].uv.u == a.uv_table.entries[5].uv.u);
  REQUIRE(b.train.markers.size() == 5);
  REQUIRE(b.train.markers[2].size() == 14);
  CHECK(geom::distance(b.train.markers[2].points[7], a.train.markers[2].points[7]) < 1e-6);
  CHECK(b.train.markers[2].ids[7] == "s7");
  CHECK(b.validation.markers.empty());
}

TEST_CASE("truth csv maps timestamps to label vectors") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "softrecon_truth_csv";
  fs::create_directories(dir);
  const fs::path p = dir / "truth.csv";
  {
    std::ofstream out(p);
    out << "t_us,p0,p1,p2,load_g\n";
    out << "0,1.5,2.5,3.5,100\n";
    out << "10000,-1,0.25,9,100\n";
  }
  const auto truth = read_truth_csv(p.string(), 3);
  REQUIRE(truth.size() == 2);
  REQUIRE(truth.count(10000) == 1);
  CHECK(truth.at(0)[0] == 1.5);
  CHECK(truth.at(10000)[2] == 9.0);  // the load column is ignored
  CHECK(truth.at(10000).size() == 3);

  {
    std::ofstream out(p);
    out << "t_us,p0\n0,1.0\n";
  }
  CHECK_THROWS_AS(read_truth_csv(p.string(), 3), ParseError);
  CHECK_THROWS_AS(read_truth_csv((dir / "gone.csv").string(), 3), IoError);
}
