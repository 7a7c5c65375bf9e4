#include "softrecon/archive.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "softrecon/errors.hpp"
#include "softrecon/io_util.hpp"

namespace softrecon::data {

namespace {

double field_double(const std::string& s, long line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError("bad numeric field '" + s + "'", line);
  return v;
}

std::int64_t field_time(const std::string& s, long line) {
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError("bad timestamp '" + s + "'", line);
  return v;
}

nlohmann::json drop_to_json(const DropReport& d) {
  return {{"total_marker_frames", d.total_marker_frames}, {"kept", d.kept},
          {"incomplete", d.incomplete},                   {"unmatched", d.unmatched},
          {"short_window", d.short_window},               {"gap", d.gap}};
}

DropReport drop_from_json(const nlohmann::json& j) {
  DropReport d;
  d.total_marker_frames = j.at("total_marker_frames").get<long>();
  d.kept = j.at("kept").get<long>();
  d.incomplete = j.at("incomplete").get<long>();
  d.unmatched = j.at("unmatched").get<long>();
  d.short_window = j.at("short_window").get<long>();
  d.gap = j.at("gap").get<long>();
  return d;
}

Role role_from_string(const std::string& s) {
  if (s == "train") return Role::Train;
  if (s == "validation") return Role::Validation;
  if (s == "test") return Role::Test;
  throw ConfigError("unknown role '" + s + "'");
}

void write_role_csv(const std::vector<WindowedSample>& samples, int input_dim,
                    int label_dim, const std::string& path) {
  std::ostringstream os;
  os << "batch,t_us";
  for (int i = 0; i < input_dim; ++i) os << ",in" << i;
  for (int i = 0; i < label_dim; ++i) os << ",lab" << i;
  os << "\n";
  for (const WindowedSample& s : samples) {
    os << s.batch << ',' << s.t_us;
    for (Eigen::Index i = 0; i < s.input.size(); ++i) os << ',' << io::fmt_g(s.input[i]);
    for (Eigen::Index i = 0; i < s.label.size(); ++i) os << ',' << io::fmt_g(s.label[i]);
    os << "\n";
  }
  io::write_file(path, os.str());
}

std::vector<WindowedSample> read_role_csv(const std::string& path, int input_dim,
                                          int label_dim) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty role csv " + path, 1);
  ++lineno;
  const std::size_t want = 2 + std::size_t(input_dim) + std::size_t(label_dim);
  if (io::split(line, ',').size() != want)
    throw CorruptFile(path + ": header width disagrees with meta.json");

  std::vector<WindowedSample> samples;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = io::split(line, ',');
    if (f.size() != want)
      throw ParseError("expected " + std::to_string(want) + " fields", lineno);
    WindowedSample s;
    s.batch = f[0];
    s.t_us = field_time(f[1], lineno);
    s.input.resize(input_dim);
    for (int i = 0; i < input_dim; ++i) s.input[i] = field_double(f[2 + std::size_t(i)], lineno);
    s.label.resize(label_dim);
    for (int i = 0; i < label_dim; ++i)
      s.label[i] = field_double(f[2 + std::size_t(input_dim) + std::size_t(i)], lineno);
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_truth_csv(const std::vector<WindowedSample>& samples, const Eigen::MatrixXd& truth,
                     const std::string& path) {
  std::ostringstream os;
  os << "batch,t_us";
  for (Eigen::Index i = 0; i < truth.cols(); ++i) os << ",p" << i;
  os << "\n";
  for (Eigen::Index r = 0; r < truth.rows(); ++r) {
    os << samples[std::size_t(r)].batch << ',' << samples[std::size_t(r)].t_us;
    for (Eigen::Index c = 0; c < truth.cols(); ++c) os << ',' << io::fmt_g(truth(r, c));
    os << "\n";
  }
  io::write_file(path, os.str());
}

Eigen::MatrixXd read_truth_sidecar(const std::string& path, int label_dim) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty truth csv " + path, 1);
  ++lineno;
  const std::size_t want = 2 + std::size_t(label_dim);
  if (io::split(line, ',').size() != want)
    throw CorruptFile(path + ": truth width disagrees with meta.json");

  std::vector<Eigen::VectorXd> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = io::split(line, ',');
    if (f.size() != want)
      throw ParseError("expected " + std::to_string(want) + " fields", lineno);
    Eigen::VectorXd v(label_dim);
    for (int i = 0; i < label_dim; ++i) v[i] = field_double(f[2 + std::size_t(i)], lineno);
    rows.push_back(std::move(v));
  }
  Eigen::MatrixXd m(Eigen::Index(rows.size()), label_dim);
  for (std::size_t r = 0; r < rows.size(); ++r) m.row(Eigen::Index(r)) = rows[r].transpose();
  return m;
}

void write_markers_csv(const std::vector<WindowedSample>& samples,
                       const std::vector<geom::PointSet>& markers, const std::string& path) {
  std::ostringstream os;
  os << "batch,t_us";
  for (const std::string& id : markers[0].ids)
    os << ',' << id << "_x," << id << "_y," << id << "_z";
  os << "\n";
  for (std::size_t r = 0; r < markers.size(); ++r) {
    os << samples[r].batch << ',' << samples[r].t_us;
    for (const geom::Point3& p : markers[r].points)
      os << ',' << io::fmt_g(p.x) << ',' << io::fmt_g(p.y) << ',' << io::fmt_g(p.z);
    os << "\n";
  }
  io::write_file(path, os.str());
}

std::vector<geom::PointSet> read_markers_sidecar(const std::string& path) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty markers csv " + path, 1);
  ++lineno;
  const auto header = io::split(line, ',');
  if (header.size() < 5 || header[0] != "batch" || header[1] != "t_us" ||
      (header.size() - 2) % 3 != 0)
    throw CorruptFile(path + ": marker sidecar header is malformed");
  std::vector<std::string> ids;
  for (std::size_t c = 2; c < header.size(); c += 3)
    ids.push_back(header[c].substr(0, header[c].size() - 2));

  std::vector<geom::PointSet> frames;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = io::split(line, ',');
    if (f.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields", lineno);
    geom::PointSet ps;
    for (std::size_t m = 0; m < ids.size(); ++m)
      ps.push_back(ids[m], {field_double(f[2 + 3 * m], lineno),
                            field_double(f[3 + 3 * m], lineno),
                            field_double(f[4 + 3 * m], lineno)});
    frames.push_back(std::move(ps));
  }
  return frames;
}

}  // namespace

DropReport DatasetArchive::total_drops() const {
  DropReport t;
  for (const auto& [name, d] : batch_drops) {
    t.total_marker_frames += d.total_marker_frames;
    t.kept += d.kept;
    t.incomplete += d.incomplete;
    t.unmatched += d.unmatched;
    t.short_window += d.short_window;
    t.gap += d.gap;
  }
  return t;
}

const RoleData& DatasetArchive::role(Role r) const {
  switch (r) {
    case Role::Train: return train;
    case Role::Validation: return validation;
    case Role::Test: return test;
  }
  return train;
}

void write_archive(const DatasetArchive& archive, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  const int input_dim = archive.channels * archive.window_len;
  const struct {
    const char* name;
    const RoleData* data;
  } roles[3] = {{"train", &archive.train},
                {"validation", &archive.validation},
                {"test", &archive.test}};

  for (const auto& r : roles) {
    write_role_csv(r.data->samples, input_dim, archive.label_dim,
                   dir + "/" + r.name + ".csv");
    if (r.data->truth.rows() > 0)
      write_truth_csv(r.data->samples, r.data->truth, dir + "/truth_" + r.name + ".csv");
    if (!r.data->markers.empty())
      write_markers_csv(r.data->samples, r.data->markers,
                        dir + "/markers_" + r.name + ".csv");
  }

  io::write_file(dir + "/norm_stats.json", norm_stats_to_json(archive.stats));

  nlohmann::json drops;
  drops["format_version"] = 1;
  drops["total"] = drop_to_json(archive.total_drops());
  nlohmann::json per_batch = nlohmann::json::object();
  for (const auto& [name, d] : archive.batch_drops) per_batch[name] = drop_to_json(d);
  drops["per_batch"] = per_batch;
  io::write_file(dir + "/drop_report.json", drops.dump(2) + "\n");

  nlohmann::json meta;
  meta["format_version"] = 1;
  meta["task"] = archive.task;
  meta["channels"] = archive.channels;
  meta["window_len"] = archive.window_len;
  meta["label_dim"] = archive.label_dim;
  if (archive.task == "membrane") {
    meta["degree_u"] = archive.degree_u;
    meta["degree_v"] = archive.degree_v;
    nlohmann::json uv = nlohmann::json::array();
    for (const auto& e : archive.uv_table.entries)
      uv.push_back({{"id", e.id}, {"u", e.uv.u}, {"v", e.uv.v}});
    meta["uv"] = uv;
  }
  nlohmann::json roles_j = nlohmann::json::object();
  for (const auto& [name, role] : archive.batch_roles) roles_j[name] = to_string(role);
  meta["roles"] = roles_j;
  meta["counts"] = {{"train", archive.train.samples.size()},
                    {"validation", archive.validation.samples.size()},
                    {"test", archive.test.samples.size()}};
  io::write_file(dir + "/meta.json", meta.dump(2) + "\n");
}

DatasetArchive load_archive(const std::string& dir) {
  DatasetArchive a;
  try {
    const nlohmann::json meta = nlohmann::json::parse(io::read_file(dir + "/meta.json"));
    if (meta.at("format_version").get<int>() != 1)
      throw VersionMismatch("unsupported archive meta format");
    a.task = meta.at("task").get<std::string>();
    a.channels = meta.at("channels").get<int>();
    a.window_len = meta.at("window_len").get<int>();
    a.label_dim = meta.at("label_dim").get<int>();
    if (a.task == "membrane") {
      a.degree_u = meta.at("degree_u").get<int>();
      a.degree_v = meta.at("degree_v").get<int>();
      a.uv_table.degree_u = a.degree_u;
      a.uv_table.degree_v = a.degree_v;
      for (const auto& e : meta.at("uv"))
        a.uv_table.entries.push_back(
            {e.at("id").get<std::string>(), {e.at("u").get<double>(), e.at("v").get<double>()}});
    }
    for (const auto& [name, role] : meta.at("roles").items())
      a.batch_roles[name] = role_from_string(role.get<std::string>());

    const nlohmann::json drops =
        nlohmann::json::parse(io::read_file(dir + "/drop_report.json"));
    for (const auto& [name, d] : drops.at("per_batch").items())
      a.batch_drops[name] = drop_from_json(d);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile("archive metadata: " + std::string(e.what()));
  }

  a.stats = norm_stats_from_json(io::read_file(dir + "/norm_stats.json"));

  const int input_dim = a.channels * a.window_len;
  struct {
    const char* name;
    RoleData* data;
  } roles[3] = {{"train", &a.train}, {"validation", &a.validation}, {"test", &a.test}};
  for (auto& r : roles) {
    r.data->samples = read_role_csv(dir + "/" + std::string(r.name) + ".csv", input_dim,
                                    a.label_dim);
    const std::string truth_path = dir + "/truth_" + r.name + ".csv";
    if (std::filesystem::exists(truth_path)) {
      r.data->truth = read_truth_sidecar(truth_path, a.label_dim);
      if (r.data->truth.rows() != Eigen::Index(r.data->samples.size()))
        throw CorruptFile(truth_path + ": row count differs from the role csv");
    }
    const std::string markers_path = dir + "/markers_" + r.name + ".csv";
    if (std::filesystem::exists(markers_path)) {
      r.data->markers = read_markers_sidecar(markers_path);
      if (r.data->markers.size() != r.data->samples.size())
        throw CorruptFile(markers_path + ": row count differs from the role csv");
    }
  }
  return a;
}

Eigen::MatrixXd inputs_matrix(const std::vector<WindowedSample>& samples) {
  if (samples.empty()) return {};
  Eigen::MatrixXd m(Eigen::Index(samples.size()), samples[0].input.size());
  for (std::size_t r = 0; r < samples.size(); ++r) m.row(Eigen::Index(r)) = samples[r].input;
  return m;
}

Eigen::MatrixXd labels_matrix(const std::vector<WindowedSample>& samples) {
  if (samples.empty()) return {};
  Eigen::MatrixXd m(Eigen::Index(samples.size()), samples[0].label.size());
  for (std::size_t r = 0; r < samples.size(); ++r) m.row(Eigen::Index(r)) = samples[r].label;
  return m;
}

std::map<std::int64_t, Eigen::VectorXd> read_truth_csv(const std::string& path,
                                                       int label_dim) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty truth csv " + path, 1);
  ++lineno;
  const auto header = io::split(line, ',');
  if (header.empty() || header[0] != "t_us")
    throw ParseError("truth csv must start with t_us", lineno);
  std::vector<int> cols(std::size_t(label_dim), -1);
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].size() < 2 || header[c][0] != 'p') continue;
    int idx = -1;
    const auto res = std::from_chars(header[c].data() + 1,
                                     header[c].data() + header[c].size(), idx);
    if (res.ec != std::errc() || res.ptr != header[c].data() + header[c].size()) continue;
    if (idx >= 0 && idx < label_dim) cols[std::size_t(idx)] = int(c);
  }
  for (int i = 0; i < label_dim; ++i)
    if (cols[std::size_t(i)] < 0)
      throw ParseError("truth csv lacks column p" + std::to_string(i), 1);

  std::map<std::int64_t, Eigen::VectorXd> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = io::split(line, ',');
    if (f.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields", lineno);
    Eigen::VectorXd v(label_dim);
    for (int i = 0; i < label_dim; ++i)
      v[i] = field_double(f[std::size_t(cols[std::size_t(i)])], lineno);
    out[field_time(f[0], lineno)] = std::move(v);
  }
  return out;
}

}  // namespace softrecon::data
