#include "softrecon/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "softrecon/errors.hpp"
#include "softrecon/io_util.hpp"
#include "softrecon/models.hpp"

namespace softrecon::data {

namespace {

constexpr std::int64_t kPairToleranceUs = 500;   // marker to nearest sensor frame
constexpr std::int64_t kGapToleranceUs = 1500;   // max spacing inside a window

double parse_double(const std::string& s, long line) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e)
    throw ParseError("bad numeric field '" + s + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + s + "'", line);
  return v;
}

std::int64_t parse_time(const std::string& s, long line) {
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError("bad timestamp '" + s + "'", line);
  return v;
}

}  // namespace

int MarkerLog::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return int(i);
  return -1;
}

int parse_sensor_header(const std::string& line) {
  const auto header = io::split(line, ',');
  if (header.size() < 2 || header[0] != "t_us")
    throw ParseError("sensor log header must start with t_us", 1);
  for (std::size_t i = 1; i < header.size(); ++i)
    if (header[i] != "s" + std::to_string(i - 1))
      throw ParseError("unexpected sensor column '" + header[i] + "'", 1);
  return int(header.size()) - 1;
}

SensorFrame parse_sensor_row(const std::string& line, int channels, long lineno) {
  const auto fields = io::split(line, ',');
  if (fields.size() != std::size_t(channels) + 1)
    throw ParseError("expected " + std::to_string(channels + 1) + " fields, got " +
                         std::to_string(fields.size()),
                     lineno);
  SensorFrame f;
  f.t_us = parse_time(fields[0], lineno);
  f.readings.reserve(std::size_t(channels));
  for (std::size_t i = 1; i < fields.size(); ++i)
    f.readings.push_back(parse_double(fields[i], lineno));
  return f;
}

SensorLog load_sensor_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty sensor log", 1);
  ++lineno;

  SensorLog log;
  log.channels = parse_sensor_header(line);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    SensorFrame f = parse_sensor_row(line, log.channels, lineno);
    if (!log.frames.empty() && f.t_us < log.frames.back().t_us)
      throw NonMonotonicTime("sensor log steps back in time at line " +
                             std::to_string(lineno));
    log.frames.push_back(std::move(f));
  }
  return log;
}

MarkerLog load_marker_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty marker log", 1);
  ++lineno;
  const auto header = io::split(line, ',');
  if (header.size() < 4 || header[0] != "t_us" || (header.size() - 1) % 3 != 0)
    throw ParseError("marker log header must be t_us plus id_x,id_y,id_z triples", lineno);

  MarkerLog log;
  static const char* kSuffix[3] = {"_x", "_y", "_z"};
  for (std::size_t c = 1; c < header.size(); c += 3) {
    const std::string& first = header[c];
    if (first.size() < 3 || first.substr(first.size() - 2) != "_x")
      throw ParseError("marker column '" + first + "' should end in _x", lineno);
    const std::string id = first.substr(0, first.size() - 2);
    for (int k = 0; k < 3; ++k)
      if (header[c + std::size_t(k)] != id + kSuffix[k])
        throw ParseError("marker triple for '" + id + "' is broken", lineno);
    log.ids.push_back(id);
  }

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = io::split(line, ',');
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       lineno);
    MarkerFrame f;
    f.t_us = parse_time(fields[0], lineno);
    if (!log.frames.empty() && f.t_us < log.frames.back().t_us)
      throw NonMonotonicTime("marker log steps back in time at line " +
                             std::to_string(lineno));
    f.positions.reserve(log.ids.size());
    for (std::size_t m = 0; m < log.ids.size(); ++m) {
      const std::string& sx = fields[1 + 3 * m];
      const std::string& sy = fields[2 + 3 * m];
      const std::string& sz = fields[3 + 3 * m];
      const int empties = int(sx.empty()) + int(sy.empty()) + int(sz.empty());
      if (empties == 3) {
        f.positions.emplace_back(std::nullopt);
      } else if (empties == 0) {
        f.positions.emplace_back(geom::Point3{parse_double(sx, lineno),
                                              parse_double(sy, lineno),
                                              parse_double(sz, lineno)});
      } else {
        throw ParseError("marker '" + log.ids[m] + "' is only partially present", lineno);
      }
    }
    f.complete = std::all_of(f.positions.begin(), f.positions.end(),
                             [](const auto& p) { return p.has_value(); });
    log.frames.push_back(std::move(f));
  }
  return log;
}

geom::PointSet extract_markers(const MarkerLog& log, const MarkerFrame& frame,
                               const std::vector<std::string>& ids) {
  geom::PointSet out;
  for (const std::string& id : ids) {
    const int idx = log.index_of(id);
    if (idx < 0 || !frame.positions[std::size_t(idx)].has_value())
      throw MissingMarker("marker '" + id + "' missing at t=" + std::to_string(frame.t_us));
    out.ids.push_back(id);
    out.points.push_back(*frame.positions[std::size_t(idx)]);
  }
  return out;
}

namespace {

geom::RigidTransform frame_from_axes(const Eigen::Vector3d& x, const Eigen::Vector3d& y,
                                     const Eigen::Vector3d& z,
                                     const Eigen::Vector3d& origin) {
  geom::RigidTransform t;
  Eigen::Matrix3d axes;
  axes.col(0) = x;
  axes.col(1) = y;
  axes.col(2) = z;
  t.rotation.m = axes.transpose();
  t.translation = -(t.rotation.m * origin);
  return t;
}

}  // namespace

geom::RigidTransform align_joint_frame(const MarkerLog& log, const MarkerFrame& frame,
                                       const std::vector<std::string>& bottom_ids,
                                       const std::string& reference_id) {
  if (bottom_ids.size() != 3) throw SizeMismatch("joint alignment needs 3 bottom markers");
  const geom::PointSet bottom = extract_markers(log, frame, bottom_ids);
  const geom::PointSet ref_set = extract_markers(log, frame, {reference_id});

  const Eigen::Vector3d p0 = bottom.points[0].vec();
  const Eigen::Vector3d p1 = bottom.points[1].vec();
  const Eigen::Vector3d p2 = bottom.points[2].vec();
  const Eigen::Vector3d origin = (p0 + p1 + p2) / 3.0;

  Eigen::Vector3d normal = (p1 - p0).cross(p2 - p0);
  const double scale = (p1 - p0).norm() * (p2 - p0).norm();
  if (normal.norm() <= 1e-9 * std::max(scale, 1e-30))
    throw CollinearPoints("bottom markers are collinear");
  normal.normalize();
  if (normal.z() < 0.0) normal = -normal;

  Eigen::Vector3d y = ref_set.points[0].vec() - origin;
  y -= y.dot(normal) * normal;
  if (y.norm() <= 1e-9) throw CollinearPoints("reference marker sits on the plane normal");
  y.normalize();
  const Eigen::Vector3d x = y.cross(normal);
  return frame_from_axes(x, y, normal, origin);
}

geom::RigidTransform align_membrane_frame(const MarkerLog& log, const MarkerFrame& frame,
                                          const std::vector<std::string>& fixed_ids) {
  if (fixed_ids.size() < 3) throw SizeMismatch("membrane alignment needs >= 3 fixed markers");
  const geom::PointSet fixed = extract_markers(log, frame, fixed_ids);

  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  for (const geom::Point3& p : fixed.points) origin += p.vec();
  origin /= double(fixed.points.size());

  Eigen::MatrixXd centered(3, Eigen::Index(fixed.points.size()));
  for (std::size_t i = 0; i < fixed.points.size(); ++i)
    centered.col(Eigen::Index(i)) = fixed.points[i].vec() - origin;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeFullU);
  const Eigen::VectorXd sv = svd.singularValues();
  if (sv[1] <= 1e-9 * std::max(sv[0], 1e-30))
    throw CollinearPoints("fixed markers are collinear");
  Eigen::Vector3d normal = svd.matrixU().col(2);
  if (normal.z() < 0.0) normal = -normal;

  Eigen::Vector3d x = fixed.points[1].vec() - fixed.points[0].vec();
  x -= x.dot(normal) * normal;
  if (x.norm() <= 1e-9) throw CollinearPoints("first frame edge is degenerate");
  x.normalize();
  const Eigen::Vector3d y = normal.cross(x);
  return frame_from_axes(x, y, normal, origin);
}

SyncResult synchronize(const SensorLog& sensors, const MarkerLog& markers, int window_len) {
  if (window_len < 1) throw SizeMismatch("window_len must be >= 1");
  SyncResult out;
  out.report.total_marker_frames = long(markers.frames.size());

  std::vector<std::int64_t> times;
  times.reserve(sensors.frames.size());
  for (const SensorFrame& f : sensors.frames) times.push_back(f.t_us);

  for (const MarkerFrame& mf : markers.frames) {
    if (!mf.complete) {
      ++out.report.incomplete;
      continue;
    }
    // Nearest sensor frame; earlier one wins a tie.
    const auto it = std::lower_bound(times.begin(), times.end(), mf.t_us);
    long idx = -1;
    std::int64_t best = kPairToleranceUs + 1;
    if (it != times.begin()) {
      const long i = long(it - times.begin()) - 1;
      best = mf.t_us - times[std::size_t(i)];
      idx = i;
    }
    if (it != times.end()) {
      const long i = long(it - times.begin());
      const std::int64_t d = times[std::size_t(i)] - mf.t_us;
      if (d < best) {
        best = d;
        idx = i;
      }
    }
    if (idx < 0 || best > kPairToleranceUs) {
      ++out.report.unmatched;
      continue;
    }
    if (idx + 1 < window_len) {
      ++out.report.short_window;
      continue;
    }
    bool broken = false;
    for (long k = idx - window_len + 1; k < idx; ++k) {
      const std::int64_t dt = times[std::size_t(k + 1)] - times[std::size_t(k)];
      if (dt <= 0 || dt > kGapToleranceUs) {
        broken = true;
        break;
      }
    }
    if (broken) {
      ++out.report.gap;
      continue;
    }
    SyncedSample s;
    s.marker = mf;
    s.window.assign(sensors.frames.begin() + (idx - window_len + 1),
                    sensors.frames.begin() + idx + 1);
    out.samples.push_back(std::move(s));
    ++out.report.kept;
  }
  return out;
}

namespace {

Eigen::VectorXd flatten_window(const std::vector<SensorFrame>& window) {
  const int steps = int(window.size());
  const int channels = steps > 0 ? int(window[0].readings.size()) : 0;
  Eigen::VectorXd input(steps * channels);
  for (int s = 0; s < steps; ++s)
    for (int c = 0; c < channels; ++c)
      input[Eigen::Index(s) * channels + c] = window[std::size_t(s)].readings[std::size_t(c)];
  return input;
}

}  // namespace

WindowedSample label_joint(const MarkerLog& log, const SyncedSample& sample,
                           const JointLayout& layout) {
  const geom::RigidTransform to_robot =
      align_joint_frame(log, sample.marker, layout.bottom_ids, layout.reference_id);
  const geom::PointSet top = extract_markers(log, sample.marker, layout.flat_top.ids);
  const geom::PointSet aligned = geom::apply_transform(to_robot, top);
  const geom::RigidTransform pose = geom::solve_rigid_transform(layout.flat_top, aligned);

  WindowedSample out;
  out.input = flatten_window(sample.window);
  out.label = model::encode_joint(pose);
  out.t_us = sample.marker.t_us;
  return out;
}

geom::PointSet aligned_membrane_markers(const MarkerLog& log, const SyncedSample& sample,
                                        const MembraneLayout& layout) {
  const geom::RigidTransform to_robot =
      align_membrane_frame(log, sample.marker, layout.fixed_ids);
  std::vector<std::string> ids;
  ids.reserve(layout.uv_table.entries.size());
  for (const auto& e : layout.uv_table.entries) ids.push_back(e.id);
  return geom::apply_transform(to_robot, extract_markers(log, sample.marker, ids));
}

WindowedSample label_membrane(const MarkerLog& log, const SyncedSample& sample,
                              const MembraneLayout& layout, int degree_u, int degree_v) {
  const geom::PointSet aligned = aligned_membrane_markers(log, sample, layout);
  const bezier::FitResult fit =
      bezier::fit_surface(aligned, layout.uv_table, degree_u, degree_v);

  WindowedSample out;
  out.input = flatten_window(sample.window);
  out.label = model::encode_membrane(fit.surface.grid);
  out.t_us = sample.marker.t_us;
  return out;
}

std::string to_string(Role r) {
  switch (r) {
    case Role::Train: return "train";
    case Role::Validation: return "validation";
    case Role::Test: return "test";
  }
  return "train";
}

void SplitSpec::validate() const {
  if (batch_to_role.empty()) throw ConfigError("split spec maps no batches");
}

SplitResult split(const std::vector<WindowedSample>& samples, const SplitSpec& spec) {
  spec.validate();
  SplitResult out;
  for (const WindowedSample& s : samples) {
    const auto it = spec.batch_to_role.find(s.batch);
    if (it == spec.batch_to_role.end())
      throw UnknownBatch("batch '" + s.batch + "' is not in the split spec");
    switch (it->second) {
      case Role::Train: out.train.push_back(s); break;
      case Role::Validation: out.validation.push_back(s); break;
      case Role::Test: out.test.push_back(s); break;
    }
  }
  return out;
}

NormStats fit_normalizer(const std::vector<WindowedSample>& train, int channels) {
  if (train.empty()) throw EmptyDataset("cannot fit a normalizer on no samples");
  if (channels < 1) throw SizeMismatch("channels must be >= 1");

  NormStats stats;
  stats.mean.assign(std::size_t(channels), 0.0);
  stats.stddev.assign(std::size_t(channels), 0.0);
  stats.constant.assign(std::size_t(channels), false);

  std::vector<long> counts(std::size_t(channels), 0);
  for (const WindowedSample& s : train) {
    for (Eigen::Index i = 0; i < s.input.size(); ++i) {
      const std::size_t ch = std::size_t(i % channels);
      stats.mean[ch] += s.input[i];
      ++counts[ch];
    }
  }
  for (std::size_t ch = 0; ch < stats.mean.size(); ++ch)
    if (counts[ch] > 0) stats.mean[ch] /= double(counts[ch]);

  for (const WindowedSample& s : train) {
    for (Eigen::Index i = 0; i < s.input.size(); ++i) {
      const std::size_t ch = std::size_t(i % channels);
      const double d = s.input[i] - stats.mean[ch];
      stats.stddev[ch] += d * d;
    }
  }
  for (std::size_t ch = 0; ch < stats.stddev.size(); ++ch) {
    stats.stddev[ch] = counts[ch] > 0 ? std::sqrt(stats.stddev[ch] / double(counts[ch])) : 0.0;
    if (stats.stddev[ch] < 1e-12) {
      stats.stddev[ch] = 0.0;
      stats.constant[ch] = true;
    }
  }
  return stats;
}

Eigen::MatrixXd apply_normalizer(const NormStats& stats, const Eigen::MatrixXd& inputs,
                                 int channels) {
  if (int(stats.mean.size()) != channels) throw SizeMismatch("normalizer channel count");
  Eigen::MatrixXd out(inputs.rows(), inputs.cols());
  for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
    const std::size_t ch = std::size_t(c % channels);
    // Constant channels are centered only, which keeps apply invertible.
    const double sd = stats.constant[ch] ? 1.0 : stats.stddev[ch];
    out.col(c) = (inputs.col(c).array() - stats.mean[ch]) / sd;
  }
  return out;
}

std::vector<WindowedSample> apply_normalizer(const NormStats& stats,
                                             const std::vector<WindowedSample>& samples) {
  const int channels = int(stats.mean.size());
  std::vector<WindowedSample> out = samples;
  for (WindowedSample& s : out) {
    for (Eigen::Index i = 0; i < s.input.size(); ++i) {
      const std::size_t ch = std::size_t(i % channels);
      const double sd = stats.constant[ch] ? 1.0 : stats.stddev[ch];
      s.input[i] = (s.input[i] - stats.mean[ch]) / sd;
    }
  }
  return out;
}

std::string norm_stats_to_json(const NormStats& stats) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["channels"] = stats.mean.size();
  j["mean"] = stats.mean;
  j["stddev"] = stats.stddev;
  j["constant"] = stats.constant;
  return j.dump(2) + "\n";
}

NormStats norm_stats_from_json(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != 1)
      throw VersionMismatch("unsupported norm-stats format");
    NormStats stats;
    stats.mean = j.at("mean").get<std::vector<double>>();
    stats.stddev = j.at("stddev").get<std::vector<double>>();
    stats.constant = j.at("constant").get<std::vector<bool>>();
    if (stats.mean.size() != stats.stddev.size() ||
        stats.mean.size() != stats.constant.size() ||
        stats.mean.size() != j.at("channels").get<std::size_t>())
      throw CorruptFile("norm-stats arrays disagree on channel count");
    return stats;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("norm-stats json: ") + e.what());
  }
}

}  // namespace softrecon::data
