#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "softrecon/bezier.hpp"
#include "softrecon/geometry.hpp"

namespace softrecon::data {

struct SensorFrame {
  std::int64_t t_us = 0;
  std::vector<double> readings;  // dimensionless, in [0,1]
};

struct SensorLog {
  int channels = 12;
  std::vector<SensorFrame> frames;
};

/// Positions align with MarkerLog::ids; nullopt marks an occluded marker.
struct MarkerFrame {
  std::int64_t t_us = 0;
  std::vector<std::optional<geom::Point3>> positions;
  bool complete = false;
};

struct MarkerLog {
  std::vector<std::string> ids;
  std::vector<MarkerFrame> frames;

  int index_of(const std::string& id) const;  // -1 when absent
};

/// CSV schema: header `t_us,s0,...,sN`; one frame per line.
SensorLog load_sensor_log(const std::string& path);

/// Line-level pieces of the sensor schema, for streaming readers.
int parse_sensor_header(const std::string& line);  // returns the channel count
SensorFrame parse_sensor_row(const std::string& line, int channels, long lineno);

/// CSV schema: header `t_us,<id>_x,<id>_y,<id>_z,...` (mm); empty cell =
/// occluded marker.
MarkerLog load_marker_log(const std::string& path);

/// The named markers of one frame as a PointSet. Throws MissingMarker.
geom::PointSet extract_markers(const MarkerLog& log, const MarkerFrame& frame,
                               const std::vector<std::string>& ids);

/// World -> robot frame from the bottom triangle: centroid at the origin,
/// z along the triangle normal (positive world z), y towards the reference
/// marker, x = y cross z.
geom::RigidTransform align_joint_frame(const MarkerLog& log, const MarkerFrame& frame,
                                       const std::vector<std::string>& bottom_ids,
                                       const std::string& reference_id);

/// World -> robot frame from >= 3 fixed frame markers: centroid origin,
/// z along the best-fit plane normal (positive world z), x towards the
/// second fixed marker, y = z cross x.
geom::RigidTransform align_membrane_frame(const MarkerLog& log, const MarkerFrame& frame,
                                          const std::vector<std::string>& fixed_ids);

struct SyncedSample {
  MarkerFrame marker;
  std::vector<SensorFrame> window;  // window_len consecutive frames, oldest first
};

struct DropReport {
  long total_marker_frames = 0;
  long kept = 0;
  long incomplete = 0;    // marker frame missing ids
  long unmatched = 0;     // no sensor frame within 0.5 ms
  long short_window = 0;  // fewer than window_len prior frames
  long gap = 0;           // window spacing broken (> 1.5 ms or non-increasing)

  long dropped() const { return incomplete + unmatched + short_window + gap; }
};

struct SyncResult {
  std::vector<SyncedSample> samples;
  DropReport report;
};

/// One sample per complete marker frame whose nearest sensor frame lies
/// within 0.5 ms and whose trailing window is intact.
SyncResult synchronize(const SensorLog& sensors, const MarkerLog& markers,
                       int window_len = 10);

struct WindowedSample {
  Eigen::VectorXd input;  // flattened (step, sensor), oldest step first
  Eigen::VectorXd label;
  std::string batch;
  std::int64_t t_us = 0;  // marker timestamp
};

struct JointLayout {
  std::vector<std::string> bottom_ids;  // three base markers
  std::string reference_id;             // +y direction
  geom::PointSet flat_top;              // top triangle at rest, robot frame
};

struct MembraneLayout {
  std::vector<std::string> fixed_ids;  // frame markers
  bezier::MarkerParamTable uv_table;   // surface markers with frozen uv
};

/// Label = 9 row-major rotation entries + 3 translation (mm): the rigid
/// transform taking the flat top triangle to the captured one, both in the
/// robot frame of this sample's bottom markers.
WindowedSample label_joint(const MarkerLog& log, const SyncedSample& sample,
                           const JointLayout& layout);

/// Label = control points (row-major, xyz interleaved) fitted to the aligned
/// surface markers at their frozen uv parameters.
WindowedSample label_membrane(const MarkerLog& log, const SyncedSample& sample,
                              const MembraneLayout& layout, int degree_u, int degree_v);

/// The captured surface markers of this sample in the robot frame, in the
/// uv table's order (eval compares them against the predicted surface).
geom::PointSet aligned_membrane_markers(const MarkerLog& log, const SyncedSample& sample,
                                        const MembraneLayout& layout);

enum class Role { Train, Validation, Test };
std::string to_string(Role r);

struct SplitSpec {
  std::map<std::string, Role> batch_to_role;

  void validate() const;  // nonempty; the map keys keep batches disjoint by role
};

struct SplitResult {
  std::vector<WindowedSample> train;
  std::vector<WindowedSample> validation;
  std::vector<WindowedSample> test;
};

/// Role assignment by batch tag. Throws UnknownBatch for unmapped batches.
SplitResult split(const std::vector<WindowedSample>& samples, const SplitSpec& spec);

struct NormStats {
  std::vector<double> mean;  // per sensor channel
  std::vector<double> stddev;
  std::vector<bool> constant;  // std == 0, left unscaled
};

/// Per-channel z-score statistics from training samples only.
NormStats fit_normalizer(const std::vector<WindowedSample>& train, int channels);

/// Returns inputs normalized with `stats`; labels pass through untouched.
std::vector<WindowedSample> apply_normalizer(const NormStats& stats,
                                             const std::vector<WindowedSample>& samples);
Eigen::MatrixXd apply_normalizer(const NormStats& stats, const Eigen::MatrixXd& inputs,
                                 int channels);

std::string norm_stats_to_json(const NormStats& stats);
NormStats norm_stats_from_json(const std::string& text);

}  // namespace softrecon::data
