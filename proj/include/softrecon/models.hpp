#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "softrecon/bezier.hpp"
#include "softrecon/geometry.hpp"

namespace softrecon::model {

enum class ModelKind { MVLR, FNN, LSTM, SVR };

/// Output-layer activation. Mixed passes the leading tanh_lead dimensions
/// through tanh (rotation entries, bounded) and leaves the rest linear
/// (translation in mm).
enum class OutputHead { Linear, Tanh, Mixed };

/// How linear label dimensions are scaled before training. PerDim z-scores
/// each dimension; Shared divides all of them by one pooled deviation, which
/// preserves relative magnitudes when every dimension carries the same unit.
enum class LabelScale { PerDim, Shared };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(OutputHead h);
OutputHead head_from_string(const std::string& s);
std::string to_string(LabelScale s);
LabelScale label_scale_from_string(const std::string& s);

struct OptimizerParams {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;  // L2 penalty folded into the update step
  int batch_size = 64;
  int max_epochs = 200;
  int patience = 20;  // early stop, epochs without validation improvement
};

struct SvrParams {
  double c = 1.0;
  double epsilon = 0.01;
  double gamma = 0.0;  // <= 0 resolves to 1 / (dims * variance) at train time
  double tol = 1e-3;
  long max_iter = 1000000;
};

struct ModelConfig {
  ModelKind kind = ModelKind::FNN;
  int input_dim = 120;
  int output_dim = 12;
  int hidden_size = 50;
  OutputHead head = OutputHead::Linear;
  LabelScale label_scale = LabelScale::PerDim;
  int tanh_lead = 9;     // bounded dims when head == Mixed
  int window_len = 10;   // steps per sequence (LSTM)
  int channels = 12;     // sensor channels per step (LSTM)
  std::uint64_t seed = 1;
  OptimizerParams opt;
  SvrParams svr;

  void validate() const;
};

/// Affine map applied to labels before training and inverted on prediction,
/// so bounded heads see O(1) targets. offset/scale are per output dimension;
/// empty means identity.
struct LabelTransform {
  std::vector<double> offset;
  std::vector<double> scale;

  static LabelTransform identity(int dims);
  Eigen::VectorXd encode(const Eigen::VectorXd& raw) const;
  Eigen::VectorXd decode(const Eigen::VectorXd& scaled) const;
  Eigen::MatrixXd encode_rows(const Eigen::MatrixXd& raw) const;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double wall_seconds = 0.0;  // informational, excluded from digests
};

struct FnnParams {
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;
};

struct LstmParams {
  // Gate order i, f, g, o stacked along rows (4h x *).
  Eigen::MatrixXd wx, wh, wy;
  Eigen::VectorXd b, by;
};

struct SvrDim {
  Eigen::MatrixXd support_x;  // rows are the retained training inputs
  Eigen::VectorXd beta;       // alpha - alpha*, one per support row
  double bias = 0.0;
};

struct SvrParamsLearned {
  std::vector<SvrDim> dims;  // one epsilon-SVR per output dimension
  double gamma = 0.0;
};

/// A trained regressor of any kind. Inputs are normalized sensor windows;
/// predictions come back in raw label units.
class Regressor {
 public:
  ModelConfig config;
  LabelTransform label_tf;
  std::string norm_stats_digest;  // ties the model to its NormStats file
  TrainReport report;

  Eigen::MatrixXd mvlr_w;  // (input_dim + 1) x output_dim, bias row last
  FnnParams fnn;
  LstmParams lstm;
  SvrParamsLearned svr;

  Eigen::VectorXd predict(const Eigen::VectorXd& input) const;
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& inputs) const;
};

/// Ordinary least squares with an appended bias column. X rows are samples.
/// Throws RankDeficient when [X, 1] loses column rank.
Regressor train_mvlr(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                     const ModelConfig& config);

Regressor train_fnn(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                    const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val,
                    const ModelConfig& config);

/// Rows of x are flattened (step, channel) windows; reshaped internally.
Regressor train_lstm(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                     const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val,
                     const ModelConfig& config);

/// Independent epsilon-SVR per output dimension, RBF kernel, SMO dual solve.
Regressor train_svr(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    const ModelConfig& config);

/// Dispatch on config.kind; MVLR and SVR ignore the validation split.
Regressor train_model(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                      const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val,
                      const ModelConfig& config);

/// k(i,j) = exp(-gamma * |a_i - b_j|^2) over rows.
Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma);

/// Dual objective 0.5 b'Kb - y'b + eps*|b|_1 of an epsilon-SVR solution.
double svr_dual_objective(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, double epsilon,
                          const Eigen::VectorXd& beta);

/// First 9 entries projected to the nearest rotation, last 3 are mm.
geom::RigidTransform decode_joint(const Eigen::VectorXd& raw);

/// Row-major control points, xyz interleaved.
bezier::BezierSurface decode_membrane(const Eigen::VectorXd& raw, int degree_u, int degree_v);
Eigen::VectorXd encode_membrane(const bezier::ControlGrid& grid);
Eigen::VectorXd encode_joint(const geom::RigidTransform& t);

void save_model(const Regressor& model, const std::string& path);
Regressor load_model(const std::string& path);

/// User-facing training config JSON: `kind` is required, everything else
/// falls back to the defaults above. Structural fields (input/output dims,
/// window geometry) are normally overwritten from the dataset archive.
ModelConfig model_config_from_json(const std::string& text);

}  // namespace softrecon::model
