#include "softrecon/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "softrecon/errors.hpp"
#include "softrecon/fnn_net.hpp"
#include "softrecon/lstm_net.hpp"
#include "nn_util.hpp"

namespace softrecon::model {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::MVLR: return "mvlr";
    case ModelKind::FNN: return "fnn";
    case ModelKind::LSTM: return "lstm";
    case ModelKind::SVR: return "svr";
  }
  return "mvlr";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "mvlr") return ModelKind::MVLR;
  if (s == "fnn") return ModelKind::FNN;
  if (s == "lstm") return ModelKind::LSTM;
  if (s == "svr") return ModelKind::SVR;
  throw ConfigError("unknown model kind: " + s);
}

std::string to_string(OutputHead h) {
  switch (h) {
    case OutputHead::Linear: return "linear";
    case OutputHead::Tanh: return "tanh";
    case OutputHead::Mixed: return "mixed";
  }
  return "linear";
}

OutputHead head_from_string(const std::string& s) {
  if (s == "linear") return OutputHead::Linear;
  if (s == "tanh") return OutputHead::Tanh;
  if (s == "mixed") return OutputHead::Mixed;
  throw ConfigError("unknown output head: " + s);
}

std::string to_string(LabelScale s) {
  return s == LabelScale::Shared ? "shared" : "per_dim";
}

LabelScale label_scale_from_string(const std::string& s) {
  if (s == "per_dim") return LabelScale::PerDim;
  if (s == "shared") return LabelScale::Shared;
  throw ConfigError("unknown label scale: " + s);
}

void ModelConfig::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("model dims must be positive");
  if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  if (head == OutputHead::Mixed && (tanh_lead < 0 || tanh_lead > output_dim))
    throw ConfigError("tanh_lead out of range");
  if (opt.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (opt.momentum < 0.0 || opt.momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
  if (opt.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (opt.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (opt.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (opt.patience < 0) throw ConfigError("patience must be >= 0");
  if (svr.c <= 0.0) throw ConfigError("svr C must be positive");
  if (svr.epsilon < 0.0) throw ConfigError("svr epsilon must be >= 0");
  if (svr.tol <= 0.0) throw ConfigError("svr tol must be positive");
  if (svr.max_iter < 1) throw ConfigError("svr max_iter must be >= 1");
  if (kind == ModelKind::LSTM) {
    if (window_len < 1 || channels < 1) throw ConfigError("lstm window/channels must be >= 1");
    if (window_len * channels != input_dim)
      throw ConfigError("lstm input_dim must equal window_len * channels");
  }
}

LabelTransform LabelTransform::identity(int dims) {
  LabelTransform tf;
  tf.offset.assign(std::size_t(dims), 0.0);
  tf.scale.assign(std::size_t(dims), 1.0);
  return tf;
}

Eigen::VectorXd LabelTransform::encode(const Eigen::VectorXd& raw) const {
  if (offset.empty()) return raw;
  if (raw.size() != Eigen::Index(offset.size())) throw DimMismatch("label transform dims");
  Eigen::VectorXd out(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    out[i] = (raw[i] - offset[std::size_t(i)]) / scale[std::size_t(i)];
  return out;
}

Eigen::VectorXd LabelTransform::decode(const Eigen::VectorXd& scaled) const {
  if (offset.empty()) return scaled;
  if (scaled.size() != Eigen::Index(offset.size())) throw DimMismatch("label transform dims");
  Eigen::VectorXd out(scaled.size());
  for (Eigen::Index i = 0; i < scaled.size(); ++i)
    out[i] = scaled[i] * scale[std::size_t(i)] + offset[std::size_t(i)];
  return out;
}

Eigen::MatrixXd LabelTransform::encode_rows(const Eigen::MatrixXd& raw) const {
  if (offset.empty()) return raw;
  if (raw.cols() != Eigen::Index(offset.size())) throw DimMismatch("label transform dims");
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j)
    out.col(j) = (raw.col(j).array() - offset[std::size_t(j)]) / scale[std::size_t(j)];
  return out;
}

namespace {

/// Scale the linear label dimensions; bounded (tanh) dimensions are kept raw
/// so the head sees the actual rotation entries. PerDim z-scores each column;
/// Shared centers them and divides by one pooled deviation so dimensions with
/// little genuine variation are not inflated into unit-variance noise.
LabelTransform fit_label_transform(const Eigen::MatrixXd& y, int tanh_cols,
                                   LabelScale mode) {
  LabelTransform tf = LabelTransform::identity(int(y.cols()));
  double pooled = 0.0;
  for (Eigen::Index j = tanh_cols; j < y.cols(); ++j) {
    const double mean = y.col(j).mean();
    const double var = (y.col(j).array() - mean).square().mean();
    const double sd = std::sqrt(var);
    tf.offset[std::size_t(j)] = mean;
    tf.scale[std::size_t(j)] = sd > 1e-12 ? sd : 1.0;
    pooled += var;
  }
  if (mode == LabelScale::Shared && y.cols() > tanh_cols) {
    const double sd = std::sqrt(pooled / double(y.cols() - tanh_cols));
    for (Eigen::Index j = tanh_cols; j < y.cols(); ++j)
      tf.scale[std::size_t(j)] = sd > 1e-12 ? sd : 1.0;
  }
  return tf;
}

void check_train_dims(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                      const ModelConfig& cfg) {
  if (x.rows() == 0) throw EmptyDataset("no training samples");
  if (x.rows() != y.rows()) throw DimMismatch("inputs and labels disagree on sample count");
  if (x.cols() != cfg.input_dim) throw DimMismatch("input width differs from config");
  if (y.cols() != cfg.output_dim) throw DimMismatch("label width differs from config");
}

/// Momentum SGD over a network exposing p/loss/gradient. Shuffling, batching
/// and the best-on-validation snapshot are all driven by the config seed.
template <class Net>
TrainReport run_sgd(Net& net, const Eigen::MatrixXd& xt, const Eigen::MatrixXd& yt,
                    const Eigen::MatrixXd& xv, const Eigen::MatrixXd& yv,
                    const OptimizerParams& opt, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport rep;

  auto vel = net.p;
  visit_params(vel, [](auto& m) { m.setZero(); });
  auto best = net.p;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  const int n = int(xt.rows());
  const int bs = std::min(opt.batch_size, n);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);  // decoupled from init draws

  // Halve the step size whenever validation stalls; a constant rate leaves
  // minibatch noise as the convergence floor.
  double lr = opt.learning_rate;
  const int stall_limit = std::max(3, opt.patience / 3);
  int stall = 0;

  Eigen::MatrixXd xb(bs, xt.cols()), yb(bs, yt.cols());
  for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += bs) {
      const int rows = std::min(bs, n - start);
      xb.resize(rows, xt.cols());
      yb.resize(rows, yt.cols());
      for (int r = 0; r < rows; ++r) {
        xb.row(r) = xt.row(order[std::size_t(start + r)]);
        yb.row(r) = yt.row(order[std::size_t(start + r)]);
      }
      auto g = net.gradient(xb, yb);
      if (opt.weight_decay > 0.0)
        visit_params(g, net.p, [&](auto& gm, auto& pm) { gm += opt.weight_decay * pm; });
      visit_params(vel, g, [&](auto& v, auto& gm) {
        v = opt.momentum * v - lr * gm;
      });
      visit_params(net.p, vel, [](auto& pm, auto& v) { pm += v; });
    }

    const double tr = net.loss(xt, yt);
    const double va = net.loss(xv, yv);
    rep.train_loss.push_back(tr);
    rep.val_loss.push_back(va);
    rep.epochs_run = epoch + 1;
    if (!std::isfinite(tr) || !std::isfinite(va))
      throw NonFiniteLoss("loss diverged at epoch " + std::to_string(epoch));
    if (va < best_val) {
      best_val = va;
      best = net.p;
      best_epoch = epoch;
      stall = 0;
    } else {
      if (opt.patience > 0 && epoch - best_epoch >= opt.patience) break;
      if (++stall >= stall_limit && lr > opt.learning_rate / 256.0) {
        lr *= 0.5;
        stall = 0;
      }
    }
  }

  net.p = best;
  rep.best_epoch = best_epoch;
  rep.best_val_loss = best_val;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace

Regressor train_mvlr(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                     const ModelConfig& config) {
  config.validate();
  check_train_dims(x, y, config);
  if (x.rows() <= x.cols()) throw RankDeficient("need more samples than input dims");

  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.leftCols(x.cols()) = x;
  a.col(x.cols()).setOnes();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < a.cols()) throw RankDeficient("design matrix loses column rank");
  Eigen::MatrixXd w = qr.solve(y);

  // Stationarity of the normal equations, relative to the problem scale.
  const double resid = (a.transpose() * (a * w - y)).norm();
  const double scale = std::max(1.0, (a.transpose() * y).norm());
  if (resid > 1e-8 * scale) throw RankDeficient("least-squares solve did not converge");

  Regressor r;
  r.config = config;
  r.config.kind = ModelKind::MVLR;
  r.label_tf = LabelTransform::identity(config.output_dim);
  r.mvlr_w = std::move(w);
  r.report.epochs_run = 1;
  r.report.train_loss.push_back((a * r.mvlr_w - y).squaredNorm() / double(y.size()));
  return r;
}

Regressor train_fnn(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                    const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val,
                    const ModelConfig& config) {
  config.validate();
  check_train_dims(x_train, y_train, config);
  if (x_val.rows() == 0) throw EmptyDataset("validation set is empty");
  if (x_val.cols() != config.input_dim || y_val.cols() != config.output_dim)
    throw DimMismatch("validation dims differ from config");

  const int tanh_cols = detail::head_tanh_cols(config.head, config.tanh_lead, config.output_dim);
  const LabelTransform tf = fit_label_transform(y_train, tanh_cols, config.label_scale);

  FnnNet net = FnnNet::init(config.input_dim, config.hidden_size, config.output_dim,
                            config.head, config.tanh_lead, config.seed);
  Regressor r;
  r.report = run_sgd(net, x_train, tf.encode_rows(y_train), x_val, tf.encode_rows(y_val),
                     config.opt, config.seed);
  r.config = config;
  r.config.kind = ModelKind::FNN;
  r.label_tf = tf;
  r.fnn = std::move(net.p);
  return r;
}

Regressor train_lstm(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                     const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val,
                     const ModelConfig& config) {
  ModelConfig cfg = config;
  cfg.kind = ModelKind::LSTM;
  cfg.validate();
  check_train_dims(x_train, y_train, cfg);
  if (x_val.rows() == 0) throw EmptyDataset("validation set is empty");
  if (x_val.cols() != cfg.input_dim || y_val.cols() != cfg.output_dim)
    throw DimMismatch("validation dims differ from config");

  const int tanh_cols = detail::head_tanh_cols(cfg.head, cfg.tanh_lead, cfg.output_dim);
  const LabelTransform tf = fit_label_transform(y_train, tanh_cols, cfg.label_scale);

  LstmNet net = LstmNet::init(cfg.channels, cfg.window_len, cfg.hidden_size, cfg.output_dim,
                              cfg.head, cfg.tanh_lead, cfg.seed);
  Regressor r;
  r.report = run_sgd(net, x_train, tf.encode_rows(y_train), x_val, tf.encode_rows(y_val),
                     cfg.opt, cfg.seed);
  r.config = cfg;
  r.label_tf = tf;
  r.lstm = std::move(net.p);
  return r;
}

Regressor train_model(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                      const Eigen::MatrixXd& x_val, const Eigen::MatrixXd& y_val,
                      const ModelConfig& config) {
  switch (config.kind) {
    case ModelKind::MVLR: return train_mvlr(x_train, y_train, config);
    case ModelKind::FNN: return train_fnn(x_train, y_train, x_val, y_val, config);
    case ModelKind::LSTM: return train_lstm(x_train, y_train, x_val, y_val, config);
    case ModelKind::SVR: return train_svr(x_train, y_train, config);
  }
  throw ConfigError("unknown model kind");
}

Eigen::MatrixXd Regressor::predict_batch(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != config.input_dim) throw DimMismatch("input width differs from config");
  Eigen::MatrixXd enc;
  switch (config.kind) {
    case ModelKind::MVLR: {
      Eigen::MatrixXd a(inputs.rows(), inputs.cols() + 1);
      a.leftCols(inputs.cols()) = inputs;
      a.col(inputs.cols()).setOnes();
      enc = a * mvlr_w;
      break;
    }
    case ModelKind::FNN: {
      FnnNet net;
      net.p = fnn;
      net.head = config.head;
      net.tanh_lead = config.tanh_lead;
      enc = net.forward(inputs);
      break;
    }
    case ModelKind::LSTM: {
      LstmNet net;
      net.p = lstm;
      net.head = config.head;
      net.tanh_lead = config.tanh_lead;
      net.steps = config.window_len;
      net.channels = config.channels;
      enc = net.forward(inputs);
      break;
    }
    case ModelKind::SVR: {
      enc.resize(inputs.rows(), config.output_dim);
      const Eigen::VectorXd x2 = inputs.rowwise().squaredNorm();
      for (int d = 0; d < config.output_dim; ++d) {
        const SvrDim& sv = svr.dims[std::size_t(d)];
        if (sv.support_x.rows() == 0) {
          enc.col(d).setConstant(sv.bias);
          continue;
        }
        const Eigen::VectorXd s2 = sv.support_x.rowwise().squaredNorm();
        Eigen::MatrixXd d2 = (-2.0 * inputs * sv.support_x.transpose());
        d2.colwise() += x2;
        d2.rowwise() += s2.transpose();
        enc.col(d) = (-svr.gamma * d2.array()).exp().matrix() * sv.beta;
        enc.col(d).array() += sv.bias;
      }
      break;
    }
  }
  // Back to raw label units.
  if (!label_tf.offset.empty()) {
    for (Eigen::Index j = 0; j < enc.cols(); ++j)
      enc.col(j) = enc.col(j).array() * label_tf.scale[std::size_t(j)] +
                   label_tf.offset[std::size_t(j)];
  }
  return enc;
}

Eigen::VectorXd Regressor::predict(const Eigen::VectorXd& input) const {
  return predict_batch(input.transpose()).row(0);
}

geom::RigidTransform decode_joint(const Eigen::VectorXd& raw) {
  if (raw.size() != 12) throw DimMismatch("joint label must have 12 entries");
  Eigen::Matrix3d m;
  m << raw[0], raw[1], raw[2], raw[3], raw[4], raw[5], raw[6], raw[7], raw[8];
  geom::RigidTransform t;
  t.rotation = geom::nearest_rotation(m);
  t.translation = Eigen::Vector3d(raw[9], raw[10], raw[11]);
  return t;
}

Eigen::VectorXd encode_joint(const geom::RigidTransform& t) {
  Eigen::VectorXd raw(12);
  const Eigen::Matrix3d& m = t.rotation.m;
  raw << m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1), m(2, 2),
      t.translation.x(), t.translation.y(), t.translation.z();
  return raw;
}

bezier::BezierSurface decode_membrane(const Eigen::VectorXd& raw, int degree_u, int degree_v) {
  const int nu = degree_u + 1, nv = degree_v + 1;
  if (raw.size() != Eigen::Index(3 * nu * nv))
    throw DimMismatch("membrane label length does not match the control grid");
  bezier::ControlGrid grid = bezier::ControlGrid::zeros(degree_u, degree_v);
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      const Eigen::Index base = 3 * (Eigen::Index(i) * nv + j);
      grid.at(i, j) = geom::Point3{raw[base], raw[base + 1], raw[base + 2]};
    }
  return bezier::BezierSurface{grid};
}

Eigen::VectorXd encode_membrane(const bezier::ControlGrid& grid) {
  const int nu = grid.degree_u + 1, nv = grid.degree_v + 1;
  Eigen::VectorXd raw(3 * nu * nv);
  for (int i = 0; i < nu; ++i)
    for (int j = 0; j < nv; ++j) {
      const Eigen::Index base = 3 * (Eigen::Index(i) * nv + j);
      const geom::Point3& p = grid.at(i, j);
      raw[base] = p.x;
      raw[base + 1] = p.y;
      raw[base + 2] = p.z;
    }
  return raw;
}

}  // namespace softrecon::model
