#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "softrecon/errors.hpp"
#include "softrecon/models.hpp"

namespace softrecon::model {

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
  const Eigen::VectorXd a2 = a.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = b.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * a * b.transpose();
  d2.colwise() += a2;
  d2.rowwise() += b2.transpose();
  return (-gamma * d2.array()).exp();
}

double svr_dual_objective(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, double epsilon,
                          const Eigen::VectorXd& beta) {
  return 0.5 * beta.dot(k * beta) - y.dot(beta) + epsilon * beta.cwiseAbs().sum();
}

namespace {

/// Lazily materialized RBF Gram columns, shared across output dimensions.
class KernelCache {
 public:
  KernelCache(const Eigen::MatrixXd& x, double gamma)
      : x_(x), gamma_(gamma), sq_(x.rowwise().squaredNorm()) {}

  double diag(int) const { return 1.0; }  // exp(0) for RBF

  const Eigen::VectorXd& col(int i) {
    auto it = cols_.find(i);
    if (it != cols_.end()) return it->second;
    Eigen::VectorXd c =
        (-gamma_ * (sq_.array() - 2.0 * (x_ * x_.row(i).transpose()).array() + sq_[i])).exp();
    return cols_.emplace(i, std::move(c)).first->second;
  }

 private:
  const Eigen::MatrixXd& x_;
  double gamma_;
  Eigen::VectorXd sq_;
  std::unordered_map<int, Eigen::VectorXd> cols_;
};

struct SmoSolution {
  Eigen::VectorXd beta;
  double bias = 0.0;
  long iterations = 0;
};

/// SMO over the 2l-variable split dual (alpha block then alpha-star block),
/// maximal-violating-pair selection, libsvm-style working-set rules.
SmoSolution solve_epsilon_svr(KernelCache& kernel, const Eigen::VectorXd& y,
                              const SvrParams& prm) {
  const int l = int(y.size());
  Eigen::VectorXd a = Eigen::VectorXd::Zero(2 * l);
  Eigen::VectorXd grad(2 * l);
  grad.head(l) = Eigen::VectorXd::Constant(l, prm.epsilon) - y;
  grad.tail(l) = Eigen::VectorXd::Constant(l, prm.epsilon) + y;
  const auto sign = [l](int t) { return t < l ? 1.0 : -1.0; };

  SmoSolution out;
  double m_val = 0.0, big_m = 0.0;
  for (long iter = 0;; ++iter) {
    if (iter >= prm.max_iter)
      throw SolverStalled("svr smo hit the iteration cap (" + std::to_string(prm.max_iter) +
                          ")");
    out.iterations = iter;

    int i = -1, j = -1;
    m_val = -std::numeric_limits<double>::infinity();
    big_m = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 2 * l; ++t) {
      const double v = -sign(t) * grad[t];
      const bool can_up = sign(t) > 0 ? a[t] < prm.c : a[t] > 0.0;
      const bool can_down = sign(t) > 0 ? a[t] > 0.0 : a[t] < prm.c;
      if (can_up && v > m_val) {
        m_val = v;
        i = t;
      }
      if (can_down && v < big_m) {
        big_m = v;
        j = t;
      }
    }
    if (i < 0 || j < 0 || m_val - big_m <= prm.tol) break;

    const int ii = i % l, jj = j % l;
    const double s = sign(i) * sign(j);
    const double eta =
        std::max(kernel.diag(ii) + kernel.diag(jj) - 2.0 * kernel.col(jj)[ii], 1e-12);
    double delta = -(grad[i] - s * grad[j]) / eta;
    const double lo = std::max(-a[i], s > 0 ? a[j] - prm.c : -a[j]);
    const double hi = std::min(prm.c - a[i], s > 0 ? a[j] : prm.c - a[j]);
    delta = std::clamp(delta, lo, hi);

    a[i] += delta;
    a[j] -= s * delta;
    const Eigen::VectorXd upd =
        sign(i) * delta * kernel.col(ii) + sign(j) * (-s * delta) * kernel.col(jj);
    grad.head(l) += upd;
    grad.tail(l) -= upd;
  }

  // Bias from free variables; fall back to the KKT gap midpoint.
  double sum = 0.0;
  int free_count = 0;
  for (int t = 0; t < 2 * l; ++t) {
    if (a[t] > 0.0 && a[t] < prm.c) {
      sum += -sign(t) * grad[t];
      ++free_count;
    }
  }
  out.bias = free_count > 0 ? sum / free_count : 0.5 * (m_val + big_m);
  out.beta = a.head(l) - a.tail(l);
  return out;
}

}  // namespace

Regressor train_svr(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    const ModelConfig& config) {
  config.validate();
  if (x.rows() == 0) throw EmptyDataset("no training samples");
  if (x.rows() != y.rows()) throw DimMismatch("inputs and labels disagree on sample count");
  if (x.cols() != config.input_dim) throw DimMismatch("input width differs from config");
  if (y.cols() != config.output_dim) throw DimMismatch("label width differs from config");

  double gamma = config.svr.gamma;
  if (gamma <= 0.0) {
    const double var = (x.array() - x.mean()).square().mean();
    gamma = 1.0 / (double(x.cols()) * std::max(var, 1e-12));
  }

  // Targets are z-scored per dimension so epsilon is in normalized units.
  LabelTransform tf = LabelTransform::identity(int(y.cols()));
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const double mean = y.col(j).mean();
    const double sd = std::sqrt((y.col(j).array() - mean).square().mean());
    tf.offset[std::size_t(j)] = mean;
    tf.scale[std::size_t(j)] = sd > 1e-12 ? sd : 1.0;
  }
  const Eigen::MatrixXd yenc = tf.encode_rows(y);

  KernelCache kernel(x, gamma);
  Regressor r;
  r.config = config;
  r.config.kind = ModelKind::SVR;
  r.config.svr.gamma = gamma;
  r.label_tf = tf;
  r.svr.gamma = gamma;
  r.svr.dims.resize(std::size_t(config.output_dim));
  for (int d = 0; d < config.output_dim; ++d) {
    const SmoSolution sol = solve_epsilon_svr(kernel, yenc.col(d), config.svr);
    SvrDim& dim = r.svr.dims[std::size_t(d)];
    dim.bias = sol.bias;
    std::vector<int> keep;
    for (int i = 0; i < sol.beta.size(); ++i)
      if (sol.beta[i] != 0.0) keep.push_back(i);
    dim.support_x.resize(Eigen::Index(keep.size()), x.cols());
    dim.beta.resize(Eigen::Index(keep.size()));
    for (std::size_t s = 0; s < keep.size(); ++s) {
      dim.support_x.row(Eigen::Index(s)) = x.row(keep[s]);
      dim.beta[Eigen::Index(s)] = sol.beta[keep[s]];
    }
    r.report.train_loss.push_back(double(sol.iterations));
  }
  r.report.epochs_run = 1;
  return r;
}

}  // namespace softrecon::model
