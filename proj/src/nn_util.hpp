#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "softrecon/models.hpp"

namespace softrecon::model::detail {

inline Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return 1.0 / (1.0 + (-z.array()).exp());
}

/// Number of leading output columns that pass through tanh.
inline int head_tanh_cols(OutputHead head, int tanh_lead, int output_dim) {
  switch (head) {
    case OutputHead::Linear: return 0;
    case OutputHead::Tanh: return output_dim;
    case OutputHead::Mixed: return std::min(std::max(tanh_lead, 0), output_dim);
  }
  return 0;
}

inline void apply_head(Eigen::MatrixXd& y, int tanh_cols) {
  if (tanh_cols > 0) y.leftCols(tanh_cols) = y.leftCols(tanh_cols).array().tanh();
}

/// In place: dz = dy adjusted for the head, given post-activation outputs y.
inline void head_backward(Eigen::MatrixXd& dz, const Eigen::MatrixXd& y, int tanh_cols) {
  if (tanh_cols > 0)
    dz.leftCols(tanh_cols).array() *= 1.0 - y.leftCols(tanh_cols).array().square();
}

/// Glorot uniform over +-sqrt(6 / (fan_in + fan_out)), column-major fill so
/// the draw sequence is pinned for a given seed.
inline void glorot_fill(Eigen::MatrixXd& w, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
}

}  // namespace softrecon::model::detail
