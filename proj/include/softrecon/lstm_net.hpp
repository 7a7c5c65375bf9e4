#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "softrecon/models.hpp"

namespace softrecon::model {

/// Single-layer LSTM unrolled over fixed-length windows; prediction from the
/// last hidden state. State starts at zero for every window. Rows of x are
/// flattened (step, channel) windows.
struct LstmNet {
  LstmParams p;
  OutputHead head = OutputHead::Linear;
  int tanh_lead = 0;  // used when head == Mixed
  int steps = 10;
  int channels = 12;

  static LstmNet init(int channels, int steps, int hidden, int output_dim, OutputHead head,
                      int tanh_lead, std::uint64_t seed);

  int hidden() const { return int(p.wh.cols()); }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  double loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets) const;
  /// Backpropagation through time over all steps.
  LstmParams gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets) const;

  // Flat views over [wx, wh, b, wy, by] for finite-difference checks.
  int param_count() const;
  double param(int idx) const;
  void set_param(int idx, double value);
  static double gradient_entry(const LstmParams& g, int idx);
};

template <class F>
void visit_params(LstmParams& p, F&& f) {
  f(p.wx);
  f(p.wh);
  f(p.b);
  f(p.wy);
  f(p.by);
}

template <class F>
void visit_params(LstmParams& a, LstmParams& b, F&& f) {
  f(a.wx, b.wx);
  f(a.wh, b.wh);
  f(a.b, b.b);
  f(a.wy, b.wy);
  f(a.by, b.by);
}

}  // namespace softrecon::model
