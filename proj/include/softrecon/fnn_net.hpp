#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "softrecon/models.hpp"

namespace softrecon::model {

/// One hidden sigmoid layer, linear or tanh output. Rows of x are samples.
/// Loss is the mean squared error over samples and output dimensions.
struct FnnNet {
  FnnParams p;
  OutputHead head = OutputHead::Linear;
  int tanh_lead = 0;  // used when head == Mixed

  static FnnNet init(int input_dim, int hidden, int output_dim, OutputHead head,
                     int tanh_lead, std::uint64_t seed);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  double loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets) const;
  FnnParams gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets) const;

  // Flat views over [w1, b1, w2, b2] for finite-difference checks.
  int param_count() const;
  double param(int idx) const;
  void set_param(int idx, double value);
  static double gradient_entry(const FnnParams& g, int idx);
};

template <class F>
void visit_params(FnnParams& p, F&& f) {
  f(p.w1);
  f(p.b1);
  f(p.w2);
  f(p.b2);
}

template <class F>
void visit_params(FnnParams& a, FnnParams& b, F&& f) {
  f(a.w1, b.w1);
  f(a.b1, b.b1);
  f(a.w2, b.w2);
  f(a.b2, b.b2);
}

}  // namespace softrecon::model
