#include "softrecon/fnn_net.hpp"

#include <random>

#include "nn_util.hpp"

namespace softrecon::model {

using detail::glorot_fill;
using detail::sigmoid;

FnnNet FnnNet::init(int input_dim, int hidden, int output_dim, OutputHead head,
                    int tanh_lead, std::uint64_t seed) {
  FnnNet net;
  net.head = head;
  net.tanh_lead = tanh_lead;
  std::mt19937_64 rng(seed);
  net.p.w1.resize(hidden, input_dim);
  net.p.w2.resize(output_dim, hidden);
  glorot_fill(net.p.w1, input_dim, hidden, rng);
  glorot_fill(net.p.w2, hidden, output_dim, rng);
  net.p.b1 = Eigen::VectorXd::Zero(hidden);
  net.p.b2 = Eigen::VectorXd::Zero(output_dim);
  return net;
}

Eigen::MatrixXd FnnNet::forward(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd a1 = sigmoid((x * p.w1.transpose()).rowwise() + p.b1.transpose());
  Eigen::MatrixXd out = (a1 * p.w2.transpose()).rowwise() + p.b2.transpose();
  detail::apply_head(out, detail::head_tanh_cols(head, tanh_lead, int(out.cols())));
  return out;
}

double FnnNet::loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets) const {
  const Eigen::MatrixXd y = forward(x);
  return (y - targets).squaredNorm() / double(y.size());
}

FnnParams FnnNet::gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets) const {
  const int tanh_cols = detail::head_tanh_cols(head, tanh_lead, int(targets.cols()));
  const Eigen::MatrixXd a1 = sigmoid((x * p.w1.transpose()).rowwise() + p.b1.transpose());
  Eigen::MatrixXd y = (a1 * p.w2.transpose()).rowwise() + p.b2.transpose();
  detail::apply_head(y, tanh_cols);

  Eigen::MatrixXd dz2 = 2.0 * (y - targets) / double(y.size());
  detail::head_backward(dz2, y, tanh_cols);

  FnnParams g;
  g.w2 = dz2.transpose() * a1;
  g.b2 = dz2.colwise().sum().transpose();
  const Eigen::MatrixXd dz1 =
      ((dz2 * p.w2).array() * (a1.array() * (1.0 - a1.array()))).matrix();
  g.w1 = dz1.transpose() * x;
  g.b1 = dz1.colwise().sum().transpose();
  return g;
}

int FnnNet::param_count() const {
  return int(p.w1.size() + p.b1.size() + p.w2.size() + p.b2.size());
}

double FnnNet::param(int idx) const {
  double out = 0.0;
  int off = 0;
  auto probe = [&](const auto& m) {
    if (idx >= off && idx < off + int(m.size())) out = m.data()[idx - off];
    off += int(m.size());
  };
  probe(p.w1);
  probe(p.b1);
  probe(p.w2);
  probe(p.b2);
  return out;
}

void FnnNet::set_param(int idx, double value) {
  int off = 0;
  auto poke = [&](auto& m) {
    if (idx >= off && idx < off + int(m.size())) m.data()[idx - off] = value;
    off += int(m.size());
  };
  poke(p.w1);
  poke(p.b1);
  poke(p.w2);
  poke(p.b2);
}

double FnnNet::gradient_entry(const FnnParams& g, int idx) {
  int off = 0;
  double out = 0.0;
  auto probe = [&](const auto& m) {
    if (idx >= off && idx < off + int(m.size())) out = m.data()[idx - off];
    off += int(m.size());
  };
  probe(g.w1);
  probe(g.b1);
  probe(g.w2);
  probe(g.b2);
  return out;
}

}  // namespace softrecon::model
