#include "softrecon/lstm_net.hpp"

#include <random>
#include <vector>

#include "nn_util.hpp"

namespace softrecon::model {

using detail::glorot_fill;
using detail::sigmoid;

LstmNet LstmNet::init(int channels, int steps, int hidden, int output_dim, OutputHead head,
                      int tanh_lead, std::uint64_t seed) {
  LstmNet net;
  net.head = head;
  net.tanh_lead = tanh_lead;
  net.steps = steps;
  net.channels = channels;
  std::mt19937_64 rng(seed);
  net.p.wx.resize(4 * hidden, channels);
  net.p.wh.resize(4 * hidden, hidden);
  net.p.wy.resize(output_dim, hidden);
  glorot_fill(net.p.wx, channels, 4 * hidden, rng);
  glorot_fill(net.p.wh, hidden, 4 * hidden, rng);
  glorot_fill(net.p.wy, hidden, output_dim, rng);
  net.p.b = Eigen::VectorXd::Zero(4 * hidden);
  net.p.by = Eigen::VectorXd::Zero(output_dim);
  return net;
}

namespace {

/// Per-step activations kept for backpropagation.
struct StepCache {
  Eigen::MatrixXd i, f, g, o;  // gate outputs, n x h each
  Eigen::MatrixXd c;           // cell state after the step
  Eigen::MatrixXd h_prev, c_prev;
};

struct RunCache {
  std::vector<StepCache> steps;
  Eigen::MatrixXd h_last;
  Eigen::MatrixXd y;
};

RunCache run_forward(const LstmParams& p, int tanh_cols, int steps, int channels,
                     const Eigen::MatrixXd& x) {
  const int h = int(p.wh.cols());
  const Eigen::Index n = x.rows();
  RunCache cache;
  cache.steps.resize(std::size_t(steps));
  Eigen::MatrixXd hh = Eigen::MatrixXd::Zero(n, h);
  Eigen::MatrixXd cc = Eigen::MatrixXd::Zero(n, h);
  for (int t = 0; t < steps; ++t) {
    StepCache& s = cache.steps[std::size_t(t)];
    s.h_prev = hh;
    s.c_prev = cc;
    const auto xt = x.middleCols(Eigen::Index(t) * channels, channels);
    const Eigen::MatrixXd z =
        ((xt * p.wx.transpose() + hh * p.wh.transpose()).rowwise() + p.b.transpose());
    s.i = sigmoid(z.leftCols(h));
    s.f = sigmoid(z.middleCols(h, h));
    s.g = z.middleCols(2 * h, h).array().tanh();
    s.o = sigmoid(z.rightCols(h));
    cc = (s.f.array() * cc.array() + s.i.array() * s.g.array()).matrix();
    s.c = cc;
    hh = (s.o.array() * cc.array().tanh()).matrix();
  }
  cache.h_last = hh;
  cache.y = (hh * p.wy.transpose()).rowwise() + p.by.transpose();
  detail::apply_head(cache.y, tanh_cols);
  return cache;
}

}  // namespace

Eigen::MatrixXd LstmNet::forward(const Eigen::MatrixXd& x) const {
  const int tanh_cols = detail::head_tanh_cols(head, tanh_lead, int(p.wy.rows()));
  return run_forward(p, tanh_cols, steps, channels, x).y;
}

double LstmNet::loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets) const {
  const Eigen::MatrixXd y = forward(x);
  return (y - targets).squaredNorm() / double(y.size());
}

LstmParams LstmNet::gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets) const {
  const int h = int(p.wh.cols());
  const int tanh_cols = detail::head_tanh_cols(head, tanh_lead, int(p.wy.rows()));
  const RunCache cache = run_forward(p, tanh_cols, steps, channels, x);

  Eigen::MatrixXd dzy = 2.0 * (cache.y - targets) / double(cache.y.size());
  detail::head_backward(dzy, cache.y, tanh_cols);

  LstmParams g;
  g.wy = dzy.transpose() * cache.h_last;
  g.by = dzy.colwise().sum().transpose();
  g.wx = Eigen::MatrixXd::Zero(p.wx.rows(), p.wx.cols());
  g.wh = Eigen::MatrixXd::Zero(p.wh.rows(), p.wh.cols());
  g.b = Eigen::VectorXd::Zero(p.b.size());

  Eigen::MatrixXd dh = dzy * p.wy;
  Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(x.rows(), h);
  Eigen::MatrixXd dz(x.rows(), 4 * h);
  for (int t = steps - 1; t >= 0; --t) {
    const StepCache& s = cache.steps[std::size_t(t)];
    const Eigen::ArrayXXd tanh_c = s.c.array().tanh();
    const Eigen::ArrayXXd dout = dh.array() * tanh_c;
    dc.array() += dh.array() * s.o.array() * (1.0 - tanh_c.square());
    dz.leftCols(h) =
        (dc.array() * s.g.array() * s.i.array() * (1.0 - s.i.array())).matrix();
    dz.middleCols(h, h) =
        (dc.array() * s.c_prev.array() * s.f.array() * (1.0 - s.f.array())).matrix();
    dz.middleCols(2 * h, h) = (dc.array() * s.i.array() * (1.0 - s.g.array().square())).matrix();
    dz.rightCols(h) = (dout * s.o.array() * (1.0 - s.o.array())).matrix();

    const auto xt = x.middleCols(Eigen::Index(t) * channels, channels);
    g.wx += dz.transpose() * xt;
    g.wh += dz.transpose() * s.h_prev;
    g.b += dz.colwise().sum().transpose();

    dh = dz * p.wh;
    dc = (dc.array() * s.f.array()).matrix();
  }
  return g;
}

int LstmNet::param_count() const {
  return int(p.wx.size() + p.wh.size() + p.b.size() + p.wy.size() + p.by.size());
}

double LstmNet::param(int idx) const {
  double out = 0.0;
  int off = 0;
  auto probe = [&](const auto& m) {
    if (idx >= off && idx < off + int(m.size())) out = m.data()[idx - off];
    off += int(m.size());
  };
  probe(p.wx);
  probe(p.wh);
  probe(p.b);
  probe(p.wy);
  probe(p.by);
  return out;
}

void LstmNet::set_param(int idx, double value) {
  int off = 0;
  auto poke = [&](auto& m) {
    if (idx >= off && idx < off + int(m.size())) m.data()[idx - off] = value;
    off += int(m.size());
  };
  poke(p.wx);
  poke(p.wh);
  poke(p.b);
  poke(p.wy);
  poke(p.by);
}

double LstmNet::gradient_entry(const LstmParams& g, int idx) {
  int off = 0;
  double out = 0.0;
  auto probe = [&](const auto& m) {
    if (idx >= off && idx < off + int(m.size())) out = m.data()[idx - off];
    off += int(m.size());
  };
  probe(g.wx);
  probe(g.wh);
  probe(g.b);
  probe(g.wy);
  probe(g.by);
  return out;
}

}  // namespace softrecon::model
