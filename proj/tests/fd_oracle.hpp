#pragma once

// Central finite differences for the network kernels. A perturbation is
// skipped when it flips any rectifier or any Jacobian sign, since the
// analytic (sub)gradient is only defined inside one linear piece.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ddl/nnet.hpp"
#include "ddl/trainer.hpp"

namespace fd {

using Eigen::MatrixXd;
using Pattern = std::vector<bool>;

inline constexpr double kStep = 1e-5;
inline constexpr double kRelTol = 1e-4;
inline constexpr double kAbsFloor = 1e-8;

struct Stats {
  double worst_rel{0.0};
  std::size_t compared{0};
  std::size_t skipped{0};

  void merge(const Stats& o) {
    worst_rel = std::max(worst_rel, o.worst_rel);
    compared += o.compared;
    skipped += o.skipped;
  }
  bool ok() const { return compared > 0 && worst_rel <= kRelTol; }
};

inline double rel_err(double numeric, double analytic) {
  const double scale = std::max({std::abs(numeric), std::abs(analytic), kAbsFloor});
  return std::abs(numeric - analytic) / scale;
}

inline void append_pattern(Pattern& out, const MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data()[i] > 0.0);
}

/// Rectifier states of every layer plus Jacobian signs at every input column.
inline Pattern net_pattern(const ddl::NetParams& net, const MatrixXd& inputs, bool with_jacobian) {
  Pattern p;
  const auto fw = ddl::forward_batch(net, inputs);
  for (std::size_t l = 0; l + 1 < fw.cache.preacts.size(); ++l) append_pattern(p, fw.cache.preacts[l]);
  if (with_jacobian) {
    for (Eigen::Index b = 0; b < inputs.cols(); ++b) append_pattern(p, ddl::jacobian(net, inputs.col(b)));
  }
  return p;
}

/// Perturbs every weight and bias of `net` and compares against `analytic`.
/// `value` and `pattern` are evaluated with `net` in its perturbed state.
inline Stats check_params(ddl::NetParams& net, const ddl::NetGrads& analytic, const std::function<double()>& value,
                          const std::function<Pattern()>& pattern) {
  Stats s;
  const Pattern base = pattern();
  auto probe = [&](double& slot, double grad) {
    const double orig = slot;
    slot = orig + kStep;
    const double up = value();
    const bool up_same = pattern() == base;
    slot = orig - kStep;
    const double down = value();
    const bool down_same = pattern() == base;
    slot = orig;
    if (!up_same || !down_same) {
      ++s.skipped;
      return;
    }
    ++s.compared;
    s.worst_rel = std::max(s.worst_rel, rel_err((up - down) / (2.0 * kStep), grad));
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& w = net.layers[l].weight;
    auto& b = net.layers[l].bias;
    for (Eigen::Index i = 0; i < w.size(); ++i) probe(w.data()[i], analytic.layers[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < b.size(); ++i) probe(b.data()[i], analytic.layers[l].bias.data()[i]);
  }
  return s;
}

/// d output / d input against the analytic Jacobian at one point.
inline Stats check_jacobian(const ddl::NetParams& net, const Eigen::VectorXd& x) {
  Stats s;
  const MatrixXd j = ddl::jacobian(net, x);
  const Pattern base = net_pattern(net, x, false);
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    Eigen::VectorXd up = x, down = x;
    up(c) += kStep;
    down(c) -= kStep;
    if (net_pattern(net, up, false) != base || net_pattern(net, down, false) != base) {
      ++s.skipped;
      continue;
    }
    const Eigen::VectorXd col = (ddl::forward(net, up).output - ddl::forward(net, down).output) / (2.0 * kStep);
    for (Eigen::Index r = 0; r < col.size(); ++r) {
      ++s.compared;
      s.worst_rel = std::max(s.worst_rel, rel_err(col(r), j(r, c)));
    }
  }
  return s;
}

/// Gradient of a weighted output sum through backward_batch.
inline Stats check_backward(ddl::NetParams& net, const MatrixXd& inputs, const MatrixXd& out_weights) {
  const auto fw = ddl::forward_batch(net, inputs);
  const auto bw = ddl::backward_batch(net, fw.cache, out_weights);
  auto value = [&] { return ddl::predict(net, inputs).cwiseProduct(out_weights).sum(); };
  auto pattern = [&] { return net_pattern(net, inputs, false); };
  Stats s = check_params(net, bw.grads, value, pattern);

  // Input gradient.
  const Pattern base = pattern();
  for (Eigen::Index b = 0; b < inputs.cols(); ++b) {
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
      MatrixXd up = inputs, down = inputs;
      up(r, b) += kStep;
      down(r, b) -= kStep;
      if (net_pattern(net, up, false) != base || net_pattern(net, down, false) != base) {
        ++s.skipped;
        continue;
      }
      const double numeric = (ddl::predict(net, up).cwiseProduct(out_weights).sum() -
                              ddl::predict(net, down).cwiseProduct(out_weights).sum()) /
                             (2.0 * kStep);
      ++s.compared;
      s.worst_rel = std::max(s.worst_rel, rel_err(numeric, bw.input_grad(r, b)));
    }
  }
  return s;
}

inline Stats check_penalty(ddl::NetParams& net, const MatrixXd& inputs, ddl::PenaltyKind kind) {
  const auto pr = ddl::jacobian_penalty(net, inputs, kind);
  return check_params(
      net, pr.grads, [&] { return ddl::jacobian_penalty(net, inputs, kind).value; },
      [&] { return net_pattern(net, inputs, true); });
}

/// Full objective gradients for encoder and decoder.
inline Stats check_loss(ddl::NetParams& enc, ddl::NetParams& dec, const MatrixXd& batch, const MatrixXd& noise,
                        const ddl::LossWeights& w, ddl::EstimatorMode mode) {
  const auto base = ddl::loss(batch, enc, dec, w, mode, noise);
  const std::size_t d_z = dec.in_dim();
  auto value = [&] { return ddl::loss(batch, enc, dec, w, mode, noise).parts.total; };
  auto pattern = [&] {
    const MatrixXd xt = batch.transpose();
    Pattern p = net_pattern(enc, xt, false);
    const MatrixXd out = ddl::predict(enc, xt);
    MatrixXd z = out.topRows(d_z);
    if (mode == ddl::EstimatorMode::VAE) {
      z += (0.5 * out.bottomRows(d_z).array()).exp().matrix().cwiseProduct(noise);
    }
    const Pattern pd = net_pattern(dec, z, w.alpha != 0.0);
    p.insert(p.end(), pd.begin(), pd.end());
    return p;
  };
  Stats s = check_params(enc, base.encoder_grads, value, pattern);
  s.merge(check_params(dec, base.decoder_grads, value, pattern));
  return s;
}

/// Runs every kernel check on `count` random networks.
struct SuiteResult {
  Stats jacobian, backward, penalty, loss;
};

inline SuiteResult run_suite(std::size_t count, std::uint64_t seed) {
  SuiteResult out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  auto randn = [&](Eigen::Index r, Eigen::Index c) { return MatrixXd(MatrixXd::NullaryExpr(r, c, [&] { return g(rng); })); };
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t d_in = 2 + t % 3;
    const std::size_t d_out = 2 + (t / 3) % 3;
    const std::size_t depth = 1 + t % 2;
    auto net = ddl::make_mlp(d_in, d_out, depth, 6, 0.2, rng);
    for (int k = 0; k < 3; ++k) out.jacobian.merge(check_jacobian(net, randn(d_in, 1).col(0)));
    out.backward.merge(check_backward(net, randn(d_in, 5), randn(d_out, 5)));
    out.penalty.merge(check_penalty(net, randn(d_in, 4), ddl::PenaltyKind::L1));
    out.penalty.merge(check_penalty(net, randn(d_in, 4), ddl::PenaltyKind::LogSum));

    const std::size_t d_z = d_in;
    auto enc = ddl::make_mlp(d_out, 2 * d_z, 2, 6, 0.2, rng);
    auto dec = ddl::make_mlp(d_z, d_out, depth, 6, 0.2, rng);
    ddl::LossWeights w;
    w.recon = t % 2 == 0 ? ddl::ReconReduction::Sum : ddl::ReconReduction::Mean;
    const MatrixXd batch = randn(5, d_out);
    out.loss.merge(check_loss(enc, dec, batch, randn(d_z, 5), w, ddl::EstimatorMode::VAE));
    auto ae_enc = ddl::make_mlp(d_out, d_z, 2, 6, 0.2, rng);
    out.loss.merge(check_loss(ae_enc, dec, batch, MatrixXd(), w, ddl::EstimatorMode::AE));
  }
  return out;
}

}  // namespace fd
