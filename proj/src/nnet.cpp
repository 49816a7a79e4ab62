#include "ddl/nnet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ddl/errors.hpp"

namespace ddl {

namespace {

void check_input(const NetParams& p, Eigen::Index rows) {
  if (p.layers.empty()) throw std::invalid_argument("network has no layers");
  if (rows != p.layers.front().weight.cols()) {
    throw std::invalid_argument("input dimension " + std::to_string(rows) + " does not match network input " +
                                std::to_string(p.layers.front().weight.cols()));
  }
}

// Derivative of the leaky rectifier at each preactivation.
Eigen::MatrixXd slope_mask(const Eigen::MatrixXd& pre, double slope) {
  return pre.unaryExpr([slope](double a) { return a > 0.0 ? 1.0 : slope; });
}

}  // namespace

std::size_t NetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void NetParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("NetParams: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (L.bias.size() != L.weight.rows()) {
      throw std::invalid_argument("NetParams: bias size mismatch in layer " + std::to_string(l));
    }
    if (l > 0 && L.weight.cols() != layers[l - 1].weight.rows()) {
      throw std::invalid_argument("NetParams: layer " + std::to_string(l) + " input does not match previous output");
    }
    if (!L.weight.allFinite() || !L.bias.allFinite()) {
      throw std::invalid_argument("NetParams: non-finite entry in layer " + std::to_string(l));
    }
  }
}

bool operator==(const NetParams& a, const NetParams& b) {
  if (a.slope != b.slope || a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& x = a.layers[l];
    const auto& y = b.layers[l];
    if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols() || x.bias.size() != y.bias.size())
      return false;
    if (x.weight != y.weight || x.bias != y.bias) return false;
  }
  return true;
}

NetGrads NetGrads::zeros_like(const NetParams& p) {
  NetGrads g;
  g.layers.reserve(p.layers.size());
  for (const auto& l : p.layers) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  return g;
}

NetGrads& NetGrads::operator+=(const NetGrads& o) {
  if (o.layers.size() != layers.size()) throw std::invalid_argument("NetGrads: shape mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight += o.layers[l].weight;
    layers[l].bias += o.layers[l].bias;
  }
  return *this;
}

NetGrads& NetGrads::operator*=(double c) {
  for (auto& l : layers) {
    l.weight *= c;
    l.bias *= c;
  }
  return *this;
}

double NetGrads::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

NetParams make_mlp(std::size_t in_dim, std::size_t out_dim, std::size_t depth, std::size_t width, double slope,
                   std::mt19937_64& rng) {
  if (in_dim == 0 || out_dim == 0) throw std::invalid_argument("make_mlp: zero dimension");
  if (depth > 0 && width == 0) throw std::invalid_argument("make_mlp: zero width");
  NetParams p;
  p.slope = slope;
  std::size_t fan_in = in_dim;
  for (std::size_t l = 0; l <= depth; ++l) {
    const std::size_t fan_out = (l == depth) ? out_dim : width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd(fan_out)};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = u(rng);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = u(rng);
    p.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return p;
}

BatchForward forward_batch(const NetParams& params, const Eigen::MatrixXd& inputs) {
  check_input(params, inputs.rows());
  BatchForward out;
  const std::size_t n = params.layers.size();
  out.cache.inputs.reserve(n);
  out.cache.preacts.reserve(n);
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l < n; ++l) {
    const auto& L = params.layers[l];
    Eigen::MatrixXd a = L.weight * h;
    a.colwise() += L.bias;
    out.cache.inputs.push_back(std::move(h));
    if (l + 1 < n) {
      const double s = params.slope;
      h = a.unaryExpr([s](double v) { return v > 0.0 ? v : s * v; });
    } else {
      h = a;
    }
    out.cache.preacts.push_back(std::move(a));
  }
  out.output = std::move(h);
  return out;
}

Eigen::MatrixXd predict(const NetParams& params, const Eigen::MatrixXd& inputs) {
  check_input(params, inputs.rows());
  Eigen::MatrixXd h = inputs;
  const double s = params.slope;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& L = params.layers[l];
    Eigen::MatrixXd a = L.weight * h;
    a.colwise() += L.bias;
    if (l + 1 < params.layers.size()) {
      h = a.unaryExpr([s](double v) { return v > 0.0 ? v : s * v; });
    } else {
      h = std::move(a);
    }
  }
  return h;
}

ForwardResult forward(const NetParams& params, const Eigen::VectorXd& input) {
  auto b = forward_batch(params, input);
  return {b.output.col(0), std::move(b.cache)};
}

Eigen::MatrixXd jacobian(const NetParams& params, const Eigen::VectorXd& input) {
  const auto fwd = forward_batch(params, input);
  const std::size_t n = params.layers.size();
  Eigen::MatrixXd prod = params.layers[0].weight;
  for (std::size_t l = 1; l < n; ++l) {
    const Eigen::VectorXd d = slope_mask(fwd.cache.preacts[l - 1], params.slope).col(0);
    prod = params.layers[l].weight * (d.asDiagonal() * prod);
  }
  return prod;
}

BackwardResult backward_batch(const NetParams& params, const ForwardCache& cache, const Eigen::MatrixXd& output_grad) {
  const std::size_t n = params.layers.size();
  if (cache.inputs.size() != n || cache.preacts.size() != n) {
    throw std::invalid_argument("backward: cache does not match network depth");
  }
  if (output_grad.rows() != static_cast<Eigen::Index>(params.out_dim()) ||
      output_grad.cols() != cache.preacts.back().cols()) {
    throw std::invalid_argument("backward: output gradient shape mismatch");
  }
  BackwardResult out;
  out.grads = NetGrads::zeros_like(params);
  Eigen::MatrixXd delta = output_grad;  // d loss / d preact of current layer
  for (std::size_t l = n; l-- > 0;) {
    out.grads.layers[l].weight.noalias() = delta * cache.inputs[l].transpose();
    out.grads.layers[l].bias = delta.rowwise().sum();
    Eigen::MatrixXd up = params.layers[l].weight.transpose() * delta;
    if (l > 0) {
      delta = up.cwiseProduct(slope_mask(cache.preacts[l - 1], params.slope));
    } else {
      out.input_grad = std::move(up);
    }
  }
  return out;
}

NetGrads backward(const NetParams& params, const ForwardCache& cache, const Eigen::VectorXd& output_grad) {
  return backward_batch(params, cache, output_grad).grads;
}

PenaltyResult jacobian_penalty(const NetParams& params, const Eigen::MatrixXd& inputs, PenaltyKind kind, double eps) {
  check_input(params, inputs.rows());
  const Eigen::Index B = inputs.cols();
  const Eigen::Index d_in = inputs.rows();
  const std::size_t n = params.layers.size();
  PenaltyResult out;
  out.grads = NetGrads::zeros_like(params);
  if (B == 0) return out;

  const auto fwd = forward_batch(params, inputs);

  // Per-sample Jacobian prefixes stacked side by side: block s of q[l] is
  // D_l W_l ... D_1 W_1 evaluated at sample s (width d_in each).
  std::vector<Eigen::MatrixXd> q(n);
  std::vector<Eigen::MatrixXd> mask(n);
  q[0].resize(d_in, d_in * B);
  for (Eigen::Index s = 0; s < B; ++s) q[0].middleCols(s * d_in, d_in).setIdentity();
  for (std::size_t l = 1; l < n; ++l) {
    const Eigen::MatrixXd m = slope_mask(fwd.cache.preacts[l - 1], params.slope);
    mask[l].resize(m.rows(), d_in * B);
    for (Eigen::Index s = 0; s < B; ++s) mask[l].middleCols(s * d_in, d_in) = m.col(s).replicate(1, d_in);
    q[l] = (params.layers[l - 1].weight * q[l - 1]).cwiseProduct(mask[l]);
  }
  const Eigen::MatrixXd jac = params.layers[n - 1].weight * q[n - 1];  // d_out x (d_in * B)

  const double scale = 1.0 / static_cast<double>(jac.size());
  Eigen::MatrixXd g(jac.rows(), jac.cols());
  double total = 0.0;
  for (Eigen::Index c = 0; c < jac.cols(); ++c) {
    for (Eigen::Index r = 0; r < jac.rows(); ++r) {
      const double v = jac(r, c);
      const double a = std::abs(v);
      const double sgn = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      if (kind == PenaltyKind::L1) {
        total += a;
        g(r, c) = sgn * scale;
      } else {
        total += a / (a + eps);
        g(r, c) = sgn * eps / ((a + eps) * (a + eps)) * scale;
      }
    }
  }
  out.value = total * scale;

  out.grads.layers[n - 1].weight.noalias() = g * q[n - 1].transpose();
  Eigen::MatrixXd dq = params.layers[n - 1].weight.transpose() * g;
  for (std::size_t l = n - 1; l >= 1; --l) {
    const Eigen::MatrixXd dt = dq.cwiseProduct(mask[l]);
    out.grads.layers[l - 1].weight.noalias() = dt * q[l - 1].transpose();
    if (l > 1) dq = params.layers[l - 1].weight.transpose() * dt;
  }
  return out;
}

NetGrads jacobian_penalty_grad(const NetParams& params, const Eigen::VectorXd& input) {
  return jacobian_penalty(params, input, PenaltyKind::L1).grads;
}

OptState OptState::init(const NetParams& p, AdamHyper hyper) {
  return {NetGrads::zeros_like(p), NetGrads::zeros_like(p), 0, hyper};
}

void adam_update(NetParams& params, const NetGrads& grads, OptState& state) {
  if (grads.layers.size() != params.layers.size() || state.m.layers.size() != params.layers.size()) {
    throw std::invalid_argument("adam: shape mismatch");
  }
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    const auto& g = grads.layers[l];
    if (g.weight.rows() != params.layers[l].weight.rows() || g.weight.cols() != params.layers[l].weight.cols() ||
        g.bias.size() != params.layers[l].bias.size()) {
      throw std::invalid_argument("adam: gradient shape mismatch in layer " + std::to_string(l));
    }
    if (!g.weight.allFinite() || !g.bias.allFinite()) {
      throw NumericError("adam: non-finite gradient in layer " + std::to_string(l));
    }
  }
  const auto& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  auto apply = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v = h.beta2 * v + (1.0 - h.beta2) * g.cwiseAbs2();
    param.array() -= h.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + h.epsilon);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    apply(params.layers[l].weight, state.m.layers[l].weight, state.v.layers[l].weight, grads.layers[l].weight);
    apply(params.layers[l].bias, state.m.layers[l].bias, state.v.layers[l].bias, grads.layers[l].bias);
  }
}

AdamResult adam_step(const NetParams& params, const NetGrads& grads, const OptState& state) {
  AdamResult r{params, state};
  adam_update(r.params, grads, r.state);
  return r;
}

}  // namespace ddl
