#pragma once

// Small fully connected networks with exact Jacobians. Hidden layers use a
// leaky rectifier, the last layer is affine. Batched entry points take one
// sample per column.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace ddl {

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct NetParams {
  std::vector<Layer> layers;
  double slope{0.2};  // leaky-rectifier negative slope for every hidden layer

  std::size_t in_dim() const { return layers.front().weight.cols(); }
  std::size_t out_dim() const { return layers.back().weight.rows(); }
  std::size_t hidden_layers() const { return layers.size() - 1; }
  std::size_t parameter_count() const;

  /// Throws std::invalid_argument on incompatible shapes or non-finite entries.
  void validate() const;

  friend bool operator==(const NetParams& a, const NetParams& b);
};

/// Same shape as NetParams; used for gradients and optimizer moments.
struct NetGrads {
  std::vector<Layer> layers;

  static NetGrads zeros_like(const NetParams& p);
  NetGrads& operator+=(const NetGrads& o);
  NetGrads& operator*=(double c);
  double squared_norm() const;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
NetParams make_mlp(std::size_t in_dim, std::size_t out_dim, std::size_t depth, std::size_t width,
                   double slope, std::mt19937_64& rng);

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;   // input to each layer (in x B)
  std::vector<Eigen::MatrixXd> preacts;  // preactivation of each layer (out x B)
};

struct ForwardResult {
  Eigen::VectorXd output;
  ForwardCache cache;
};

struct BatchForward {
  Eigen::MatrixXd output;  // out x B
  ForwardCache cache;
};

ForwardResult forward(const NetParams& params, const Eigen::VectorXd& input);
BatchForward forward_batch(const NetParams& params, const Eigen::MatrixXd& inputs);

/// Output-only batched evaluation (no cache).
Eigen::MatrixXd predict(const NetParams& params, const Eigen::MatrixXd& inputs);

/// d output / d input, out x in.
Eigen::MatrixXd jacobian(const NetParams& params, const Eigen::VectorXd& input);

struct BackwardResult {
  NetGrads grads;              // summed over the batch
  Eigen::MatrixXd input_grad;  // in x B
};

/// Reverse-mode gradients given d loss / d output for each cached sample.
BackwardResult backward_batch(const NetParams& params, const ForwardCache& cache,
                              const Eigen::MatrixXd& output_grad);
NetGrads backward(const NetParams& params, const ForwardCache& cache, const Eigen::VectorXd& output_grad);

enum class PenaltyKind {
  L1,      // |J_ij|
  LogSum,  // |J_ij| / (|J_ij| + eps)
};

struct PenaltyResult {
  double value{0.0};  // mean over samples of mean over entries
  NetGrads grads;     // gradient of value
};

/// Mean entrywise penalty of the Jacobian over a batch of inputs. The
/// Jacobian is piecewise constant in the input, so only weights receive
/// gradient; the subgradient at a zero entry is 0.
PenaltyResult jacobian_penalty(const NetParams& params, const Eigen::MatrixXd& inputs,
                               PenaltyKind kind = PenaltyKind::L1, double eps = 1e-2);

/// Gradient of (1 / (d_out * d_in)) * sum |J_ij| at a single input.
NetGrads jacobian_penalty_grad(const NetParams& params, const Eigen::VectorXd& input);

struct AdamHyper {
  double learning_rate{1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double epsilon{1e-8};
};

struct OptState {
  NetGrads m;
  NetGrads v;
  std::int64_t step{0};
  AdamHyper hyper;

  static OptState init(const NetParams& p, AdamHyper hyper = {});
};

/// In place. Throws NumericError naming the first layer with a non-finite gradient.
void adam_update(NetParams& params, const NetGrads& grads, OptState& state);

struct AdamResult {
  NetParams params;
  OptState state;
};
AdamResult adam_step(const NetParams& params, const NetGrads& grads, const OptState& state);

}  // namespace ddl
