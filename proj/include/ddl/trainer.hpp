#pragma once

// Autoencoder / VAE estimation with a penalty on the decoder Jacobian.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddl/errors.hpp"
#include "ddl/nnet.hpp"
#include "ddl/setalg.hpp"
#include "ddl/synth.hpp"

namespace ddl {

enum class EstimatorMode { AE, VAE };

std::string mode_name(EstimatorMode m);
EstimatorMode mode_from_name(const std::string& name);
std::string penalty_name(PenaltyKind k);
PenaltyKind penalty_from_name(const std::string& name);

/// Per-sample squared error summed over coordinates (Sum) or averaged
/// over coordinates (Mean); both are averaged over the batch.
enum class ReconReduction { Sum, Mean };

std::string recon_name(ReconReduction r);
ReconReduction recon_from_name(const std::string& name);

struct ArchSpec {
  std::size_t depth{2};
  std::size_t width{32};
  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

/// Shared: one MLP maps all latents to all outputs. PerOutput: d_x
/// independent MLPs of the configured width, each reading every latent,
/// stored as one network with block-masked hidden and output weights.
enum class DecoderLayout { Shared, PerOutput };

std::string layout_name(DecoderLayout l);
DecoderLayout layout_from_name(const std::string& name);

/// Fixed 0/1 weight masks of the decoder for `layout` (all ones for Shared).
std::vector<Eigen::MatrixXd> decoder_masks(DecoderLayout layout, std::size_t d_z, std::size_t d_x, const ArchSpec& arch);

struct EstimatorConfig {
  EstimatorMode mode{EstimatorMode::VAE};
  std::size_t d_z{3};
  ArchSpec encoder;
  ArchSpec decoder{2, 16};  // per output block
  double alpha{0.05};
  double beta{0.05};
  std::size_t epochs{200};
  std::size_t batch_size{256};
  double learning_rate{1e-3};
  std::uint64_t seed{1};
  double tau{0.05};
  PenaltyKind penalty{PenaltyKind::L1};
  double penalty_eps{1e-2};
  std::size_t support_slice{1000};  // trailing rows used to read off the decoder support
  double slope{0.2};
  ReconReduction recon{ReconReduction::Sum};
  DecoderLayout decoder_layout{DecoderLayout::PerOutput};

  /// Throws std::invalid_argument.
  void validate() const;
  friend bool operator==(const EstimatorConfig&, const EstimatorConfig&) = default;
};

struct LossComponents {
  double total{0.0};
  double recon{0.0};
  double kl{0.0};
  double penalty{0.0};
};

struct LossResult {
  LossComponents parts;
  NetGrads encoder_grads;
  NetGrads decoder_grads;
};

struct LossWeights {
  double alpha{0.05};
  double beta{0.05};
  PenaltyKind penalty{PenaltyKind::L1};
  double penalty_eps{1e-2};
  ReconReduction recon{ReconReduction::Sum};
};

/// Objective on one batch (rows are samples):
///   mean squared reconstruction error
///   + beta * mean KL(q(z|x) || N(0, I))             (VAE only)
///   + alpha * mean over batch of mean |J_dec(z)|
/// `noise` (d_z x B) holds the standard-normal reparameterization draws; it
/// is ignored in AE mode. Gradients are exact for the returned total.
LossResult loss(const Eigen::MatrixXd& batch, const NetParams& encoder, const NetParams& decoder,
                const LossWeights& weights, EstimatorMode mode, const Eigen::MatrixXd& noise);

struct TrainedEstimator {
  NetParams encoder;
  NetParams decoder;
  EstimatorConfig config;
  std::vector<LossComponents> history;  // one per epoch
  SupportMatrix empirical_support = SupportMatrix::identity(1);
  std::size_t d_x() const { return decoder.out_dim(); }
};

class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, std::vector<LossComponents> history)
      : NumericError(what), history_(std::move(history)) {}
  const std::vector<LossComponents>& history() const { return history_; }

 private:
  std::vector<LossComponents> history_;
};

/// Shuffled minibatch Adam; deterministic given config.seed.
TrainedEstimator train(const Dataset& dataset, const EstimatorConfig& config);

/// Posterior means (VAE) or encoder outputs (AE); rows are samples.
Eigen::MatrixXd encode(const TrainedEstimator& est, const Eigen::MatrixXd& x);

/// Decoder support read off at the encodings of `x`.
SupportMatrix decoder_support(const TrainedEstimator& est, const Eigen::MatrixXd& x, double tau);

/// Mean |J_dec| over the encodings of `x`.
double mean_abs_decoder_jacobian(const TrainedEstimator& est, const Eigen::MatrixXd& x);

}  // namespace ddl
