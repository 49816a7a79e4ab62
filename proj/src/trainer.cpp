#include "ddl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ddl/rng.hpp"

namespace ddl {

std::string mode_name(EstimatorMode m) { return m == EstimatorMode::AE ? "ae" : "vae"; }

EstimatorMode mode_from_name(const std::string& name) {
  if (name == "ae") return EstimatorMode::AE;
  if (name == "vae") return EstimatorMode::VAE;
  throw std::invalid_argument("unknown estimator mode \"" + name + "\"");
}

std::string penalty_name(PenaltyKind k) { return k == PenaltyKind::L1 ? "l1" : "logsum"; }

std::string recon_name(ReconReduction r) { return r == ReconReduction::Sum ? "sum" : "mean"; }

ReconReduction recon_from_name(const std::string& name) {
  if (name == "sum") return ReconReduction::Sum;
  if (name == "mean") return ReconReduction::Mean;
  throw std::invalid_argument("unknown reconstruction reduction \"" + name + "\" (expected sum or mean)");
}

std::string layout_name(DecoderLayout l) { return l == DecoderLayout::Shared ? "shared" : "per_output"; }

DecoderLayout layout_from_name(const std::string& name) {
  if (name == "shared") return DecoderLayout::Shared;
  if (name == "per_output") return DecoderLayout::PerOutput;
  throw std::invalid_argument("unknown decoder layout \"" + name + "\" (expected shared or per_output)");
}

std::vector<Eigen::MatrixXd> decoder_masks(DecoderLayout layout, std::size_t d_z, std::size_t d_x, const ArchSpec& arch) {
  const auto dz = static_cast<Eigen::Index>(d_z);
  const auto dx = static_cast<Eigen::Index>(d_x);
  const auto w = static_cast<Eigen::Index>(arch.width);
  std::vector<Eigen::MatrixXd> masks;
  if (layout == DecoderLayout::Shared || arch.depth == 0) {
    Eigen::Index fan_in = dz;
    for (std::size_t l = 0; l <= arch.depth; ++l) {
      const Eigen::Index fan_out = l == arch.depth ? dx : w;
      masks.push_back(Eigen::MatrixXd::Ones(fan_out, fan_in));
      fan_in = fan_out;
    }
    return masks;
  }
  masks.push_back(Eigen::MatrixXd::Ones(dx * w, dz));
  for (std::size_t l = 1; l < arch.depth; ++l) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dx * w, dx * w);
    for (Eigen::Index b = 0; b < dx; ++b) m.block(b * w, b * w, w, w).setOnes();
    masks.push_back(std::move(m));
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dx, dx * w);
  for (Eigen::Index b = 0; b < dx; ++b) out.block(b, b * w, 1, w).setOnes();
  masks.push_back(std::move(out));
  return masks;
}

PenaltyKind penalty_from_name(const std::string& name) {
  if (name == "l1") return PenaltyKind::L1;
  if (name == "logsum") return PenaltyKind::LogSum;
  throw std::invalid_argument("unknown penalty \"" + name + "\"");
}

void EstimatorConfig::validate() const {
  if (d_z < 1 || d_z > kMaxDim) throw std::invalid_argument("estimator: d_z must be in [1, 64]");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("estimator: alpha and beta must be >= 0");
  if (epochs < 1) throw std::invalid_argument("estimator: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("estimator: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("estimator: learning_rate must be > 0");
  if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("estimator: tau must be in [0, 1)");
  if (!(penalty_eps > 0.0)) throw std::invalid_argument("estimator: penalty_eps must be > 0");
  if (support_slice < 1) throw std::invalid_argument("estimator: support_slice must be >= 1");
  if ((encoder.depth > 0 && encoder.width == 0) || (decoder.depth > 0 && decoder.width == 0)) {
    throw std::invalid_argument("estimator: hidden width must be >= 1");
  }
}

LossResult loss(const Eigen::MatrixXd& batch, const NetParams& encoder, const NetParams& decoder,
                const LossWeights& w, EstimatorMode mode, const Eigen::MatrixXd& noise) {
  const Eigen::Index B = batch.rows();
  if (B == 0) throw std::invalid_argument("loss: empty batch");
  const Eigen::Index d_x = batch.cols();
  const Eigen::Index d_z = static_cast<Eigen::Index>(decoder.in_dim());
  const Eigen::Index enc_out = mode == EstimatorMode::VAE ? 2 * d_z : d_z;
  if (static_cast<Eigen::Index>(encoder.out_dim()) != enc_out || static_cast<Eigen::Index>(decoder.out_dim()) != d_x) {
    throw std::invalid_argument("loss: encoder/decoder shapes do not match the batch");
  }
  if (mode == EstimatorMode::VAE && (noise.rows() != d_z || noise.cols() != B)) {
    throw std::invalid_argument("loss: noise must be d_z x batch");
  }

  const Eigen::MatrixXd xt = batch.transpose();  // d_x x B
  const auto enc = forward_batch(encoder, xt);
  Eigen::MatrixXd z;
  Eigen::MatrixXd mu;
  Eigen::MatrixXd sd;
  if (mode == EstimatorMode::VAE) {
    mu = enc.output.topRows(d_z);
    sd = (0.5 * enc.output.bottomRows(d_z).array()).exp().matrix();
    z = mu + sd.cwiseProduct(noise);
  } else {
    z = enc.output;
  }

  const auto dec = forward_batch(decoder, z);
  const Eigen::MatrixXd resid = dec.output - xt;
  const double inv_n = 1.0 / static_cast<double>(w.recon == ReconReduction::Sum ? B : B * d_x);
  const double inv_b = 1.0 / static_cast<double>(B);

  LossResult out;
  out.parts.recon = resid.squaredNorm() * inv_n;
  auto dec_back = backward_batch(decoder, dec.cache, 2.0 * inv_n * resid);
  out.decoder_grads = std::move(dec_back.grads);

  Eigen::MatrixXd enc_grad;
  if (mode == EstimatorMode::VAE) {
    const Eigen::MatrixXd logvar = enc.output.bottomRows(d_z);
    const Eigen::ArrayXXd var = sd.array().square();
    out.parts.kl = 0.5 * (mu.array().square() + var - logvar.array() - 1.0).sum() * inv_b;
    enc_grad.resize(enc_out, B);
    enc_grad.topRows(d_z) = dec_back.input_grad + (w.beta * inv_b) * mu;
    enc_grad.bottomRows(d_z) = (dec_back.input_grad.array() * noise.array() * sd.array() * 0.5 +
                                (w.beta * inv_b * 0.5) * (var - 1.0))
                                   .matrix();
  } else {
    enc_grad = dec_back.input_grad;
  }
  out.encoder_grads = backward_batch(encoder, enc.cache, enc_grad).grads;

  if (w.alpha > 0.0) {
    auto pen = jacobian_penalty(decoder, z, w.penalty, w.penalty_eps);
    out.parts.penalty = pen.value;
    pen.grads *= w.alpha;
    out.decoder_grads += pen.grads;
  } else {
    out.parts.penalty = jacobian_penalty(decoder, z, w.penalty, w.penalty_eps).value;
  }
  out.parts.total = out.parts.recon + (mode == EstimatorMode::VAE ? w.beta * out.parts.kl : 0.0) + w.alpha * out.parts.penalty;
  return out;
}

TrainedEstimator train(const Dataset& dataset, const EstimatorConfig& config) {
  config.validate();
  const std::size_t n = dataset.size();
  if (n == 0) throw std::invalid_argument("train: empty dataset");
  const std::size_t d_x = static_cast<std::size_t>(dataset.x.cols());
  const std::size_t d_z = config.d_z;
  const Eigen::Index dz = static_cast<Eigen::Index>(d_z);

  std::mt19937_64 init_rng(derive_seed(config.seed, "init"));
  TrainedEstimator est;
  est.config = config;
  const std::size_t enc_out = config.mode == EstimatorMode::VAE ? 2 * d_z : d_z;
  est.encoder = make_mlp(d_x, enc_out, config.encoder.depth, config.encoder.width, config.slope, init_rng);
  const auto masks = decoder_masks(config.decoder_layout, d_z, d_x, config.decoder);
  const std::size_t dec_width = masks.size() > 1 ? static_cast<std::size_t>(masks.front().rows()) : config.decoder.width;
  est.decoder = make_mlp(d_z, d_x, config.decoder.depth, dec_width, config.slope, init_rng);
  if (config.decoder_layout == DecoderLayout::PerOutput) {
    // Per-output blocks keep the fan-in scaling of a width-`width` network.
    for (std::size_t l = 0; l < masks.size(); ++l) {
      auto& layer = est.decoder.layers[l];
      layer.weight = layer.weight.cwiseProduct(masks[l]);
      if (l > 0) layer.weight *= std::sqrt(static_cast<double>(masks[l].cols()) / static_cast<double>(config.decoder.width));
    }
  }

  AdamHyper hyper;
  hyper.learning_rate = config.learning_rate;
  auto enc_state = OptState::init(est.encoder, hyper);
  auto dec_state = OptState::init(est.decoder, hyper);

  std::mt19937_64 shuffle_rng(derive_seed(config.seed, "shuffle"));
  std::mt19937_64 noise_rng(derive_seed(config.seed, "reparam"));
  std::normal_distribution<double> normal(0.0, 1.0);
  const LossWeights weights{config.alpha, config.beta, config.penalty, config.penalty_eps, config.recon};

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Eigen::MatrixXd batch;
  Eigen::MatrixXd noise;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossComponents acc;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t size = std::min(config.batch_size, n - start);
      batch.resize(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(d_x));
      for (std::size_t r = 0; r < size; ++r) batch.row(static_cast<Eigen::Index>(r)) = dataset.x.row(static_cast<Eigen::Index>(order[start + r]));
      noise.resize(dz, static_cast<Eigen::Index>(size));
      if (config.mode == EstimatorMode::VAE) {
        for (Eigen::Index c = 0; c < noise.cols(); ++c)
          for (Eigen::Index r = 0; r < dz; ++r) noise(r, c) = normal(noise_rng);
      }
      auto where = [&] {
        std::ostringstream os;
        os << " at epoch " << epoch + 1 << ", batch " << batch_index + 1;
        return os.str();
      };
      auto res = loss(batch, est.encoder, est.decoder, weights, config.mode, noise);
      if (config.decoder_layout == DecoderLayout::PerOutput) {
        for (std::size_t l = 0; l < masks.size(); ++l) {
          auto& g = res.decoder_grads.layers[l].weight;
          g = g.cwiseProduct(masks[l]);
        }
      }
      if (!std::isfinite(res.parts.total)) throw TrainingError("train: non-finite loss" + where(), est.history);
      try {
        adam_update(est.encoder, res.encoder_grads, enc_state);
        adam_update(est.decoder, res.decoder_grads, dec_state);
      } catch (const NumericError& e) {
        throw TrainingError(std::string(e.what()) + where(), est.history);
      }
      const double wgt = static_cast<double>(size);
      acc.total += wgt * res.parts.total;
      acc.recon += wgt * res.parts.recon;
      acc.kl += wgt * res.parts.kl;
      acc.penalty += wgt * res.parts.penalty;
    }
    const double inv = 1.0 / static_cast<double>(n);
    est.history.push_back({acc.total * inv, acc.recon * inv, acc.kl * inv, acc.penalty * inv});
  }

  const std::size_t slice = std::min(config.support_slice, n);
  est.empirical_support =
      decoder_support(est, dataset.x.bottomRows(static_cast<Eigen::Index>(slice)), config.tau);
  return est;
}

Eigen::MatrixXd encode(const TrainedEstimator& est, const Eigen::MatrixXd& x) {
  const Eigen::Index dz = static_cast<Eigen::Index>(est.config.d_z);
  if (x.cols() != static_cast<Eigen::Index>(est.encoder.in_dim())) {
    throw std::invalid_argument("encode: input has " + std::to_string(x.cols()) + " columns, expected " +
                                std::to_string(est.encoder.in_dim()));
  }
  if (x.rows() == 0) return Eigen::MatrixXd(0, dz);
  const Eigen::MatrixXd out = predict(est.encoder, x.transpose());
  return out.topRows(dz).transpose();
}

SupportMatrix decoder_support(const TrainedEstimator& est, const Eigen::MatrixXd& x, double tau) {
  const Eigen::MatrixXd z = encode(est, x);
  return support_of_jacobian([&](const Eigen::VectorXd& v) { return jacobian(est.decoder, v); }, z, tau);
}

double mean_abs_decoder_jacobian(const TrainedEstimator& est, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd z = encode(est, x);
  if (z.rows() == 0) return 0.0;
  return jacobian_penalty(est.decoder, z.transpose(), PenaltyKind::L1).value;
}

}  // namespace ddl
