#pragma once

// Ground-truth generators with a prescribed Jacobian support.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddl/nnet.hpp"
#include "ddl/setalg.hpp"

namespace ddl {

enum class SupportPattern { Diverse, Dense, Custom };

std::string pattern_name(SupportPattern p);
SupportPattern pattern_from_name(const std::string& name);

struct SupportOptions {
  double density{0.4};             // Bernoulli rate for the diverse pattern
  std::size_t max_resamples{1000};  // diverse pattern budget
  std::string custom_path;         // custom pattern source file
  // Skip draws where every observed variable reads a single latent: such a
  // support is a relabelled identity with nothing to disentangle.
  bool reject_trivial{true};
};

/// Throws GenerationError when the diverse pattern exhausts its budget and
/// FormatError for an unreadable custom file.
SupportMatrix make_support(std::size_t d_x, std::size_t d_z, SupportPattern pattern, std::uint64_t seed,
                           const SupportOptions& opts = {});

SupportMatrix load_support(const std::string& path);

struct MixingArch {
  std::size_t depth{2};
  std::size_t width{16};
  double slope{0.2};
};

enum class PriorKind { StandardNormal, CorrelatedNormal };

struct Prior {
  PriorKind kind{PriorKind::StandardNormal};
  Eigen::MatrixXd covariance;  // only for CorrelatedNormal

  /// Rows are samples.
  Eigen::MatrixXd sample(std::size_t n, std::size_t d_z, std::mt19937_64& rng) const;
};

struct GroundTruthOptions {
  std::size_t probe_samples{1000};
  double min_singular{1e-3};
  std::size_t max_resamples{50};
  // Nonnegative weights after the first layer, one random sign per input
  // column: every Jacobian entry keeps a fixed sign over the whole domain.
  bool sign_monotone{true};
  // Square case: reject when det(D g) changes sign across the probes.
  bool require_orientation{true};
};

/// x_i = f_i(z restricted to row i of the support); each f_i is its own
/// network whose output is standardized over the probe sample.
struct GroundTruthModel {
  SupportMatrix support;
  MixingArch arch;
  Prior prior;
  std::vector<NetParams> outputs;
  std::uint64_t seed{0};
  std::size_t attempts{1};
  double probe_min_singular{0.0};  // smallest singular value of D g over the probes

  std::size_t d_x() const { return support.d_x(); }
  std::size_t d_z() const { return support.d_z(); }

  Eigen::VectorXd eval(const Eigen::VectorXd& z) const;
  /// z rows are samples; returns n x d_x.
  Eigen::MatrixXd eval_batch(const Eigen::MatrixXd& z) const;
  /// d_x x d_z, exactly zero off the support.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const;
};

/// Rejection-resamples parameters when d_x == d_z until the probe minimum
/// singular value exceeds opts.min_singular; GenerationError after
/// opts.max_resamples attempts.
GroundTruthModel make_ground_truth(const SupportMatrix& support, const MixingArch& arch, std::uint64_t seed,
                                   const Prior& prior = {}, const GroundTruthOptions& opts = {});

struct Dataset {
  Eigen::MatrixXd z;  // n x d_z
  Eigen::MatrixXd x;  // n x d_x
  double noise_std{0.0};
  bool noise_relative{false};  // noise_std multiplies the per-coordinate std of clean x
  std::uint64_t seed{0};

  std::size_t size() const { return static_cast<std::size_t>(z.rows()); }
};

Dataset sample_dataset(const GroundTruthModel& model, std::size_t n, double noise_std, std::uint64_t seed,
                       bool noise_relative = false);

using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

/// (i, j) active iff max_s |J_ij(s)| > tau * max_{s,i,j} |J_ij(s)|, with
/// tau = 0 meaning any nonzero entry. Samples are rows. The result is not
/// required to cover every row and column.
SupportMatrix support_of_jacobian(const JacobianFn& jac, const Eigen::MatrixXd& samples, double tau);

}  // namespace ddl
