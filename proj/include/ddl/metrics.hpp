#pragma once

// Identification metrics: matched correlation, group-wise R^2, structure
// recovery up to column permutation, and the linear-independence check on
// ground-truth Jacobian rows.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddl/setalg.hpp"
#include "ddl/synth.hpp"
#include "ddl/trainer.hpp"

namespace ddl {

/// Minimum-cost perfect assignment on a square matrix; result[r] is the
/// column assigned to row r.
std::vector<std::size_t> hungarian_min(const Eigen::MatrixXd& cost);

enum class CorrMethod { PearsonAbs, SpearmanAbs };

std::string corr_method_name(CorrMethod m);

struct MccResult {
  double score{0.0};
  std::vector<std::size_t> permutation;  // true latent i <-> estimated latent permutation[i]
  CorrMethod method{CorrMethod::SpearmanAbs};
  Eigen::MatrixXd abs_corr;              // |corr(z_true_i, z_hat_j)|
  std::vector<std::string> warnings;
};

/// Average ranks (ties share the mean rank), 1-based.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& v);

MccResult mcc(const Eigen::MatrixXd& z_true, const Eigen::MatrixXd& z_hat, CorrMethod method = CorrMethod::SpearmanAbs);

struct R2Options {
  double ridge{1e-3};
  double train_fraction{0.7};
  std::size_t max_fit{2000};           // training rows kept after the split
  std::size_t max_test{3000};          // held-out rows kept after the split
  std::size_t bandwidth_sample{1000};  // rows used for the median distance
  std::uint64_t seed{0};
};

struct R2Value {
  double reported{0.0};  // mean of per-column scores clipped below at 0
  double raw{0.0};       // mean of unclipped per-column scores
  std::vector<std::string> warnings;
};

/// Kernel ridge regression (RBF, median-distance bandwidth on standardized
/// predictors) of each target column on `predictors`, scored on a held-out
/// split. Zero predictor columns give 0.
R2Value r2_group(const Eigen::MatrixXd& target, const Eigen::MatrixXd& predictors, const R2Options& opts = {});

struct ObsSplit {
  ObsSet k;
  ObsSet v;
  friend bool operator==(const ObsSplit&, const ObsSplit&) = default;
};

struct R2Suite {
  ObsSplit split;
  IndexSet ik;
  IndexSet iv;
  std::optional<R2Value> intersection;  // truth on I_K & I_V from estimate on pi(I_K ^ I_V)
  std::optional<R2Value> symdiff;       // truth on I_K ^ I_V from estimate on pi(I_K & I_V)
  std::optional<R2Value> comp_a;        // truth on I_K - I_V from estimate on pi(I_V - I_K)
  std::optional<R2Value> comp_b;        // truth on I_V - I_K from estimate on pi(I_K - I_V)
  R2Value ref;                          // all from all
};

/// `perm[i]` is the estimated column aligned with true latent i.
R2Suite r2_suite(const Eigen::MatrixXd& z_true, const Eigen::MatrixXd& z_hat, const SupportMatrix& support,
                 ObsSplit split, const std::vector<std::size_t>& perm, const R2Options& opts = {});

struct StructureMatch {
  std::vector<std::size_t> permutation;  // true column j <-> estimated column permutation[j]
  std::size_t shd{0};
};

StructureMatch structure_match(const SupportMatrix& s_true, const SupportMatrix& s_hat);

struct NonlinearityVerdict {
  std::size_t row{0};
  std::size_t achieved{0};
  std::size_t required{0};
  bool pass{false};
};

/// Per observed row, greedily collects Jacobian rows (restricted to the
/// supported columns) over the samples that raise the numerical rank.
std::vector<NonlinearityVerdict> check_sufficient_nonlinearity(const JacobianFn& jac, const SupportMatrix& support,
                                                               const Eigen::MatrixXd& samples, double rank_tol = 1e-6);

struct EvalOptions {
  R2Options r2;
  double rank_tol{1e-6};
  std::size_t nonlinearity_samples{1000};
};

struct EvaluationReport {
  MccResult mcc_spearman;
  MccResult mcc_pearson;
  StructureMatch structure;
  SupportMatrix empirical_support = SupportMatrix::identity(1);
  std::vector<R2Suite> r2;
  std::vector<DiversityVerdict> diversity;
  bool element_identifiability_predicted{false};
  std::vector<NonlinearityVerdict> nonlinearity;
  EvalOptions options;
};

/// Evaluation of given latent estimates (rows aligned with dataset.z).
EvaluationReport evaluate_latents(const Eigen::MatrixXd& z_hat, const SupportMatrix& empirical_support,
                                  const Dataset& dataset, const GroundTruthModel& truth,
                                  const std::vector<ObsSplit>& splits, const EvalOptions& opts = {});

EvaluationReport evaluate(const TrainedEstimator& estimator, const Dataset& dataset, const GroundTruthModel& truth,
                          const std::vector<ObsSplit>& splits, const EvalOptions& opts = {});

}  // namespace ddl
