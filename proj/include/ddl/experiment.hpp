#pragma once

// Experiment configuration and the gen -> train -> eval pipeline shared by
// the command-line verbs and the sweep runner.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddl/io.hpp"
#include "ddl/metrics.hpp"
#include "ddl/synth.hpp"
#include "ddl/trainer.hpp"

namespace ddl {

struct SupportSpec {
  SupportPattern pattern{SupportPattern::Diverse};
  std::string file;  // custom pattern only
  std::size_t d_x{3};
  std::size_t d_z{3};
  double density{0.4};
  bool reject_trivial{true};
};

struct DatasetSpec {
  std::size_t n{10000};
  double noise_std{0.0};
  bool noise_relative{false};  // noise_std scales the per-coordinate std of clean x
};

struct SweepSpec {
  std::string param;         // alpha | d_z | noise_std | pattern
  std::vector<json> values;
};

struct ExperimentConfig {
  SupportSpec support;
  MixingArch ground_truth;
  Prior prior;
  DatasetSpec dataset;
  EstimatorConfig estimator;
  std::vector<ObsSplit> splits;  // defaults to K={0}, V={1..d_x-1}
  EvalOptions evaluation;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir{"out"};
  std::optional<SweepSpec> sweep;

  /// Dimensional consistency; throws ConfigError.
  void validate() const;
};

/// Strict: unknown fields raise ConfigError.
ExperimentConfig config_from_json(const json& j);
json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

struct Generated {
  SupportMatrix support;
  GroundTruthModel model;
  Dataset dataset;
};

Generated run_gen(const ExperimentConfig& cfg, std::uint64_t seed);
TrainedEstimator run_train(const ExperimentConfig& cfg, const Dataset& dataset, std::uint64_t seed);
EvaluationReport run_eval(const ExperimentConfig& cfg, const TrainedEstimator& est, const Dataset& dataset,
                          const GroundTruthModel& model);

struct RunMetrics {
  std::string status{"ok"};
  double mcc_spearman{0.0};
  double mcc_pearson{0.0};
  std::size_t shd{0};
  std::optional<double> r2_int, r2_symdiff, r2_comp_a, r2_comp_b;
  double r2_ref{0.0};
  double final_recon{0.0};
  double final_penalty{0.0};
  bool diversity_predicted{false};
};

RunMetrics metrics_from(const EvaluationReport& rep, const TrainedEstimator& est);

/// gen -> train -> eval in memory. Failures become a status other than "ok".
RunMetrics run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed);

/// Copy of `cfg` with one sweep parameter set.
ExperimentConfig apply_sweep_value(const ExperimentConfig& cfg, const std::string& param, const json& value);

struct SweepRow {
  std::string param;
  std::string value;
  std::uint64_t seed{0};
  RunMetrics metrics;
};

/// Rows ordered by (value, seed) regardless of `jobs`.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const SweepSpec& sweep,
                                const std::vector<std::uint64_t>& seeds, std::size_t jobs);

std::string sweep_csv(const std::vector<SweepRow>& rows);
/// Mean and standard deviation per value over successful runs.
std::string sweep_summary(const std::vector<SweepRow>& rows);

std::string value_label(const json& v);

}  // namespace ddl
