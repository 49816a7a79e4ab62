#pragma once

// File formats: dataset CSV, model/estimator/report/certificate JSON.
// Latent and observed indices are 0-based in every JSON document.

#include <string>
#include <vector>

#include <json.hpp>

#include "ddl/metrics.hpp"
#include "ddl/setalg.hpp"
#include "ddl/synth.hpp"
#include "ddl/trainer.hpp"

namespace ddl {

using json = nlohmann::json;

std::string tool_version();

/// Writes to `path.tmp` then renames over `path`.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

/// Header z_1..z_dz,x_1..x_dx; 17 significant digits per value.
std::string dataset_to_csv(const Dataset& ds);
Dataset dataset_from_csv(const std::string& text);

json net_to_json(const NetParams& p);
NetParams net_from_json(const json& j);

json support_to_json(const SupportMatrix& s);
SupportMatrix support_from_json(const json& j, bool relaxed = false);

json model_to_json(const GroundTruthModel& m);
GroundTruthModel model_from_json(const json& j);

json estimator_config_to_json(const EstimatorConfig& c);
/// Strict: unknown keys raise ConfigError. Missing keys keep their defaults.
EstimatorConfig estimator_config_from_json(const json& j);

json estimator_to_json(const TrainedEstimator& e);
TrainedEstimator estimator_from_json(const json& j);

/// epoch,total,recon,kl,penalty
std::string train_log_csv(const std::vector<LossComponents>& history);

json certificate_to_json(const Certificate& c);
json certify_result_to_json(const CertifyResult& r);
json region_to_json(const AtomicRegion& r);
json diversity_to_json(const std::vector<DiversityVerdict>& v);
json nonlinearity_to_json(const std::vector<NonlinearityVerdict>& v);
json split_to_json(const ObsSplit& s);
ObsSplit split_from_json(const json& j);
json report_to_json(const EvaluationReport& r);

}  // namespace ddl
