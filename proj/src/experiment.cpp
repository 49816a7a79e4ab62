#include "ddl/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "ddl/errors.hpp"

namespace ddl {

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown field \"" + key + "\"");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::vector<ObsSplit> default_splits(std::size_t d_x) {
  if (d_x < 2) return {};
  ObsSplit s;
  s.k.insert(0);
  for (std::size_t i = 1; i < d_x; ++i) s.v.insert(i);
  return {s};
}

void fmt(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (support.d_z < 1 || support.d_x < support.d_z) throw ConfigError("support: requires d_x >= d_z >= 1");
  if (support.d_x > kMaxDim) throw ConfigError("support: d_x must be <= 64");
  if (support.pattern == SupportPattern::Custom && support.file.empty()) throw ConfigError("support: custom pattern needs \"file\"");
  if (!(support.density > 0.0 && support.density <= 1.0)) throw ConfigError("support: density must be in (0, 1]");
  if (ground_truth.depth > 0 && ground_truth.width == 0) throw ConfigError("ground_truth: width must be >= 1");
  if (prior.kind == PriorKind::CorrelatedNormal &&
      (prior.covariance.rows() != static_cast<Eigen::Index>(support.d_z) ||
       prior.covariance.cols() != static_cast<Eigen::Index>(support.d_z))) {
    throw ConfigError("prior: covariance must be d_z x d_z");
  }
  if (!(dataset.noise_std >= 0.0)) throw ConfigError("dataset: noise_std must be >= 0");
  if (estimator.d_z != support.d_z) {
    throw ConfigError("estimator.d_z (" + std::to_string(estimator.d_z) + ") differs from support.d_z (" +
                      std::to_string(support.d_z) + ")");
  }
  try {
    estimator.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (dataset.n < 10) throw ConfigError("dataset: n must be >= 10");
  for (const auto& s : splits) {
    if (s.k.empty() || s.v.empty() || s.k.extent() > support.d_x || s.v.extent() > support.d_x) {
      throw ConfigError("splits: observed indices must be in [0, d_x) and nonempty");
    }
  }
  if (seeds.empty()) throw ConfigError("seeds: at least one seed required");
  if (sweep) {
    const auto& p = sweep->param;
    if (p != "alpha" && p != "d_z" && p != "noise_std" && p != "pattern") {
      throw ConfigError("sweep: parameter must be one of alpha, d_z, noise_std, pattern");
    }
  }
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, {"support", "ground_truth", "prior", "dataset", "estimator", "splits", "evaluation", "seeds",
                 "output_dir", "sweep"},
             "config");
  ExperimentConfig c;
  if (j.contains("support")) {
    const auto& s = j.at("support");
    check_keys(s, {"pattern", "file", "d_x", "d_z", "density", "reject_trivial"}, "support");
    std::string pattern = pattern_name(c.support.pattern);
    read_opt(s, "pattern", pattern, "support");
    try {
      c.support.pattern = pattern_from_name(pattern);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("support: ") + e.what());
    }
    read_opt(s, "file", c.support.file, "support");
    read_opt(s, "d_x", c.support.d_x, "support");
    read_opt(s, "d_z", c.support.d_z, "support");
    if (s.contains("d_z") && !s.contains("d_x")) c.support.d_x = c.support.d_z;
    read_opt(s, "density", c.support.density, "support");
    read_opt(s, "reject_trivial", c.support.reject_trivial, "support");
  }
  if (j.contains("ground_truth")) {
    const auto& g = j.at("ground_truth");
    check_keys(g, {"depth", "width", "slope"}, "ground_truth");
    read_opt(g, "depth", c.ground_truth.depth, "ground_truth");
    read_opt(g, "width", c.ground_truth.width, "ground_truth");
    read_opt(g, "slope", c.ground_truth.slope, "ground_truth");
  }
  if (j.contains("prior")) {
    const auto& p = j.at("prior");
    check_keys(p, {"kind", "covariance"}, "prior");
    std::string kind = "standard_normal";
    read_opt(p, "kind", kind, "prior");
    if (kind == "standard_normal") {
      c.prior.kind = PriorKind::StandardNormal;
      if (p.contains("covariance")) throw ConfigError("prior: covariance only valid for correlated_normal");
    } else if (kind == "correlated_normal") {
      c.prior.kind = PriorKind::CorrelatedNormal;
      std::vector<std::vector<double>> rows;
      read_opt(p, "covariance", rows, "prior");
      c.prior.covariance.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.size()) throw ConfigError("prior: covariance must be square");
        for (std::size_t col = 0; col < rows.size(); ++col)
          c.prior.covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) = rows[r][col];
      }
      Eigen::LLT<Eigen::MatrixXd> llt(c.prior.covariance);
      if (rows.empty() || llt.info() != Eigen::Success) throw ConfigError("prior: covariance must be positive definite");
    } else {
      throw ConfigError("prior: unknown kind \"" + kind + "\"");
    }
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"n", "noise_std", "noise_relative"}, "dataset");
    read_opt(d, "n", c.dataset.n, "dataset");
    read_opt(d, "noise_std", c.dataset.noise_std, "dataset");
    read_opt(d, "noise_relative", c.dataset.noise_relative, "dataset");
  }
  c.estimator.d_z = c.support.d_z;
  if (j.contains("estimator")) {
    json e = j.at("estimator");
    if (e.is_object() && !e.contains("d_z")) e["d_z"] = c.support.d_z;
    c.estimator = estimator_config_from_json(e);
  }
  if (j.contains("splits")) {
    if (!j.at("splits").is_array()) throw ConfigError("splits: expected an array");
    for (const auto& s : j.at("splits")) c.splits.push_back(split_from_json(s));
  } else {
    c.splits = default_splits(c.support.d_x);
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_keys(e, {"r2_ridge", "r2_train_fraction", "r2_max_fit", "r2_max_test", "r2_bandwidth_sample", "r2_seed",
                   "rank_tol", "nonlinearity_samples"},
               "evaluation");
    read_opt(e, "r2_ridge", c.evaluation.r2.ridge, "evaluation");
    read_opt(e, "r2_train_fraction", c.evaluation.r2.train_fraction, "evaluation");
    read_opt(e, "r2_max_fit", c.evaluation.r2.max_fit, "evaluation");
    read_opt(e, "r2_max_test", c.evaluation.r2.max_test, "evaluation");
    read_opt(e, "r2_bandwidth_sample", c.evaluation.r2.bandwidth_sample, "evaluation");
    read_opt(e, "r2_seed", c.evaluation.r2.seed, "evaluation");
    read_opt(e, "rank_tol", c.evaluation.rank_tol, "evaluation");
    read_opt(e, "nonlinearity_samples", c.evaluation.nonlinearity_samples, "evaluation");
  }
  read_opt(j, "seeds", c.seeds, "config");
  read_opt(j, "output_dir", c.output_dir, "config");
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, {"param", "values"}, "sweep");
    SweepSpec sw;
    read_opt(s, "param", sw.param, "sweep");
    if (!s.contains("values") || !s.at("values").is_array()) throw ConfigError("sweep: \"values\" array required");
    for (const auto& v : s.at("values")) sw.values.push_back(v);
    c.sweep = sw;
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json prior = {{"kind", c.prior.kind == PriorKind::StandardNormal ? "standard_normal" : "correlated_normal"}};
  if (c.prior.kind == PriorKind::CorrelatedNormal) {
    json cov = json::array();
    for (Eigen::Index r = 0; r < c.prior.covariance.rows(); ++r) {
      std::vector<double> row;
      for (Eigen::Index col = 0; col < c.prior.covariance.cols(); ++col) row.push_back(c.prior.covariance(r, col));
      cov.push_back(row);
    }
    prior["covariance"] = cov;
  }
  json splits = json::array();
  for (const auto& s : c.splits) splits.push_back(split_to_json(s));
  json support = {{"pattern", pattern_name(c.support.pattern)},
                  {"d_x", c.support.d_x},
                  {"d_z", c.support.d_z},
                  {"density", c.support.density},
                  {"reject_trivial", c.support.reject_trivial}};
  if (!c.support.file.empty()) support["file"] = c.support.file;
  json out = {{"support", support},
              {"ground_truth", {{"depth", c.ground_truth.depth}, {"width", c.ground_truth.width}, {"slope", c.ground_truth.slope}}},
              {"prior", prior},
              {"dataset", {{"n", c.dataset.n}, {"noise_std", c.dataset.noise_std}, {"noise_relative", c.dataset.noise_relative}}},
              {"estimator", estimator_config_to_json(c.estimator)},
              {"splits", splits},
              {"evaluation",
               {{"r2_ridge", c.evaluation.r2.ridge},
                {"r2_train_fraction", c.evaluation.r2.train_fraction},
                {"r2_max_fit", c.evaluation.r2.max_fit},
                {"r2_max_test", c.evaluation.r2.max_test},
                {"r2_bandwidth_sample", c.evaluation.r2.bandwidth_sample},
                {"r2_seed", c.evaluation.r2.seed},
                {"rank_tol", c.evaluation.rank_tol},
                {"nonlinearity_samples", c.evaluation.nonlinearity_samples}}},
              {"seeds", c.seeds},
              {"output_dir", c.output_dir}};
  if (c.sweep) out["sweep"] = {{"param", c.sweep->param}, {"values", c.sweep->values}};
  return out;
}

ExperimentConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

Generated run_gen(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SupportOptions sopts;
  sopts.density = cfg.support.density;
  sopts.reject_trivial = cfg.support.reject_trivial;
  sopts.custom_path = cfg.support.file;
  auto support = make_support(cfg.support.d_x, cfg.support.d_z, cfg.support.pattern, seed, sopts);
  auto model = make_ground_truth(support, cfg.ground_truth, seed, cfg.prior);
  auto data = sample_dataset(model, cfg.dataset.n, cfg.dataset.noise_std, seed, cfg.dataset.noise_relative);
  return {std::move(support), std::move(model), std::move(data)};
}

TrainedEstimator run_train(const ExperimentConfig& cfg, const Dataset& dataset, std::uint64_t seed) {
  if (dataset.x.cols() != static_cast<Eigen::Index>(cfg.support.d_x)) {
    throw ConfigError("dataset has " + std::to_string(dataset.x.cols()) + " observed columns, config expects " +
                      std::to_string(cfg.support.d_x));
  }
  EstimatorConfig ec = cfg.estimator;
  ec.seed = seed;
  return train(dataset, ec);
}

EvaluationReport run_eval(const ExperimentConfig& cfg, const TrainedEstimator& est, const Dataset& dataset,
                          const GroundTruthModel& model) {
  return evaluate(est, dataset, model, cfg.splits, cfg.evaluation);
}

RunMetrics metrics_from(const EvaluationReport& rep, const TrainedEstimator& est) {
  RunMetrics m;
  m.mcc_spearman = rep.mcc_spearman.score;
  m.mcc_pearson = rep.mcc_pearson.score;
  m.shd = rep.structure.shd;
  if (!rep.r2.empty()) {
    const auto& s = rep.r2.front();
    auto get = [](const std::optional<R2Value>& v) -> std::optional<double> {
      if (!v) return std::nullopt;
      return v->reported;
    };
    m.r2_int = get(s.intersection);
    m.r2_symdiff = get(s.symdiff);
    m.r2_comp_a = get(s.comp_a);
    m.r2_comp_b = get(s.comp_b);
    m.r2_ref = s.ref.reported;
  }
  if (!est.history.empty()) {
    m.final_recon = est.history.back().recon;
    m.final_penalty = est.history.back().penalty;
  }
  m.diversity_predicted = rep.element_identifiability_predicted;
  return m;
}

RunMetrics failed_run(std::string status) {
  RunMetrics m;
  m.status = std::move(status);
  return m;
}

RunMetrics run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed) {
  try {
    const auto gen = run_gen(cfg, seed);
    const auto est = run_train(cfg, gen.dataset, seed);
    const auto rep = run_eval(cfg, est, gen.dataset, gen.model);
    return metrics_from(rep, est);
  } catch (const GenerationError& e) {
    return failed_run(std::string("generation_error: ") + e.what());
  } catch (const NumericError& e) {
    return failed_run(std::string("numeric_error: ") + e.what());
  } catch (const std::exception& e) {
    return failed_run(std::string("error: ") + e.what());
  }
}

ExperimentConfig apply_sweep_value(const ExperimentConfig& cfg, const std::string& param, const json& value) {
  ExperimentConfig c = cfg;
  c.sweep.reset();
  try {
    if (param == "alpha") {
      c.estimator.alpha = value.get<double>();
    } else if (param == "d_z") {
      const auto d = value.get<std::size_t>();
      c.support.d_x = d;
      c.support.d_z = d;
      c.estimator.d_z = d;
      c.splits = default_splits(d);
    } else if (param == "noise_std") {
      c.dataset.noise_std = value.get<double>();
    } else if (param == "pattern") {
      c.support.pattern = pattern_from_name(value.get<std::string>());
    } else {
      throw ConfigError("sweep: unsupported parameter \"" + param + "\"");
    }
  } catch (const json::exception& e) {
    throw ConfigError("sweep: bad value for " + param + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sweep: ") + e.what());
  }
  c.validate();
  return c;
}

std::string value_label(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const SweepSpec& sweep,
                                const std::vector<std::uint64_t>& seeds, std::size_t jobs) {
  struct Task {
    ExperimentConfig cfg;
    SweepRow row;
  };
  std::vector<Task> tasks;
  for (const auto& v : sweep.values) {
    const auto c = apply_sweep_value(cfg, sweep.param, v);
    for (auto s : seeds) tasks.push_back({c, {sweep.param, value_label(v), s, {}}});
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      tasks[t].row.metrics = run_pipeline(tasks[t].cfg, tasks[t].row.seed);
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < jobs; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<SweepRow> rows;
  rows.reserve(tasks.size());
  for (auto& t : tasks) rows.push_back(std::move(t.row));
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "param,value,seed,status,mcc_spearman,mcc_pearson,shd,r2_int,r2_symdiff,r2_compA,r2_compB,r2_ref,final_recon,"
      "final_penalty\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    std::string status = m.status;
    for (auto& ch : status)
      if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
    out += r.param + "," + r.value + "," + std::to_string(r.seed) + "," + status;
    const bool ok = m.status == "ok";
    auto num = [&](double v) {
      out += ',';
      if (ok) fmt(out, v);
    };
    auto opt = [&](const std::optional<double>& v) {
      out += ',';
      if (ok && v) fmt(out, *v);
    };
    num(m.mcc_spearman);
    num(m.mcc_pearson);
    out += ',';
    if (ok) out += std::to_string(m.shd);
    opt(m.r2_int);
    opt(m.r2_symdiff);
    opt(m.r2_comp_a);
    opt(m.r2_comp_b);
    num(m.r2_ref);
    num(m.final_recon);
    num(m.final_penalty);
    out += '\n';
  }
  return out;
}

std::string sweep_summary(const std::vector<SweepRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunMetrics*>> groups;
  std::map<std::string, std::size_t> failed;
  for (const auto& r : rows) {
    if (!groups.count(r.value) && !failed.count(r.value)) order.push_back(r.value);
    if (r.metrics.status == "ok") {
      groups[r.value].push_back(&r.metrics);
    } else {
      ++failed[r.value];
    }
  }
  auto stats = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %4s %-20s %-20s %-14s\n", "value", "ok", "mcc_spearman", "mcc_pearson", "shd");
  os << buf;
  for (const auto& value : order) {
    const auto& g = groups[value];
    if (g.empty()) {
      std::snprintf(buf, sizeof buf, "%-12s %4d (all %zu runs failed)\n", value.c_str(), 0, failed[value]);
      os << buf;
      continue;
    }
    std::vector<double> ms, mp, sh;
    for (const auto* m : g) {
      ms.push_back(m->mcc_spearman);
      mp.push_back(m->mcc_pearson);
      sh.push_back(static_cast<double>(m->shd));
    }
    const auto [a, as] = stats(ms);
    const auto [b, bs] = stats(mp);
    const auto [c, cs] = stats(sh);
    std::snprintf(buf, sizeof buf, "%-12s %4zu %.4f +- %-10.4f %.4f +- %-10.4f %.2f +- %.2f\n", value.c_str(), g.size(), a,
                  as, b, bs, c, cs);
    os << buf;
  }
  return os.str();
}

}  // namespace ddl
