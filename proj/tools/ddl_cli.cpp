// ddl: generate, train, evaluate, check and sweep dependency-structure experiments.
//
// Exit codes: 0 ok, 1 unexpected error, 2 config/input error, 3 generation
// failure, 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddl/errors.hpp"
#include "ddl/experiment.hpp"
#include "ddl/io.hpp"

namespace fs = std::filesystem;
using namespace ddl;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet{false};
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Experiment config (JSON)");
  cmd->add_option("--out", c.out_dir, "Output directory");
  cmd->add_option("--seed", c.seed, "Seed override");
  cmd->add_flag("--quiet", c.quiet, "Suppress the printed summary");
}

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? config_from_json(json::object()) : load_config(c.config_path);
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  return cfg;
}

fs::path prepare_out(const std::string& dir) {
  fs::path p = dir.empty() ? fs::path(".") : fs::path(dir);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path.string(), j.dump(2) + "\n"); }

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

json provenance(const ExperimentConfig& cfg, std::uint64_t seed) {
  return {{"tool_version", tool_version()}, {"seed", seed}, {"experiment_config", config_to_json(cfg)}};
}

std::string fmt_opt(const std::optional<R2Value>& v) {
  if (!v) return "    -";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v->reported);
  return buf;
}

ObsSplit parse_split(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("split \"" + text + "\": expected K:V, e.g. 0:1,2");
  auto parse_set = [&](const std::string& part) {
    ObsSet s;
    std::stringstream ss(part);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        const auto v = std::stoul(item, &used);
        if (used != item.size() || v >= kMaxDim) throw std::invalid_argument(item);
        s.insert(v);
      } catch (const std::exception&) {
        throw ConfigError("split \"" + text + "\": bad index \"" + item + "\"");
      }
    }
    return s;
  };
  return {parse_set(text.substr(0, colon)), parse_set(text.substr(colon + 1))};
}

std::string diversity_line(const std::vector<DiversityVerdict>& verdicts) {
  std::string s;
  for (const auto& v : verdicts) {
    s += "  z" + std::to_string(v.latent) + ": clause " + std::to_string(static_cast<int>(v.clause));
    if (v.satisfied) s += " witness " + to_string(v.witness);
    s += "\n";
  }
  return s;
}

int cmd_gen(const Common& c) {
  const auto cfg = resolve_config(c);
  const auto seed = cfg.seeds.front();
  const auto gen = run_gen(cfg, seed);
  const auto out = prepare_out(cfg.output_dir);
  const json prov = provenance(cfg, seed);

  write_file_atomic((out / "support.txt").string(), gen.support.to_text());
  json model = model_to_json(gen.model);
  model["provenance"] = prov;
  write_json(out / "model.json", model);
  write_file_atomic((out / "dataset.csv").string(), dataset_to_csv(gen.dataset));
  write_json(out / "run.json", {{"command", "gen"},
                                {"provenance", prov},
                                {"files", {"support.txt", "model.json", "dataset.csv"}}});

  if (!c.quiet) {
    const auto verdicts = check_sufficient_diversity(gen.support);
    std::cout << "support " << gen.support.d_x() << "x" << gen.support.d_z() << " (" << pattern_name(cfg.support.pattern)
              << ")\n"
              << gen.support.to_text() << "diversity:\n"
              << diversity_line(verdicts) << "element-wise identifiability predicted: "
              << (element_identifiability_predicted(gen.support) ? "yes" : "no") << "\n"
              << "wrote " << out.string() << "/{support.txt,model.json,dataset.csv}\n";
  }
  return 0;
}

int cmd_train(const Common& c, const std::string& dataset_path) {
  const auto cfg = resolve_config(c);
  const auto seed = cfg.seeds.front();
  Dataset ds;
  try {
    ds = dataset_from_csv(read_file(dataset_path));
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  if (ds.z.cols() != static_cast<Eigen::Index>(cfg.estimator.d_z)) {
    throw ConfigError("dataset has " + std::to_string(ds.z.cols()) + " latent columns, estimator expects " +
                      std::to_string(cfg.estimator.d_z));
  }
  const auto est = run_train(cfg, ds, seed);
  const auto out = prepare_out(cfg.output_dir);
  json j = estimator_to_json(est);
  j["provenance"] = provenance(cfg, seed);
  j["provenance"]["dataset"] = dataset_path;
  write_json(out / "estimator.json", j);
  write_file_atomic((out / "train_log.csv").string(), train_log_csv(est.history));

  if (!c.quiet) {
    const auto& h = est.history.back();
    std::printf("epochs %zu  total %.6f  recon %.6f  kl %.6f  penalty %.6f\n", est.history.size(), h.total, h.recon,
                h.kl, h.penalty);
    std::cout << "empirical support (tau " << cfg.estimator.tau << "):\n"
              << est.empirical_support.to_text() << "wrote " << out.string() << "/{estimator.json,train_log.csv}\n";
  }
  return 0;
}

int cmd_eval(const Common& c, const std::string& est_path, const std::string& data_path, const std::string& model_path,
             const std::vector<std::string>& split_args) {
  ExperimentConfig cfg;
  TrainedEstimator est;
  GroundTruthModel model{SupportMatrix::identity(1), {}, {}, {}, 0, 1, 0.0};
  Dataset ds;
  try {
    est = estimator_from_json(parse_json_file(est_path));
    model = model_from_json(parse_json_file(model_path));
    ds = dataset_from_csv(read_file(data_path));
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  const auto d_x = model.support.d_x();
  const auto d_z = model.support.d_z();
  if (static_cast<std::size_t>(ds.x.cols()) != d_x || static_cast<std::size_t>(ds.z.cols()) != d_z) {
    throw ConfigError("dataset dimensions do not match the model");
  }
  if (est.config.d_z != d_z || est.decoder.out_dim() != d_x) {
    throw ConfigError("estimator dimensions do not match the model");
  }
  if (!c.config_path.empty()) {
    cfg = load_config(c.config_path);
  } else {
    json base = {{"support", {{"d_x", d_x}, {"d_z", d_z}}}};
    cfg = config_from_json(base);
  }
  if (!split_args.empty()) {
    cfg.splits.clear();
    for (const auto& s : split_args) cfg.splits.push_back(parse_split(s));
  }
  for (const auto& s : cfg.splits) {
    if (s.k.extent() > d_x || s.v.extent() > d_x) throw ConfigError("split refers to an observed index >= d_x");
  }
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;

  const auto rep = evaluate(est, ds, model, cfg.splits, cfg.evaluation);
  json j = report_to_json(rep);
  j["provenance"] = {{"tool_version", tool_version()},
                     {"estimator", est_path},
                     {"dataset", data_path},
                     {"model", model_path},
                     {"estimator_config", estimator_config_to_json(est.config)},
                     {"experiment_config", config_to_json(cfg)}};
  const auto out = prepare_out(cfg.output_dir);
  write_json(out / "report.json", j);

  if (!c.quiet) {
    std::printf("MCC (spearman-abs) %.3f   MCC (pearson-abs) %.3f   SHD %zu\n", rep.mcc_spearman.score,
                rep.mcc_pearson.score, rep.structure.shd);
    std::printf("%-16s %6s %8s %6s %6s %6s\n", "split K:V", "Int", "SymDiff", "CompA", "CompB", "Ref");
    for (const auto& s : rep.r2) {
      const std::string name = to_string(s.split.k) + ":" + to_string(s.split.v);
      std::printf("%-16s %6s %8s %6s %6s %6.3f\n", name.c_str(), fmt_opt(s.intersection).c_str(),
                  fmt_opt(s.symdiff).c_str(), fmt_opt(s.comp_a).c_str(), fmt_opt(s.comp_b).c_str(), s.ref.reported);
    }
    for (const auto& w : rep.mcc_spearman.warnings) std::cout << "warning: " << w << "\n";
    std::cout << "wrote " << (out / "report.json").string() << "\n";
  }
  return 0;
}

int cmd_check(const Common& c, const std::string& support_path, const std::string& model_path,
              const std::string& data_path, std::size_t max_union) {
  SupportMatrix support = SupportMatrix::identity(1);
  try {
    support = load_support(support_path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  const auto family = support.rows();
  const auto diversity = check_sufficient_diversity(support);
  const bool predicted = element_identifiability_predicted(support);
  json regions = json::array();
  std::size_t certified = 0;
  const auto regs = atomic_regions(family, support.d_z());
  for (const auto& r : regs) {
    json rj = region_to_json(r);
    if (r.outside()) {
      rj["certificate"] = nullptr;
    } else {
      const auto res = certify_region(r, family, support.d_z(), max_union);
      if (std::holds_alternative<Certificate>(res)) ++certified;
      rj["certificate"] = certify_result_to_json(res);
    }
    regions.push_back(rj);
  }
  json j = {{"format", "ddl-check"},
            {"version", tool_version()},
            {"support", support_to_json(support)},
            {"diversity", diversity_to_json(diversity)},
            {"element_identifiability_predicted", predicted},
            {"regions", regions},
            {"certificate_max_union", max_union},
            {"provenance",
             {{"tool_version", tool_version()},
              {"support_file", support_path},
              {"experiment_config", config_to_json(resolve_config(c))}}}};

  if (!model_path.empty() || !data_path.empty()) {
    if (model_path.empty() || data_path.empty()) throw ConfigError("check: --model and --dataset go together");
    GroundTruthModel model{SupportMatrix::identity(1), {}, {}, {}, 0, 1, 0.0};
    Dataset ds;
    try {
      model = model_from_json(parse_json_file(model_path));
      ds = dataset_from_csv(read_file(data_path));
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
    if (!(model.support == support)) throw ConfigError("check: model support differs from the support file");
    if (static_cast<std::size_t>(ds.z.cols()) != support.d_z()) throw ConfigError("check: dataset latent count mismatch");
    const auto n = std::min<Eigen::Index>(ds.z.rows(), 1000);
    const JacobianFn jac = [&model](const Eigen::VectorXd& z) { return model.jacobian(z); };
    const auto nl = check_sufficient_nonlinearity(jac, support, ds.z.topRows(n));
    j["nonlinearity"] = nonlinearity_to_json(nl);
    j["provenance"]["model"] = model_path;
    j["provenance"]["dataset"] = data_path;
  }
  const auto out = prepare_out(c.out_dir);
  write_json(out / "check.json", j);

  if (!c.quiet) {
    std::cout << "diversity:\n"
              << diversity_line(diversity) << "element-wise identifiability predicted: " << (predicted ? "yes" : "no")
              << "\natomic regions: " << regs.size() << ", certified " << certified << "\n"
              << "wrote " << (out / "check.json").string() << "\n";
  }
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

int cmd_sweep(const Common& c, const std::string& param, const std::string& values, const std::string& seeds,
              std::size_t jobs) {
  auto cfg = resolve_config(c);
  SweepSpec sweep;
  if (cfg.sweep) sweep = *cfg.sweep;
  if (!param.empty()) sweep.param = param;
  if (!values.empty()) {
    sweep.values.clear();
    for (const auto& v : split_list(values)) {
      json parsed;
      try {
        parsed = json::parse(v);
      } catch (const json::parse_error&) {
        parsed = v;
      }
      sweep.values.push_back(parsed);
    }
  }
  if (!seeds.empty()) {
    cfg.seeds.clear();
    for (const auto& s : split_list(seeds)) {
      try {
        cfg.seeds.push_back(std::stoull(s));
      } catch (const std::exception&) {
        throw ConfigError("sweep: bad seed \"" + s + "\"");
      }
    }
  }
  if (sweep.param.empty() || sweep.values.empty()) throw ConfigError("sweep: parameter and values required");
  cfg.sweep = sweep;
  cfg.validate();

  const auto rows = run_sweep(cfg, sweep, cfg.seeds, jobs);
  const auto out = prepare_out(cfg.output_dir);
  write_file_atomic((out / "sweep.csv").string(), sweep_csv(rows));
  write_json(out / "sweep.json", {{"command", "sweep"},
                                  {"tool_version", tool_version()},
                                  {"experiment_config", config_to_json(cfg)},
                                  {"files", {"sweep.csv"}}});
  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.metrics.status == "ok";
  if (!c.quiet) {
    std::cout << "sweep " << sweep.param << ": " << ok << "/" << rows.size() << " runs ok\n"
              << sweep_summary(rows) << "wrote " << (out / "sweep.csv").string() << "\n";
  }
  return ok > 0 ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dependency-structure identifiability experiments"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);

  Common common;
  std::string dataset_path, estimator_path, model_path, support_path, param, values, seeds;
  std::vector<std::string> splits;
  std::size_t max_union = 2;
  std::size_t jobs = 1;

  auto* gen = app.add_subcommand("gen", "Generate support.txt, model.json and dataset.csv");
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "Train an estimator on a dataset");
  add_common(train, common);
  train->add_option("--dataset", dataset_path, "dataset.csv")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate an estimator against the ground truth");
  add_common(eval, common);
  eval->add_option("--estimator", estimator_path, "estimator.json")->required();
  eval->add_option("--dataset", dataset_path, "dataset.csv")->required();
  eval->add_option("--model", model_path, "model.json")->required();
  eval->add_option("--split", splits, "Observed split K:V with 0-based indices, e.g. 0:1,2");

  auto* check = app.add_subcommand("check", "Check structural assumptions and certify atomic regions");
  add_common(check, common);
  check->add_option("--support", support_path, "support.txt")->required();
  check->add_option("--model", model_path, "model.json (enables the nonlinearity check)");
  check->add_option("--dataset", dataset_path, "dataset.csv (enables the nonlinearity check)");
  check->add_option("--max-union", max_union, "Largest observed group tried in certificates")
      ->check(CLI::Range(1, 64));

  auto* sweep = app.add_subcommand("sweep", "Run gen/train/eval over parameter values and seeds");
  add_common(sweep, common);
  sweep->add_option("--param", param, "alpha | d_z | noise_std | pattern");
  sweep->add_option("--values", values, "Comma-separated values");
  sweep->add_option("--seeds", seeds, "Comma-separated seeds");
  sweep->add_option("--jobs", jobs, "Worker threads")->check(CLI::Range(1, 256));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen(common);
    if (*train) return cmd_train(common, dataset_path);
    if (*eval) return cmd_eval(common, estimator_path, dataset_path, model_path, splits);
    if (*check) return cmd_check(common, support_path, model_path, dataset_path, max_union);
    if (*sweep) return cmd_sweep(common, param, values, seeds, jobs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const GenerationError& e) {
    std::cerr << "generation failed: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
