#include <doctest.h>

#include "ddl/errors.hpp"
#include "ddl/experiment.hpp"

using namespace ddl;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.dataset.n = 400;
  c.estimator.epochs = 3;
  c.estimator.batch_size = 64;
  c.estimator.support_slice = 200;
  c.evaluation.r2.max_fit = 200;
  c.evaluation.r2.max_test = 200;
  c.evaluation.nonlinearity_samples = 100;
  return c;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  REQUIRE(c.splits.empty());

  const auto parsed = config_from_json(json::object());
  CHECK(parsed.support.d_x == 3);
  REQUIRE(parsed.splits.size() == 1);
  CHECK(parsed.splits[0].k == ObsSet{0});
  CHECK(parsed.splits[0].v == ObsSet{1, 2});

  const auto d4 = config_from_json(json::parse(R"({"support": {"d_z": 4}})"));
  CHECK(d4.support.d_x == 4);
  CHECK(d4.estimator.d_z == 4);

  CHECK_THROWS_AS(config_from_json(json::parse(R"({"suport": {}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"estimator": {"alpah": 0.1}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"support": {"pattern": "banded"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"support": {"d_x": 2, "d_z": 3}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"support": {"d_z": 3}, "estimator": {"d_z": 4}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"support": {"d_x": "three"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"sweep": {"param": "width", "values": [1]}})")), ConfigError);
}

TEST_CASE("config json round-trip") {
  auto c = tiny();
  c.support.d_x = 4;
  c.support.d_z = 3;
  c.estimator.d_z = 3;
  c.estimator.alpha = 0.01;
  c.estimator.decoder_layout = DecoderLayout::Shared;
  c.dataset.noise_std = 0.05;
  c.dataset.noise_relative = true;
  c.splits = {{ObsSet{0, 1}, ObsSet{2}}};
  c.seeds = {3, 4};
  c.sweep = SweepSpec{"alpha", {0.0, 0.05}};
  const auto back = config_from_json(json::parse(config_to_json(c).dump()));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(back.estimator == c.estimator);
  CHECK(back.splits == c.splits);
  CHECK(back.seeds == c.seeds);
}

TEST_CASE("apply_sweep_value") {
  const auto base = tiny();
  CHECK(apply_sweep_value(base, "alpha", 0.2).estimator.alpha == 0.2);
  const auto d5 = apply_sweep_value(base, "d_z", 5);
  CHECK(d5.support.d_x == 5);
  CHECK(d5.estimator.d_z == 5);
  CHECK(d5.splits[0].v == ObsSet{1, 2, 3, 4});
  CHECK(apply_sweep_value(base, "pattern", "dense").support.pattern == SupportPattern::Dense);
  CHECK(apply_sweep_value(base, "noise_std", 0.1).dataset.noise_std == 0.1);
  CHECK_THROWS_AS(apply_sweep_value(base, "alpha", "big"), ConfigError);
  CHECK_THROWS_AS(apply_sweep_value(base, "noise_std", -1.0), ConfigError);
  CHECK_THROWS_AS(apply_sweep_value(base, "epochs", 3), ConfigError);
  CHECK(value_label(json("dense")) == "dense");
  CHECK(value_label(json(0.05)) == "0.05");
}

TEST_CASE("pipeline pieces agree with run_pipeline") {
  const auto cfg = tiny();
  const auto gen = run_gen(cfg, 2);
  CHECK(gen.dataset.size() == 400);
  CHECK(gen.model.support == gen.support);
  const auto est = run_train(cfg, gen.dataset, 2);
  CHECK(est.config.seed == 2);
  const auto rep = run_eval(cfg, est, gen.dataset, gen.model);
  const auto manual = metrics_from(rep, est);
  const auto piped = run_pipeline(cfg, 2);
  CHECK(piped.status == "ok");
  CHECK(piped.mcc_spearman == manual.mcc_spearman);
  CHECK(piped.shd == manual.shd);
  CHECK(piped.final_recon == manual.final_recon);
  CHECK(piped.diversity_predicted);

  auto bad = cfg;
  bad.support.d_x = 4;
  CHECK_THROWS_AS(run_train(bad, gen.dataset, 2), ConfigError);
}

TEST_CASE("sweep rows are ordered and independent of the worker count") {
  const auto cfg = tiny();
  const SweepSpec sweep{"alpha", {0.0, 0.05}};
  const auto serial = run_sweep(cfg, sweep, {1, 2}, 1);
  const auto parallel = run_sweep(cfg, sweep, {1, 2}, 4);
  REQUIRE(serial.size() == 4);
  REQUIRE(parallel.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(serial[i].value == parallel[i].value);
    CHECK(serial[i].seed == parallel[i].seed);
    CHECK(serial[i].metrics.mcc_spearman == parallel[i].metrics.mcc_spearman);
    CHECK(serial[i].metrics.final_penalty == parallel[i].metrics.final_penalty);
  }
  CHECK(serial[0].value == "0.0");
  CHECK(serial[1].seed == 2);
  CHECK(serial[2].value == "0.05");

  const auto one = run_pipeline(apply_sweep_value(cfg, "alpha", 0.05), 2);
  CHECK(one.mcc_spearman == serial[3].metrics.mcc_spearman);

  const auto csv = sweep_csv(serial);
  CHECK(csv.rfind("param,value,seed,status,mcc_spearman,mcc_pearson,shd,r2_int,r2_symdiff,r2_compA,r2_compB,r2_ref,"
                  "final_recon,final_penalty\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(sweep_summary(serial).find("0.05") != std::string::npos);
}

TEST_CASE("failed runs keep their status and blank metrics") {
  auto cfg = tiny();
  cfg.support.density = 0.01;
  cfg.support.d_x = 12;
  cfg.support.d_z = 12;
  cfg.estimator.d_z = 12;
  const auto m = run_pipeline(cfg, 1);
  CHECK(m.status != "ok");
  const auto csv = sweep_csv({SweepRow{"alpha", "0.05", 1, m}});
  CHECK(csv.find(",,,,,,,,,") != std::string::npos);
}
