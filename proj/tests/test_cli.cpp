#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "ddl/io.hpp"
#include "ddl/trainer.hpp"

namespace fs = std::filesystem;
using namespace ddl;

namespace {

struct Run {
  int code{-1};
  std::string out;
};

Run ddl_run(const std::string& args) {
  const std::string cmd = std::string(DDL_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("ddl_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string put(const std::string& file, const std::string& text) const {
    std::ofstream(dir / file) << text;
    return (dir / file).string();
  }
  std::string p(const std::string& rel) const { return (dir / rel).string(); }
};

std::string slurp(const std::string& path) { return read_file(path); }

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("gen writes the three files deterministically") {
  Scratch s("gen");
  const auto cfg = s.put("c.json", R"({"dataset": {"n": 50}})");
  auto r = ddl_run("gen --config " + cfg + " --out " + s.p("a") + " --seed 4");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("element-wise identifiability predicted: yes") != std::string::npos);
  // Provenance records the output directory, so the rerun targets the same one.
  fs::rename(s.p("a"), s.p("first"));
  REQUIRE(ddl_run("gen --config " + cfg + " --out " + s.p("a") + " --seed 4 --quiet").code == 0);
  for (const char* f : {"support.txt", "model.json", "dataset.csv"})
    CHECK(slurp(s.p(std::string("a/") + f)) == slurp(s.p(std::string("first/") + f)));
  CHECK(lines(slurp(s.p("a/dataset.csv"))) == 51);
  const auto model = json::parse(slurp(s.p("a/model.json")));
  CHECK(model.at("provenance").at("seed") == 4);
  CHECK(model.at("provenance").contains("experiment_config"));

  const auto dense = s.put("d.json", R"({"support": {"pattern": "dense"}, "dataset": {"n": 20}})");
  REQUIRE(ddl_run("gen --quiet --config " + dense + " --out " + s.p("d")).code == 0);
  CHECK(slurp(s.p("d/support.txt")) == "3 3\n111\n111\n111\n");
}

TEST_CASE("default gen produces 10000 rows") {
  Scratch s("gen_default");
  REQUIRE(ddl_run("gen --quiet --out " + s.p("o")).code == 0);
  CHECK(lines(slurp(s.p("o/dataset.csv"))) == 10001);
}

TEST_CASE("exit codes") {
  Scratch s("codes");
  CHECK(ddl_run("gen --config " + s.put("bad.json", R"({"estimator": {"alpah": 1}})") + " --out " + s.p("o")).code == 2);
  CHECK(ddl_run("gen --config " + s.put("broken.json", "{") + " --out " + s.p("o")).code == 2);
  CHECK(ddl_run("gen --config " + s.p("missing.json")).code == 2);
  CHECK(ddl_run("frobnicate").code == 2);
  const auto hopeless =
      s.put("h.json", R"({"support": {"d_z": 12, "density": 0.01}, "dataset": {"n": 20}})");
  CHECK(ddl_run("gen --config " + hopeless + " --out " + s.p("o")).code == 3);
  CHECK(ddl_run("check --support " + s.put("s.txt", "2 2\n10\n0x\n")).code == 2);
}

TEST_CASE("train and eval round-trip with dimension checks") {
  Scratch s("train");
  const auto cfg = s.put("c.json", R"({"dataset": {"n": 300}, "estimator": {"epochs": 3, "support_slice": 100},
                                        "evaluation": {"r2_max_fit": 100, "r2_max_test": 100}})");
  REQUIRE(ddl_run("gen --quiet --config " + cfg + " --out " + s.p("g")).code == 0);
  auto r = ddl_run("train --config " + cfg + " --dataset " + s.p("g/dataset.csv") + " --out " + s.p("t"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("empirical support") != std::string::npos);
  CHECK(lines(slurp(s.p("t/train_log.csv"))) == 4);
  const auto first = slurp(s.p("t/estimator.json"));
  REQUIRE(ddl_run("train --quiet --config " + cfg + " --dataset " + s.p("g/dataset.csv") + " --out " + s.p("t")).code == 0);
  CHECK(slurp(s.p("t/estimator.json")) == first);

  r = ddl_run("eval --config " + cfg + " --estimator " + s.p("t/estimator.json") + " --dataset " + s.p("g/dataset.csv") +
              " --model " + s.p("g/model.json") + " --split 0:1,2 --split 1:2 --out " + s.p("e"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("MCC (spearman-abs)") != std::string::npos);
  const auto rep = json::parse(slurp(s.p("e/report.json")));
  CHECK(rep.at("r2").size() == 2);
  CHECK(rep.contains("provenance"));

  const auto wide = s.put("w.json", R"({"support": {"d_x": 4, "d_z": 3}, "dataset": {"n": 50}, "estimator": {"epochs": 1}})");
  CHECK(ddl_run("train --config " + wide + " --dataset " + s.p("g/dataset.csv") + " --out " + s.p("x")).code == 2);
  CHECK(ddl_run("eval --estimator " + s.p("t/estimator.json") + " --dataset " + s.p("g/dataset.csv") + " --model " +
                s.p("g/model.json") + " --split 0:7 --out " + s.p("x"))
            .code == 2);
}

TEST_CASE("eval on an exact inverse prints MCC 1.000 and SHD 0") {
  Scratch s("oracle");
  const auto cfg = s.put("c.json", R"({"support": {"pattern": "custom", "file": ")" + s.put("id.txt", "3 3\n100\n010\n001\n") +
                                       R"("}, "ground_truth": {"depth": 0}, "dataset": {"n": 400},
                                       "evaluation": {"r2_max_fit": 100, "r2_max_test": 100}})");
  REQUIRE(ddl_run("gen --quiet --config " + cfg + " --out " + s.p("g")).code == 0);
  const auto model = model_from_json(json::parse(slurp(s.p("g/model.json"))));

  // Each output is a x_i = a_i z_i + b_i; the estimator inverts it exactly.
  TrainedEstimator est;
  est.config.mode = EstimatorMode::AE;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  Eigen::VectorXd b(3);
  for (int i = 0; i < 3; ++i) {
    a(i, i) = model.outputs[static_cast<std::size_t>(i)].layers[0].weight(0, 0);
    b(i) = model.outputs[static_cast<std::size_t>(i)].layers[0].bias(0);
  }
  est.encoder.layers.push_back({a.inverse(), -(a.inverse() * b)});
  est.decoder.layers.push_back({a, b});
  est.empirical_support = SupportMatrix::identity(3);
  est.history.push_back({});
  std::ofstream(s.p("oracle.json")) << estimator_to_json(est).dump();

  const auto r = ddl_run("eval --config " + cfg + " --estimator " + s.p("oracle.json") + " --dataset " +
                         s.p("g/dataset.csv") + " --model " + s.p("g/model.json") + " --out " + s.p("e"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("MCC (spearman-abs) 1.000") != std::string::npos);
  CHECK(r.out.find("SHD 0") != std::string::npos);
}

TEST_CASE("check on the three-set family, dense and identity supports") {
  Scratch s("check");
  auto r = ddl_run("check --support " + s.put("fam.txt", "3 7\n1111000\n0110110\n0011011\n") + " --out " + s.p("f"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("atomic regions: 7, certified 7") != std::string::npos);
  const auto j = json::parse(slurp(s.p("f/check.json")));
  CHECK(j.at("format") == "ddl-check");
  CHECK(j.at("regions").size() == 7);

  REQUIRE(ddl_run("check --quiet --support " + s.put("dense.txt", "3 3\n111\n111\n111\n") + " --out " + s.p("d")).code == 0);
  const auto d = json::parse(slurp(s.p("d/check.json")));
  CHECK(d.at("element_identifiability_predicted") == false);
  for (const auto& v : d.at("diversity")) CHECK(v.at("satisfied") == false);

  REQUIRE(ddl_run("check --quiet --support " + s.put("id.txt", "3 3\n100\n010\n001\n") + " --out " + s.p("i")).code == 0);
  const auto id = json::parse(slurp(s.p("i/check.json")));
  for (const auto& v : id.at("diversity")) CHECK(v.at("clause") == 3);
}

TEST_CASE("sweep matches the manual chain and writes the spec columns") {
  Scratch s("sweep");
  const auto cfg = s.put("c.json", R"({"dataset": {"n": 300}, "estimator": {"epochs": 2, "support_slice": 100},
                                        "evaluation": {"r2_max_fit": 100, "r2_max_test": 100}})");
  auto r = ddl_run("sweep --config " + cfg + " --param alpha --values 0.05 --seeds 2 --out " + s.p("sw"));
  REQUIRE(r.code == 0);
  const auto csv = slurp(s.p("sw/sweep.csv"));
  CHECK(csv.rfind("param,value,seed,status,mcc_spearman,mcc_pearson,shd,r2_int,r2_symdiff,r2_compA,r2_compB,r2_ref,"
                  "final_recon,final_penalty\n",
                  0) == 0);
  CHECK(lines(csv) == 2);

  REQUIRE(ddl_run("gen --quiet --config " + cfg + " --seed 2 --out " + s.p("g")).code == 0);
  REQUIRE(ddl_run("train --quiet --config " + cfg + " --seed 2 --dataset " + s.p("g/dataset.csv") + " --out " + s.p("t")).code == 0);
  REQUIRE(ddl_run("eval --quiet --config " + cfg + " --estimator " + s.p("t/estimator.json") + " --dataset " +
                  s.p("g/dataset.csv") + " --model " + s.p("g/model.json") + " --out " + s.p("e"))
              .code == 0);
  const auto rep = json::parse(slurp(s.p("e/report.json")));
  std::stringstream row(csv.substr(csv.find('\n') + 1));
  std::vector<std::string> fields;
  std::string f;
  while (std::getline(row, f, ',')) fields.push_back(f);
  REQUIRE(fields.size() >= 7);
  CHECK(fields[3] == "ok");
  CHECK(std::stod(fields[4]) == rep.at("mcc").at("score").get<double>());
  CHECK(std::stoul(fields[6]) == rep.at("shd").get<std::size_t>());

  const auto hopeless =
      s.put("h.json", R"({"support": {"d_z": 12, "density": 0.01}, "dataset": {"n": 20}})");
  CHECK(ddl_run("sweep --quiet --config " + hopeless + " --param alpha --values 0 --seeds 1 --out " + s.p("h")).code == 4);
}
