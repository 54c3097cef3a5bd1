#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "doctest.h"

#include "bpre/config.hpp"
#include "bpre/error.hpp"
#include "bpre/experiments.hpp"
#include "bpre/io.hpp"

using namespace bpre;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bpre_test_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small(const std::string& experiment, const fs::path& out) {
  ExperimentConfig cfg;
  cfg.set("run.experiment", experiment);
  cfg.set("run.output", out.string());
  cfg.set("run.replicas", "5");
  cfg.set("model.n", "20");
  cfg.set("model.horizon", "0.25");
  cfg.set("model.substeps", "4");
  return cfg;
}

const ReportRow* find_row(const RunResult& res, const std::string& name) {
  for (const auto& r : res.rows) {
    if (r.statistic == name) return &r;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("config: defaults, parsing and exact round trip") {
  const ExperimentConfig def;
  CHECK(def.experiment() == "simulate");
  CHECK(def.seed() == 1);

  const auto cfg = ExperimentConfig::parse(
      "# comment\n"
      "run.experiment = moments\n"
      "model.horizon = 0.250\n"
      "kernel.kappa_scale = 1e-1\n"
      "  run.seed=18446744073709551615  \n");
  CHECK(cfg.experiment() == "moments");
  CHECK(cfg.get("model.horizon") == "0.250");
  CHECK(cfg.decimal("kernel.kappa_scale") == 0.1);
  CHECK(cfg.seed() == 18446744073709551615ull);

  const std::string text = cfg.serialize();
  const auto again = ExperimentConfig::parse(text);
  CHECK(again == cfg);
  CHECK(again.serialize() == text);
  CHECK(again.hash() == cfg.hash());
  CHECK(ExperimentConfig::keys().size() > 30);
}

TEST_CASE("config: errors name the key") {
  try {
    ExperimentConfig::parse("model.nn = 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "model.nn");
  }
  CHECK_THROWS_AS(ExperimentConfig::parse("model.n = 3\nmodel.n = 4\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("just words\n"), ConfigError);
  ExperimentConfig cfg;
  CHECK_THROWS_AS(cfg.set("model.n", "-2"), ConfigError);
  CHECK_THROWS_AS(cfg.set("kernel.h", "sinc"), ConfigError);
  CHECK_THROWS_AS(cfg.set("model.horizon", "0,25"), ConfigError);
  try {
    cfg.set("model.n", "3");
    cfg.set("model.horizon", "0.25");
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.horizon") != std::string::npos);
  }
  cfg.set("model.horizon", "1.0");
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("config hash is the git blob id") {
  // `printf 'hello\n' | git hash-object --stdin`
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  const ExperimentConfig cfg;
  CHECK(cfg.hash() == git_blob_hash(cfg.serialize()));
}

TEST_CASE("derive_seed: stable, collision free and order sensitive") {
  CHECK(derive_seed(5, {"replica", 3}) == derive_seed(5, {"replica", 3}));
  CHECK(derive_seed(5, {"replica", 3}) != derive_seed(6, {"replica", 3}));
  CHECK(derive_seed(5, {"a", "b"}) != derive_seed(5, {"b", "a"}));
  CHECK(derive_seed(5, {"3"}) != derive_seed(5, {3}));
  std::unordered_set<std::uint64_t> seen;
  for (std::uint64_t r = 0; r < 1000000; ++r) seen.insert(derive_seed(1, {"replica", r}));
  CHECK(seen.size() == 1000000);
}

TEST_CASE("io: number formatting and CSV quoting") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0) == "1");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_field("line\nbreak") == "\"line\nbreak\"");
}

TEST_CASE("run simulate: n = 1 without branching noise has a constant atom count") {
  const fs::path out = scratch("sim");
  ExperimentConfig cfg = small("simulate", out);
  cfg.set("model.n", "1");
  cfg.set("model.horizon", "1");
  cfg.set("run.replicas", "1");
  cfg.set("kernel.kappa", "zero");
  const RunResult res = run_experiment(cfg);
  REQUIRE(res.exit_code == kExitOk);
  CHECK(res.all_pass());
  CHECK(fs::exists(out / "metadata.json"));
  CHECK(fs::exists(out / "report.json"));
  std::ifstream in(out / "trajectory_0000.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("time,atom_count,mass", 0) == 0);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(line.substr(line.find(',') + 1, 2) == "1,");
  }
  CHECK(rows == 2);
  CHECK(!fs::exists(out / "trajectory_0001.csv"));
  fs::remove_all(out);
}

TEST_CASE("run moments: constant kappa reports exp(t)") {
  const fs::path out = scratch("mom");
  ExperimentConfig cfg = small("moments", out);
  cfg.set("model.n", "100");
  cfg.set("run.replicas", "40");
  cfg.set("kernel.kappa", "const");
  cfg.set("moments.jump_replicas", "200");
  const RunResult res = run_experiment(cfg);
  REQUIRE(res.exit_code == kExitOk);
  const auto* closed = find_row(res, "pde_vs_closed_form");
  REQUIRE(closed != nullptr);
  CHECK(closed->value == doctest::Approx(std::exp(0.25)).epsilon(1e-3));
  CHECK(closed->pass);
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(report["schema"] == 1);
  CHECK(report["pde_value"].get<double>() == doctest::Approx(1.28403).epsilon(1e-4));
  for (const char* key : {"n", "t", "f-id", "mc_value", "mc_se", "pde_value", "jump_value", "jump_se", "rel_dev"}) {
    CHECK(report.contains(key));
  }
  const double mc = report["mc_value"], se = report["mc_se"];
  CHECK(std::abs(mc - 1.28403) <= std::max(3.0 * se, 0.1 * 1.28403));
  fs::remove_all(out);
}

TEST_CASE("run: identical configs give byte-identical files, whatever the worker count") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ExperimentConfig cfg = small("simulate", a);
  cfg.set("run.workers", "1");
  const RunResult ra = run_experiment(cfg);
  cfg.set("run.output", b.string());
  cfg.set("run.workers", "3");
  const RunResult rb = run_experiment(cfg);
  REQUIRE(ra.files.size() == rb.files.size());
  for (std::size_t i = 0; i < ra.files.size(); ++i) {
    CHECK(ra.files[i].filename() == rb.files[i].filename());
    // JSON files carry the config (output path, worker count) and its hash.
    if (ra.files[i].extension() == ".json") continue;
    CHECK(slurp(ra.files[i]) == slurp(rb.files[i]));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("run: exit codes for config, numeric and budget failures") {
  const fs::path out = scratch("codes");
  ExperimentConfig cfg = small("simulate", out);
  cfg.set("model.n", "3");
  RunResult res = run_experiment(cfg);
  CHECK(res.exit_code == kExitConfig);
  CHECK(res.message.find("model.horizon") != std::string::npos);

  cfg = small("mild", out);
  cfg.set("kernel.h_scale", "0.01");
  cfg.set("mild.nodes", "17");
  cfg.set("mild.paths", "1000");
  cfg.set("run.replicas", "1");
  res = run_experiment(cfg);
  CHECK(res.exit_code == kExitNumeric);
  CHECK(res.message.find("exit rate") != std::string::npos);

  cfg = small("simulate", out);
  cfg.set("kernel.kappa", "const");
  cfg.set("kernel.kappa_amplitude", "1000000");
  cfg.set("model.max_particles", "25");
  res = run_experiment(cfg);
  CHECK(res.exit_code == kExitBudget);
  fs::remove_all(out);
}

TEST_CASE("run validate: the invariant suite passes") {
  const fs::path out = scratch("validate");
  const RunResult res = run_experiment(small("validate", out));
  for (const auto& r : res.rows) CHECK_MESSAGE(r.pass, r.statistic);
  CHECK(res.exit_code == kExitOk);
  CHECK(res.rows.size() > 20);
  fs::remove_all(out);
}
