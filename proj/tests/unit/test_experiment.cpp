#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "pasm/experiment.hpp"
#include "pasm/schwarz.hpp"

using namespace pasm;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on scope exit.
struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("pasm_test_" + std::to_string(::getpid()) + "_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small_run(const ScratchDir& dir) {
  ExperimentConfig cfg;
  cfg.p = 4.0;
  cfg.h_inv = 8;
  cfg.H_inv = 2;
  cfg.iters = 40;
  cfg.budget = 3000;
  cfg.cache_dir = dir.file("cache");
  cfg.out = dir.file("run.csv");
  return cfg;
}

} // namespace

TEST_CASE("configuration entries parse and reject bad input") {
  ExperimentConfig cfg;
  apply_config_entry(cfg, "p", "3.5");
  apply_config_entry(cfg, "h-inv", "64");
  apply_config_entry(cfg, "H-inv", "8");
  apply_config_entry(cfg, "delta-layers", "2");
  apply_config_entry(cfg, "obstacle", "true");
  apply_config_entry(cfg, "no-timing", "true");
  apply_config_entry(cfg, "seed", "123");
  apply_config_entry(cfg, "cache-dir", "");
  CHECK(cfg.p == 3.5);
  CHECK(cfg.h_inv == 64);
  CHECK(cfg.H_inv == 8);
  CHECK(cfg.delta_layers == 2);
  CHECK(cfg.obstacle);
  CHECK_FALSE(cfg.timing);
  CHECK(cfg.seed == 123);
  CHECK(cfg.cache_dir.empty());
  CHECK_NOTHROW(cfg.validate());

  CHECK_THROWS_AS(apply_config_entry(cfg, "bogus", "1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_config_entry(cfg, "p", "four"), std::invalid_argument);
  CHECK_THROWS_AS(apply_config_entry(cfg, "h-inv", "3.5"), std::invalid_argument);
  CHECK_THROWS_AS(apply_config_entry(cfg, "obstacle", "maybe"), std::invalid_argument);
}

TEST_CASE("configuration validation") {
  ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.h_inv = 30;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ExperimentConfig{};
  cfg.delta_layers = 5;  // H/h = 8 allows at most 4 layers
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.delta_layers = 4;
  CHECK_NOTHROW(cfg.validate());
  cfg = ExperimentConfig{};
  cfg.p = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ExperimentConfig{};
  cfg.samples = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("configuration files use the flag names") {
  ScratchDir dir("config");
  {
    std::ofstream out(dir.file("run.cfg"));
    out << "# comment\n\np = 3\nH-inv=2\nh-inv = 16\n";
  }
  ExperimentConfig cfg;
  load_config_file(cfg, dir.file("run.cfg"));
  CHECK(cfg.p == 3.0);
  CHECK(cfg.H_inv == 2);
  CHECK(cfg.h_inv == 16);
  {
    std::ofstream out(dir.file("bad.cfg"));
    out << "p 3\n";
  }
  CHECK_THROWS_AS(load_config_file(cfg, dir.file("bad.cfg")), std::invalid_argument);
  CHECK_THROWS_AS(load_config_file(cfg, dir.file("missing.cfg")), std::invalid_argument);
}

TEST_CASE("FNV-1a test vectors") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("sweep preset covers the desk grid") {
  const auto runs = sweep_preset("fig1-desk", ExperimentConfig{}, "out");
  REQUIRE(runs.size() == 12);
  int count_H2 = 0;
  for (const auto& r : runs) {
    CHECK_NOTHROW(r.validate());
    CHECK((r.h_inv / r.H_inv == 8 || r.h_inv / r.H_inv == 16));
    CHECK((r.delta_layers == 1 || r.delta_layers == 2 || r.delta_layers == 4));
    CHECK(fs::path(r.out).parent_path() == "out");
    count_H2 += r.H_inv == 2;
  }
  CHECK(count_H2 == 6);
  CHECK(fs::path(runs.front().out).filename() == "fig1-desk_H2_Hh8_d1.csv");
  CHECK_THROWS_AS(sweep_preset("nope", ExperimentConfig{}, "out"), std::invalid_argument);
}

TEST_CASE("cached references are exact") {
  ScratchDir dir("cache");
  ExperimentConfig cfg = small_run(dir);
  const auto data = make_problem(cfg);
  const ReferenceSolution first = cached_reference(*data, nullptr, "", cfg.budget, cfg.cache_dir);
  int files = 0;
  for (const auto& entry : fs::directory_iterator(cfg.cache_dir)) {
    ++files;
    CHECK(entry.path().filename().string().rfind("ref_", 0) == 0);
  }
  CHECK(files == 1);
  const ReferenceSolution second = cached_reference(*data, nullptr, "", cfg.budget, cfg.cache_dir);
  CHECK(second.energy == first.energy);
  CHECK(second.iterations == first.iterations);
  for (int d = 0; d < first.u.size(); ++d) CHECK(second.u[d] == first.u[d]);
  // A different budget is a different key.
  (void)cached_reference(*data, nullptr, "", cfg.budget + 1, cfg.cache_dir);
  files = 0;
  for ([[maybe_unused]] const auto& entry : fs::directory_iterator(cfg.cache_dir)) ++files;
  CHECK(files == 2);
}

TEST_CASE("run writes a convergence CSV and reruns are identical") {
  ScratchDir dir("run");
  ExperimentConfig cfg = small_run(dir);
  cfg.timing = false;
  cfg.serial = true;
  std::ostringstream log;
  REQUIRE(cmd_run(cfg, log) == kExitOk);
  const std::string first = slurp(cfg.out);
  REQUIRE(cmd_run(cfg, log) == kExitOk);
  CHECK(slurp(cfg.out) == first);
  CHECK(first.find("# p=4") != std::string::npos);
  CHECK(first.find("iter,energy,energy_error,walltime_s") != std::string::npos);

  cfg.serial = false;
  cfg.out = dir.file("parallel.csv");
  REQUIRE(cmd_run(cfg, log) == kExitOk);
  // Metadata may differ only in the serial flag line, the data rows are identical.
  const std::string parallel = slurp(cfg.out);
  CHECK(parallel.substr(parallel.find("iter,energy")) == first.substr(first.find("iter,energy")));
}

TEST_CASE("exit codes") {
  ScratchDir dir("codes");
  std::ostringstream log;
  ExperimentConfig bad = small_run(dir);
  bad.h_inv = 30;
  bad.H_inv = 4;
  CHECK(cmd_run(bad, log) == kExitInvalidConfig);

  ExperimentConfig verify;
  verify.p = 2.0;
  verify.samples = 50;
  verify.bl_samples = 500;
  verify.out = dir.file("verify.csv");
  CHECK(cmd_verify(verify, log) == kExitOk);
  verify.phi_fault = 0.9;
  CHECK(cmd_verify(verify, log) == kExitViolation);

  ExperimentConfig failing = small_run(dir);
  failing.f = 1e308;
  failing.cache_dir = "";
  const int code = cmd_run(failing, log);
  CHECK(code == kExitSubsolverFailure);

  ExperimentConfig rates;
  CHECK(cmd_rates(rates, log) == kExitInvalidConfig);
}

TEST_CASE("rates compares a recorded run with the bound") {
  ScratchDir dir("rates");
  std::ostringstream log;
  ExperimentConfig verify;
  verify.p = 2.0;
  verify.samples = 50;
  verify.bl_samples = 500;
  verify.out = dir.file("verify.csv");
  REQUIRE(cmd_verify(verify, log) == kExitOk);

  // Synthetic geometric history with the metadata of an H = 1/2, h = 1/8 run.
  ConvergenceRecord rec;
  rec.metadata = {{"p", "2"}, {"f", "1"}, {"h_inv", "8"}, {"H_inv", "2"},
                  {"delta_layers", "1"}, {"tau", "0.2"}, {"obstacle", "off"}};
  for (int n = 0; n < 30; ++n) {
    rec.errors.push_back(std::pow(0.5, n));
    rec.energies.push_back(rec.errors.back());
    rec.walltimes.push_back(0.0);
  }
  {
    std::ofstream out(dir.file("fast.csv"));
    write_csv(rec, out);
  }
  ExperimentConfig rates;
  rates.run_csv = dir.file("fast.csv");
  rates.report_csv = verify.out;
  rates.c0_samples = 20;
  rates.out = dir.file("overlay.csv");
  CHECK(cmd_rates(rates, log) == kExitOk);
  CHECK(log.str().find("observed rho 0.5") != std::string::npos);
  CHECK(log.str().find("sublinear overlay skipped") != std::string::npos);
  const std::string overlay = slurp(rates.out);
  CHECK(overlay.find("iter,energy_error,linear_bound\n") != std::string::npos);

  // A history slower than any admissible bound is flagged.
  for (int n = 0; n < 30; ++n) rec.errors[n] = std::pow(0.9999999, n);
  {
    std::ofstream out(dir.file("slow.csv"));
    write_csv(rec, out);
  }
  rates.run_csv = dir.file("slow.csv");
  CHECK(cmd_rates(rates, log) == kExitViolation);
}
