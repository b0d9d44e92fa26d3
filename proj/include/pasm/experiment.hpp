#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pasm/decomposition.hpp"
#include "pasm/fem.hpp"
#include "pasm/subsolver.hpp"

namespace pasm {

/// Exit codes shared by the command-line tools.
enum ExitCode : int {
  kExitOk = 0,
  kExitInvalidConfig = 2,
  kExitSubsolverFailure = 3,
  kExitViolation = 4,
};

/// Everything a run, verification, rate comparison, or sweep needs. Field
/// names mirror the command-line flags (dashes become underscores).
struct ExperimentConfig {
  double p = 4.0;
  double f = 1.0;
  int h_inv = 32;
  int H_inv = 4;
  int delta_layers = 1;
  /// 0 selects tau0.
  double tau = 0.0;
  int iters = 200;
  bool obstacle = false;
  double obstacle_height = 0.3;
  double obstacle_radius = 0.25;
  std::uint64_t seed = 1;
  bool serial = false;
  int threads = 0;
  std::string out;
  int budget = 20000;
  std::string cache_dir = ".pasm-cache";
  bool timing = true;
  double error_floor = 1e-8;
  double fista_tol = 1e-10;
  int fista_max_iters = 20000;

  int samples = 1000;
  int bl_samples = 100000;
  int verify_h_inv = 8;
  double amplitude = 1.0;
  double phi_fault = 1.0;

  std::string run_csv;
  std::string report_csv;
  int c0_samples = 200;

  std::string preset = "fig1-desk";

  /// Throws std::invalid_argument when the geometry or parameters are unusable.
  void validate() const;
  FistaConfig fista() const;
};

/// Applies one `key=value` entry (keys as on the command line, without the
/// leading dashes). Throws std::invalid_argument on unknown keys or values.
void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Reads a flat key=value file; blank lines and `#` comments are ignored.
void load_config_file(ExperimentConfig& cfg, const std::string& path);

std::shared_ptr<const ProblemData> make_problem(const ExperimentConfig& cfg);
std::shared_ptr<const Decomposition> make_decomposition(const ExperimentConfig& cfg);
/// Disk obstacle centered in the unit square.
Obstacle make_obstacle(const ExperimentConfig& cfg, const Mesh& mesh);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

/// Reference solution for (mesh, p, f, obstacle, budget), read from or stored
/// into cache_dir when it is non-empty. Stored values are exact (hexfloat).
ReferenceSolution cached_reference(const ProblemData& data, const Obstacle* obstacle,
                                   const std::string& obstacle_key, int budget,
                                   const std::string& cache_dir);

/// The configurations of a named sweep preset, each with its own output path
/// inside out_dir. Only "fig1-desk" exists.
std::vector<ExperimentConfig> sweep_preset(const std::string& name, const ExperimentConfig& base,
                                           const std::string& out_dir);

int cmd_run(const ExperimentConfig& cfg, std::ostream& log);
int cmd_verify(const ExperimentConfig& cfg, std::ostream& log);
int cmd_rates(const ExperimentConfig& cfg, std::ostream& log);
int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);

} // namespace pasm
