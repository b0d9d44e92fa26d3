#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pasm/decomposition.hpp"
#include "pasm/fem.hpp"
#include "pasm/subsolver.hpp"

namespace pasm {

struct SchwarzConfig {
  std::shared_ptr<const ProblemData> data;
  std::shared_ptr<const Decomposition> dec;
  /// Relaxation; 0 selects tau0 = 1 / (colors + 1).
  double tau = 0.0;
  std::optional<Obstacle> obstacle;
  int outer_iters = 200;
  FistaConfig fista;
  /// Defaults to 0, or to max(psi, 0) when an obstacle is present.
  std::optional<FeFunction> u0;
  /// Stop once the energy error drops below this; 0 runs all iterations.
  double error_floor = 1e-8;
  bool serial = false;
  /// Worker threads for the subproblem batch; 0 uses the hardware count.
  int threads = 0;

  double effective_tau() const;
  FeFunction initial_iterate() const;
  /// Throws std::invalid_argument on a bad configuration.
  void validate() const;
};

/// Raised when an iterate leaves the obstacle set or the energy increases.
class InvariantViolation : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RateFit {
  double rho = 1.0;
  double r_squared = 1.0;
  double slope = 0.0;
  int points = 0;
};

struct ConvergenceRecord {
  std::vector<double> energies;
  std::vector<double> errors;
  std::vector<double> walltimes;
  double reference_energy = 0.0;
  RateFit fit;
  std::vector<std::pair<std::string, std::string>> metadata;
  /// Largest FISTA iteration count and number of solves that hit max_iters.
  int max_subsolver_iterations = 0;
  int unconverged_solves = 0;
  std::optional<FeFunction> final_iterate;
};

/// Called with (n, u^(n)) for every iterate, u^(0) included.
using IterateObserver = std::function<void(int, const FeFunction&)>;

/// Two-level additive Schwarz iteration, constrained when cfg.obstacle is set.
ConvergenceRecord run_asm(const SchwarzConfig& cfg, double reference_energy,
                          const IterateObserver& observer = {});

/// Least-squares fit of log10(error) against n over the last tail_fraction of
/// the iterations whose error exceeds floor. rho = 10^slope.
RateFit estimate_rate(std::span<const double> errors, double tail_fraction, double floor = 1e-8);

double theoretical_rate(double p, double tau, double mu_phi, double C0, bool constrained);

/// Unscaled sublinear decay shape (H/delta)^{p_lower} / (n+1)^{e} with
/// e = p_upper (p_lower - 1) / (p_upper - p_lower). Undefined for p = 2.
double sublinear_bound(int n, double p, double H, double delta);

void write_csv(const ConvergenceRecord& rec, std::ostream& out, bool timing = true);
ConvergenceRecord read_csv(std::istream& in);

} // namespace pasm
