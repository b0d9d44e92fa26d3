#pragma once

#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pasm/decomposition.hpp"
#include "pasm/fem.hpp"
#include "pasm/mesh.hpp"

namespace pasm {

struct FistaConfig {
  /// Initial step 1/L. Zero means: estimate L by power iteration on the p = 2
  /// stiffness of the space.
  double initial_step = 0.0;
  double backtrack_factor = 0.5;
  /// Stop when scale * ||w_{j+1} - w_j|| < tol (scale = h, or H on the coarse
  /// space). tol = 0 runs the full budget.
  double tol = 1e-10;
  int max_iters = 20000;
  bool restart = true;
  /// Record the objective after every iteration.
  bool keep_trace = false;

  void validate() const;
};

struct FistaReport {
  int iterations = 0;
  bool converged = false;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int restarts = 0;
  int backtracks = 0;
  /// Largest f(x_{j+1}) - (majorizer at the accepted step) over accepted
  /// steps; nonpositive up to the rounding slack.
  double max_majorization_gap = -std::numeric_limits<double>::infinity();
  /// Norm of L (x - proj(x - grad f(x) / L)) at the returned point.
  double gradient_map_norm = 0.0;
  std::vector<double> trace;
};

/// Which space a subproblem lives in.
struct SpaceRef {
  enum class Kind { Full, Local, Coarse };
  Kind kind = Kind::Full;
  int index = -1;

  static SpaceRef full() { return {Kind::Full, -1}; }
  static SpaceRef local(int k) { return {Kind::Local, k}; }
  static SpaceRef coarse() { return {Kind::Coarse, -1}; }
  /// Subdomain id used in diagnostics: 0 for the coarse space, k + 1 for
  /// local space k, -1 for the full space.
  int id() const;
};

class SubsolverError : public std::runtime_error {
public:
  SubsolverError(int subdomain, const std::string& what)
      : std::runtime_error(what), subdomain_(subdomain) {}
  int subdomain() const { return subdomain_; }

private:
  int subdomain_;
};

/// Fixed structure of one space: the fine triangles the variables touch and,
/// per triangle, the gradient contributed by each variable. Built once and
/// reused across outer iterations.
class SpaceOperator {
public:
  /// dec may be null for the full space.
  SpaceOperator(const ProblemData& data, const Decomposition* dec, SpaceRef space);

  const ProblemData& data() const { return *data_; }
  SpaceRef space() const { return space_; }
  int size() const { return size_; }
  /// h for local and full spaces, H for the coarse space.
  double stop_scale() const { return stop_scale_; }
  /// Largest eigenvalue of the p = 2 stiffness on this space (power iteration).
  double stiffness_bound() const { return stiffness_bound_; }
  /// Fine dofs touched by the variables with their weights (one column of the
  /// extension operator per variable, in CSR form).
  void add_extension(std::span<const double> w, double scale, std::span<double> global) const;
  /// Lower bound on the variables that keeps base + extension above psi.
  std::vector<double> lower_bound(const FeFunction& base, const Obstacle& obstacle) const;

private:
  friend class SpaceObjective;

  struct Term {
    int var;
    Vec2 grad;
  };

  const ProblemData* data_;
  SpaceRef space_;
  int size_ = 0;
  double stop_scale_ = 0.0;
  double stiffness_bound_ = 0.0;
  std::vector<int> elements_;
  std::vector<int> term_start_;
  std::vector<Term> terms_;
  std::vector<double> load_;
  std::vector<int> ext_start_;
  std::vector<int> ext_dof_;
  std::vector<double> ext_weight_;
  // For each variable, the fine dofs whose increment it can lower; used for
  // the coarse lower bound.
  std::vector<std::vector<int>> support_;
};

/// w -> F(base + E w) - F(base), evaluated over the triangles of the space only.
class SpaceObjective {
public:
  SpaceObjective(const SpaceOperator& op, const FeFunction& base);

  int size() const { return op_->size(); }
  double value(std::span<const double> w) const;
  double value_and_gradient(std::span<const double> w, std::span<double> grad) const;
  /// Sum of |T| |grad base|^p / p over the space's triangles; sets the rounding
  /// scale of objective values.
  double magnitude() const { return magnitude_; }

private:
  const SpaceOperator* op_;
  std::vector<Vec2> base_grad_;
  std::vector<double> base_power_;
  double magnitude_ = 0.0;
};

/// Projected FISTA with backtracking (the step may grow again between
/// iterations) and gradient-based momentum restart. Starts from w = 0, which
/// must satisfy lower_bound when one is given.
std::vector<double> fista_minimize(const SpaceObjective& objective, double stop_scale,
                                   double stiffness_bound, const std::vector<double>* lower_bound,
                                   const FistaConfig& cfg, FistaReport* report, int subdomain_id);

struct Subproblem {
  const FeFunction* base = nullptr;
  SpaceRef space;
  const ProblemData* data = nullptr;
  const Decomposition* dec = nullptr;
  std::optional<std::vector<double>> lower_bound;
};

struct SubproblemSolution {
  std::vector<double> w;
  FistaReport report;
};

/// argmin_w F(base + R^* w) over the chosen space, w >= lower_bound if given.
SubproblemSolution solve_subproblem(const Subproblem& sp, const FistaConfig& cfg);

/// As above with a prebuilt operator.
SubproblemSolution solve_subproblem(const SpaceOperator& op, const FeFunction& base,
                                    const std::vector<double>* lower_bound,
                                    const FistaConfig& cfg);

struct ReferenceSolution {
  FeFunction u;
  double energy = 0.0;
  double gradient_map_norm = 0.0;
  int iterations = 0;
};

/// Budget-driven full-space solve (tol = 0). The start is the projection of 0
/// onto the obstacle set when an obstacle is given.
ReferenceSolution reference_solution(const ProblemData& data, const Obstacle* obstacle, int budget);

} // namespace pasm
