#include "pasm/subsolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace pasm {

void FistaConfig::validate() const {
  if (!(initial_step >= 0.0) || !std::isfinite(initial_step)) {
    throw std::invalid_argument("FISTA initial step must be >= 0 (0 = automatic)");
  }
  if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) {
    throw std::invalid_argument("FISTA backtrack factor must lie in (0, 1)");
  }
  if (!(tol >= 0.0)) throw std::invalid_argument("FISTA tolerance must be >= 0");
  if (max_iters < 1) throw std::invalid_argument("FISTA max_iters must be >= 1");
}

int SpaceRef::id() const {
  switch (kind) {
    case Kind::Coarse: return 0;
    case Kind::Local: return index + 1;
    case Kind::Full: return -1;
  }
  return -1;
}

namespace {

std::vector<double> global_load(const ProblemData& data) {
  const Mesh& mesh = data.mesh();
  std::vector<double> b(static_cast<std::size_t>(mesh.num_dofs()), 0.0);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& dofs = mesh.triangle_dofs(t);
    const auto& load = data.element_load(t);
    for (int a = 0; a < 3; ++a) {
      if (dofs[a] >= 0) b[dofs[a]] += load[a];
    }
  }
  return b;
}

std::string space_name(SpaceRef space) {
  switch (space.kind) {
    case SpaceRef::Kind::Coarse: return "coarse space";
    case SpaceRef::Kind::Local: return "subdomain " + std::to_string(space.index);
    case SpaceRef::Kind::Full: return "full space";
  }
  return "space";
}

} // namespace

SpaceOperator::SpaceOperator(const ProblemData& data, const Decomposition* dec, SpaceRef space)
    : data_(&data), space_(space) {
  const Mesh& fine = data.mesh();
  if (space.kind != SpaceRef::Kind::Full) {
    if (dec == nullptr) throw std::invalid_argument("local and coarse spaces need a decomposition");
    if (dec->fine().subdivisions() != fine.subdivisions()) {
      throw std::invalid_argument("decomposition and problem data use different meshes");
    }
  }
  const std::vector<double> b = global_load(data);
  term_start_.push_back(0);
  ext_start_.push_back(0);

  if (space.kind == SpaceRef::Kind::Coarse) {
    const MeshPair& pair = dec->pair();
    const Eigen::SparseMatrix<double, Eigen::RowMajor> P = pair.prolongation();
    size_ = pair.coarse().num_dofs();
    stop_scale_ = pair.coarse().h();
    support_.resize(static_cast<std::size_t>(size_));
    for (int t = 0; t < fine.num_triangles(); ++t) {
      const auto& dofs = fine.triangle_dofs(t);
      const auto& hats = fine.hat_gradients(t);
      std::map<int, Vec2> acc;
      for (int a = 0; a < 3; ++a) {
        if (dofs[a] < 0) continue;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(P, dofs[a]); it; ++it) {
          acc[static_cast<int>(it.col())] += it.value() * hats[a];
        }
      }
      if (acc.empty()) continue;
      elements_.push_back(t);
      for (const auto& [var, g] : acc) terms_.push_back({var, g});
      term_start_.push_back(static_cast<int>(terms_.size()));
    }
    const SparseMatrix& Pc = pair.prolongation();
    load_.assign(static_cast<std::size_t>(size_), 0.0);
    for (int c = 0; c < size_; ++c) {
      for (SparseMatrix::InnerIterator it(Pc, c); it; ++it) {
        const int d = static_cast<int>(it.row());
        ext_dof_.push_back(d);
        ext_weight_.push_back(it.value());
        load_[c] += it.value() * b[d];
        support_[c].push_back(d);
      }
      ext_start_.push_back(static_cast<int>(ext_dof_.size()));
    }
  } else {
    std::vector<int> vars;
    if (space.kind == SpaceRef::Kind::Local) {
      const Subdomain& sd = dec->subdomain(space.index);
      vars = sd.dofs;
      elements_ = sd.elements;
    } else {
      vars.resize(static_cast<std::size_t>(fine.num_dofs()));
      std::iota(vars.begin(), vars.end(), 0);
      elements_.resize(static_cast<std::size_t>(fine.num_triangles()));
      std::iota(elements_.begin(), elements_.end(), 0);
    }
    size_ = static_cast<int>(vars.size());
    stop_scale_ = fine.h();
    std::vector<int> local_of(static_cast<std::size_t>(fine.num_dofs()), -1);
    for (int a = 0; a < size_; ++a) local_of[vars[a]] = a;
    for (int t : elements_) {
      const auto& dofs = fine.triangle_dofs(t);
      const auto& hats = fine.hat_gradients(t);
      for (int a = 0; a < 3; ++a) {
        if (dofs[a] >= 0 && local_of[dofs[a]] >= 0) terms_.push_back({local_of[dofs[a]], hats[a]});
      }
      term_start_.push_back(static_cast<int>(terms_.size()));
    }
    for (int a = 0; a < size_; ++a) {
      ext_dof_.push_back(vars[a]);
      ext_weight_.push_back(1.0);
      ext_start_.push_back(static_cast<int>(ext_dof_.size()));
      load_.push_back(b[vars[a]]);
      support_.push_back({vars[a]});
    }
  }

  // Power iteration on the p = 2 stiffness of the space.
  if (size_ > 0) {
    std::vector<double> x(static_cast<std::size_t>(size_)), y(x.size());
    for (int i = 0; i < size_; ++i) x[i] = 1.0 + 0.5 * std::sin(1.0 + i);
    double lambda = 0.0;
    for (int it = 0; it < 60; ++it) {
      std::fill(y.begin(), y.end(), 0.0);
      for (std::size_t e = 0; e < elements_.size(); ++e) {
        Vec2 g;
        for (int q = term_start_[e]; q < term_start_[e + 1]; ++q) g += x[terms_[q].var] * terms_[q].grad;
        const double area = fine.area(elements_[e]);
        for (int q = term_start_[e]; q < term_start_[e + 1]; ++q) {
          y[terms_[q].var] += area * dot(g, terms_[q].grad);
        }
      }
      const double norm = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
      const double xnorm = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
      if (norm == 0.0) break;
      lambda = norm / xnorm;
      for (int i = 0; i < size_; ++i) x[i] = y[i] / norm;
    }
    stiffness_bound_ = lambda;
  }
}

void SpaceOperator::add_extension(std::span<const double> w, double scale,
                                  std::span<double> global) const {
  for (int v = 0; v < size_; ++v) {
    const double s = scale * w[v];
    if (s == 0.0) continue;
    for (int q = ext_start_[v]; q < ext_start_[v + 1]; ++q) global[ext_dof_[q]] += s * ext_weight_[q];
  }
}

std::vector<double> SpaceOperator::lower_bound(const FeFunction& base,
                                               const Obstacle& obstacle) const {
  // For the coarse space this is a box inside the exact feasible set: every
  // fine increment is a convex-or-less combination of the coarse values, and
  // psi - base <= 0 wherever base is feasible.
  std::vector<double> lb(static_cast<std::size_t>(size_), Obstacle::kFree);
  for (int v = 0; v < size_; ++v) {
    for (int d : support_[v]) {
      if (obstacle.psi[d] == Obstacle::kFree) continue;
      lb[v] = std::max(lb[v], obstacle.psi[d] - base[d]);
    }
  }
  return lb;
}

SpaceObjective::SpaceObjective(const SpaceOperator& op, const FeFunction& base) : op_(&op) {
  const Mesh& mesh = op.data().mesh();
  if (base.mesh().subdivisions() != mesh.subdivisions()) {
    throw std::invalid_argument("subproblem base does not live on the problem mesh");
  }
  const double p = op.data().p();
  base_grad_.reserve(op.elements_.size());
  base_power_.reserve(op.elements_.size());
  for (int t : op.elements_) {
    const Vec2 g = element_gradient(base, t);
    base_grad_.push_back(g);
    base_power_.push_back(std::pow(norm2(g), 0.5 * p));
    magnitude_ += mesh.area(t) * base_power_.back() / p;
  }
}

double SpaceObjective::value(std::span<const double> w) const {
  const SpaceOperator& op = *op_;
  const Mesh& mesh = op.data().mesh();
  const double p = op.data().p();
  double total = 0.0;
  for (std::size_t e = 0; e < op.elements_.size(); ++e) {
    Vec2 g = base_grad_[e];
    for (int q = op.term_start_[e]; q < op.term_start_[e + 1]; ++q) g += w[op.terms_[q].var] * op.terms_[q].grad;
    total += mesh.area(op.elements_[e]) * (std::pow(norm2(g), 0.5 * p) - base_power_[e]);
  }
  total /= p;
  for (int v = 0; v < op.size_; ++v) total -= op.load_[v] * w[v];
  return total;
}

double SpaceObjective::value_and_gradient(std::span<const double> w, std::span<double> grad) const {
  const SpaceOperator& op = *op_;
  const Mesh& mesh = op.data().mesh();
  const double p = op.data().p();
  for (int v = 0; v < op.size_; ++v) grad[v] = -op.load_[v];
  double total = 0.0;
  for (std::size_t e = 0; e < op.elements_.size(); ++e) {
    Vec2 g = base_grad_[e];
    for (int q = op.term_start_[e]; q < op.term_start_[e + 1]; ++q) g += w[op.terms_[q].var] * op.terms_[q].grad;
    const double area = mesh.area(op.elements_[e]);
    total += area * (std::pow(norm2(g), 0.5 * p) - base_power_[e]);
    const Vec2 flux = area * density::flux(g, p);
    for (int q = op.term_start_[e]; q < op.term_start_[e + 1]; ++q) {
      grad[op.terms_[q].var] += dot(flux, op.terms_[q].grad);
    }
  }
  total /= p;
  for (int v = 0; v < op.size_; ++v) total -= op.load_[v] * w[v];
  return total;
}

namespace {

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

} // namespace

std::vector<double> fista_minimize(const SpaceObjective& objective, double stop_scale,
                                   double stiffness_bound, const std::vector<double>* lower_bound,
                                   const FistaConfig& cfg, FistaReport* report, int subdomain_id) {
  cfg.validate();
  const int n = objective.size();
  FistaReport local_report;
  FistaReport& rep = report ? *report : local_report;
  rep = FistaReport{};
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  if (lower_bound) {
    if (static_cast<int>(lower_bound->size()) != n) {
      throw SubsolverError(subdomain_id, "lower bound size does not match the subproblem");
    }
    for (int i = 0; i < n; ++i) {
      if ((*lower_bound)[i] > 0.0) {
        throw SubsolverError(subdomain_id, "base iterate is infeasible (w = 0 violates the bound)");
      }
    }
  }
  const double beta = cfg.backtrack_factor;
  double fx = objective.value(x);
  rep.initial_objective = fx;
  rep.final_objective = fx;
  if (n == 0) {
    rep.converged = true;
    return x;
  }
  auto project = [&](std::vector<double>& z) {
    if (!lower_bound) return;
    for (int i = 0; i < n; ++i) z[i] = std::max(z[i], (*lower_bound)[i]);
  };

  double L = cfg.initial_step > 0.0 ? 1.0 / cfg.initial_step : stiffness_bound;
  if (!(L > 0.0) || !std::isfinite(L)) L = 1.0;
  double t = 1.0;
  std::vector<double> x_prev = x, y(x.size()), gy(x.size()), x_new(x.size()), g_new(x.size());
  const double magnitude = objective.magnitude();

  for (int it = 0; it < cfg.max_iters; ++it) {
    double L_try = it == 0 ? L : L * beta;
    double t_new = 1.0, fy = 0.0, f_new = 0.0, majorizer = 0.0;
    int halvings = 0;
    while (true) {
      t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t * L_try / L));
      const double momentum = (t - 1.0) / t_new;
      for (int i = 0; i < n; ++i) y[i] = x[i] + momentum * (x[i] - x_prev[i]);
      fy = objective.value_and_gradient(y, gy);
      if (!std::isfinite(fy) || !all_finite(gy)) {
        throw SubsolverError(subdomain_id, "non-finite objective or gradient");
      }
      for (int i = 0; i < n; ++i) x_new[i] = y[i] - gy[i] / L_try;
      project(x_new);
      f_new = objective.value_and_gradient(x_new, g_new);
      double lin = 0.0, sq = 0.0, curvature = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d = x_new[i] - y[i];
        lin += gy[i] * d;
        sq += d * d;
        curvature += (g_new[i] - gy[i]) * d;
      }
      majorizer = fy + lin + 0.5 * L_try * sq;
      // Near the minimizer the majorization gap drops below the rounding error
      // of objective values; the gradient curvature test still resolves it.
      const double slack = 1e-12 * (magnitude + std::abs(fy) + std::abs(f_new));
      if (std::isfinite(f_new) && all_finite(g_new) &&
          (f_new <= majorizer || (f_new <= majorizer + slack && curvature <= L_try * sq))) {
        break;
      }
      if (++halvings > 60) {
        throw SubsolverError(subdomain_id, "line search made no progress after 60 step reductions");
      }
      L_try /= beta;
      ++rep.backtracks;
    }
    rep.max_majorization_gap = std::max(rep.max_majorization_gap, f_new - majorizer);

    double step2 = 0.0, restart_test = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = x_new[i] - x[i];
      step2 += d * d;
      restart_test += (y[i] - x_new[i]) * d;
    }
    x_prev.swap(x);
    x.swap(x_new);
    fx = f_new;
    L = L_try;
    t = t_new;
    if (cfg.restart && restart_test > 0.0) {
      t = 1.0;
      ++rep.restarts;
    }
    rep.iterations = it + 1;
    if (cfg.keep_trace) rep.trace.push_back(fx);
    if (stop_scale * std::sqrt(step2) < cfg.tol) {
      rep.converged = true;
      break;
    }
  }
  rep.final_objective = fx;

  std::vector<double> gx(x.size()), z(x.size());
  objective.value_and_gradient(x, gx);
  for (int i = 0; i < n; ++i) z[i] = x[i] - gx[i] / L;
  project(z);
  double gm = 0.0;
  for (int i = 0; i < n; ++i) gm += (L * (x[i] - z[i])) * (L * (x[i] - z[i]));
  rep.gradient_map_norm = std::sqrt(gm);
  return x;
}

SubproblemSolution solve_subproblem(const SpaceOperator& op, const FeFunction& base,
                                    const std::vector<double>* lower_bound,
                                    const FistaConfig& cfg) {
  SubproblemSolution out;
  const SpaceObjective objective(op, base);
  try {
    out.w = fista_minimize(objective, op.stop_scale(), op.stiffness_bound(), lower_bound, cfg,
                           &out.report, op.space().id());
  } catch (const SubsolverError& e) {
    throw SubsolverError(e.subdomain(), space_name(op.space()) + ": " + e.what());
  }
  return out;
}

SubproblemSolution solve_subproblem(const Subproblem& sp, const FistaConfig& cfg) {
  if (sp.base == nullptr || sp.data == nullptr) {
    throw std::invalid_argument("subproblem needs a base iterate and problem data");
  }
  const SpaceOperator op(*sp.data, sp.dec, sp.space);
  return solve_subproblem(op, *sp.base, sp.lower_bound ? &*sp.lower_bound : nullptr, cfg);
}

ReferenceSolution reference_solution(const ProblemData& data, const Obstacle* obstacle,
                                     int budget) {
  FeFunction base(data.mesh_ptr());
  std::optional<std::vector<double>> lb;
  const SpaceOperator op(data, nullptr, SpaceRef::full());
  if (obstacle) {
    for (int d = 0; d < base.size(); ++d) base[d] = std::max(0.0, obstacle->psi[d]);
    lb = op.lower_bound(base, *obstacle);
  }
  FistaConfig cfg;
  cfg.tol = 0.0;
  cfg.max_iters = budget;
  const SubproblemSolution sol = solve_subproblem(op, base, lb ? &*lb : nullptr, cfg);
  ReferenceSolution out{base, 0.0, sol.report.gradient_map_norm, sol.report.iterations};
  op.add_extension(sol.w, 1.0, out.u.coeffs());
  out.energy = energy(out.u, data);
  return out;
}

} // namespace pasm
