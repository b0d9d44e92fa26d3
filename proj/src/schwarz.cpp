#include "pasm/schwarz.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

namespace pasm {

double SchwarzConfig::effective_tau() const { return tau > 0.0 ? tau : dec->tau0(); }

FeFunction SchwarzConfig::initial_iterate() const {
  if (u0) return *u0;
  FeFunction out(data->mesh_ptr());
  if (obstacle) {
    for (int d = 0; d < out.size(); ++d) out[d] = std::max(0.0, obstacle->psi[d]);
  }
  return out;
}

void SchwarzConfig::validate() const {
  if (!data || !dec) throw std::invalid_argument("configuration needs problem data and a decomposition");
  if (dec->fine().subdivisions() != data->mesh().subdivisions()) {
    throw std::invalid_argument("decomposition and problem data use different meshes");
  }
  if (tau < 0.0 || effective_tau() > dec->tau0() * (1.0 + 1e-12)) {
    throw std::invalid_argument("relaxation tau must lie in (0, tau0], tau0 = " +
                                std::to_string(dec->tau0()));
  }
  if (outer_iters < 0) throw std::invalid_argument("outer iteration count must be >= 0");
  if (threads < 0) throw std::invalid_argument("thread count must be >= 0");
  fista.validate();
  if (u0 && u0->mesh().subdivisions() != data->mesh().subdivisions()) {
    throw std::invalid_argument("initial iterate lives on the wrong mesh");
  }
  if (obstacle) {
    if (static_cast<int>(obstacle->psi.size()) != data->mesh().num_dofs()) {
      throw std::invalid_argument("obstacle does not match the fine mesh");
    }
    if (!obstacle->is_feasible(initial_iterate())) {
      throw std::invalid_argument("initial iterate violates the obstacle");
    }
  }
}

namespace {

// Runs fn(i) for i in [0, count) on up to `threads` workers. Exceptions are
// kept per task and the one with the smallest index is rethrown.
void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  auto guarded = [&](int i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const int workers = std::min(threads, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) guarded(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) guarded(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

} // namespace

ConvergenceRecord run_asm(const SchwarzConfig& cfg, double reference_energy,
                          const IterateObserver& observer) {
  cfg.validate();
  const ProblemData& data = *cfg.data;
  const Decomposition& dec = *cfg.dec;
  const double tau = cfg.effective_tau();
  const int threads =
      cfg.serial ? 1 : (cfg.threads > 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency()));

  // Space 0 is the coarse space, space k + 1 is subdomain k.
  std::vector<SpaceOperator> spaces;
  spaces.reserve(static_cast<std::size_t>(dec.num_subdomains()) + 1);
  spaces.emplace_back(data, &dec, SpaceRef::coarse());
  for (int k = 0; k < dec.num_subdomains(); ++k) spaces.emplace_back(data, &dec, SpaceRef::local(k));

  ConvergenceRecord rec;
  rec.reference_energy = reference_energy;
  const Mesh& fine = data.mesh();
  rec.metadata = {
      {"p", format_double(data.p())},
      {"f", format_double(data.f_nodal().empty() ? 0.0 : data.f_nodal().front())},
      {"h_inv", std::to_string(fine.subdivisions())},
      {"H_inv", std::to_string(dec.pair().coarse().subdivisions())},
      {"delta_layers", std::to_string(dec.delta_layers())},
      {"subdomains", std::to_string(dec.num_subdomains())},
      {"colors", std::to_string(dec.num_colors())},
      {"tau", format_double(tau)},
      {"obstacle", cfg.obstacle ? "on" : "off"},
      {"outer_iters", std::to_string(cfg.outer_iters)},
      {"error_floor", format_double(cfg.error_floor)},
      {"fista_initial_step", cfg.fista.initial_step > 0 ? format_double(cfg.fista.initial_step) : "auto"},
      {"fista_backtrack_factor", format_double(cfg.fista.backtrack_factor)},
      {"fista_tol", format_double(cfg.fista.tol)},
      {"fista_max_iters", std::to_string(cfg.fista.max_iters)},
      {"fista_restart", cfg.fista.restart ? "on" : "off"},
      {"reference_energy", format_double(reference_energy)},
  };

  FeFunction u = cfg.initial_iterate();
  const auto start = std::chrono::steady_clock::now();
  auto record = [&](int n, const FeFunction& iterate, double e) {
    rec.energies.push_back(e);
    rec.errors.push_back(e - reference_energy);
    rec.walltimes.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (observer) observer(n, iterate);
  };
  double current = energy(u, data);
  record(0, u, current);

  std::vector<SubproblemSolution> solutions(spaces.size());
  for (int n = 1; n <= cfg.outer_iters; ++n) {
    if (cfg.error_floor > 0.0 && rec.errors.back() < cfg.error_floor) break;
    parallel_for(static_cast<int>(spaces.size()), threads, [&](int s) {
      std::optional<std::vector<double>> lb;
      if (cfg.obstacle) lb = spaces[s].lower_bound(u, *cfg.obstacle);
      solutions[s] = solve_subproblem(spaces[s], u, lb ? &*lb : nullptr, cfg.fista);
    });
    std::vector<double> correction(static_cast<std::size_t>(u.size()), 0.0);
    for (std::size_t s = 0; s < spaces.size(); ++s) {
      spaces[s].add_extension(solutions[s].w, 1.0, correction);
      rec.max_subsolver_iterations =
          std::max(rec.max_subsolver_iterations, solutions[s].report.iterations);
      if (!solutions[s].report.converged) ++rec.unconverged_solves;
    }
    for (int d = 0; d < u.size(); ++d) u[d] += tau * correction[d];

    if (cfg.obstacle && !cfg.obstacle->is_feasible(u)) {
      int worst = 0;
      for (int d = 0; d < u.size(); ++d) {
        if (cfg.obstacle->psi[d] - u[d] > cfg.obstacle->psi[worst] - u[worst]) worst = d;
      }
      throw InvariantViolation("iterate " + std::to_string(n) + " violates the obstacle at dof " +
                               std::to_string(worst) + " by " +
                               format_double(cfg.obstacle->psi[worst] - u[worst]));
    }
    const double next = energy(u, data);
    if (next > current + 1e-10) {
      throw InvariantViolation("energy increased at iterate " + std::to_string(n) + ": " +
                               format_double(current) + " -> " + format_double(next));
    }
    current = next;
    record(n, u, current);
  }
  rec.final_iterate = u;
  try {
    rec.fit = estimate_rate(rec.errors, 0.5, std::max(cfg.error_floor, 1e-8));
  } catch (const std::invalid_argument&) {
    rec.fit = RateFit{};
    rec.fit.points = 0;
  }
  return rec;
}

RateFit estimate_rate(std::span<const double> errors, double tail_fraction, double floor) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
    throw std::invalid_argument("tail fraction must lie in (0, 1]");
  }
  std::vector<int> usable;
  for (std::size_t n = 0; n < errors.size(); ++n) {
    if (std::isfinite(errors[n]) && errors[n] > floor && errors[n] > 0.0) {
      usable.push_back(static_cast<int>(n));
    }
  }
  const auto take = static_cast<std::size_t>(std::ceil(tail_fraction * usable.size()));
  if (take < 3) throw std::invalid_argument("fewer than 3 usable points for the rate fit");
  const std::vector<int> tail(usable.end() - static_cast<std::ptrdiff_t>(take), usable.end());
  double mx = 0.0, my = 0.0;
  for (int n : tail) {
    mx += n;
    my += std::log10(errors[n]);
  }
  mx /= tail.size();
  my /= tail.size();
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int n : tail) {
    const double dx = n - mx, dy = std::log10(errors[n]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  RateFit fit;
  fit.points = static_cast<int>(tail.size());
  fit.slope = sxy / sxx;
  fit.rho = std::pow(10.0, fit.slope);
  // A flat tail (up to rounding of the logs) has no trend to explain.
  const bool flat = syy <= 1e-28 * static_cast<double>(tail.size()) * (1.0 + my * my);
  fit.r_squared = flat ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

double theoretical_rate(double p, double tau, double mu_phi, double C0, bool constrained) {
  if (!(p > 1.0)) throw std::invalid_argument("p must be > 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (!(mu_phi > 0.0) || !(C0 > 0.0)) {
    throw std::invalid_argument("mu_phi and C0 must be positive");
  }
  const double lo = std::min(p, 2.0), hi = std::max(p, 2.0), hat = std::abs(p - 2.0);
  const double inner =
      std::pow(std::pow(tau, hi - 1.0) * mu_phi / (std::pow(2.0, hat) * C0), 1.0 / (lo - 1.0));
  return 1.0 - (1.0 - 1.0 / lo) * std::min(constrained ? tau : 1.0, inner);
}

double sublinear_bound(int n, double p, double H, double delta) {
  if (p == 2.0) {
    throw std::invalid_argument("the sublinear shape degenerates at p = 2 (zero denominator in the exponent)");
  }
  if (!(p > 1.0) || n < 0 || !(H > 0.0) || !(delta > 0.0)) {
    throw std::invalid_argument("sublinear_bound needs p > 1, n >= 0, H > 0, delta > 0");
  }
  const double lo = std::min(p, 2.0), hi = std::max(p, 2.0);
  const double exponent = hi * (lo - 1.0) / (hi - lo);
  return std::pow(H / delta, lo) / std::pow(n + 1.0, exponent);
}

void write_csv(const ConvergenceRecord& rec, std::ostream& out, bool timing) {
  for (const auto& [key, value] : rec.metadata) out << "# " << key << '=' << value << '\n';
  out << "iter,energy,energy_error,walltime_s\n";
  for (std::size_t n = 0; n < rec.energies.size(); ++n) {
    out << n << ',' << format_double(rec.energies[n]) << ',' << format_double(rec.errors[n]) << ','
        << (timing ? format_double(rec.walltimes[n]) : "0") << '\n';
  }
}

ConvergenceRecord read_csv(std::istream& in) {
  ConvergenceRecord rec;
  std::string line;
  bool header = false;
  int expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        const auto key_start = line.find_first_not_of("# ");
        rec.metadata.emplace_back(line.substr(key_start, eq - key_start), line.substr(eq + 1));
      }
      continue;
    }
    if (!header) {
      if (line.rfind("iter,energy,energy_error", 0) != 0) {
        throw std::runtime_error("convergence CSV: unexpected header '" + line + "'");
      }
      header = true;
      continue;
    }
    std::istringstream row(line);
    std::string cell[4];
    for (auto& c : cell) {
      if (!std::getline(row, c, ',')) throw std::runtime_error("convergence CSV: short row '" + line + "'");
    }
    if (std::stoi(cell[0]) != expected++) {
      throw std::runtime_error("convergence CSV: iteration numbers are not consecutive");
    }
    rec.energies.push_back(std::stod(cell[1]));
    rec.errors.push_back(std::stod(cell[2]));
    rec.walltimes.push_back(std::stod(cell[3]));
  }
  if (!header) throw std::runtime_error("convergence CSV: missing header");
  for (const auto& [key, value] : rec.metadata) {
    if (key == "reference_energy") rec.reference_energy = std::stod(value);
  }
  return rec;
}

} // namespace pasm
