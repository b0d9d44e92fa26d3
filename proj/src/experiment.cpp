#include "pasm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "pasm/schwarz.hpp"
#include "pasm/verify.hpp"

namespace pasm {

namespace {

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw std::invalid_argument(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

long long parse_integer(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw std::invalid_argument(key + ": expected an integer, got '" + value + "'");
  }
  return out;
}

int parse_int(const std::string& key, const std::string& value) {
  const long long v = parse_integer(key, value);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw std::invalid_argument(key + ": value out of range");
  }
  return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + value + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_short(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::string hexfloat(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

double parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw std::runtime_error("bad number in cache file: '" + s + "'");
  return x;
}

template <class Body>
int guarded(std::ostream& log, Body&& body) {
  try {
    return body();
  } catch (const SubsolverError& e) {
    log << "error: subsolver failure (subdomain id " << e.subdomain() << "): " << e.what() << '\n';
    return kExitSubsolverFailure;
  } catch (const InvariantViolation& e) {
    log << "error: " << e.what() << '\n';
    return kExitViolation;
  } catch (const std::invalid_argument& e) {
    log << "error: invalid configuration: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitInvalidConfig;
  }
}

} // namespace

void ExperimentConfig::validate() const {
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("p must be finite and > 1");
  if (!std::isfinite(f)) throw std::invalid_argument("f must be finite");
  if (h_inv < 1 || H_inv < 1) throw std::invalid_argument("mesh sizes must be positive");
  if (h_inv % H_inv != 0) {
    throw std::invalid_argument("h-inv (" + std::to_string(h_inv) + ") must be a multiple of H-inv (" +
                                std::to_string(H_inv) + ")");
  }
  if (delta_layers < 1) throw std::invalid_argument("delta-layers must be >= 1");
  if (H_inv > 1 && 2 * delta_layers > h_inv / H_inv) {
    throw std::invalid_argument("overlap of " + std::to_string(delta_layers) +
                                " layers exceeds H/2 = " + std::to_string(h_inv / H_inv / 2.0) +
                                " layers");
  }
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("tau must lie in (0, tau0]; 0 selects tau0");
  if (iters < 0) throw std::invalid_argument("iters must be >= 0");
  if (threads < 0) throw std::invalid_argument("threads must be >= 0");
  if (budget < 1) throw std::invalid_argument("budget must be >= 1");
  if (!(error_floor >= 0.0)) throw std::invalid_argument("error-floor must be >= 0");
  if (samples < 1 || bl_samples < 1 || c0_samples < 1) {
    throw std::invalid_argument("sample counts must be >= 1");
  }
  if (verify_h_inv < 2) throw std::invalid_argument("verify-h-inv must be >= 2");
  if (!(amplitude > 0.0)) throw std::invalid_argument("amplitude must be > 0");
  if (!(obstacle_radius > 0.0)) throw std::invalid_argument("obstacle-radius must be > 0");
  fista().validate();
}

FistaConfig ExperimentConfig::fista() const {
  FistaConfig out;
  out.tol = fista_tol;
  out.max_iters = fista_max_iters;
  return out;
}

void apply_config_entry(ExperimentConfig& cfg, const std::string& key_in, const std::string& value_in) {
  const std::string key = trim(key_in);
  const std::string value = trim(value_in);
  if (key == "p") cfg.p = parse_double(key, value);
  else if (key == "f") cfg.f = parse_double(key, value);
  else if (key == "h-inv") cfg.h_inv = parse_int(key, value);
  else if (key == "H-inv") cfg.H_inv = parse_int(key, value);
  else if (key == "delta-layers") cfg.delta_layers = parse_int(key, value);
  else if (key == "tau") cfg.tau = parse_double(key, value);
  else if (key == "iters") cfg.iters = parse_int(key, value);
  else if (key == "obstacle") cfg.obstacle = parse_bool(key, value);
  else if (key == "obstacle-height") cfg.obstacle_height = parse_double(key, value);
  else if (key == "obstacle-radius") cfg.obstacle_radius = parse_double(key, value);
  else if (key == "seed") {
    const long long s = parse_integer(key, value);
    if (s < 0) throw std::invalid_argument("seed must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(s);
  } else if (key == "serial") cfg.serial = parse_bool(key, value);
  else if (key == "threads") cfg.threads = parse_int(key, value);
  else if (key == "out") cfg.out = value;
  else if (key == "budget") cfg.budget = parse_int(key, value);
  else if (key == "cache-dir") cfg.cache_dir = value;
  else if (key == "no-timing") cfg.timing = !parse_bool(key, value);
  else if (key == "error-floor") cfg.error_floor = parse_double(key, value);
  else if (key == "fista-tol") cfg.fista_tol = parse_double(key, value);
  else if (key == "fista-max-iters") cfg.fista_max_iters = parse_int(key, value);
  else if (key == "samples") cfg.samples = parse_int(key, value);
  else if (key == "bl-samples") cfg.bl_samples = parse_int(key, value);
  else if (key == "verify-h-inv") cfg.verify_h_inv = parse_int(key, value);
  else if (key == "amplitude") cfg.amplitude = parse_double(key, value);
  else if (key == "phi-fault") cfg.phi_fault = parse_double(key, value);
  else if (key == "run") cfg.run_csv = value;
  else if (key == "report") cfg.report_csv = value;
  else if (key == "c0-samples") cfg.c0_samples = parse_int(key, value);
  else if (key == "preset") cfg.preset = value;
  else throw std::invalid_argument("unknown configuration key '" + key + "'");
}

void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path + ":" + std::to_string(number) + ": expected key=value");
    }
    apply_config_entry(cfg, t.substr(0, eq), t.substr(eq + 1));
  }
}

std::shared_ptr<const ProblemData> make_problem(const ExperimentConfig& cfg) {
  return std::make_shared<const ProblemData>(
      ProblemData::constant_source(build_uniform_mesh(cfg.h_inv), cfg.p, cfg.f));
}

std::shared_ptr<const Decomposition> make_decomposition(const ExperimentConfig& cfg) {
  return build_decomposition(std::make_shared<const MeshPair>(cfg.H_inv, cfg.h_inv),
                             cfg.delta_layers);
}

Obstacle make_obstacle(const ExperimentConfig& cfg, const Mesh& mesh) {
  return disk_obstacle(mesh, cfg.obstacle_height, cfg.obstacle_radius, {0.5, 0.5});
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

ReferenceSolution cached_reference(const ProblemData& data, const Obstacle* obstacle,
                                   const std::string& obstacle_key, int budget,
                                   const std::string& cache_dir) {
  std::ostringstream source;
  for (double v : data.f_nodal()) source << hexfloat(v) << ';';
  const std::string key = "p=" + hexfloat(data.p()) + ";m=" +
                          std::to_string(data.mesh().subdivisions()) + ";f=" +
                          std::to_string(fnv1a(source.str())) + ";obstacle=" +
                          (obstacle ? obstacle_key : "none") + ";budget=" + std::to_string(budget);
  std::filesystem::path path;
  if (!cache_dir.empty()) {
    char name[64];
    std::snprintf(name, sizeof name, "ref_%016llx.txt",
                  static_cast<unsigned long long>(fnv1a(key)));
    path = std::filesystem::path(cache_dir) / name;
    std::ifstream in(path);
    std::string header, stored_key;
    if (in && std::getline(in, header) && header == "pasm-reference 1" &&
        std::getline(in, stored_key) && stored_key == "key " + key) {
      std::string label, value;
      ReferenceSolution out{FeFunction(data.mesh_ptr()), 0.0, 0.0, 0};
      int count = -1;
      in >> label >> value;
      out.energy = parse_hexfloat(value);
      in >> label >> value;
      out.gradient_map_norm = parse_hexfloat(value);
      in >> label >> out.iterations >> label >> count;
      if (in && count == out.u.size()) {
        for (int d = 0; d < count && in >> value; ++d) out.u[d] = parse_hexfloat(value);
        if (in) return out;
      }
    }
  }
  ReferenceSolution out = reference_solution(data, obstacle, budget);
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
      std::ofstream file(tmp);
      file << "pasm-reference 1\nkey " << key << "\nenergy " << hexfloat(out.energy)
           << "\ngradient_map_norm " << hexfloat(out.gradient_map_norm) << "\niterations "
           << out.iterations << "\ncoeffs " << out.u.size() << '\n';
      for (double c : out.u.coeffs()) file << hexfloat(c) << '\n';
    }
    std::filesystem::rename(tmp, path);
  }
  return out;
}

std::vector<ExperimentConfig> sweep_preset(const std::string& name, const ExperimentConfig& base,
                                           const std::string& out_dir) {
  if (name != "fig1-desk") throw std::invalid_argument("unknown sweep preset '" + name + "'");
  std::vector<ExperimentConfig> out;
  for (int H_inv : {2, 4}) {
    for (int ratio : {8, 16}) {
      for (int layers : {1, 2, 4}) {
        ExperimentConfig cfg = base;
        cfg.H_inv = H_inv;
        cfg.h_inv = H_inv * ratio;
        cfg.delta_layers = layers;
        cfg.out = (std::filesystem::path(out_dir) /
                   ("fig1-desk_H" + std::to_string(H_inv) + "_Hh" + std::to_string(ratio) + "_d" +
                    std::to_string(layers) + ".csv"))
                      .string();
        out.push_back(cfg);
      }
    }
  }
  return out;
}

int cmd_run(const ExperimentConfig& cfg, std::ostream& log) {
  return guarded(log, [&] {
    cfg.validate();
    const auto data = make_problem(cfg);
    const auto dec = make_decomposition(cfg);
    SchwarzConfig sc;
    sc.data = data;
    sc.dec = dec;
    sc.tau = cfg.tau;
    sc.outer_iters = cfg.iters;
    sc.fista = cfg.fista();
    sc.error_floor = cfg.error_floor;
    sc.serial = cfg.serial;
    sc.threads = cfg.threads;
    std::string obstacle_key;
    if (cfg.obstacle) {
      sc.obstacle = make_obstacle(cfg, data->mesh());
      obstacle_key = "disk:" + hexfloat(cfg.obstacle_height) + ":" + hexfloat(cfg.obstacle_radius);
    }
    sc.validate();

    const ReferenceSolution ref = cached_reference(
        *data, sc.obstacle ? &*sc.obstacle : nullptr, obstacle_key, cfg.budget, cfg.cache_dir);
    log << "reference: energy " << format_double(ref.energy) << ", gradient map norm "
        << format_short(ref.gradient_map_norm) << " after " << ref.iterations << " iterations\n";

    ConvergenceRecord rec = run_asm(sc, ref.energy);
    rec.metadata.emplace_back("seed", std::to_string(cfg.seed));
    if (cfg.obstacle) {
      rec.metadata.emplace_back("obstacle_height", format_double(cfg.obstacle_height));
      rec.metadata.emplace_back("obstacle_radius", format_double(cfg.obstacle_radius));
    }
    rec.metadata.emplace_back("reference_budget", std::to_string(cfg.budget));
    rec.metadata.emplace_back("reference_gradient_map_norm", format_double(ref.gradient_map_norm));
    rec.metadata.emplace_back("observed_rho", format_double(rec.fit.rho));
    rec.metadata.emplace_back("fit_r_squared", format_double(rec.fit.r_squared));
    rec.metadata.emplace_back("fit_points", std::to_string(rec.fit.points));

    std::string path = cfg.out;
    if (path.empty()) {
      path = "asm_p" + format_short(cfg.p) + "_h" + std::to_string(cfg.h_inv) + "_H" +
             std::to_string(cfg.H_inv) + "_d" + std::to_string(cfg.delta_layers) +
             (cfg.obstacle ? "_obstacle" : "") + ".csv";
    }
    if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
      std::filesystem::create_directories(parent);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    write_csv(rec, out, cfg.timing);

    log << "config: p=" << format_short(cfg.p) << " f=" << format_short(cfg.f)
        << " h=1/" << cfg.h_inv << " H=1/" << cfg.H_inv << " delta=" << cfg.delta_layers
        << "h tau=" << format_short(sc.effective_tau()) << " subdomains=" << dec->num_subdomains()
        << " colors=" << dec->num_colors() << (cfg.obstacle ? " obstacle=on" : "") << '\n';
    log << "iterations: " << rec.energies.size() - 1 << ", final energy error "
        << format_short(rec.errors.back()) << '\n';
    if (rec.fit.points >= 3) {
      log << "observed rho " << format_short(rec.fit.rho) << " (R^2 " << format_short(rec.fit.r_squared)
          << " over " << rec.fit.points << " points)\n";
    } else {
      log << "observed rho: not enough iterations above the error floor for a fit\n";
    }
    if (rec.unconverged_solves > 0) {
      log << "warning: " << rec.unconverged_solves << " subproblem solves hit fista-max-iters\n";
    }
    log << "wrote " << path << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_verify(const ExperimentConfig& cfg, std::ostream& log) {
  return guarded(log, [&] {
    cfg.validate();
    SampleSpec spec;
    spec.mesh = build_uniform_mesh(cfg.verify_h_inv);
    spec.p = cfg.p;
    spec.count = cfg.samples;
    spec.seed = cfg.seed;
    spec.amplitude = cfg.amplitude;
    VerifyOptions options;
    options.phi_fault_factor = cfg.phi_fault;
    const std::vector<ConstantReport> reports = run_verification(spec, cfg.bl_samples, options);

    const std::string path = cfg.out.empty() ? "verify_p" + format_short(cfg.p) + ".csv" : cfg.out;
    if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
      std::filesystem::create_directories(parent);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    write_reports_csv(reports, out);

    log << "p=" << format_short(cfg.p) << " mesh h=1/" << cfg.verify_h_inv << " samples=" << cfg.samples
        << " seed=" << cfg.seed << " (sample extrema; estimates, not sharp constants)\n";
    for (const auto& r : reports) {
      log << "  " << std::left << std::setw(20) << r.check << std::setw(24) << r.name << " min "
          << std::setw(13) << format_short(r.sample_min) << " max " << std::setw(13)
          << format_short(r.sample_max) << " used " << std::setw(7) << r.samples_used
          << " violations " << r.violations << '\n';
    }
    const int violations = total_violations(reports);
    log << "wrote " << path << '\n';
    if (violations > 0) {
      log << "FAILED: " << violations << " violations\n";
      return static_cast<int>(kExitViolation);
    }
    log << "all checks passed\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_rates(const ExperimentConfig& cfg_in, std::ostream& log) {
  return guarded(log, [&] {
    if (cfg_in.run_csv.empty() || cfg_in.report_csv.empty()) {
      throw std::invalid_argument("rates needs --run <convergence csv> and --report <verify csv>");
    }
    std::ifstream run_in(cfg_in.run_csv);
    if (!run_in) throw std::invalid_argument("cannot open run CSV '" + cfg_in.run_csv + "'");
    const ConvergenceRecord rec = read_csv(run_in);
    std::ifstream report_in(cfg_in.report_csv);
    if (!report_in) throw std::invalid_argument("cannot open report CSV '" + cfg_in.report_csv + "'");
    const std::vector<ConstantReport> reports = read_reports_csv(report_in);

    // Geometry comes from the run's metadata.
    ExperimentConfig cfg = cfg_in;
    bool constrained = false;
    double tau = 0.0;
    for (const auto& [key, value] : rec.metadata) {
      if (key == "p") cfg.p = parse_double(key, value);
      else if (key == "f") cfg.f = parse_double(key, value);
      else if (key == "h_inv") cfg.h_inv = parse_int(key, value);
      else if (key == "H_inv") cfg.H_inv = parse_int(key, value);
      else if (key == "delta_layers") cfg.delta_layers = parse_int(key, value);
      else if (key == "tau") tau = parse_double(key, value);
      else if (key == "obstacle") constrained = value == "on";
    }
    if (!(tau > 0.0)) throw std::invalid_argument("run CSV lacks the tau metadata");
    cfg.validate();

    double mu = 0.0;
    for (const auto& r : reports) {
      if (r.check == "bregman_equivalence" && r.name == "df_over_phi") mu = r.sample_min;
    }
    if (!(mu > 0.0)) throw std::invalid_argument("report CSV lacks a positive df_over_phi estimate");

    const RateFit fit = estimate_rate(rec.errors, 0.5, 1e-8);
    const auto data = make_problem(cfg);
    const auto dec = make_decomposition(cfg);
    const C0Estimate c0 = measure_C0(*dec, *data, cfg.c0_samples, cfg.seed);
    const double bound = theoretical_rate(cfg.p, tau, mu, c0.max_ratio, constrained);

    log << "observed rho " << format_double(fit.rho) << " (R^2 " << format_short(fit.r_squared) << ", "
        << fit.points << " points)\n";
    log << "mu_phi estimate " << format_short(mu) << ", C0 estimate " << format_short(c0.max_ratio)
        << " (" << c0.samples_used << " samples)\n";
    log << "theoretical rate bound " << format_double(bound) << (constrained ? " (constrained)" : "")
        << '\n';

    if (!cfg_in.out.empty()) {
      std::ofstream out(cfg_in.out);
      if (!out) throw std::runtime_error("cannot write '" + cfg_in.out + "'");
      out << "# observed_rho=" << format_double(fit.rho) << "\n# theoretical_bound=" << format_double(bound)
          << '\n';
      const bool overlay = cfg.p != 2.0;
      out << "iter,energy_error,linear_bound" << (overlay ? ",sublinear_shape" : "") << '\n';
      const double e0 = rec.errors.empty() ? 0.0 : rec.errors.front();
      const double H = 1.0 / cfg.H_inv, delta = cfg.delta_layers / static_cast<double>(cfg.h_inv);
      const double s0 = overlay ? sublinear_bound(0, cfg.p, H, delta) : 1.0;
      for (std::size_t n = 0; n < rec.errors.size(); ++n) {
        out << n << ',' << format_double(rec.errors[n]) << ','
            << format_double(e0 * std::pow(bound, static_cast<double>(n)));
        if (overlay) {
          out << ',' << format_double(e0 * sublinear_bound(static_cast<int>(n), cfg.p, H, delta) / s0);
        }
        out << '\n';
      }
      log << "wrote " << cfg_in.out << '\n';
    }
    if (cfg.p == 2.0) {
      log << "sublinear overlay skipped: the sublinear shape degenerates at p = 2\n";
    }
    if (fit.rho > bound) {
      log << "FAILED: observed rho exceeds the theoretical bound\n";
      return static_cast<int>(kExitViolation);
    }
    log << "observed rho is within the theoretical bound\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  return guarded(log, [&] {
    const std::string dir = cfg.out.empty() ? "sweep-" + cfg.preset : cfg.out;
    const std::vector<ExperimentConfig> runs = sweep_preset(cfg.preset, cfg, dir);
    int worst = 0;
    for (const auto& run : runs) {
      log << "== H=1/" << run.H_inv << " h=1/" << run.h_inv << " delta=" << run.delta_layers << "h\n";
      worst = std::max(worst, cmd_run(run, log));
    }
    return worst;
  });
}

} // namespace pasm
