#include "pasm/verify.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pasm/fem.hpp"
#include "pasm/sampling.hpp"

namespace pasm {

namespace {

constexpr double kRelTol = 1e-10;
// Separate stream for auxiliary draws (t values) so the pair stream stays
// shared across checks.
constexpr std::uint64_t kAuxStream = 0x9e3779b97f4a7c15ULL;

class Extrema {
public:
  void add(double x) {
    lo_ = std::min(lo_, x);
    hi_ = std::max(hi_, x);
    ++count_;
  }
  ConstantReport report(std::string check, std::string name, int violations,
                        std::uint64_t seed) const {
    ConstantReport r{std::move(check), std::move(name), lo_, hi_, violations, count_, seed};
    if (count_ == 0) r.sample_min = r.sample_max = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double min() const { return lo_; }
  double max() const { return hi_; }

private:
  double lo_ = std::numeric_limits<double>::infinity();
  double hi_ = -std::numeric_limits<double>::infinity();
  int count_ = 0;
};

// a <= b up to the relative tolerance.
bool leq(double a, double b) { return a <= b + kRelTol * std::max(std::abs(a), std::abs(b)); }

double draw_t(std::uint64_t seed, int i) {
  if (i % 10 == 0) return 1.0;
  auto rng = sample_rng(seed ^ kAuxStream, static_cast<std::uint64_t>(i));
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

} // namespace

void SampleSpec::validate() const {
  if (!mesh) throw std::invalid_argument("sample spec needs a mesh");
  if (!(p > 1.0)) throw std::invalid_argument("sample spec needs p > 1");
  if (count < 1) throw std::invalid_argument("sample count must be >= 1");
  if (!(amplitude > 0.0)) throw std::invalid_argument("sample amplitude must be > 0");
}

ConstantReport check_scaling(const SampleSpec& spec, const VerifyOptions& options) {
  spec.validate();
  const ProblemData data = ProblemData::constant_source(spec.mesh, spec.p, 0.0);
  const double lo = data.p_lower(), hi = data.p_upper();
  Extrema exponent;
  int violations = 0;
  for (int i = 0; i < spec.count; ++i) {
    const SamplePair s = draw_pair(spec.mesh, spec.amplitude, spec.seed, i);
    const double t = draw_t(spec.seed, i);
    const FeFunction w = s.u - s.v;
    const double full = phi(s.u, s.v, data);
    const double part = options.phi_fault_factor * phi(s.v + t * w, s.v, data);
    if (!leq(std::pow(t, hi) * full, part) || !leq(part, std::pow(t, lo) * full)) ++violations;
    if (full > 0.0 && part > 0.0 && t > 0.0 && t < 1.0) {
      exponent.add(std::log(part / full) / std::log(t));
    }
  }
  return exponent.report("scaling", "phi_scaling_exponent", violations, spec.seed);
}

ConstantReport check_symmetry(const SampleSpec& spec) {
  spec.validate();
  const ProblemData data = ProblemData::constant_source(spec.mesh, spec.p, 0.0);
  const double bound = std::pow(2.0, data.p_hat());
  Extrema ratio;
  int violations = 0;
  for (int i = 0; i < spec.count; ++i) {
    const SamplePair s = draw_pair(spec.mesh, spec.amplitude, spec.seed, i);
    const double forward = phi(s.u, s.v, data);
    const double backward = phi(s.v, s.u, data);
    if (forward == 0.0 && backward == 0.0) continue;
    if (!leq(forward, bound * backward)) ++violations;
    ratio.add(forward / backward);
  }
  return ratio.report("symmetry", "phi_asymmetry_ratio", violations, spec.seed);
}

ConstantReport check_bregman_equiv(const SampleSpec& spec) {
  spec.validate();
  const ProblemData data = ProblemData::constant_source(spec.mesh, spec.p, 0.0);
  Extrema ratio;
  int violations = 0;
  for (int i = 0; i < spec.count; ++i) {
    const SamplePair s = draw_pair(spec.mesh, spec.amplitude, spec.seed, i);
    const double distance = phi(s.u, s.v, data);
    if (distance == 0.0) continue;
    const double r = bregman(s.u, s.v, data) / distance;
    if (!(r > 0.0) || !std::isfinite(r)) ++violations;
    ratio.add(r);
  }
  return ratio.report("bregman_equivalence", "df_over_phi", violations, spec.seed);
}

namespace {

struct VectorPair {
  Vec2 xi, eta;
};

VectorPair draw_vectors(std::uint64_t seed, int i) {
  auto rng = sample_rng(seed, static_cast<std::uint64_t>(i));
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec2 xi{normal(rng), normal(rng)};
  switch (i % 10) {
    case 6: {  // axis aligned, arbitrary signs
      return {{xi.x, 0.0}, {normal(rng), 0.0}};
    }
    case 7: {  // nearly parallel
      const double s = 0.5 + unit(rng);
      return {xi, s * xi + 1e-6 * Vec2{normal(rng), normal(rng)}};
    }
    case 8: {  // antiparallel
      return {xi, -unit(rng) * xi};
    }
    case 9: {  // very different magnitudes
      return {xi, 1e-3 * Vec2{normal(rng), normal(rng)}};
    }
    default:
      return {xi, {normal(rng), normal(rng)}};
  }
}

struct BlRatios {
  double upper;
  double lower;
};

bool bl_ratios(const VectorPair& v, double p, BlRatios& out) {
  const Vec2 diff = v.xi - v.eta;
  const double d = std::sqrt(norm2(diff));
  if (d == 0.0) return false;
  const Vec2 flux_diff = density::flux(v.xi, p) - density::flux(v.eta, p);
  const double weight = std::pow(std::sqrt(norm2(v.xi)) + std::sqrt(norm2(v.eta)), p - 2.0);
  out.upper = std::sqrt(norm2(flux_diff)) / (d * weight);
  out.lower = dot(flux_diff, diff) / (d * d * weight);
  return true;
}

} // namespace

BarrettLiuReport check_bl_inequalities(double p, int samples, std::uint64_t seed) {
  if (!(p > 1.0)) throw std::invalid_argument("p must be > 1");
  if (samples < 1) throw std::invalid_argument("sample count must be >= 1");
  Extrema upper, lower;
  for (int i = 0; i < samples; ++i) {
    BlRatios r;
    if (!bl_ratios(draw_vectors(seed, i), p, r)) continue;
    upper.add(r.upper);
    lower.add(r.lower);
  }
  const double c1 = upper.max(), c2 = lower.min();
  int upper_violations = 0, lower_violations = 0;
  if (!(c1 > 0.0) || !std::isfinite(c1)) ++upper_violations;
  if (!(c2 > 0.0) || !std::isfinite(c2)) ++lower_violations;
  if (!(c2 <= c1)) ++lower_violations;
  const std::uint64_t fresh = seed ^ kAuxStream;
  for (int i = 0; i < samples; ++i) {
    BlRatios r;
    if (!bl_ratios(draw_vectors(fresh, i), p, r)) continue;
    if (r.upper > 1.01 * c1) ++upper_violations;
    if (r.lower < c2 / 1.01) ++lower_violations;
  }
  return {upper.report("barrett_liu", "C1_upper", upper_violations, seed),
          lower.report("barrett_liu", "C2_lower", lower_violations, seed)};
}

DistanceReport check_df_as_distance(const SampleSpec& spec) {
  spec.validate();
  const ProblemData data = ProblemData::constant_source(spec.mesh, spec.p, 0.0);
  const double lo = data.p_lower(), hi = data.p_upper();
  Extrema scaling_lower, scaling_upper, symmetry, equivalence;
  auto add_equivalence = [&](const FeFunction& a, const FeFunction& b) {
    const double distance = phi(a, b, data);
    if (distance > 0.0) equivalence.add(bregman(a, b, data) / distance);
  };
  for (int i = 0; i < spec.count; ++i) {
    const SamplePair s = draw_pair(spec.mesh, spec.amplitude, spec.seed, i);
    const FeFunction w = s.u - s.v;
    const double full = bregman(s.u, s.v, data);
    add_equivalence(s.u, s.v);
    add_equivalence(s.v, s.u);
    if (full > 0.0) {
      for (int j = 1; j <= 10; ++j) {
        const double t = 0.1 * j;
        const FeFunction moved = s.v + t * w;
        const double part = bregman(moved, s.v, data);
        add_equivalence(moved, s.v);
        scaling_lower.add(part / (std::pow(t, hi) * full));
        scaling_upper.add(part / (std::pow(t, lo) * full));
      }
    }
    const double backward = bregman(s.v, s.u, data);
    if (full > 0.0 && backward > 0.0) symmetry.add(full / backward);
  }
  // Bounds composed from the Phi lemmas with the empirical mu and L.
  const double mu = equivalence.min(), L = equivalence.max();
  const int lower_bad = scaling_lower.min() >= (mu / L) * (1.0 - kRelTol) ? 0 : 1;
  const int upper_bad = scaling_upper.max() <= (L / mu) * (1.0 + kRelTol) ? 0 : 1;
  const int sym_bad =
      symmetry.max() <= std::pow(2.0, data.p_hat()) * (L / mu) * (1.0 + kRelTol) ? 0 : 1;
  const int eq_bad = (mu > 0.0 && std::isfinite(L)) ? 0 : 1;
  return {scaling_lower.report("df_distance", "C1_lower", lower_bad, spec.seed),
          scaling_upper.report("df_distance", "C1_upper", upper_bad, spec.seed),
          symmetry.report("df_distance", "C2", sym_bad, spec.seed),
          equivalence.report("df_distance", "df_over_phi_all_pairs", eq_bad, spec.seed)};
}

std::vector<ConstantReport> run_verification(const SampleSpec& spec, int bl_samples,
                                             const VerifyOptions& options) {
  std::vector<ConstantReport> out;
  out.push_back(check_scaling(spec, options));
  out.push_back(check_symmetry(spec));
  out.push_back(check_bregman_equiv(spec));
  const BarrettLiuReport bl = check_bl_inequalities(spec.p, bl_samples, spec.seed);
  out.push_back(bl.upper);
  out.push_back(bl.lower);
  const DistanceReport df = check_df_as_distance(spec);
  out.push_back(df.scaling_lower);
  out.push_back(df.scaling_upper);
  out.push_back(df.symmetry);
  out.push_back(df.equivalence);
  return out;
}

int total_violations(const std::vector<ConstantReport>& reports) {
  int total = 0;
  for (const auto& r : reports) total += r.violations;
  return total;
}

namespace {

std::string format_value(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

} // namespace

void write_reports_csv(const std::vector<ConstantReport>& reports, std::ostream& out) {
  out << "check,name,value,samples,violations,seed\n";
  for (const auto& r : reports) {
    out << r.check << ',' << r.name << "_sample_min," << format_value(r.sample_min) << ','
        << r.samples_used << ',' << r.violations << ',' << r.seed << '\n';
    out << r.check << ',' << r.name << "_sample_max," << format_value(r.sample_max) << ','
        << r.samples_used << ',' << r.violations << ',' << r.seed << '\n';
  }
}

std::vector<ConstantReport> read_reports_csv(std::istream& in) {
  std::vector<ConstantReport> out;
  std::string line;
  if (!std::getline(in, line) || line.rfind("check,name,value", 0) != 0) {
    throw std::runtime_error("report CSV: missing header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell[6];
    for (auto& c : cell) {
      if (!std::getline(row, c, ',')) throw std::runtime_error("report CSV: short row '" + line + "'");
    }
    const bool is_min = cell[1].ends_with("_sample_min");
    const bool is_max = cell[1].ends_with("_sample_max");
    if (!is_min && !is_max) throw std::runtime_error("report CSV: unknown row name '" + cell[1] + "'");
    const std::string name = cell[1].substr(0, cell[1].size() - 11);
    if (is_min || out.empty() || out.back().name != name || out.back().check != cell[0]) {
      out.push_back(ConstantReport{cell[0], name, 0.0, 0.0, std::stoi(cell[4]), std::stoi(cell[3]),
                                   std::stoull(cell[5])});
    }
    (is_min ? out.back().sample_min : out.back().sample_max) = std::stod(cell[2]);
  }
  return out;
}

} // namespace pasm
