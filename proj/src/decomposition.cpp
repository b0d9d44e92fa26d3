#include "pasm/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "pasm/sampling.hpp"

namespace pasm {

bool Obstacle::is_feasible(std::span<const double> coeffs) const {
  if (coeffs.size() != psi.size()) {
    throw std::invalid_argument("obstacle does not match function size");
  }
  for (std::size_t i = 0; i < psi.size(); ++i) {
    if (coeffs[i] < psi[i]) return false;
  }
  return true;
}

Obstacle disk_obstacle(const Mesh& mesh, double height, double radius, Point center) {
  Obstacle out;
  out.psi.assign(static_cast<std::size_t>(mesh.num_dofs()), Obstacle::kFree);
  for (int d = 0; d < mesh.num_dofs(); ++d) {
    const Point& x = mesh.nodes()[mesh.node_of_dof(d)];
    const double dx = x.x - center.x;
    const double dy = x.y - center.y;
    if (dx * dx + dy * dy <= radius * radius * (1.0 + 1e-12)) out.psi[d] = height;
  }
  return out;
}

Decomposition::Decomposition(std::shared_ptr<const MeshPair> pair, int delta_layers)
    : pair_(std::move(pair)), delta_layers_(delta_layers) {
  if (delta_layers < 1) {
    throw std::invalid_argument("overlap must be at least one fine layer");
  }
  const int r = pair_->refinement_ratio();
  const int coarse_m = pair_->coarse().subdivisions();
  const Mesh& fine = pair_->fine();
  const int m = fine.subdivisions();
  // Same-colored blocks are one block apart, so their extended regions stay
  // disjoint (possibly touching) as long as 2 * delta <= H.
  if (coarse_m > 1 && 2 * delta_layers > r) {
    throw std::invalid_argument("overlap " + std::to_string(delta_layers) +
                                " layers exceeds H/2 = " + std::to_string(r / 2.0) +
                                " layers; the four-coloring no longer applies");
  }
  const int L = delta_layers;

  std::vector<int> local_of_dof(static_cast<std::size_t>(fine.num_dofs()), -1);
  for (int bj = 0; bj < coarse_m; ++bj) {
    for (int bi = 0; bi < coarse_m; ++bi) {
      Subdomain sd;
      sd.block_i = bi;
      sd.block_j = bj;
      const int raw_lo_i = bi * r - L, raw_hi_i = (bi + 1) * r + L;
      const int raw_lo_j = bj * r - L, raw_hi_j = (bj + 1) * r + L;
      sd.lo_i = std::max(0, raw_lo_i);
      sd.hi_i = std::min(m, raw_hi_i);
      sd.lo_j = std::max(0, raw_lo_j);
      sd.hi_j = std::min(m, raw_hi_j);
      for (int j = sd.lo_j + 1; j < sd.hi_j; ++j) {
        for (int i = sd.lo_i + 1; i < sd.hi_i; ++i) {
          const int dof = fine.dof_of_node(fine.node_index(i, j));
          if (dof < 0) continue;
          // Layers to the part of the extended boundary inside the square.
          int dist = std::numeric_limits<int>::max();
          if (raw_lo_i > 0) dist = std::min(dist, i - sd.lo_i);
          if (raw_hi_i < m) dist = std::min(dist, sd.hi_i - i);
          if (raw_lo_j > 0) dist = std::min(dist, j - sd.lo_j);
          if (raw_hi_j < m) dist = std::min(dist, sd.hi_j - j);
          sd.dofs.push_back(dof);
          sd.pou.push_back(std::min(1.0, static_cast<double>(dist) / L));
        }
      }
      for (std::size_t a = 0; a < sd.dofs.size(); ++a) local_of_dof[sd.dofs[a]] = 1;
      for (int t = 0; t < fine.num_triangles(); ++t) {
        const auto& td = fine.triangle_dofs(t);
        if ((td[0] >= 0 && local_of_dof[td[0]] > 0) || (td[1] >= 0 && local_of_dof[td[1]] > 0) ||
            (td[2] >= 0 && local_of_dof[td[2]] > 0)) {
          sd.elements.push_back(t);
        }
      }
      for (int dof : sd.dofs) local_of_dof[dof] = -1;
      subdomains_.push_back(std::move(sd));
    }
  }

  std::vector<double> total(static_cast<std::size_t>(fine.num_dofs()), 0.0);
  for (const auto& sd : subdomains_) {
    for (std::size_t a = 0; a < sd.dofs.size(); ++a) total[sd.dofs[a]] += sd.pou[a];
  }
  for (auto& sd : subdomains_) {
    for (std::size_t a = 0; a < sd.dofs.size(); ++a) sd.pou[a] /= total[sd.dofs[a]];
  }

  // Greedy coloring of the graph whose edges join subdomains with
  // intersecting open extended regions.
  auto intersects = [](const Subdomain& a, const Subdomain& b) {
    return a.lo_i < b.hi_i && b.lo_i < a.hi_i && a.lo_j < b.hi_j && b.lo_j < a.hi_j;
  };
  for (std::size_t k = 0; k < subdomains_.size(); ++k) {
    std::vector<bool> used(subdomains_.size() + 1, false);
    for (std::size_t l = 0; l < k; ++l) {
      if (intersects(subdomains_[k], subdomains_[l])) used[subdomains_[l].color] = true;
    }
    int color = 0;
    while (used[color]) ++color;
    subdomains_[k].color = color;
    num_colors_ = std::max(num_colors_, color + 1);
  }
}

const Subdomain& Decomposition::subdomain(int k) const {
  if (k < 0 || k >= num_subdomains()) {
    throw std::out_of_range("subdomain index " + std::to_string(k) + " out of range");
  }
  return subdomains_[k];
}

std::vector<double> Decomposition::pou(int k) const {
  const Subdomain& sd = subdomain(k);
  std::vector<double> out(static_cast<std::size_t>(fine().num_dofs()), 0.0);
  for (std::size_t a = 0; a < sd.dofs.size(); ++a) out[sd.dofs[a]] = sd.pou[a];
  return out;
}

std::vector<double> Decomposition::restrict(int k, std::span<const double> global) const {
  const Subdomain& sd = subdomain(k);
  if (static_cast<int>(global.size()) != fine().num_dofs()) {
    throw std::invalid_argument("restrict: global vector size mismatch");
  }
  std::vector<double> out(sd.dofs.size());
  for (std::size_t a = 0; a < sd.dofs.size(); ++a) out[a] = global[sd.dofs[a]];
  return out;
}

void Decomposition::add_extension(int k, std::span<const double> local, double scale,
                                  std::span<double> global) const {
  const Subdomain& sd = subdomain(k);
  if (local.size() != sd.dofs.size()) {
    throw std::invalid_argument("extend_by_zero: local vector has " +
                                std::to_string(local.size()) + " entries, subdomain has " +
                                std::to_string(sd.dofs.size()));
  }
  for (std::size_t a = 0; a < sd.dofs.size(); ++a) global[sd.dofs[a]] += scale * local[a];
}

FeFunction Decomposition::extend_by_zero(int k, std::span<const double> local) const {
  FeFunction out(pair_->fine_ptr());
  add_extension(k, local, 1.0, out.coeffs());
  return out;
}

std::shared_ptr<const Decomposition> build_decomposition(std::shared_ptr<const MeshPair> pair,
                                                          int delta_layers) {
  return std::make_shared<const Decomposition>(std::move(pair), delta_layers);
}

FeFunction l2_project_coarse(const MeshPair& pair, const FeFunction& w) {
  if (w.mesh().subdivisions() != pair.fine().subdivisions()) {
    throw std::invalid_argument("l2_project_coarse: function does not live on the fine mesh");
  }
  FeFunction out(pair.coarse_ptr());
  if (out.size() == 0) return out;
  Eigen::Map<const Eigen::VectorXd> wv(w.coeffs().data(), w.size());
  const Eigen::VectorXd rhs = pair.prolongation().transpose() * (pair.fine_mass() * wv);
  if (rhs.norm() == 0.0) return out;
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-13);
  cg.setMaxIterations(10 * out.size() + 100);
  cg.compute(pair.coarse_mass());
  const Eigen::VectorXd x = cg.solve(rhs);
  if (cg.info() != Eigen::Success) {
    throw std::runtime_error("coarse mass solve did not reach tolerance");
  }
  std::copy(x.data(), x.data() + x.size(), out.coeffs().begin());
  return out;
}

FeFunction reconstruct(const Decomposition& dec, const SplitParts& parts) {
  FeFunction out = coarse_to_fine(dec.pair(), parts.coarse);
  for (int k = 0; k < dec.num_subdomains(); ++k) {
    dec.add_extension(k, parts.local[k], 1.0, out.coeffs());
  }
  return out;
}

namespace {

SplitParts split_remainder(const Decomposition& dec, const FeFunction& w, FeFunction coarse) {
  const FeFunction remainder = w - coarse_to_fine(dec.pair(), coarse);
  SplitParts parts{std::move(coarse), {}};
  parts.local.reserve(dec.num_subdomains());
  for (int k = 0; k < dec.num_subdomains(); ++k) {
    const Subdomain& sd = dec.subdomain(k);
    std::vector<double> local(sd.dofs.size());
    for (std::size_t a = 0; a < sd.dofs.size(); ++a) local[a] = sd.pou[a] * remainder[sd.dofs[a]];
    parts.local.push_back(std::move(local));
  }
  return parts;
}

} // namespace

SplitParts stable_split(const Decomposition& dec, const FeFunction& w) {
  return split_remainder(dec, w, l2_project_coarse(dec.pair(), w));
}

FeFunction monotone_coarse_interp(const MeshPair& pair, const FeFunction& w) {
  if (w.mesh().subdivisions() != pair.fine().subdivisions()) {
    throw std::invalid_argument("monotone_coarse_interp: function does not live on the fine mesh");
  }
  for (double c : w.coeffs()) {
    if (c < 0.0) throw std::invalid_argument("monotone_coarse_interp: input must be nonnegative");
  }
  const Mesh& coarse = pair.coarse();
  const Mesh& fine = pair.fine();
  const int r = pair.refinement_ratio();
  FeFunction out(pair.coarse_ptr());
  for (int c = 0; c < coarse.num_dofs(); ++c) {
    const int fine_center = pair.fine_node_of_coarse_node(coarse.node_of_dof(c));
    const int ci = fine_center % (fine.subdivisions() + 1);
    const int cj = fine_center / (fine.subdivisions() + 1);
    double lowest = std::numeric_limits<double>::infinity();
    for (int t = -r; t <= r; ++t) {
      for (int s = -r; s <= r; ++s) {
        if (std::max({std::abs(s), std::abs(t), std::abs(s - t)}) > r) continue;
        lowest = std::min(lowest, w.node_value(fine.node_index(ci + s, cj + t)));
      }
    }
    out[c] = lowest;
  }
  return out;
}

SplitParts constrained_split(const Decomposition& dec, const FeFunction& u, const FeFunction& v,
                             const Obstacle& obstacle) {
  require_same_mesh(u, v);
  if (!obstacle.is_feasible(u) || !obstacle.is_feasible(v)) {
    throw std::invalid_argument("constrained_split: inputs must satisfy the obstacle");
  }
  const FeFunction w = u - v;
  FeFunction positive = w;
  FeFunction negative = w;
  for (int d = 0; d < w.size(); ++d) {
    positive[d] = std::max(0.0, w[d]);
    negative[d] = std::max(0.0, -w[d]);
  }
  FeFunction coarse = monotone_coarse_interp(dec.pair(), positive) -
                      monotone_coarse_interp(dec.pair(), negative);
  return split_remainder(dec, w, std::move(coarse));
}

int count_split_infeasibilities(const Decomposition& dec, const FeFunction& v,
                                const SplitParts& parts, const Obstacle& obstacle) {
  // Equality is attained wherever u or v touches psi, so allow rounding of
  // the summed increment.
  auto below = [](double base, double step, double psi) {
    return base + step < psi - 4 * std::numeric_limits<double>::epsilon() *
                                   (std::abs(base) + std::abs(step) + std::abs(psi));
  };
  int violations = 0;
  const FeFunction coarse = coarse_to_fine(dec.pair(), parts.coarse);
  for (int d = 0; d < coarse.size(); ++d) {
    if (below(v[d], coarse[d], obstacle.psi[d])) ++violations;
  }
  for (int k = 0; k < dec.num_subdomains(); ++k) {
    const Subdomain& sd = dec.subdomain(k);
    for (std::size_t a = 0; a < sd.dofs.size(); ++a) {
      const int d = sd.dofs[a];
      if (below(v[d], parts.local[k][a], obstacle.psi[d])) ++violations;
    }
  }
  return violations;
}

namespace {

// D_F(v + z, v) restricted to the listed triangles (all when empty).
double bregman_increment(const Mesh& mesh, const FeFunction& v, std::span<const double> z,
                         std::span<const int> elements, double p) {
  double total = 0.0;
  auto add = [&](int t) {
    const Vec2 gv = element_gradient(v, t);
    const Vec2 gz = element_gradient(mesh, z, t);
    total += mesh.area(t) * density::bregman(gv + gz, gv, p);
  };
  if (elements.empty()) {
    for (int t = 0; t < mesh.num_triangles(); ++t) add(t);
  } else {
    for (int t : elements) add(t);
  }
  return total;
}

} // namespace

double split_energy_ratio(const Decomposition& dec, const ProblemData& data, const FeFunction& u,
                          const FeFunction& v) {
  const double denominator = phi(u, v, data);
  if (denominator == 0.0) return 0.0;
  const SplitParts parts = stable_split(dec, u - v);
  const Mesh& fine = dec.fine();
  double total = 0.0;
  if (parts.coarse.size() > 0) {
    total += bregman_increment(fine, v, coarse_to_fine(dec.pair(), parts.coarse).coeffs(), {},
                               data.p());
  }
  std::vector<double> z(static_cast<std::size_t>(fine.num_dofs()), 0.0);
  for (int k = 0; k < dec.num_subdomains(); ++k) {
    const Subdomain& sd = dec.subdomain(k);
    dec.add_extension(k, parts.local[k], 1.0, z);
    total += bregman_increment(fine, v, z, sd.elements, data.p());
    for (int d : sd.dofs) z[d] = 0.0;
  }
  return total / denominator;
}

namespace {

using Vector = Eigen::VectorXd;

constexpr int kC0AscentSteps = 50;

// Ascent on w -> sum_k |S_k w|^p / |w|^p for the linear split maps S_k of
// stable_split (v = 0, where the split ratio reduces to this quotient over p).
// Steps are preconditioned by the inverse fine stiffness matrix so the search
// moves through smooth directions; plain Euclidean ascent stalls on fine meshes.
class SplitRatioAscent {
public:
  SplitRatioAscent(const Decomposition& dec, double p) : dec_(dec), p_(p) {
    coarse_mass_.compute(dec.pair().coarse_mass());
    stiffness_.compute(assemble_stiffness(dec.fine()));
  }

  void refine(Vector& w, int iterations) const {
    double step = 0.1;
    for (int it = 0; it < iterations; ++it) {
      Vector grad_num;
      const double num = numerator(w, &grad_num);
      const double den = power_seminorm(w, nullptr);
      if (num == 0.0 || den == 0.0) return;
      Vector grad_den;
      power_seminorm(w, &grad_den);
      const Vector raw = grad_num / num - grad_den / den;
      Vector dir = stiffness_.solve(raw);
      const double dir_norm = dir.norm();
      if (!(dir_norm > 0.0)) return;
      dir *= w.norm() / dir_norm;
      const double current = num / den;
      bool improved = false;
      for (int ls = 0; ls < 30; ++ls) {
        Vector trial = w + step * dir;
        const double value = numerator(trial, nullptr) / power_seminorm(trial, nullptr);
        if (value > current) {
          w = trial / trial.norm();
          step *= 1.5;
          improved = true;
          break;
        }
        step *= 0.5;
      }
      if (!improved) return;
    }
  }

private:
  Vector project(const Vector& w) const {
    const auto& P = dec_.pair().prolongation();
    if (P.cols() == 0) return Vector::Zero(w.size());
    return P * coarse_mass_.solve(P.transpose() * (dec_.pair().fine_mass() * w));
  }

  Vector project_transpose(const Vector& z) const {
    const auto& P = dec_.pair().prolongation();
    if (P.cols() == 0) return Vector::Zero(z.size());
    return dec_.pair().fine_mass() * (P * coarse_mass_.solve(P.transpose() * z));
  }

  // int |grad z|^p and optionally its gradient.
  double power_seminorm(const Vector& z, Vector* grad) const {
    const Mesh& mesh = dec_.fine();
    const std::span<const double> zs(z.data(), static_cast<std::size_t>(z.size()));
    if (grad) grad->setZero(z.size());
    double total = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      const Vec2 g = element_gradient(mesh, zs, t);
      total += mesh.area(t) * std::pow(norm2(g), 0.5 * p_);
      if (grad) {
        const Vec2 f = p_ * mesh.area(t) * density::flux(g, p_);
        const auto& dofs = mesh.triangle_dofs(t);
        const auto& hats = mesh.hat_gradients(t);
        for (int a = 0; a < 3; ++a) {
          if (dofs[a] >= 0) (*grad)[dofs[a]] += dot(f, hats[a]);
        }
      }
    }
    return total;
  }

  double numerator(const Vector& w, Vector* grad) const {
    const Vector coarse = project(w);
    const Vector remainder = w - coarse;
    Vector coarse_grad;
    double total = power_seminorm(coarse, grad ? &coarse_grad : nullptr);
    Vector local_grad = Vector::Zero(w.size());
    Vector z = Vector::Zero(w.size());
    Vector zg;
    for (const Subdomain& sd : dec_.subdomains()) {
      for (std::size_t a = 0; a < sd.dofs.size(); ++a) {
        z[sd.dofs[a]] = sd.pou[a] * remainder[sd.dofs[a]];
      }
      total += power_seminorm(z, grad ? &zg : nullptr);
      for (std::size_t a = 0; a < sd.dofs.size(); ++a) {
        if (grad) local_grad[sd.dofs[a]] += sd.pou[a] * zg[sd.dofs[a]];
        z[sd.dofs[a]] = 0.0;
      }
    }
    if (grad) *grad = coarse_grad + local_grad - project_transpose(local_grad);
    return total;
  }

  const Decomposition& dec_;
  double p_;
  Eigen::SimplicialLDLT<SparseMatrix> coarse_mass_;
  Eigen::SimplicialLDLT<SparseMatrix> stiffness_;
};

} // namespace

C0Estimate measure_C0(const Decomposition& dec, const ProblemData& data, int samples,
                      std::uint64_t seed) {
  const auto& mesh = dec.pair().fine_ptr();
  const double h = mesh->h();
  std::optional<SplitRatioAscent> ascent;
  C0Estimate out;
  for (int s = 0; s < samples; ++s) {
    auto rng = sample_rng(seed, static_cast<std::uint64_t>(s));
    FeFunction u(mesh), v(mesh);
    if (s % 10 == 9) {
      // Adversarial sample: start from an oscillation on the subdomain scale,
      // then climb the split ratio. The value is still evaluated through the
      // split itself below.
      if (!ascent) ascent.emplace(dec, data.p());
      const FeFunction start = coarse_oscillation(mesh, 2.0 * dec.coarse_h(), 1.0, rng);
      Vector w = Eigen::Map<const Vector>(start.coeffs().data(), start.size());
      ascent->refine(w, kC0AscentSteps);
      std::copy(w.data(), w.data() + w.size(), u.coeffs().begin());
    } else {
      u = random_normal_function(mesh, h, rng);
      v = random_normal_function(mesh, h, rng);
    }
    if (phi(u, v, data) == 0.0) {
      ++out.samples_skipped;
      continue;
    }
    out.max_ratio = std::max(out.max_ratio, split_energy_ratio(dec, data, u, v));
    ++out.samples_used;
  }
  return out;
}

} // namespace pasm
