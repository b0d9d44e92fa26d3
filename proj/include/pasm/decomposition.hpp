#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "pasm/fem.hpp"
#include "pasm/mesh.hpp"

namespace pasm {

/// One overlapping subdomain: the H x H block (two coarse triangles) it owns,
/// extended by the overlap layers and clipped to the unit square.
struct Subdomain {
  int block_i = 0;
  int block_j = 0;
  /// Fine node index box [lo, hi]^2 of the closed extended region.
  int lo_i = 0, hi_i = 0, lo_j = 0, hi_j = 0;
  /// Global fine dofs of V_k in local (row-major) order: the interior nodes of
  /// the extended region that are also interior to the unit square.
  std::vector<int> dofs;
  /// Partition-of-unity weight theta_k at each local dof.
  std::vector<double> pou;
  /// Fine triangles touching at least one local dof, ascending.
  std::vector<int> elements;
  int color = 0;
};

/// Lower obstacle at fine interior nodes; -infinity marks an unconstrained node.
struct Obstacle {
  static constexpr double kFree = -std::numeric_limits<double>::infinity();

  std::vector<double> psi;

  bool is_feasible(std::span<const double> coeffs) const;
  bool is_feasible(const FeFunction& v) const { return is_feasible(v.coeffs()); }
};

/// psi = height inside the closed disk, unconstrained elsewhere.
Obstacle disk_obstacle(const Mesh& mesh, double height, double radius, Point center);

/// Two-level overlapping decomposition of the fine space.
class Decomposition {
public:
  Decomposition(std::shared_ptr<const MeshPair> pair, int delta_layers);

  const MeshPair& pair() const { return *pair_; }
  const std::shared_ptr<const MeshPair>& pair_ptr() const { return pair_; }
  const Mesh& fine() const { return pair_->fine(); }
  int delta_layers() const { return delta_layers_; }
  double delta() const { return delta_layers_ * pair_->fine().h(); }
  double coarse_h() const { return pair_->coarse().h(); }
  double fine_h() const { return pair_->fine().h(); }

  int num_subdomains() const { return static_cast<int>(subdomains_.size()); }
  const Subdomain& subdomain(int k) const;
  const std::vector<Subdomain>& subdomains() const { return subdomains_; }
  int num_colors() const { return num_colors_; }
  double tau0() const { return 1.0 / (num_colors_ + 1); }

  /// theta_k over all fine dofs (zero outside the subdomain).
  std::vector<double> pou(int k) const;

  std::vector<double> restrict(int k, std::span<const double> global) const;
  FeFunction extend_by_zero(int k, std::span<const double> local) const;
  /// global += scale * R_k^* local
  void add_extension(int k, std::span<const double> local, double scale,
                     std::span<double> global) const;

private:
  std::shared_ptr<const MeshPair> pair_;
  int delta_layers_;
  std::vector<Subdomain> subdomains_;
  int num_colors_ = 0;
};

std::shared_ptr<const Decomposition> build_decomposition(std::shared_ptr<const MeshPair> pair,
                                                          int delta_layers);

/// L2(Omega)-orthogonal projection of a fine function onto the coarse space.
FeFunction l2_project_coarse(const MeshPair& pair, const FeFunction& w);

/// Coarse part plus one local vector per subdomain.
struct SplitParts {
  FeFunction coarse;
  std::vector<std::vector<double>> local;
};

/// Sum_k R_k^* w_k of a split, coarse part first, then k ascending.
FeFunction reconstruct(const Decomposition& dec, const SplitParts& parts);

/// w_0 = L2 projection of w, R_k^* w_k = I_h(theta_k (w - R_0^* w_0)).
SplitParts stable_split(const Decomposition& dec, const FeFunction& w);

/// Coarse value at each coarse node = min of w over the fine nodes of the
/// closed support of that coarse hat. Requires w >= 0 nodally.
FeFunction monotone_coarse_interp(const MeshPair& pair, const FeFunction& w);

/// Split of u - v whose coarse part uses the monotone interpolation of the
/// positive and negative parts.
SplitParts constrained_split(const Decomposition& dec, const FeFunction& u, const FeFunction& v,
                             const Obstacle& obstacle);

/// Number of (k, node) pairs where v + R_k^* w_k falls below psi by more than
/// rounding (coarse part counted as k = 0).
int count_split_infeasibilities(const Decomposition& dec, const FeFunction& v,
                                const SplitParts& parts, const Obstacle& obstacle);

struct C0Estimate {
  double max_ratio = 0.0;
  int samples_used = 0;
  int samples_skipped = 0;
};

/// Sample maximum of sum_k D_F(v + R_k^* w_k, v) / Phi(u, v) over pairs with
/// the stable split of u - v. A lower bound on the true stable-decomposition
/// constant.
C0Estimate measure_C0(const Decomposition& dec, const ProblemData& data, int samples,
                      std::uint64_t seed);

/// Sum_k D_F(v + R_k^* w_k, v) / Phi(u, v) for one pair.
double split_energy_ratio(const Decomposition& dec, const ProblemData& data, const FeFunction& u,
                          const FeFunction& v);

} // namespace pasm
