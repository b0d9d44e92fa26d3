#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "pasm/mesh.hpp"

namespace pasm {

/// Exponent p and source f of the p-Laplace energy on a fixed fine mesh.
///
/// f is a P1 nodal field over all mesh nodes (it need not vanish on the
/// boundary). The per-element load weights int_T f phi_i are precomputed with
/// the exact P1 mass rule, so a constant f is integrated exactly.
class ProblemData {
public:
  ProblemData(std::shared_ptr<const Mesh> mesh, double p, std::vector<double> f_nodal);
  static ProblemData constant_source(std::shared_ptr<const Mesh> mesh, double p, double f);

  double p() const { return p_; }
  double p_lower() const;  // min{p, 2}
  double p_upper() const;  // max{p, 2}
  double p_hat() const;    // |p - 2|

  const Mesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh>& mesh_ptr() const { return mesh_; }
  std::span<const double> f_nodal() const { return f_; }
  /// int_T f phi_v for the three vertices of triangle t.
  const std::array<double, 3>& element_load(int t) const { return element_load_[t]; }

private:
  std::shared_ptr<const Mesh> mesh_;
  double p_;
  std::vector<double> f_;
  std::vector<std::array<double, 3>> element_load_;
};

// Pointwise densities for constant element gradients. Each is defined by its
// continuous extension where the raw formula is 0 * inf or 0 / 0.
namespace density {

/// |g|^{p-2} g, with value 0 at g = 0.
Vec2 flux(Vec2 g, double p);
/// |g_u|^p/p - |g_v|^p/p - |g_v|^{p-2} g_v . (g_u - g_v), evaluated without
/// the cancellation of the naive formula when g_u is close to g_v.
double bregman(Vec2 gu, Vec2 gv, double p);
/// (|g_w| + |g_v|)^{p-2} |g_w|^2, zero when g_w = 0.
double phi(Vec2 gw, Vec2 gv, double p);

} // namespace density

Vec2 element_gradient(const FeFunction& v, int t);
/// Same, from raw interior coefficients.
Vec2 element_gradient(const Mesh& mesh, std::span<const double> coeffs, int t);

/// F(v) = (1/p) int |grad v|^p - int f v.
double energy(const FeFunction& v, const ProblemData& data);
double energy(std::span<const double> coeffs, const ProblemData& data);

/// Entries <F'(v), phi_i> for every interior hat function phi_i.
std::vector<double> grad_energy(const FeFunction& v, const ProblemData& data);
void grad_energy(std::span<const double> coeffs, const ProblemData& data, std::span<double> out);

/// D_F(u, v) = F(u) - F(v) - <F'(v), u - v>, summed element-wise.
double bregman(const FeFunction& u, const FeFunction& v, const ProblemData& data);

/// Phi(u, v) = int (|grad(u-v)| + |grad v|)^{p-2} |grad(u-v)|^2.
double phi(const FeFunction& u, const FeFunction& v, const ProblemData& data);

/// |v|_{W^{1,s}} for s >= 1.
double seminorm(const FeFunction& v, double s);

} // namespace pasm
