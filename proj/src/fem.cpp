#include "pasm/fem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pasm {

ProblemData::ProblemData(std::shared_ptr<const Mesh> mesh, double p, std::vector<double> f_nodal)
    : mesh_(std::move(mesh)), p_(p), f_(std::move(f_nodal)) {
  if (!(p_ > 1.0) || !std::isfinite(p_)) {
    throw std::invalid_argument("exponent p must be finite and > 1, got " + std::to_string(p_));
  }
  if (static_cast<int>(f_.size()) != mesh_->num_nodes()) {
    throw std::invalid_argument("source field must have one value per mesh node");
  }
  element_load_.reserve(mesh_->num_triangles());
  for (int t = 0; t < mesh_->num_triangles(); ++t) {
    const auto& tri = mesh_->triangles()[t];
    const double f0 = f_[tri[0]], f1 = f_[tri[1]], f2 = f_[tri[2]];
    const double sum = f0 + f1 + f2;
    const double w = mesh_->area(t) / 12.0;
    element_load_.push_back({w * (sum + f0), w * (sum + f1), w * (sum + f2)});
  }
}

ProblemData ProblemData::constant_source(std::shared_ptr<const Mesh> mesh, double p, double f) {
  const auto n = static_cast<std::size_t>(mesh->num_nodes());
  return ProblemData(std::move(mesh), p, std::vector<double>(n, f));
}

double ProblemData::p_lower() const { return std::min(p_, 2.0); }
double ProblemData::p_upper() const { return std::max(p_, 2.0); }
double ProblemData::p_hat() const { return std::abs(p_ - 2.0); }

namespace density {

namespace {

// (1 + x)^s - 1 - s x for x >= -1.
double power_remainder(double x, double s) {
  if (std::abs(x) < 0.5) {
    double term = s * x;
    double sum = 0.0;
    for (int k = 2; k < 200; ++k) {
      term *= (s - k + 1) / k * x;
      sum += term;
      if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  return std::expm1(s * std::log1p(x)) - s * x;
}

} // namespace

Vec2 flux(Vec2 g, double p) {
  const double n2 = norm2(g);
  if (n2 == 0.0) return {};
  return std::pow(n2, 0.5 * (p - 2.0)) * g;
}

double bregman(Vec2 gu, Vec2 gv, double p) {
  const Vec2 w = gu - gv;
  const double ww = norm2(w);
  if (ww == 0.0) return 0.0;
  const double s = 0.5 * p;
  const double a = norm2(gv);
  if (a == 0.0) return std::pow(ww, s) / p;
  const double x = (2.0 * dot(gv, w) + ww) / a;
  const double out = std::pow(a, s) / p * power_remainder(x, s) + 0.5 * std::pow(a, s - 1.0) * ww;
  return out;
}

double phi(Vec2 gw, Vec2 gv, double p) {
  const double nw2 = norm2(gw);
  if (nw2 == 0.0) return 0.0;
  const double nw = std::sqrt(nw2);
  return std::pow(nw + std::sqrt(norm2(gv)), p - 2.0) * nw2;
}

} // namespace density

Vec2 element_gradient(const Mesh& mesh, std::span<const double> coeffs, int t) {
  if (t < 0 || t >= mesh.num_triangles()) {
    throw std::out_of_range("triangle index " + std::to_string(t) + " out of range");
  }
  const auto& dofs = mesh.triangle_dofs(t);
  const auto& grads = mesh.hat_gradients(t);
  Vec2 g;
  for (int a = 0; a < 3; ++a) {
    if (dofs[a] >= 0) g += coeffs[dofs[a]] * grads[a];
  }
  return g;
}

Vec2 element_gradient(const FeFunction& v, int t) {
  return element_gradient(v.mesh(), v.coeffs(), t);
}

namespace {

void require_data_mesh(std::span<const double> coeffs, const ProblemData& data) {
  if (static_cast<int>(coeffs.size()) != data.mesh().num_dofs()) {
    throw std::invalid_argument("function does not live on the problem mesh");
  }
}

} // namespace

double energy(std::span<const double> coeffs, const ProblemData& data) {
  require_data_mesh(coeffs, data);
  const Mesh& mesh = data.mesh();
  const double p = data.p();
  double total = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& dofs = mesh.triangle_dofs(t);
    const auto& load = data.element_load(t);
    const Vec2 g = element_gradient(mesh, coeffs, t);
    double term = mesh.area(t) * std::pow(norm2(g), 0.5 * p) / p;
    for (int a = 0; a < 3; ++a) {
      if (dofs[a] >= 0) term -= load[a] * coeffs[dofs[a]];
    }
    total += term;
  }
  return total;
}

double energy(const FeFunction& v, const ProblemData& data) {
  return energy(v.coeffs(), data);
}

void grad_energy(std::span<const double> coeffs, const ProblemData& data, std::span<double> out) {
  require_data_mesh(coeffs, data);
  if (out.size() != coeffs.size()) {
    throw std::invalid_argument("gradient output size does not match the function");
  }
  const Mesh& mesh = data.mesh();
  std::fill(out.begin(), out.end(), 0.0);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& dofs = mesh.triangle_dofs(t);
    const auto& grads = mesh.hat_gradients(t);
    const auto& load = data.element_load(t);
    const Vec2 flux = mesh.area(t) * density::flux(element_gradient(mesh, coeffs, t), data.p());
    for (int a = 0; a < 3; ++a) {
      if (dofs[a] >= 0) out[dofs[a]] += dot(flux, grads[a]) - load[a];
    }
  }
}

std::vector<double> grad_energy(const FeFunction& v, const ProblemData& data) {
  std::vector<double> out(static_cast<std::size_t>(v.size()));
  grad_energy(v.coeffs(), data, out);
  return out;
}

double bregman(const FeFunction& u, const FeFunction& v, const ProblemData& data) {
  require_same_mesh(u, v);
  require_data_mesh(u.coeffs(), data);
  const Mesh& mesh = u.mesh();
  double total = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    total += mesh.area(t) *
             density::bregman(element_gradient(u, t), element_gradient(v, t), data.p());
  }
  return total;
}

double phi(const FeFunction& u, const FeFunction& v, const ProblemData& data) {
  require_same_mesh(u, v);
  const Mesh& mesh = u.mesh();
  double total = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Vec2 gv = element_gradient(v, t);
    total += mesh.area(t) * density::phi(element_gradient(u, t) - gv, gv, data.p());
  }
  return total;
}

double seminorm(const FeFunction& v, double s) {
  if (!(s >= 1.0)) {
    throw std::invalid_argument("seminorm exponent must be >= 1, got " + std::to_string(s));
  }
  const Mesh& mesh = v.mesh();
  double total = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    total += mesh.area(t) * std::pow(norm2(element_gradient(v, t)), 0.5 * s);
  }
  return std::pow(total, 1.0 / s);
}

} // namespace pasm
