#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pasm/fem.hpp"
#include "pasm/sampling.hpp"

using namespace pasm;

namespace {

std::vector<double> as_vector(const FeFunction& v) { return {v.coeffs().begin(), v.coeffs().end()}; }

FeFunction normal_function(const std::shared_ptr<const Mesh>& mesh, double scale, std::uint64_t seed) {
  auto rng = sample_rng(seed, 0);
  return random_normal_function(mesh, scale, rng);
}

double directional_fd(const FeFunction& v, const FeFunction& w, const ProblemData& data, double eps) {
  return (energy(v + eps * w, data) - energy(v - eps * w, data)) / (2.0 * eps);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

} // namespace

TEST_CASE("problem data validates the exponent") {
  auto mesh = build_uniform_mesh(4);
  CHECK_THROWS_AS(ProblemData::constant_source(mesh, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ProblemData::constant_source(mesh, 0.5, 1.0), std::invalid_argument);
  const auto data = ProblemData::constant_source(mesh, 3.0, 1.0);
  CHECK(data.p_lower() == 2.0);
  CHECK(data.p_upper() == 3.0);
  CHECK(data.p_hat() == 1.0);
  const auto low = ProblemData::constant_source(mesh, 1.5, 1.0);
  CHECK(low.p_lower() == 1.5);
  CHECK(low.p_upper() == 2.0);
  CHECK(low.p_hat() == 0.5);
}

TEST_CASE("element gradients of a hat match the vertex-plane oracle") {
  const int m = 4;
  auto mesh = build_uniform_mesh(m);
  FeFunction hat(mesh);
  const int center = mesh->dof_of_node(mesh->node_index(2, 2));
  hat[center] = 1.0;
  const auto c = as_vector(hat);
  const auto tris = oracle::triangles(m, c);
  int nonzero = 0;
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    const Vec2 g = element_gradient(hat, t);
    const Eigen::Vector2d expect = oracle::gradient(tris[t]);
    CHECK(std::abs(g.x - expect.x()) < 1e-12);
    CHECK(std::abs(g.y - expect.y()) < 1e-12);
    if (norm2(g) > 0) {
      ++nonzero;
      // Right triangles: the hat slope is 1/h along an axis or sqrt(2)/h along the anti-diagonal.
      const double len = std::sqrt(norm2(g));
      const bool ok = std::abs(len - m) < 1e-12 || std::abs(len - std::sqrt(2.0) * m) < 1e-12;
      CHECK(ok);
    }
  }
  CHECK(nonzero == 6);
}

TEST_CASE("element gradients of linear data are exact") {
  auto mesh = build_uniform_mesh(6);
  const FeFunction v = nodal_interpolate(mesh, [](Point q) { return 2.0 * q.x - 3.0 * q.y; });
  // Triangles away from the boundary see the affine function unchanged.
  for (int t = 0; t < mesh->num_triangles(); ++t) {
    const auto& d = mesh->triangle_dofs(t);
    if (d[0] < 0 || d[1] < 0 || d[2] < 0) continue;
    const Vec2 g = element_gradient(v, t);
    CHECK(g.x == doctest::Approx(2.0));
    CHECK(g.y == doctest::Approx(-3.0));
  }
}

TEST_CASE("energy matches a brute-force quadrature") {
  for (double p : {1.5, 2.0, 3.0, 4.0}) {
    for (int m : {3, 8}) {
      auto mesh = build_uniform_mesh(m);
      const auto data = ProblemData::constant_source(mesh, p, 1.3);
      CHECK(energy(FeFunction(mesh), data) == 0.0);
      const FeFunction v = normal_function(mesh, 0.2, 17 + m);
      const double expect = oracle::energy(m, as_vector(v), p, 1.3);
      CHECK(energy(v, data) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("p = 2 energy and gradient are the quadratic form") {
  const int m = 9;
  auto mesh = build_uniform_mesh(m);
  const auto data = ProblemData::constant_source(mesh, 2.0, 1.0);
  const FeFunction v = normal_function(mesh, 0.1, 3);
  const Eigen::Map<const Eigen::VectorXd> x(v.coeffs().data(), v.size());
  const Eigen::MatrixXd K = oracle::stiffness(m);
  const Eigen::VectorXd b = oracle::constant_load(m, 1.0);
  CHECK(energy(v, data) == doctest::Approx(0.5 * x.dot(K * x) - b.dot(x)).epsilon(1e-12));
  const auto g = grad_energy(v, data);
  const Eigen::VectorXd expect = K * x - b;
  for (int i = 0; i < v.size(); ++i) CHECK(std::abs(g[i] - expect[i]) < 1e-12);
}

TEST_CASE("gradient agrees with central finite differences") {
  const int m = 8;
  auto mesh = build_uniform_mesh(m);
  for (double p : {1.5, 3.0, 4.0}) {
    const auto data = ProblemData::constant_source(mesh, p, 1.0);
    int checked = 0;
    for (int k = 0; k < 100; ++k) {
      auto rng = sample_rng(100 + static_cast<std::uint64_t>(p * 10), k);
      const FeFunction v = random_normal_function(mesh, 1.0, rng);
      const FeFunction w = random_normal_function(mesh, 1.0, rng);
      const auto g = grad_energy(v, data);
      const double analytic = dot(g, w.coeffs());
      const double fd = directional_fd(v, w, data, 1e-6);
      CHECK(std::abs(fd - analytic) <= 1e-5 * std::abs(analytic));
      ++checked;
    }
    CHECK(checked == 100);
  }
}

TEST_CASE("span overloads agree with FeFunction overloads") {
  auto mesh = build_uniform_mesh(5);
  const auto data = ProblemData::constant_source(mesh, 3.0, 2.0);
  const FeFunction v = normal_function(mesh, 0.3, 9);
  CHECK(energy(v.coeffs(), data) == energy(v, data));
  std::vector<double> out(v.size());
  grad_energy(v.coeffs(), data, out);
  const auto g = grad_energy(v, data);
  for (int i = 0; i < v.size(); ++i) CHECK(out[i] == g[i]);
  CHECK_THROWS_AS(grad_energy(v.coeffs(), data, std::span<double>(out.data(), 2)), std::invalid_argument);
}

TEST_CASE("Bregman distance agrees with its defining formula") {
  const int m = 6;
  auto mesh = build_uniform_mesh(m);
  for (double p : {1.5, 2.0, 3.0, 4.0}) {
    const auto data = ProblemData::constant_source(mesh, p, 1.0);
    for (int k = 0; k < 20; ++k) {
      auto rng = sample_rng(41, k);
      const FeFunction u = random_normal_function(mesh, 1.0, rng);
      const FeFunction v = random_normal_function(mesh, 1.0, rng);
      const auto gv = grad_energy(v, data);
      const FeFunction diff = u - v;
      const double composed = energy(u, data) - energy(v, data) - dot(gv, diff.coeffs());
      CHECK(bregman(u, v, data) == doctest::Approx(composed).epsilon(1e-9));
      CHECK(bregman(u, v, data) >= 0.0);
    }
    const FeFunction v = normal_function(mesh, 1.0, 77);
    CHECK(bregman(v, v, data) == 0.0);
  }
}

TEST_CASE("pointwise Bregman density is stable for nearly equal gradients") {
  for (double p : {1.5, 3.0, 4.0}) {
    const Vec2 gv{0.7, -1.1};
    for (double eps : {1e-3, 1e-6, 1e-9}) {
      const Vec2 gu = gv + Vec2{eps, 0.5 * eps};
      const double value = density::bregman(gu, gv, p);
      CHECK(value > 0.0);
      // Second-order expansion: (1/2) e^T Hess e with Hess = |g|^{p-2}(I + (p-2) n n^T).
      const double r = std::sqrt(norm2(gv));
      const Vec2 e = gu - gv;
      const double en = dot(e, gv) / r;
      const double quad = 0.5 * std::pow(r, p - 2) * (norm2(e) + (p - 2) * en * en);
      CHECK(value == doctest::Approx(quad).epsilon(10 * eps));
    }
    CHECK(density::bregman(gv, gv, p) == 0.0);
  }
}

TEST_CASE("Phi reduces to the squared difference at p = 2") {
  auto mesh = build_uniform_mesh(7);
  const auto data = ProblemData::constant_source(mesh, 2.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    auto rng = sample_rng(5, k);
    const FeFunction u = random_normal_function(mesh, 1.0, rng);
    const FeFunction v = random_normal_function(mesh, 1.0, rng);
    const FeFunction w = u - v;
    const double sq = std::pow(seminorm(w, 2.0), 2);
    CHECK(phi(u, v, data) == doctest::Approx(sq).epsilon(1e-12));
    CHECK(bregman(u, v, data) == doctest::Approx(0.5 * sq).epsilon(1e-12));
  }
}

TEST_CASE("Phi is finite on flat regions for p < 2") {
  const int m = 6;
  auto mesh = build_uniform_mesh(m);
  const auto data = ProblemData::constant_source(mesh, 1.5, 1.0);
  CHECK(density::phi({0, 0}, {0, 0}, 1.5) == 0.0);
  CHECK(density::phi({0, 0}, {1, 2}, 1.5) == 0.0);
  CHECK(density::phi({3, 4}, {0, 0}, 1.5) == doctest::Approx(std::pow(5.0, 1.5)));
  // u and v vanish on most elements.
  FeFunction v(mesh), u(mesh);
  v[mesh->dof_of_node(mesh->node_index(2, 2))] = 0.3;
  u[mesh->dof_of_node(mesh->node_index(4, 3))] = -0.2;
  const double value = phi(u, v, data);
  CHECK(std::isfinite(value));
  double expect = 0.0;
  const auto tu = oracle::triangles(m, as_vector(u));
  const auto tv = oracle::triangles(m, as_vector(v));
  for (std::size_t t = 0; t < tu.size(); ++t) {
    const Eigen::Vector2d gv = oracle::gradient(tv[t]);
    const Eigen::Vector2d gw = oracle::gradient(tu[t]) - gv;
    if (gw.norm() == 0.0) continue;
    expect += oracle::area(tu[t]) * std::pow(gw.norm() + gv.norm(), -0.5) * gw.squaredNorm();
  }
  CHECK(value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("seminorm matches quadrature and rejects s < 1") {
  const int m = 5;
  auto mesh = build_uniform_mesh(m);
  const FeFunction v = normal_function(mesh, 1.0, 8);
  CHECK(seminorm(FeFunction(mesh), 3.0) == 0.0);
  for (double s : {1.0, 2.0, 4.0}) {
    CHECK(seminorm(v, s) == doctest::Approx(std::pow(oracle::seminorm_power(m, as_vector(v), s), 1.0 / s)).epsilon(1e-12));
  }
  const Eigen::Map<const Eigen::VectorXd> x(v.coeffs().data(), v.size());
  CHECK(seminorm(v, 2.0) == doctest::Approx(std::sqrt(x.dot(oracle::stiffness(m) * x))).epsilon(1e-12));
  CHECK_THROWS_AS(seminorm(v, 0.5), std::invalid_argument);
}

TEST_CASE("energy is convex along random segments") {
  auto mesh = build_uniform_mesh(6);
  for (double p : {1.5, 3.0, 4.0}) {
    const auto data = ProblemData::constant_source(mesh, p, 1.0);
    int violations = 0;
    for (int k = 0; k < 1000; ++k) {
      auto rng = sample_rng(99, k);
      const FeFunction u = random_normal_function(mesh, 0.2, rng);
      const FeFunction v = random_normal_function(mesh, 0.2, rng);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double t = unit(rng);
      const double mid = energy(t * u + (1 - t) * v, data);
      const double chord = t * energy(u, data) + (1 - t) * energy(v, data);
      if (mid > chord + 1e-12 * (std::abs(chord) + 1.0)) ++violations;
    }
    CHECK(violations == 0);
  }
}
