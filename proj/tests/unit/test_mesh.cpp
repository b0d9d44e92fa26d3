#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pasm/mesh.hpp"

using namespace pasm;

TEST_CASE("mesh counts match the grid for every size") {
  for (int m = 1; m <= 128; m = m < 8 ? m + 1 : 2 * m) {
    const Mesh mesh(m);
    CHECK(mesh.num_nodes() == (m + 1) * (m + 1));
    CHECK(mesh.num_triangles() == 2 * m * m);
    CHECK(mesh.num_dofs() == (m - 1) * (m - 1));
    CHECK(mesh.h() == doctest::Approx(1.0 / m));
  }
}

TEST_CASE("mesh rejects nonpositive subdivisions") {
  CHECK_THROWS_AS(Mesh(0), std::invalid_argument);
  CHECK_THROWS_AS(Mesh(-3), std::invalid_argument);
}

TEST_CASE("triangle areas are h^2/2 and cover the square") {
  for (int m : {1, 3, 16}) {
    const Mesh mesh(m);
    double total = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      CHECK(mesh.area(t) == doctest::Approx(0.5 / (m * m)).epsilon(1e-14));
      total += mesh.area(t);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("boundary flags and dof numbering are consistent") {
  const int m = 6;
  const Mesh mesh(m);
  for (int j = 0; j <= m; ++j) {
    for (int i = 0; i <= m; ++i) {
      const int node = mesh.node_index(i, j);
      const bool boundary = i == 0 || j == 0 || i == m || j == m;
      CHECK(mesh.is_boundary_node(node) == boundary);
      CHECK(mesh.nodes()[node].x == doctest::Approx(static_cast<double>(i) / m));
      CHECK(mesh.nodes()[node].y == doctest::Approx(static_cast<double>(j) / m));
      if (!boundary) {
        const int dof = mesh.dof_of_node(node);
        CHECK(dof == (j - 1) * (m - 1) + (i - 1));
        CHECK(mesh.node_of_dof(dof) == node);
      }
    }
  }
}

TEST_CASE("hat gradients sum to zero and reproduce linear functions") {
  const Mesh mesh(5);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& g = mesh.hat_gradients(t);
    const auto& tri = mesh.triangles()[t];
    Vec2 sum = g[0] + g[1] + g[2];
    CHECK(std::abs(sum.x) < 1e-12);
    CHECK(std::abs(sum.y) < 1e-12);
    // sum_v x_v grad phi_v = grad x = (1, 0)
    Vec2 gx{}, gy{};
    for (int v = 0; v < 3; ++v) {
      gx += mesh.nodes()[tri[v]].x * g[v];
      gy += mesh.nodes()[tri[v]].y * g[v];
    }
    CHECK(gx.x == doctest::Approx(1.0));
    CHECK(std::abs(gx.y) < 1e-12);
    CHECK(std::abs(gy.x) < 1e-12);
    CHECK(gy.y == doctest::Approx(1.0));
  }
}

TEST_CASE("evaluate agrees with a barycentric oracle") {
  const int m = 7;
  auto mesh = build_uniform_mesh(m);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> c(mesh->num_dofs());
  for (double& x : c) x = normal(rng);
  const FeFunction v(mesh, c);
  for (int k = 0; k < 200; ++k) {
    const double x = unit(rng), y = unit(rng);
    CHECK(v.evaluate({x, y}) == doctest::Approx(oracle::evaluate(m, c, x, y)).epsilon(1e-13));
  }
  for (int node = 0; node < mesh->num_nodes(); ++node) {
    CHECK(v.evaluate(mesh->nodes()[node]) == doctest::Approx(v.node_value(node)).epsilon(1e-13));
  }
  CHECK(v.evaluate({1.0, 1.0}) == 0.0);
}

TEST_CASE("coarse nodes coincide with fine nodes") {
  const MeshPair pair(4, 16);
  CHECK(pair.refinement_ratio() == 4);
  for (int n = 0; n < pair.coarse().num_nodes(); ++n) {
    const Point a = pair.coarse().nodes()[n];
    const Point b = pair.fine().nodes()[pair.fine_node_of_coarse_node(n)];
    CHECK(std::abs(a.x - b.x) < 1e-15);
    CHECK(std::abs(a.y - b.y) < 1e-15);
  }
}

TEST_CASE("mesh pair rejects non-nested sizes") {
  CHECK_THROWS_AS(MeshPair(4, 30), std::invalid_argument);
  CHECK_THROWS_AS(MeshPair(0, 8), std::invalid_argument);
}

TEST_CASE("coarse_to_fine reproduces the coarse function pointwise") {
  const int M = 3, m = 12;
  const MeshPair pair(M, m);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SUBCASE("zero") {
    const FeFunction fine = coarse_to_fine(pair, FeFunction(pair.coarse_ptr()));
    for (double c : fine.coeffs()) CHECK(c == 0.0);
  }
  SUBCASE("single hat") {
    FeFunction hat(pair.coarse_ptr());
    hat[0] = 1.0;
    std::vector<double> coarse(hat.coeffs().begin(), hat.coeffs().end());
    const FeFunction fine = coarse_to_fine(pair, hat);
    for (int n = 0; n < pair.fine().num_nodes(); ++n) {
      const Point q = pair.fine().nodes()[n];
      CHECK(std::abs(fine.node_value(n) - oracle::evaluate(M, coarse, q.x, q.y)) < 1e-13);
    }
  }
  SUBCASE("random") {
    FeFunction v0(pair.coarse_ptr());
    for (int d = 0; d < v0.size(); ++d) v0[d] = normal(rng);
    std::vector<double> coarse(v0.coeffs().begin(), v0.coeffs().end());
    const FeFunction fine = coarse_to_fine(pair, v0);
    std::vector<double> fc(fine.coeffs().begin(), fine.coeffs().end());
    for (int k = 0; k < 50; ++k) {
      const double x = unit(rng), y = unit(rng);
      CHECK(std::abs(oracle::evaluate(m, fc, x, y) - oracle::evaluate(M, coarse, x, y)) < 1e-13);
    }
  }
  SUBCASE("wrong mesh") {
    CHECK_THROWS_AS(coarse_to_fine(pair, FeFunction(pair.fine_ptr())), std::invalid_argument);
  }
}

TEST_CASE("nodal interpolation keeps interior values and drops the boundary") {
  auto mesh = build_uniform_mesh(4);
  const FeFunction one = nodal_interpolate(mesh, [](Point) { return 1.0; });
  for (double c : one.coeffs()) CHECK(c == 1.0);
  for (int n = 0; n < mesh->num_nodes(); ++n) {
    if (mesh->is_boundary_node(n)) CHECK(one.node_value(n) == 0.0);
  }
  const FeFunction bump = nodal_interpolate(mesh, [](Point q) { return q.x * (1 - q.x) * q.y * (1 - q.y); });
  CHECK(bump.evaluate({0.5, 0.5}) == doctest::Approx(1.0 / 16.0));
}

TEST_CASE("stiffness matches the five-point stencil and hat mass is h^2/2") {
  const int m = 6;
  const Mesh mesh(m);
  const Eigen::MatrixXd K = Eigen::MatrixXd(assemble_stiffness(mesh));
  CHECK((K - oracle::stiffness(m)).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd M = Eigen::MatrixXd(assemble_mass(mesh));
  const double h = 1.0 / m;
  // int phi_i^2 = h^2/2 on this mesh; row sums are int phi_i = h^2 away from the boundary.
  CHECK(M(0, 0) == doctest::Approx(h * h / 2.0));
  const int center = mesh.dof_of_node(mesh.node_index(3, 3));
  CHECK(M.row(center).sum() == doctest::Approx(h * h));
}

TEST_CASE("FeFunction arithmetic and mesh checks") {
  auto a_mesh = build_uniform_mesh(4);
  auto b_mesh = build_uniform_mesh(5);
  FeFunction a(a_mesh, std::vector<double>(9, 1.0));
  FeFunction b = 2.0 * a;
  CHECK((a + b)[4] == 3.0);
  CHECK((b - a)[4] == 1.0);
  CHECK_THROWS_AS(a += FeFunction(b_mesh), std::invalid_argument);
  CHECK_THROWS_AS(FeFunction(a_mesh, std::vector<double>(3)), std::invalid_argument);
}

TEST_CASE("mesh debug dump lists nodes and triangles") {
  const Mesh mesh(2);
  std::ostringstream os;
  mesh.write(os);
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 1 + 9 + 8);
  CHECK(os.str().rfind("m=2\n", 0) == 0);
}
