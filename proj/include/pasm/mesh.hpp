#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

namespace pasm {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  friend Vec2 operator+(Vec2 a, Vec2 b) { return a += b; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return a -= b; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
  friend double norm2(Vec2 a) { return a.x * a.x + a.y * a.y; }
};

using Triangle = std::array<int, 3>;

/// Uniform right-triangle mesh of the unit square with m subdivisions per side.
///
/// Every grid square is split along its lower-left to upper-right diagonal.
/// Nodes are numbered row-major, node (i, j) sits at (i/m, j/m). Boundary
/// nodes carry no degree of freedom; interior nodes are numbered row-major
/// as well. The mesh is immutable after construction.
class Mesh {
public:
  explicit Mesh(int m);

  int subdivisions() const { return m_; }
  double h() const { return 1.0 / m_; }

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  int num_dofs() const { return static_cast<int>(dof_nodes_.size()); }

  const std::vector<Point>& nodes() const { return nodes_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }

  int node_index(int i, int j) const { return j * (m_ + 1) + i; }
  bool is_boundary_node(int node) const { return node_dof_[node] < 0; }
  /// Interior dof of a node, or -1 on the boundary.
  int dof_of_node(int node) const { return node_dof_[node]; }
  int node_of_dof(int dof) const { return dof_nodes_[dof]; }

  /// Vertex dofs of a triangle (-1 for boundary vertices).
  const std::array<int, 3>& triangle_dofs(int t) const { return tri_dofs_[t]; }
  /// Signed area; positive for every triangle.
  double area(int t) const { return areas_[t]; }
  /// Constant gradients of the three vertex hat functions on triangle t.
  const std::array<Vec2, 3>& hat_gradients(int t) const { return hat_grads_[t]; }

  /// Evaluates the P1 function with the given interior coefficients at p.
  double evaluate(std::span<const double> dof_values, Point p) const;

  /// Debug dump: `m=<int>`, node lines `x y`, triangle lines `i j k`.
  void write(std::ostream& os) const;

private:
  int m_;
  std::vector<Point> nodes_;
  std::vector<Triangle> triangles_;
  std::vector<int> node_dof_;
  std::vector<int> dof_nodes_;
  std::vector<std::array<int, 3>> tri_dofs_;
  std::vector<double> areas_;
  std::vector<std::array<Vec2, 3>> hat_grads_;
};

std::shared_ptr<const Mesh> build_uniform_mesh(int m);

/// Continuous piecewise linear function vanishing on the boundary, stored by
/// its interior nodal coefficients.
class FeFunction {
public:
  explicit FeFunction(std::shared_ptr<const Mesh> mesh);
  FeFunction(std::shared_ptr<const Mesh> mesh, std::vector<double> coeffs);

  const Mesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh>& mesh_ptr() const { return mesh_; }

  int size() const { return static_cast<int>(coeffs_.size()); }
  std::span<const double> coeffs() const { return coeffs_; }
  std::span<double> coeffs() { return coeffs_; }
  double operator[](int dof) const { return coeffs_[dof]; }
  double& operator[](int dof) { return coeffs_[dof]; }

  double node_value(int node) const;
  double evaluate(Point p) const { return mesh_->evaluate(coeffs_, p); }

  FeFunction& operator+=(const FeFunction& o);
  FeFunction& operator-=(const FeFunction& o);
  FeFunction& operator*=(double s);
  friend FeFunction operator+(FeFunction a, const FeFunction& b) { return a += b; }
  friend FeFunction operator-(FeFunction a, const FeFunction& b) { return a -= b; }
  friend FeFunction operator*(double s, FeFunction a) { return a *= s; }

private:
  std::shared_ptr<const Mesh> mesh_;
  std::vector<double> coeffs_;
};

/// Throws std::invalid_argument unless both functions live on the same mesh.
void require_same_mesh(const FeFunction& a, const FeFunction& b);

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Nested coarse/fine pair. The fine mesh refines the coarse one by an
/// integer ratio, so coarse P1 functions are exactly representable on the
/// fine mesh through the prolongation matrix.
class MeshPair {
public:
  MeshPair(int coarse_m, int fine_m);

  const Mesh& coarse() const { return *coarse_; }
  const Mesh& fine() const { return *fine_; }
  const std::shared_ptr<const Mesh>& coarse_ptr() const { return coarse_; }
  const std::shared_ptr<const Mesh>& fine_ptr() const { return fine_; }
  int refinement_ratio() const { return ratio_; }

  int fine_node_of_coarse_node(int coarse_node) const;

  /// fine dofs x coarse dofs; column c holds the coarse hat at fine nodes.
  const SparseMatrix& prolongation() const { return prolongation_; }
  const SparseMatrix& fine_mass() const { return fine_mass_; }
  const SparseMatrix& coarse_mass() const { return coarse_mass_; }

private:
  std::shared_ptr<const Mesh> coarse_;
  std::shared_ptr<const Mesh> fine_;
  int ratio_;
  SparseMatrix prolongation_;
  SparseMatrix fine_mass_;
  SparseMatrix coarse_mass_;
};

FeFunction coarse_to_fine(const MeshPair& pair, const FeFunction& v0);

/// Interior coefficients from point values; boundary values are discarded.
FeFunction nodal_interpolate(std::shared_ptr<const Mesh> mesh,
                             const std::function<double(Point)>& point_values);

/// Exact P1 mass and stiffness matrices over interior dofs.
SparseMatrix assemble_mass(const Mesh& mesh);
SparseMatrix assemble_stiffness(const Mesh& mesh);

} // namespace pasm
