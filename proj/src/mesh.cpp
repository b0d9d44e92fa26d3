#include "pasm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace pasm {

Mesh::Mesh(int m) : m_(m) {
  if (m < 1) {
    throw std::invalid_argument("mesh subdivisions must be >= 1, got " + std::to_string(m));
  }
  const int n = m + 1;
  nodes_.reserve(static_cast<std::size_t>(n) * n);
  node_dof_.assign(static_cast<std::size_t>(n) * n, -1);
  for (int j = 0; j <= m; ++j) {
    for (int i = 0; i <= m; ++i) {
      nodes_.push_back({static_cast<double>(i) / m, static_cast<double>(j) / m});
      if (i > 0 && i < m && j > 0 && j < m) {
        node_dof_[node_index(i, j)] = static_cast<int>(dof_nodes_.size());
        dof_nodes_.push_back(node_index(i, j));
      }
    }
  }

  triangles_.reserve(2 * static_cast<std::size_t>(m) * m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      const int a = node_index(i, j);
      const int b = node_index(i + 1, j);
      const int c = node_index(i + 1, j + 1);
      const int d = node_index(i, j + 1);
      triangles_.push_back({a, b, c});
      triangles_.push_back({a, c, d});
    }
  }

  tri_dofs_.reserve(triangles_.size());
  areas_.reserve(triangles_.size());
  hat_grads_.reserve(triangles_.size());
  for (const auto& tri : triangles_) {
    const Point& p0 = nodes_[tri[0]];
    const Point& p1 = nodes_[tri[1]];
    const Point& p2 = nodes_[tri[2]];
    const double twice_area = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    const std::array<Point, 3> p{p0, p1, p2};
    std::array<Vec2, 3> grads;
    for (int v = 0; v < 3; ++v) {
      const Point& pj = p[(v + 1) % 3];
      const Point& pk = p[(v + 2) % 3];
      grads[v] = {(pj.y - pk.y) / twice_area, (pk.x - pj.x) / twice_area};
    }
    areas_.push_back(0.5 * twice_area);
    hat_grads_.push_back(grads);
    tri_dofs_.push_back({node_dof_[tri[0]], node_dof_[tri[1]], node_dof_[tri[2]]});
  }
}

double Mesh::evaluate(std::span<const double> dof_values, Point p) const {
  if (static_cast<int>(dof_values.size()) != num_dofs()) {
    throw std::invalid_argument("coefficient vector does not match mesh");
  }
  const double sx = p.x * m_;
  const double sy = p.y * m_;
  const int i = std::clamp(static_cast<int>(std::floor(sx)), 0, m_ - 1);
  const int j = std::clamp(static_cast<int>(std::floor(sy)), 0, m_ - 1);
  const double s = sx - i;
  const double t = sy - j;
  auto value = [&](int ii, int jj) {
    const int dof = node_dof_[node_index(ii, jj)];
    return dof < 0 ? 0.0 : dof_values[dof];
  };
  const double va = value(i, j);
  const double vc = value(i + 1, j + 1);
  if (s >= t) {
    return (1.0 - s) * va + (s - t) * value(i + 1, j) + t * vc;
  }
  return (1.0 - t) * va + s * vc + (t - s) * value(i, j + 1);
}

void Mesh::write(std::ostream& os) const {
  os << "m=" << m_ << '\n';
  for (const auto& p : nodes_) os << p.x << ' ' << p.y << '\n';
  for (const auto& t : triangles_) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

std::shared_ptr<const Mesh> build_uniform_mesh(int m) {
  return std::make_shared<const Mesh>(m);
}

FeFunction::FeFunction(std::shared_ptr<const Mesh> mesh)
    : mesh_(std::move(mesh)), coeffs_(static_cast<std::size_t>(mesh_->num_dofs()), 0.0) {}

FeFunction::FeFunction(std::shared_ptr<const Mesh> mesh, std::vector<double> coeffs)
    : mesh_(std::move(mesh)), coeffs_(std::move(coeffs)) {
  if (static_cast<int>(coeffs_.size()) != mesh_->num_dofs()) {
    throw std::invalid_argument("coefficient count " + std::to_string(coeffs_.size()) +
                                " != interior node count " + std::to_string(mesh_->num_dofs()));
  }
}

double FeFunction::node_value(int node) const {
  const int dof = mesh_->dof_of_node(node);
  return dof < 0 ? 0.0 : coeffs_[dof];
}

void require_same_mesh(const FeFunction& a, const FeFunction& b) {
  if (a.mesh_ptr() != b.mesh_ptr() &&
      a.mesh().subdivisions() != b.mesh().subdivisions()) {
    throw std::invalid_argument("mesh mismatch: m=" + std::to_string(a.mesh().subdivisions()) +
                                " vs m=" + std::to_string(b.mesh().subdivisions()));
  }
}

FeFunction& FeFunction::operator+=(const FeFunction& o) {
  require_same_mesh(*this, o);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
  return *this;
}

FeFunction& FeFunction::operator-=(const FeFunction& o) {
  require_same_mesh(*this, o);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
  return *this;
}

FeFunction& FeFunction::operator*=(double s) {
  for (double& c : coeffs_) c *= s;
  return *this;
}

namespace {

SparseMatrix assemble(const Mesh& mesh, bool stiffness) {
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(9 * static_cast<std::size_t>(mesh.num_triangles()));
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& dofs = mesh.triangle_dofs(t);
    const auto& grads = mesh.hat_gradients(t);
    const double area = mesh.area(t);
    for (int a = 0; a < 3; ++a) {
      if (dofs[a] < 0) continue;
      for (int b = 0; b < 3; ++b) {
        if (dofs[b] < 0) continue;
        const double value = stiffness ? area * dot(grads[a], grads[b])
                                       : area / 12.0 * (a == b ? 2.0 : 1.0);
        entries.emplace_back(dofs[a], dofs[b], value);
      }
    }
  }
  SparseMatrix out(mesh.num_dofs(), mesh.num_dofs());
  out.setFromTriplets(entries.begin(), entries.end());
  return out;
}

} // namespace

SparseMatrix assemble_mass(const Mesh& mesh) { return assemble(mesh, false); }
SparseMatrix assemble_stiffness(const Mesh& mesh) { return assemble(mesh, true); }

MeshPair::MeshPair(int coarse_m, int fine_m) {
  if (coarse_m < 1 || fine_m < 1) {
    throw std::invalid_argument("mesh subdivisions must be >= 1");
  }
  if (fine_m % coarse_m != 0) {
    throw std::invalid_argument("fine mesh m=" + std::to_string(fine_m) +
                                " does not refine coarse mesh M=" + std::to_string(coarse_m));
  }
  coarse_ = build_uniform_mesh(coarse_m);
  fine_ = build_uniform_mesh(fine_m);
  ratio_ = fine_m / coarse_m;

  // The coarse hat at (I, J) is 1 - max(|s|, |t|, |s - t|) / r in fine index
  // offsets (s, t); this is the P1 hat for the lower-left/upper-right split.
  std::vector<Eigen::Triplet<double>> entries;
  const int r = ratio_;
  for (int c = 0; c < coarse_->num_dofs(); ++c) {
    const int node = coarse_->node_of_dof(c);
    const int ci = (node % (coarse_m + 1)) * r;
    const int cj = (node / (coarse_m + 1)) * r;
    for (int t = -r; t <= r; ++t) {
      for (int s = -r; s <= r; ++s) {
        const int reach = std::max({std::abs(s), std::abs(t), std::abs(s - t)});
        if (reach >= r) continue;
        const int fine_dof = fine_->dof_of_node(fine_->node_index(ci + s, cj + t));
        if (fine_dof < 0) continue;
        entries.emplace_back(fine_dof, c, 1.0 - static_cast<double>(reach) / r);
      }
    }
  }
  prolongation_.resize(fine_->num_dofs(), coarse_->num_dofs());
  prolongation_.setFromTriplets(entries.begin(), entries.end());
  fine_mass_ = assemble_mass(*fine_);
  coarse_mass_ = assemble_mass(*coarse_);
}

int MeshPair::fine_node_of_coarse_node(int coarse_node) const {
  const int cm = coarse_->subdivisions() + 1;
  return fine_->node_index((coarse_node % cm) * ratio_, (coarse_node / cm) * ratio_);
}

FeFunction coarse_to_fine(const MeshPair& pair, const FeFunction& v0) {
  if (v0.mesh().subdivisions() != pair.coarse().subdivisions()) {
    throw std::invalid_argument("coarse_to_fine: function does not live on the coarse mesh");
  }
  Eigen::Map<const Eigen::VectorXd> in(v0.coeffs().data(), v0.size());
  Eigen::VectorXd out = pair.prolongation() * in;
  return FeFunction(pair.fine_ptr(), std::vector<double>(out.data(), out.data() + out.size()));
}

FeFunction nodal_interpolate(std::shared_ptr<const Mesh> mesh,
                             const std::function<double(Point)>& point_values) {
  FeFunction out(mesh);
  for (int d = 0; d < mesh->num_dofs(); ++d) {
    out[d] = point_values(mesh->nodes()[mesh->node_of_dof(d)]);
  }
  return out;
}

} // namespace pasm
