#include "pasm/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pasm {

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

FeFunction random_normal_function(std::shared_ptr<const Mesh> mesh, double scale,
                                  std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  FeFunction out(std::move(mesh));
  for (double& c : out.coeffs()) c = scale * normal(rng);
  return out;
}

FeFunction random_coarse_image(std::shared_ptr<const Mesh> mesh, int coarse_m, double scale,
                               std::mt19937_64& rng) {
  const auto coarse = build_uniform_mesh(std::max(1, coarse_m));
  const FeFunction c = random_normal_function(coarse, scale, rng);
  return nodal_interpolate(std::move(mesh), [&](Point p) { return c.evaluate(p); });
}

FeFunction random_hat(std::shared_ptr<const Mesh> mesh, double scale, std::mt19937_64& rng) {
  FeFunction out(mesh);
  if (out.size() == 0) return out;
  std::uniform_int_distribution<int> pick(0, out.size() - 1);
  std::normal_distribution<double> normal;
  out[pick(rng)] = scale * normal(rng);
  return out;
}

FeFunction coarse_oscillation(std::shared_ptr<const Mesh> mesh, double period, double amplitude,
                              std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> stretch(0.5, 1.0);
  const double kx = 2.0 * std::numbers::pi / (period * stretch(rng));
  const double ky = 2.0 * std::numbers::pi / (period * stretch(rng));
  const double px = phase(rng);
  const double py = phase(rng);
  return nodal_interpolate(std::move(mesh), [&](Point p) {
    return amplitude * std::cos(kx * p.x + px) * std::cos(ky * p.y + py);
  });
}

std::string_view to_string(SampleKind kind) {
  switch (kind) {
    case SampleKind::Normal: return "normal";
    case SampleKind::CoarseImage: return "coarse_image";
    case SampleKind::Hat: return "hat";
    case SampleKind::NearEqual: return "near_equal";
    case SampleKind::Flat: return "flat";
  }
  return "unknown";
}

SamplePair draw_pair(std::shared_ptr<const Mesh> mesh, double amplitude, std::uint64_t seed,
                     std::uint64_t index) {
  auto rng = sample_rng(seed, index);
  const double scale = amplitude * mesh->h();
  if (index % 10 != 9) {
    FeFunction u = random_normal_function(mesh, scale, rng);
    FeFunction v = random_normal_function(mesh, scale, rng);
    return {std::move(u), std::move(v), SampleKind::Normal};
  }
  const int coarse_m = std::max(1, mesh->subdivisions() / 4);
  switch ((index / 10) % 4) {
    case 0: {
      // Coarse-scale functions have O(1) gradients at coefficient size ~amplitude*H.
      const double coarse_scale = amplitude / coarse_m;
      FeFunction u = random_coarse_image(mesh, coarse_m, coarse_scale, rng);
      FeFunction v = random_coarse_image(mesh, coarse_m, coarse_scale, rng);
      return {std::move(u), std::move(v), SampleKind::CoarseImage};
    }
    case 1: {
      FeFunction v = random_normal_function(mesh, scale, rng);
      FeFunction u = v + random_hat(mesh, scale, rng);
      return {std::move(u), std::move(v), SampleKind::Hat};
    }
    case 2: {
      FeFunction v = random_normal_function(mesh, scale, rng);
      FeFunction u = v + random_normal_function(mesh, 1e-4 * scale, rng);
      return {std::move(u), std::move(v), SampleKind::NearEqual};
    }
    default: {
      // v flat on the left half, u - v flat on the bottom half.
      FeFunction v = random_normal_function(mesh, scale, rng);
      FeFunction w = random_normal_function(mesh, scale, rng);
      for (int d = 0; d < v.size(); ++d) {
        const Point& x = mesh->nodes()[mesh->node_of_dof(d)];
        if (x.x <= 0.5) v[d] = 0.0;
        if (x.y <= 0.5) w[d] = 0.0;
      }
      return {v + w, v, SampleKind::Flat};
    }
  }
}

} // namespace pasm
