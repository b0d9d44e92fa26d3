#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string_view>

#include "pasm/mesh.hpp"

namespace pasm {

/// Generator for sample `index` of a seeded stream. Every sample depends only
/// on (seed, index), so prefixes of a stream agree and samples can be drawn
/// in any order.
std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index);

/// I.i.d. standard normal nodal coefficients times scale.
FeFunction random_normal_function(std::shared_ptr<const Mesh> mesh, double scale,
                                  std::mt19937_64& rng);

/// Image of a random coarse P1 function (coarse mesh with coarse_m cells per
/// side) on the fine mesh, nodal coefficients of size about `scale`.
FeFunction random_coarse_image(std::shared_ptr<const Mesh> mesh, int coarse_m, double scale,
                               std::mt19937_64& rng);

/// Single hat function at a random interior node.
FeFunction random_hat(std::shared_ptr<const Mesh> mesh, double scale, std::mt19937_64& rng);

/// Interpolant of a product of cosines oscillating on the scale `period`
/// with random phases; the shape that makes the coarse projection leave a
/// large remainder on subdomain interfaces.
FeFunction coarse_oscillation(std::shared_ptr<const Mesh> mesh, double period, double amplitude,
                              std::mt19937_64& rng);

enum class SampleKind { Normal, CoarseImage, Hat, NearEqual, Flat };

std::string_view to_string(SampleKind kind);

struct SamplePair {
  FeFunction u;
  FeFunction v;
  SampleKind kind;
};

/// Pair model used by the lemma checks: i.i.d. normal coefficients scaled by
/// amplitude * h, with every tenth sample drawn from an adversarial family
/// (coarse images, hat perturbations, near-equal pairs, and pairs sharing
/// flat regions where both grad v and grad(u - v) vanish).
SamplePair draw_pair(std::shared_ptr<const Mesh> mesh, double amplitude, std::uint64_t seed,
                     std::uint64_t index);

} // namespace pasm
