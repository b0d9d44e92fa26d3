#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "pasm/mesh.hpp"

namespace pasm {

struct SampleSpec {
  std::shared_ptr<const Mesh> mesh;
  double p = 4.0;
  int count = 1000;
  std::uint64_t seed = 1;
  /// Nodal coefficients are drawn at size amplitude * h.
  double amplitude = 1.0;

  void validate() const;
};

/// Sample extrema of one quantity. These are one-sided estimates of the
/// underlying constants, never the constants themselves.
struct ConstantReport {
  std::string check;
  std::string name;
  double sample_min = 0.0;
  double sample_max = 0.0;
  int violations = 0;
  int samples_used = 0;
  std::uint64_t seed = 0;
};

/// Testing hook: scales the middle term Phi(v + t w, v) of the scaling check.
/// Anything other than 1 should produce violations.
struct VerifyOptions {
  double phi_fault_factor = 1.0;
};

/// t^{max(p,2)} Phi(v+w,v) <= Phi(v+tw,v) <= t^{min(p,2)} Phi(v+w,v), t in [0,1].
/// Reports the effective exponent log(Phi(v+tw,v)/Phi(v+w,v)) / log t.
ConstantReport check_scaling(const SampleSpec& spec, const VerifyOptions& options = {});

/// Phi(u,v) <= 2^{|p-2|} Phi(v,u). Reports Phi(u,v)/Phi(v,u).
ConstantReport check_symmetry(const SampleSpec& spec);

/// D_F(u,v) / Phi(u,v): sample_min estimates mu_Phi from above, sample_max
/// estimates L_Phi from below.
ConstantReport check_bregman_equiv(const SampleSpec& spec);

struct BarrettLiuReport {
  /// sample_max is the estimate of C1.
  ConstantReport upper;
  /// sample_min is the estimate of C2.
  ConstantReport lower;
};

/// Vector inequalities for the flux |x|^{p-2} x on random pairs in R^2 with
/// stress cases. Constants come from a first pass on `seed`; violations count
/// a second pass on a fresh stream against the constants widened by 1%.
BarrettLiuReport check_bl_inequalities(double p, int samples, std::uint64_t seed);

struct DistanceReport {
  /// min over samples and t of D_F(v+tw,v) / (t^{max(p,2)} D_F(v+w,v)).
  ConstantReport scaling_lower;
  /// max over samples and t of D_F(v+tw,v) / (t^{min(p,2)} D_F(v+w,v)).
  ConstantReport scaling_upper;
  /// max of D_F(u,v) / D_F(v,u).
  ConstantReport symmetry;
  /// D_F / Phi over every pair evaluated above.
  ConstantReport equivalence;
};

/// Bregman distance used as the distance-like function. Violations count
/// envelopes that escape the bounds composed from the Phi lemmas and the
/// empirical equivalence constants.
DistanceReport check_df_as_distance(const SampleSpec& spec);

/// All of the above for one spec, in a fixed order.
std::vector<ConstantReport> run_verification(const SampleSpec& spec, int bl_samples,
                                             const VerifyOptions& options = {});

int total_violations(const std::vector<ConstantReport>& reports);

/// Rows `check,name,value,samples,violations,seed`, one for each extremum.
void write_reports_csv(const std::vector<ConstantReport>& reports, std::ostream& out);
std::vector<ConstantReport> read_reports_csv(std::istream& in);

} // namespace pasm
