#pragma once

// Self-checks behind `psd verify`: the latent-geometry oracle, finite-difference
// gradient checks for every network, and cheap invariants of the whole stack.

#include "psd/config.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace psd::verify {

struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct Report {
  std::string suite;
  std::vector<Check> checks;

  bool pass() const;
  std::vector<std::string> failures() const;
  std::string to_json(int indent = 2) const;
};

/// Oracle objective within `objective_tol` of L and regular-polygon geometry
/// within 1e-2 L, for every L in [L_lo, L_hi] and each d.
Report theorem(int L_lo, int L_hi, const std::vector<int>& dims, std::uint64_t seed = 0,
               double objective_tol = 1e-3);

/// Max relative error of analytic vs central-difference gradients for the
/// circular encoder, both critics, the actor, the METRA encoder and the PPO
/// actor and critic. Passes below `tol`.
Report gradcheck(std::uint64_t seed = 0, double tol = 1e-4);

/// A small trainer configuration used by the reproducibility checks.
RunConfig tiny_config(std::uint64_t seed = 0);

/// Spectrum identities, reward bounds, config and checkpoint round trips,
/// resume equivalence, single-worker reproducibility and env replay.
Report invariants(std::uint64_t seed = 0);

}  // namespace psd::verify
