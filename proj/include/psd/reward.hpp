#pragma once

#include "psd/encoder.hpp"

#include <optional>

namespace psd::reward {

/// When agent rewards are recomputed from the live encoder.
///   per_minibatch  encoder and agent steps interleave, each agent batch sees the latest encoder
///   per_epoch      all encoder steps first, then agent steps against that snapshot
enum class Recompute { per_minibatch, per_epoch };

struct RewardConfig {
  double kappa = 10.0;
  double v_star = 0.5;
  bool use_ext = false;
  double alpha_psd = 1.0;
  Recompute recompute = Recompute::per_minibatch;

  void validate() const;
};

/// |phi_L(s_t+1) - phi_L(s_t)| - L sin(pi / 2L).
double delta(const encoder::EncoderShape& shape, const nn::ParamSet& phi, const Vector& s_t,
             const Vector& s_t1, int L, const Vector& z = Vector());
/// Same, from a precomputed one-step latent distance.
double delta_from_distance(double one_step_distance, int L);

/// exp(-kappa * delta^2), in (0, 1].
double r_psd(double delta, double kappa);

/// 1 when v_x >= v_star, else v_x / v_star (negative for backward motion).
double r_ext(double v_x, double v_star);

/// alpha_psd * r_psd [+ r_ext if enabled] [+ r_metra if present].
double combine(double r_psd, double r_ext, std::optional<double> r_metra, const RewardConfig& cfg);

/// Batched r_PSD for transitions (s, s_next) under the given encoder snapshot.
Vector r_psd_batch(const encoder::EncoderShape& shape, const nn::ParamSet& phi, const Matrix& s,
                   const Matrix& s_next, std::span<const int> L, const Matrix& z, double kappa);

}  // namespace psd::reward
