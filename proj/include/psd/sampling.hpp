#pragma once

// Curriculum over the period range [L_min, L_max].

#include "psd/encoder.hpp"
#include "psd/envs.hpp"
#include "psd/sac.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace psd::sampling {

struct SamplingBounds {
  int L_min = 5;
  int L_max = 5;
  bool updated_once_min = false;
  bool updated_once_max = false;
  int floor = 5;
  int N = 1;
  double alpha = 0.9;
  double beta = 0.4;
  int interval_episodes = 1000;
  int eval_episodes = 5;
  /// Number of discrete periods trained at once.
  int num_periods = 4;
  /// When false the bounds are held fixed regardless of evaluations.
  bool adaptive = true;

  void validate() const;
};

/// Four (or `count`) integer periods spread uniformly over [L_min, L_max], both ends
/// included, rounded to nearest and de-duplicated.
std::vector<int> discrete_periods(const SamplingBounds& bounds, int count = 4);

/// Mean over episodes of sum_t r_psd.
double mean_episode_return(const std::vector<Eigen::VectorXd>& per_step_rewards);

struct EvalContext {
  envs::EnvSpec env;
  sac::PolicyShape policy_shape;
  encoder::EncoderShape encoder_shape;
  double kappa = 10.0;
  std::uint64_t seed_base = 0;  // dedicated evaluation seeds: seed_base + i
};

/// Average cumulative r_psd over `eval_episodes` mean-mode rollouts at period L.
double evaluate_bound(const EvalContext& ctx, const nn::ParamSet& policy, const nn::ParamSet& phi,
                      int L, int eval_episodes, const Eigen::VectorXd& z = Eigen::VectorXd());

enum class BoundChange { none, expanded, shrunk, discarded };

struct UpdateResult {
  SamplingBounds bounds;
  BoundChange min_change = BoundChange::none;
  BoundChange max_change = BoundChange::none;
};

/// One curriculum step from the evaluation returns at the current bounds; T is the
/// episode length. Updates that would cross the bounds are discarded.
UpdateResult update_bounds(const SamplingBounds& bounds, double R_min, double R_max, int T);

}  // namespace psd::sampling
