#pragma once

// Period-conditioned soft actor-critic: tanh-squashed Gaussian policy
// pi(a | s, Embed(L) [, z]), twin critics with Polyak targets, and an
// auto-tuned entropy coefficient.

#include "psd/buffer.hpp"
#include "psd/envs.hpp"
#include "psd/nn.hpp"
#include "psd/trajectory.hpp"

#include <functional>
#include <limits>
#include <random>

namespace psd::sac {

using nn::Matrix;
using nn::Vector;

struct SacConfig {
  double gamma = 0.99;
  double lr = 1e-4;
  double tau = 0.995;
  int batch = 256;
  int episodes_per_epoch = 8;
  int grad_steps_per_epoch = 64;
  bool auto_entropy = true;
  /// Defaults to -act_dim when unset (NaN).
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  double init_alpha = 0.1;
  int hidden_layers = 2;
  int hidden_units = 256;
  std::size_t buffer_capacity = 500000;

  void validate() const;
};

/// Input layout shared by policy and critics.
struct PolicyShape {
  int obs_dim = 1;
  int act_dim = 1;
  int D = 8;          // period embedding width
  int skill_dim = 0;  // > 0 when conditioned on a skill vector
  int hidden_layers = 2;
  int hidden_units = 256;
  double log_std_min = -5.0;
  double log_std_max = 2.0;

  int context_dim() const { return obs_dim + D + skill_dim; }
  nn::MlpSpec policy_mlp() const;
  nn::MlpSpec critic_mlp() const;
};

/// concat(s, Embed(L), z) row by row.
Matrix policy_context(const PolicyShape& shape, const Matrix& s, std::span<const int> L,
                      const Matrix& z);

struct SacAgent {
  PolicyShape shape;
  SacConfig cfg;
  nn::ParamSet policy;
  nn::ParamSet q1, q2;
  nn::ParamSet q1_target, q2_target;
  nn::ParamSet log_alpha;  // single entry "log_alpha", shape [1]
  nn::AdamState policy_opt, q1_opt, q2_opt, alpha_opt;

  static SacAgent create(const PolicyShape& shape, const SacConfig& cfg, std::mt19937_64& rng);
  double alpha() const;
  double target_entropy() const;
};

enum class ActionMode { stochastic, mean };

/// Tanh-squashed action in (-1, 1)^act_dim.
Vector sample_action(const PolicyShape& shape, const nn::ParamSet& policy, const Vector& s, int L,
                     const Vector& z, ActionMode mode, std::mt19937_64& rng);
/// Same, with a precomputed Embed(L) (hot path inside rollouts).
Vector sample_action_embedded(const PolicyShape& shape, const nn::ParamSet& policy,
                              const Vector& s, const Vector& embedding, const Vector& z,
                              ActionMode mode, std::mt19937_64& rng);

struct SquashedSample {
  Matrix action;  // n x act_dim
  Vector log_prob;
};
/// Batched reparameterised sample with explicit standard-normal noise (n x act_dim).
SquashedSample sample_batch(const PolicyShape& shape, const nn::ParamSet& policy,
                            const Matrix& context, const Matrix& noise);

struct SacMetrics {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double mean_reward = 0.0;
  double mean_q = 0.0;
  double entropy = 0.0;  // -mean log pi
};

/// Maps a sampled batch to per-transition rewards (recomputed with live encoders).
using RewardFn = std::function<Vector(const SacBatch&)>;

/// Critic loss on a batch given precomputed TD targets (exposed for gradient checks).
nn::Var critic_loss(nn::Tape& tape, const PolicyShape& shape, std::span<const nn::Var> q_params,
                    const Matrix& context, const Matrix& action, const Vector& target);

struct ActorTerms {
  nn::Var loss;      // mean(alpha log pi - min(Q1, Q2))
  nn::Var log_prob;  // n x 1
  nn::Var q_min;     // n x 1
};

/// Actor objective with reparameterisation noise `noise`; pass the critics as
/// constants for a policy-only gradient.
ActorTerms actor_loss(nn::Tape& tape, const PolicyShape& shape, std::span<const nn::Var> policy,
                      std::span<const nn::Var> q1, std::span<const nn::Var> q2, const Matrix& context,
                      const Matrix& noise, double alpha);

/// TD target r + gamma (1 - done)(min Q_target(s', a') - alpha log pi(a'|s')).
Vector td_target(const SacAgent& agent, const SacBatch& batch, const Vector& reward,
                 const Matrix& next_noise);

/// One twin-critic, actor and temperature update followed by Polyak averaging.
/// Throws NumericError on any non-finite loss.
SacMetrics sac_update(SacAgent& agent, const SacBatch& batch, const RewardFn& reward_fn,
                      std::mt19937_64& rng);

/// Runs one full episode; the env is reset with `env_seed`, policy noise drawn from `rng`.
SkillTrajectory rollout_episode(const envs::EnvSpec& env, const PolicyShape& shape,
                                const nn::ParamSet& policy, int L, const Vector& z,
                                ActionMode mode, std::uint64_t env_seed, std::mt19937_64& rng);

/// Converts a trajectory into buffer transitions for episode `episode_id`.
Episode to_episode(const SkillTrajectory& traj, std::int64_t episode_id);

}  // namespace psd::sac
