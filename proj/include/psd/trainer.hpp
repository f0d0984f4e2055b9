#pragma once

// The training loop: collect episodes, update the circular encoder (and the
// METRA encoder when enabled), update the agent on recomputed rewards, and run
// the period curriculum.

#include "psd/buffer.hpp"
#include "psd/config.hpp"
#include "psd/encoder.hpp"
#include "psd/metra.hpp"
#include "psd/sac.hpp"
#include "psd/sampling.hpp"
#include "psd/trajectory.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace psd::train {

struct BoundsEvaluation {
  double R_min = 0.0;
  double R_max = 0.0;
  sampling::BoundChange min_change = sampling::BoundChange::none;
  sampling::BoundChange max_change = sampling::BoundChange::none;
};

struct EpochMetrics {
  int epoch = 0;
  std::int64_t episodes = 0;
  int L_min = 0;
  int L_max = 0;
  double mean_return_psd = 0.0;
  double mean_return_ext = 0.0;
  std::optional<double> encoder_loss;
  std::optional<double> actor_loss;
  std::optional<double> critic_loss;
  double alpha = 0.0;
  std::optional<double> lambda_m;
  std::optional<double> metra_reward_mean;
  std::optional<BoundsEvaluation> bounds_eval;
};

/// Everything needed to continue a run bit-exactly.
struct TrainerState {
  RunConfig cfg;
  sac::SacAgent agent;
  encoder::EncoderShape enc_shape;
  nn::ParamSet phi;
  nn::AdamState phi_opt;
  std::optional<metra::MetraShape> metra_shape;
  nn::ParamSet phi_m;
  nn::AdamState phi_m_opt;
  double lambda_m = 0.0;
  sampling::SamplingBounds bounds;
  EpisodeBuffer buffer;
  std::mt19937_64 rng;
  int epoch = 0;
  std::int64_t episodes = 0;
  std::int64_t next_eval_episode = 0;
};

/// Fresh state; all networks initialised from cfg.seed.
TrainerState make_trainer(const RunConfig& cfg);

sac::PolicyShape policy_shape(const RunConfig& cfg);
encoder::EncoderShape encoder_shape(const RunConfig& cfg);

/// Per-transition agent reward under the given encoder snapshots.
Eigen::VectorXd batch_reward(const TrainerState& st, const nn::ParamSet& phi,
                             const nn::ParamSet* phi_m, const SacBatch& batch);

/// Fills traj.r_psd and traj.r_ext from the current encoder.
void annotate_rewards(const TrainerState& st, SkillTrajectory& traj);

/// One training epoch. Throws NumericError on non-finite losses.
EpochMetrics run_epoch(TrainerState& st);

/// Mean-mode rollout of the current policy for analysis and evaluation.
SkillTrajectory evaluate_skill(const TrainerState& st, int L, const Eigen::VectorXd& z,
                               std::uint64_t env_seed);

/// Evaluation seeds disjoint from the training stream.
std::uint64_t eval_seed_base(const RunConfig& cfg);

}  // namespace psd::train
