#pragma once

// High-level skill selection over a frozen period-conditioned policy, trained
// with a clipped-surrogate policy gradient and GAE advantages.

#include "psd/envs.hpp"
#include "psd/nn.hpp"
#include "psd/sac.hpp"

#include <memory>
#include <random>
#include <vector>

namespace psd::hierarchy {

using nn::Matrix;
using nn::Vector;

struct HighLevelConfig {
  int H = 10;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double lr_actor = 3e-4;
  double lr_critic = 1e-3;
  int episodes_per_epoch = 4;
  int grad_steps = 80;
  int batch = 256;
  double entropy_coef = 0.0;
  int epochs = 100;
  int hidden_layers = 2;
  int hidden_units = 64;
  int eval_episodes = 20;
  int episode_length = 500;
  /// Periods the high-level policy chooses among; empty means the trained set.
  std::vector<int> action_space;

  void validate() const;
};

struct Decision {
  int t = 0;
  int L = 0;
  Vector s_task;
};

struct OptionOutcome {
  double reward = 0.0;
  bool done = false;
};

/// Downstream problem seen by the high-level policy: one option = H low-level steps.
class SkillTask {
 public:
  virtual ~SkillTask() = default;
  virtual int observation_dim() const = 0;
  virtual int num_options() const = 0;
  /// Period (or arm label) of option i, for logging.
  virtual int option_label(int i) const = 0;
  virtual Vector reset(std::uint64_t seed) = 0;
  virtual Vector task_state() const = 0;
  virtual int time() const = 0;
  /// Executes option i; returns the accumulated task reward.
  virtual OptionOutcome execute(int option) = 0;
  virtual Vector observation() const = 0;
};

/// tempo_track with a frozen low-level policy run in mean mode. Observation is
/// concat(P_t / 10, s).
class TempoTrackTask final : public SkillTask {
 public:
  TempoTrackTask(envs::EnvSpec env, sac::PolicyShape shape, nn::ParamSet low_policy,
                 std::vector<int> periods, int H);

  int observation_dim() const override { return 1 + env_.obs_dim; }
  int num_options() const override { return static_cast<int>(periods_.size()); }
  int option_label(int i) const override { return periods_.at(static_cast<std::size_t>(i)); }
  Vector reset(std::uint64_t seed) override;
  Vector task_state() const override;
  int time() const override { return state_.step_index; }
  OptionOutcome execute(int option) override;
  Vector observation() const override;

  const nn::ParamSet& low_policy() const { return low_policy_; }

 private:
  envs::EnvSpec env_;
  sac::PolicyShape shape_;
  nn::ParamSet low_policy_;
  std::vector<int> periods_;
  std::vector<Vector> embeddings_;
  int H_;
  envs::EnvState state_;
  std::mt19937_64 noise_{0};
};

/// Stateless bandit: reward 1 per decision for the rewarded arm, 0 otherwise.
class BanditTask final : public SkillTask {
 public:
  BanditTask(int arms, int rewarded_arm, int decisions);

  int observation_dim() const override { return 1; }
  int num_options() const override { return arms_; }
  int option_label(int i) const override { return i; }
  Vector reset(std::uint64_t seed) override;
  Vector task_state() const override { return Vector::Zero(1); }
  int time() const override { return step_; }
  OptionOutcome execute(int option) override;
  Vector observation() const override { return Vector::Ones(1); }

 private:
  int arms_;
  int rewarded_;
  int decisions_;
  int step_ = 0;
};

struct HighLevelPolicy {
  nn::MlpSpec actor_spec;
  nn::MlpSpec critic_spec;
  nn::ParamSet actor;
  nn::ParamSet critic;
  nn::AdamState actor_opt;
  nn::AdamState critic_opt;

  static HighLevelPolicy create(int obs_dim, int options, const HighLevelConfig& cfg,
                                std::mt19937_64& rng);
  /// Action probabilities for one observation (sum to 1).
  Vector probabilities(const Vector& obs) const;
  double value(const Vector& obs) const;
};

struct HighLevelRollout {
  Matrix obs;               // n x obs_dim
  std::vector<int> action;  // n
  Vector log_prob;          // n, at collection time
  Vector value;             // n, at collection time
  Vector reward;            // n
  Vector done;              // n
  std::vector<Decision> decisions;
  double episode_return = 0.0;

  int size() const { return static_cast<int>(action.size()); }
};

enum class Selection { sample, greedy, uniform };

/// One episode of high-level decisions until the task reports done.
HighLevelRollout hierarchical_rollout(SkillTask& task, const HighLevelPolicy& pi,
                                      std::uint64_t seed, Selection mode, std::mt19937_64& rng);

/// Concatenates rollouts; used to batch several episodes into one update.
HighLevelRollout concat(const std::vector<HighLevelRollout>& rollouts);

/// GAE(gamma, lambda) advantages and returns (value + advantage).
void gae(const Vector& reward, const Vector& value, const Vector& done, double gamma, double lambda,
         Vector& advantages, Vector& returns);

/// Clipped surrogate -mean(min(r A, clip(r) A)) - c * entropy on the tape.
nn::Var ppo_actor_loss(nn::Tape& tape, const nn::MlpSpec& spec, std::span<const nn::Var> actor,
                       const Matrix& obs, std::span<const int> action, const Vector& old_log_prob,
                       const Vector& advantage, double clip, double entropy_coef);

struct PpoMetrics {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double mean_ratio = 0.0;
};

PpoMetrics ppo_update(HighLevelPolicy& pi, const HighLevelRollout& data, const HighLevelConfig& cfg,
                      std::mt19937_64& rng);

struct DownstreamEpoch {
  int epoch = 0;
  double mean_task_return = 0.0;
  double random_baseline_return = 0.0;
};

struct DownstreamResult {
  HighLevelPolicy policy;
  std::vector<DownstreamEpoch> history;
  double final_return = 0.0;
  double random_return = 0.0;
};

/// Mean return of `eval_episodes` episodes with seeds seed_base + i.
double evaluate(SkillTask& task, const HighLevelPolicy& pi, Selection mode, int episodes,
                std::uint64_t seed_base);

/// Full training loop; `eval_every` epochs (0 disables) appends to history.
DownstreamResult train_high_level(SkillTask& task, const HighLevelConfig& cfg, std::uint64_t seed,
                                  int eval_every = 0);

}  // namespace psd::hierarchy
