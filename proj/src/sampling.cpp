#include "psd/sampling.hpp"

#include "psd/errors.hpp"
#include "psd/reward.hpp"

#include <algorithm>
#include <cmath>

namespace psd::sampling {

void SamplingBounds::validate() const {
  if (floor < 1) throw ConfigError("bounds: floor must be >= 1");
  if (L_min < floor) throw ConfigError("bounds: L_min must be >= floor");
  if (L_max < L_min) throw ConfigError("bounds: L_max must be >= L_min");
  if (N < 1) throw ConfigError("bounds: N must be >= 1");
  if (!(alpha > beta && beta > 0.0)) throw ConfigError("bounds: need alpha > beta > 0");
  if (interval_episodes < 1) throw ConfigError("bounds: interval_episodes must be >= 1");
  if (eval_episodes < 1) throw ConfigError("bounds: eval_episodes must be >= 1");
  if (num_periods < 1) throw ConfigError("bounds: num_periods must be >= 1");
}

std::vector<int> discrete_periods(const SamplingBounds& bounds, int count) {
  if (count < 1) throw ConfigError("discrete_periods: count must be >= 1");
  std::vector<int> out;
  for (int i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    const int L = static_cast<int>(std::lround(bounds.L_min + frac * (bounds.L_max - bounds.L_min)));
    if (out.empty() || out.back() != L) out.push_back(L);
  }
  return out;
}

double mean_episode_return(const std::vector<Eigen::VectorXd>& per_step_rewards) {
  if (per_step_rewards.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : per_step_rewards) total += r.sum();
  return total / static_cast<double>(per_step_rewards.size());
}

double evaluate_bound(const EvalContext& ctx, const nn::ParamSet& policy, const nn::ParamSet& phi,
                      int L, int eval_episodes, const Eigen::VectorXd& z) {
  std::vector<Eigen::VectorXd> returns;
  for (int i = 0; i < eval_episodes; ++i) {
    std::mt19937_64 rng(ctx.seed_base + static_cast<std::uint64_t>(i));
    const SkillTrajectory traj = sac::rollout_episode(ctx.env, ctx.policy_shape, policy, L, z,
                                                      sac::ActionMode::mean,
                                                      ctx.seed_base + static_cast<std::uint64_t>(i),
                                                      rng);
    const int T = traj.length();
    const std::vector<int> Ls(static_cast<std::size_t>(T), L);
    Eigen::MatrixXd zs;
    if (ctx.encoder_shape.skill_dim > 0) zs = z.transpose().replicate(T, 1);
    returns.push_back(reward::r_psd_batch(ctx.encoder_shape, phi, traj.states.topRows(T),
                                          traj.states.bottomRows(T), Ls, zs, ctx.kappa));
  }
  return mean_episode_return(returns);
}

UpdateResult update_bounds(const SamplingBounds& bounds, double R_min, double R_max, int T) {
  UpdateResult res;
  SamplingBounds& b = res.bounds;
  b = bounds;
  if (!bounds.adaptive) return res;
  const double hi = bounds.alpha * T;
  const double lo = bounds.beta * T;

  if (R_min > hi) {
    const int next = std::max(b.floor, b.L_min - b.N);
    if (next != b.L_min) res.min_change = BoundChange::expanded;
    b.L_min = next;
    b.updated_once_min = true;
  }
  if (R_max > hi) {
    b.L_max += b.N;
    b.updated_once_max = true;
    res.max_change = BoundChange::expanded;
  }
  if (R_min < lo && b.updated_once_min) {
    if (b.L_min + b.N > b.L_max) {
      res.min_change = BoundChange::discarded;
    } else {
      b.L_min += b.N;
      res.min_change = BoundChange::shrunk;
    }
  }
  if (R_max < lo && b.updated_once_max) {
    if (b.L_max - b.N < b.L_min) {
      res.max_change = BoundChange::discarded;
    } else {
      b.L_max -= b.N;
      res.max_change = BoundChange::shrunk;
    }
  }
  return res;
}

}  // namespace psd::sampling
