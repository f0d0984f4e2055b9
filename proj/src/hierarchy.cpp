#include "psd/hierarchy.hpp"

#include "psd/encoder.hpp"
#include "psd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace psd::hierarchy {

void HighLevelConfig::validate() const {
  if (H < 1) throw ConfigError("high_level: H must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("high_level: gamma must be in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("high_level: gae_lambda must be in [0, 1]");
  if (!(clip > 0.0)) throw ConfigError("high_level: clip must be > 0");
  if (!(lr_actor > 0.0) || !(lr_critic > 0.0)) throw ConfigError("high_level: learning rates must be > 0");
  if (episodes_per_epoch < 1 || grad_steps < 0 || batch < 1) {
    throw ConfigError("high_level: episodes_per_epoch, grad_steps and batch must be positive");
  }
  if (epochs < 0 || eval_episodes < 1 || episode_length < 1) {
    throw ConfigError("high_level: bad epochs/eval_episodes/episode_length");
  }
  for (int L : action_space) {
    if (L < 1) throw ConfigError("high_level: action_space periods must be >= 1");
  }
}

// ---- tasks ------------------------------------------------------------------

TempoTrackTask::TempoTrackTask(envs::EnvSpec env, sac::PolicyShape shape, nn::ParamSet low_policy,
                               std::vector<int> periods, int H)
    : env_(env), shape_(shape), low_policy_(std::move(low_policy)), periods_(std::move(periods)), H_(H) {
  if (env_.name != envs::EnvName::tempo_track) throw ConfigError("TempoTrackTask: env must be tempo_track");
  if (periods_.empty()) throw ConfigError("TempoTrackTask: empty action set");
  if (H_ < 1) throw ConfigError("TempoTrackTask: H must be >= 1");
  if (shape_.obs_dim != env_.obs_dim || shape_.act_dim != env_.act_dim) {
    throw ConfigError("TempoTrackTask: low-level policy does not match the env");
  }
  for (int L : periods_) embeddings_.push_back(encoder::embed_period(L, shape_.D));
  state_ = envs::reset(env_, 0);
}

Vector TempoTrackTask::reset(std::uint64_t seed) {
  state_ = envs::reset(env_, seed);
  noise_.seed(seed);
  return observation();
}

Vector TempoTrackTask::task_state() const {
  Vector s(1);
  s(0) = envs::tempo_target_period(state_);
  return s;
}

Vector TempoTrackTask::observation() const {
  Vector o(observation_dim());
  o(0) = envs::tempo_target_period(state_) / 10.0;
  o.tail(env_.obs_dim) = state_.observation;
  return o;
}

OptionOutcome TempoTrackTask::execute(int option) {
  if (option < 0 || option >= num_options()) throw ConfigError("TempoTrackTask: option out of range");
  OptionOutcome out;
  const Vector& emb = embeddings_[static_cast<std::size_t>(option)];
  for (int h = 0; h < H_ && state_.step_index < env_.episode_length; ++h) {
    const Vector a = sac::sample_action_embedded(shape_, low_policy_, state_.observation, emb,
                                                 Vector(), sac::ActionMode::mean, noise_);
    envs::StepResult r = envs::step(env_, state_, a);
    out.reward += r.info.task_reward;
    state_ = std::move(r.state);
  }
  out.done = state_.step_index >= env_.episode_length;
  return out;
}

BanditTask::BanditTask(int arms, int rewarded_arm, int decisions)
    : arms_(arms), rewarded_(rewarded_arm), decisions_(decisions) {
  if (arms_ < 2 || rewarded_ < 0 || rewarded_ >= arms_ || decisions_ < 1) {
    throw ConfigError("BanditTask: invalid arms/rewarded/decisions");
  }
}

Vector BanditTask::reset(std::uint64_t) {
  step_ = 0;
  return observation();
}

OptionOutcome BanditTask::execute(int option) {
  if (option < 0 || option >= arms_) throw ConfigError("BanditTask: option out of range");
  ++step_;
  return {option == rewarded_ ? 1.0 : 0.0, step_ >= decisions_};
}

// ---- policy -----------------------------------------------------------------

HighLevelPolicy HighLevelPolicy::create(int obs_dim, int options, const HighLevelConfig& cfg,
                                        std::mt19937_64& rng) {
  cfg.validate();
  HighLevelPolicy p;
  p.actor_spec = {obs_dim, cfg.hidden_layers, cfg.hidden_units, options, nn::Activation::tanh};
  p.critic_spec = {obs_dim, cfg.hidden_layers, cfg.hidden_units, 1, nn::Activation::tanh};
  p.actor = nn::init_mlp(p.actor_spec, rng, "hi.actor.");
  p.critic = nn::init_mlp(p.critic_spec, rng, "hi.critic.");
  p.actor_opt = nn::AdamState::for_params(p.actor, cfg.lr_actor);
  p.critic_opt = nn::AdamState::for_params(p.critic, cfg.lr_critic);
  return p;
}

Vector HighLevelPolicy::probabilities(const Vector& obs) const {
  const Vector logits = nn::mlp_forward(actor_spec, actor, obs);
  const Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

double HighLevelPolicy::value(const Vector& obs) const {
  return nn::mlp_forward(critic_spec, critic, obs)(0);
}

// ---- rollouts ---------------------------------------------------------------

HighLevelRollout hierarchical_rollout(SkillTask& task, const HighLevelPolicy& pi,
                                      std::uint64_t seed, Selection mode, std::mt19937_64& rng) {
  HighLevelRollout out;
  std::vector<Vector> obs;
  std::vector<double> lp, val, rew, dn;
  task.reset(seed);
  const int options = task.num_options();
  bool done = false;
  while (!done) {
    const Vector o = task.observation();
    const Vector p = pi.probabilities(o);
    int a = 0;
    if (mode == Selection::greedy) {
      p.maxCoeff(&a);
    } else if (mode == Selection::uniform) {
      a = std::uniform_int_distribution<int>(0, options - 1)(rng);
    } else {
      std::discrete_distribution<int> d(p.data(), p.data() + p.size());
      a = d(rng);
    }
    out.decisions.push_back({task.time(), task.option_label(a), task.task_state()});
    const OptionOutcome r = task.execute(a);
    done = r.done;
    obs.push_back(o);
    out.action.push_back(a);
    lp.push_back(std::log(std::max(p(a), 1e-300)));
    val.push_back(pi.value(o));
    rew.push_back(r.reward);
    dn.push_back(done ? 1.0 : 0.0);
    out.episode_return += r.reward;
  }
  const auto n = static_cast<Eigen::Index>(obs.size());
  out.obs.resize(n, task.observation_dim());
  for (Eigen::Index i = 0; i < n; ++i) out.obs.row(i) = obs[static_cast<std::size_t>(i)].transpose();
  out.log_prob = Eigen::Map<Vector>(lp.data(), n);
  out.value = Eigen::Map<Vector>(val.data(), n);
  out.reward = Eigen::Map<Vector>(rew.data(), n);
  out.done = Eigen::Map<Vector>(dn.data(), n);
  return out;
}

HighLevelRollout concat(const std::vector<HighLevelRollout>& rollouts) {
  HighLevelRollout out;
  Eigen::Index n = 0;
  Eigen::Index dim = 0;
  for (const auto& r : rollouts) {
    n += r.size();
    dim = r.obs.cols();
  }
  out.obs.resize(n, dim);
  out.log_prob.resize(n);
  out.value.resize(n);
  out.reward.resize(n);
  out.done.resize(n);
  Eigen::Index at = 0;
  for (const auto& r : rollouts) {
    const auto m = static_cast<Eigen::Index>(r.size());
    out.obs.middleRows(at, m) = r.obs;
    out.log_prob.segment(at, m) = r.log_prob;
    out.value.segment(at, m) = r.value;
    out.reward.segment(at, m) = r.reward;
    out.done.segment(at, m) = r.done;
    out.action.insert(out.action.end(), r.action.begin(), r.action.end());
    out.decisions.insert(out.decisions.end(), r.decisions.begin(), r.decisions.end());
    out.episode_return += r.episode_return;
    at += m;
  }
  if (!rollouts.empty()) out.episode_return /= static_cast<double>(rollouts.size());
  return out;
}

void gae(const Vector& reward, const Vector& value, const Vector& done, double gamma, double lambda,
         Vector& advantages, Vector& returns) {
  const auto n = reward.size();
  advantages.resize(n);
  double next_adv = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const bool terminal = done(t) > 0.5;
    const double next_value = (!terminal && t + 1 < n) ? value(t + 1) : 0.0;
    const double delta = reward(t) + gamma * next_value - value(t);
    next_adv = delta + (terminal ? 0.0 : gamma * lambda * next_adv);
    advantages(t) = next_adv;
  }
  returns = advantages + value;
}

// ---- update -----------------------------------------------------------------

nn::Var ppo_actor_loss(nn::Tape& tape, const nn::MlpSpec& spec, std::span<const nn::Var> actor,
                       const Matrix& obs, std::span<const int> action, const Vector& old_log_prob,
                       const Vector& advantage, double clip, double entropy_coef) {
  nn::Var logsm = nn::log_softmax(nn::mlp_forward(spec, actor, tape.constant(obs)));
  nn::Var lp = nn::pick(logsm, action);
  nn::Var ratio = nn::exp(lp - tape.constant(Matrix(old_log_prob)));
  nn::Var adv = tape.constant(Matrix(advantage));
  nn::Var surrogate = nn::minimum(ratio * adv, nn::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv);
  nn::Var loss = -nn::mean(surrogate);
  if (entropy_coef != 0.0) {
    nn::Var entropy = -nn::row_sum(nn::exp(logsm) * logsm);
    loss = loss - entropy_coef * nn::mean(entropy);
  }
  return loss;
}

PpoMetrics ppo_update(HighLevelPolicy& pi, const HighLevelRollout& data, const HighLevelConfig& cfg,
                      std::mt19937_64& rng) {
  const int n = data.size();
  if (n == 0) throw ConfigError("ppo_update: empty rollout");
  Vector adv, ret;
  gae(data.reward, data.value, data.done, cfg.gamma, cfg.gae_lambda, adv, ret);
  if (n > 1) {
    const double mu = adv.mean();
    const double sd = std::sqrt((adv.array() - mu).square().mean());
    adv = (adv.array() - mu) / (sd + 1e-8);
  }

  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  const int m = std::min(cfg.batch, n);
  PpoMetrics out;
  for (int step = 0; step < cfg.grad_steps; ++step) {
    std::shuffle(idx.begin(), idx.end(), rng);
    Matrix obs(m, data.obs.cols());
    std::vector<int> act(static_cast<std::size_t>(m));
    Vector old(m), a(m), r(m);
    for (int i = 0; i < m; ++i) {
      const int j = idx[static_cast<std::size_t>(i)];
      obs.row(i) = data.obs.row(j);
      act[static_cast<std::size_t>(i)] = data.action[static_cast<std::size_t>(j)];
      old(i) = data.log_prob(j);
      a(i) = adv(j);
      r(i) = ret(j);
    }
    {
      nn::Tape tape;
      auto vars = nn::bind_params(tape, pi.actor);
      nn::Var loss = ppo_actor_loss(tape, pi.actor_spec, vars, obs, act, old, a, cfg.clip,
                                    cfg.entropy_coef);
      if (!std::isfinite(loss.scalar())) throw NumericError("ppo_update: non-finite actor loss");
      out.actor_loss = loss.scalar();
      tape.backward(loss);
      nn::adam_step(pi.actor_opt, pi.actor, nn::collect_grads(tape, vars));
    }
    {
      nn::Tape tape;
      auto vars = nn::bind_params(tape, pi.critic);
      nn::Var v = nn::mlp_forward(pi.critic_spec, vars, tape.constant(obs));
      nn::Var loss = nn::mean(nn::square(v - tape.constant(Matrix(r))));
      if (!std::isfinite(loss.scalar())) throw NumericError("ppo_update: non-finite critic loss");
      out.critic_loss = loss.scalar();
      tape.backward(loss);
      nn::adam_step(pi.critic_opt, pi.critic, nn::collect_grads(tape, vars));
    }
  }
  Vector ratio(n);
  for (int i = 0; i < n; ++i) {
    const Vector p = pi.probabilities(data.obs.row(i).transpose());
    ratio(i) = std::exp(std::log(std::max(p(data.action[static_cast<std::size_t>(i)]), 1e-300)) -
                        data.log_prob(i));
  }
  out.mean_ratio = ratio.mean();
  return out;
}

double evaluate(SkillTask& task, const HighLevelPolicy& pi, Selection mode, int episodes,
                std::uint64_t seed_base) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t seed = seed_base + static_cast<std::uint64_t>(e);
    std::mt19937_64 rng(seed);
    total += hierarchical_rollout(task, pi, seed, mode, rng).episode_return;
  }
  return total / std::max(episodes, 1);
}

DownstreamResult train_high_level(SkillTask& task, const HighLevelConfig& cfg, std::uint64_t seed,
                                  int eval_every) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  DownstreamResult res{HighLevelPolicy::create(task.observation_dim(), task.num_options(), cfg, rng),
                       {}, 0.0, 0.0};
  const std::uint64_t eval_base = seed * 7919 + 1000003;
  res.random_return = evaluate(task, res.policy, Selection::uniform, cfg.eval_episodes, eval_base);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<HighLevelRollout> batch;
    for (int e = 0; e < cfg.episodes_per_epoch; ++e) {
      batch.push_back(hierarchical_rollout(task, res.policy, rng(), Selection::sample, rng));
    }
    ppo_update(res.policy, concat(batch), cfg, rng);
    if (eval_every > 0 && ((epoch + 1) % eval_every == 0 || epoch + 1 == cfg.epochs)) {
      res.history.push_back(
          {epoch + 1, evaluate(task, res.policy, Selection::greedy, cfg.eval_episodes, eval_base),
           res.random_return});
    }
  }
  res.final_return = evaluate(task, res.policy, Selection::greedy, cfg.eval_episodes, eval_base);
  return res;
}

}  // namespace psd::hierarchy
