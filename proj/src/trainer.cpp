#include "psd/trainer.hpp"

#include "psd/errors.hpp"
#include "psd/reward.hpp"

#include <algorithm>
#include <thread>

namespace psd::train {

namespace {

struct EpisodeJob {
  int L = 1;
  Eigen::VectorXd z;
  std::uint64_t env_seed = 0;
  std::uint64_t noise_seed = 0;
};

double effective_alpha_psd(const RunConfig& cfg) {
  return cfg.metra ? cfg.metra->alpha_psd : cfg.reward.alpha_psd;
}

Eigen::MatrixXd encoder_skills(const encoder::EncoderShape& shape, const Eigen::MatrixXd& z,
                               Eigen::Index rows) {
  return shape.skill_dim > 0 ? z : Eigen::MatrixXd(rows, 0);
}

std::vector<SkillTrajectory> run_jobs(const TrainerState& st, const std::vector<EpisodeJob>& jobs) {
  std::vector<SkillTrajectory> out(jobs.size());
  auto work = [&](std::size_t i) {
    std::mt19937_64 noise(jobs[i].noise_seed);
    out[i] = sac::rollout_episode(st.cfg.env, st.agent.shape, st.agent.policy, jobs[i].L, jobs[i].z,
                                  sac::ActionMode::stochastic, jobs[i].env_seed, noise);
  };
  const auto workers = static_cast<std::size_t>(std::max(1, st.cfg.workers));
  if (workers == 1 || jobs.size() < 2) {
    for (std::size_t i = 0; i < jobs.size(); ++i) work(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < jobs.size(); i += workers) work(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

Eigen::VectorXd eval_skill(const TrainerState& st) {
  if (!st.cfg.metra) return {};
  std::mt19937_64 rng(eval_seed_base(st.cfg) ^ 0x5eedULL);
  return metra::sample_skill(*st.cfg.metra, rng).z;
}

struct Mean {
  double sum = 0.0;
  int n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> get() const {
    return n ? std::optional<double>(sum / n) : std::nullopt;
  }
};

}  // namespace

sac::PolicyShape policy_shape(const RunConfig& cfg) {
  sac::PolicyShape s;
  s.obs_dim = cfg.env.obs_dim;
  s.act_dim = cfg.env.act_dim;
  s.D = cfg.encoder.D;
  s.skill_dim = cfg.metra ? cfg.metra->skill_dim : 0;
  s.hidden_layers = cfg.agent.hidden_layers;
  s.hidden_units = cfg.agent.hidden_units;
  return s;
}

encoder::EncoderShape encoder_shape(const RunConfig& cfg) {
  encoder::EncoderShape s;
  s.cfg = cfg.encoder;
  s.obs_dim = cfg.env.obs_dim;
  s.skill_dim = (cfg.metra && cfg.metra->mutual_conditioning) ? cfg.metra->skill_dim : 0;
  return s;
}

std::uint64_t eval_seed_base(const RunConfig& cfg) {
  return cfg.seed * 0x9E3779B97F4A7C15ULL + 0xE7A1000000ULL;
}

TrainerState make_trainer(const RunConfig& cfg) {
  cfg.validate();
  TrainerState st{cfg,
                  {},
                  encoder_shape(cfg),
                  {},
                  {},
                  std::nullopt,
                  {},
                  {},
                  0.0,
                  cfg.bounds,
                  EpisodeBuffer(cfg.agent.buffer_capacity),
                  std::mt19937_64(cfg.seed),
                  0,
                  0,
                  cfg.bounds.interval_episodes};
  st.agent = sac::SacAgent::create(policy_shape(cfg), cfg.agent, st.rng);
  st.phi = encoder::init_encoder(st.enc_shape, st.rng);
  st.phi_opt = nn::AdamState::for_params(st.phi, cfg.encoder.lr);
  if (cfg.metra) {
    st.metra_shape = metra::MetraShape{*cfg.metra, cfg.env.obs_dim, cfg.encoder.D};
    st.phi_m = metra::init_phi_m(*st.metra_shape, st.rng);
    st.phi_m_opt = nn::AdamState::for_params(st.phi_m, cfg.metra->lr);
    st.lambda_m = cfg.metra->lambda_m_init;
  }
  return st;
}

Eigen::VectorXd batch_reward(const TrainerState& st, const nn::ParamSet& phi,
                             const nn::ParamSet* phi_m, const SacBatch& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::VectorXd r = effective_alpha_psd(st.cfg) *
                      reward::r_psd_batch(st.enc_shape, phi, batch.s, batch.s_next, batch.L,
                                          encoder_skills(st.enc_shape, batch.z, n), st.cfg.reward.kappa);
  if (st.cfg.reward.use_ext) {
    for (Eigen::Index i = 0; i < n; ++i) r(i) += reward::r_ext(batch.v_x(i), st.cfg.reward.v_star);
  }
  if (st.metra_shape && phi_m) {
    r += metra::r_metra_batch(*st.metra_shape, *phi_m, batch.s, batch.s_next, batch.z, batch.L);
  }
  return r;
}

void annotate_rewards(const TrainerState& st, SkillTrajectory& traj) {
  const int T = traj.length();
  const std::vector<int> Ls(static_cast<std::size_t>(T), traj.L);
  Eigen::MatrixXd z(T, 0);
  if (st.enc_shape.skill_dim > 0) z = traj.z.transpose().replicate(T, 1);
  traj.r_psd = reward::r_psd_batch(st.enc_shape, st.phi, traj.states.topRows(T),
                                   traj.states.bottomRows(T), Ls, z, st.cfg.reward.kappa);
  traj.r_ext.resize(T);
  for (int t = 0; t < T; ++t) traj.r_ext(t) = reward::r_ext(traj.v_x(t), st.cfg.reward.v_star);
}

SkillTrajectory evaluate_skill(const TrainerState& st, int L, const Eigen::VectorXd& z,
                               std::uint64_t env_seed) {
  std::mt19937_64 noise(env_seed);
  SkillTrajectory traj = sac::rollout_episode(st.cfg.env, st.agent.shape, st.agent.policy, L, z,
                                              sac::ActionMode::mean, env_seed, noise);
  annotate_rewards(st, traj);
  return traj;
}

EpochMetrics run_epoch(TrainerState& st) {
  const RunConfig& cfg = st.cfg;
  EpochMetrics m;

  // 1. Collect episodes. All randomness is drawn here, in order, so the result
  //    does not depend on the number of workers.
  const std::vector<int> periods = sampling::discrete_periods(st.bounds, st.bounds.num_periods);
  std::uniform_int_distribution<std::size_t> pick(0, periods.size() - 1);
  std::vector<EpisodeJob> jobs(static_cast<std::size_t>(cfg.agent.episodes_per_epoch));
  for (auto& job : jobs) {
    job.L = periods[pick(st.rng)];
    if (cfg.metra) job.z = metra::sample_skill(*cfg.metra, st.rng).z;
    job.env_seed = st.rng();
    job.noise_seed = st.rng();
  }
  std::vector<SkillTrajectory> trajs = run_jobs(st, jobs);
  double ret_psd = 0.0, ret_ext = 0.0;
  for (auto& traj : trajs) {
    annotate_rewards(st, traj);
    ret_psd += traj.r_psd.sum();
    ret_ext += traj.r_ext.sum();
    st.buffer.push_episode(sac::to_episode(traj, st.episodes++));
  }
  m.mean_return_psd = ret_psd / static_cast<double>(trajs.size());
  m.mean_return_ext = ret_ext / static_cast<double>(trajs.size());

  // 2. Updates.
  Mean enc_loss, actor_loss, critic_loss, metra_reward;
  auto encoder_step = [&] {
    auto r = encoder::train_encoder_step(st.enc_shape, st.phi, st.phi_opt, st.buffer, st.rng);
    if (r) enc_loss.add(r->loss);
  };
  auto metra_step = [&] {
    if (!st.metra_shape) return;
    const SacBatch b = st.buffer.sample_sac_batch(cfg.metra->batch, st.rng);
    const auto mm = metra::metra_update(*st.metra_shape, st.phi_m, st.phi_m_opt, st.lambda_m, b);
    metra_reward.add(mm.mean_reward);
  };
  auto agent_step = [&](const nn::ParamSet& phi, const nn::ParamSet* phi_m) {
    if (st.buffer.size() < static_cast<std::size_t>(cfg.agent.batch)) return;
    const SacBatch b = st.buffer.sample_sac_batch(cfg.agent.batch, st.rng);
    const auto sm = sac::sac_update(
        st.agent, b, [&](const SacBatch& x) { return batch_reward(st, phi, phi_m, x); }, st.rng);
    actor_loss.add(sm.actor_loss);
    critic_loss.add(sm.critic_loss);
  };

  const int E = cfg.encoder.steps_per_epoch;
  const int S = cfg.agent.grad_steps_per_epoch;
  const nn::ParamSet* live_phi_m = st.metra_shape ? &st.phi_m : nullptr;
  if (cfg.reward.recompute == reward::Recompute::per_minibatch) {
    for (int i = 0; i < std::max(E, S); ++i) {
      if (i < E) encoder_step();
      if (i < S) {
        metra_step();
        agent_step(st.phi, live_phi_m);
      }
    }
  } else {
    for (int i = 0; i < E; ++i) encoder_step();
    for (int i = 0; i < S; ++i) metra_step();
    const nn::ParamSet phi_snapshot = st.phi;
    const nn::ParamSet phi_m_snapshot = st.phi_m;
    for (int i = 0; i < S; ++i) agent_step(phi_snapshot, live_phi_m ? &phi_m_snapshot : nullptr);
  }
  m.encoder_loss = enc_loss.get();
  m.actor_loss = actor_loss.get();
  m.critic_loss = critic_loss.get();
  m.alpha = st.agent.alpha();
  if (st.metra_shape) {
    m.lambda_m = st.lambda_m;
    m.metra_reward_mean = metra_reward.get();
  }

  // 3. Curriculum.
  if (st.bounds.adaptive && st.episodes >= st.next_eval_episode) {
    while (st.next_eval_episode <= st.episodes) st.next_eval_episode += st.bounds.interval_episodes;
    sampling::EvalContext ctx{cfg.env, st.agent.shape, st.enc_shape, cfg.reward.kappa,
                              eval_seed_base(cfg)};
    const Eigen::VectorXd z = eval_skill(st);
    BoundsEvaluation ev;
    ev.R_min = sampling::evaluate_bound(ctx, st.agent.policy, st.phi, st.bounds.L_min,
                                        st.bounds.eval_episodes, z);
    ev.R_max = st.bounds.L_max == st.bounds.L_min
                   ? ev.R_min
                   : sampling::evaluate_bound(ctx, st.agent.policy, st.phi, st.bounds.L_max,
                                              st.bounds.eval_episodes, z);
    const auto res = sampling::update_bounds(st.bounds, ev.R_min, ev.R_max, cfg.env.episode_length);
    st.bounds = res.bounds;
    ev.min_change = res.min_change;
    ev.max_change = res.max_change;
    m.bounds_eval = ev;
  }

  m.epoch = ++st.epoch;
  m.episodes = st.episodes;
  m.L_min = st.bounds.L_min;
  m.L_max = st.bounds.L_max;
  return m;
}

}  // namespace psd::train
