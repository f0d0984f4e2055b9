#include "psd/sac.hpp"

#include "psd/encoder.hpp"
#include "psd/errors.hpp"

#include <cmath>
#include <numbers>

namespace psd::sac {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

struct TapeSample {
  nn::Var action;
  nn::Var log_prob;  // n x 1
};

// Reparameterised tanh-Gaussian sample on the tape.
TapeSample tape_sample(nn::Tape& tape, const PolicyShape& shape, std::span<const nn::Var> policy,
                       nn::Var context, const Matrix& noise) {
  const double lmin = shape.log_std_min, lmax = shape.log_std_max;
  nn::Var out = nn::mlp_forward(shape.policy_mlp(), policy, context);
  nn::Var mean = nn::slice_cols(out, 0, shape.act_dim);
  nn::Var raw = nn::slice_cols(out, shape.act_dim, shape.act_dim);
  nn::Var log_std = nn::add_scalar(0.5 * (lmax - lmin) * nn::add_scalar(nn::tanh(raw), 1.0), lmin);
  nn::Var eps = tape.constant(noise);
  nn::Var u = mean + nn::exp(log_std) * eps;
  nn::Var a = nn::tanh(u);
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
  nn::Var log_jac = 2.0 * nn::add_scalar(-u - nn::softplus(-2.0 * u), std::numbers::ln2);
  const Matrix gauss = (-0.5 * noise.array().square() - kHalfLog2Pi).matrix();
  nn::Var per_dim = tape.constant(gauss) - log_std - log_jac;
  return {a, nn::row_sum(per_dim)};
}

nn::Var critic_forward(const PolicyShape& shape, std::span<const nn::Var> q, nn::Var context,
                       nn::Var action) {
  const nn::Var parts[2] = {context, action};
  return nn::mlp_forward(shape.critic_mlp(), q, nn::concat_cols(parts));
}

Matrix critic_input(const Matrix& context, const Matrix& action) {
  Matrix in(context.rows(), context.cols() + action.cols());
  in << context, action;
  return in;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n01(rng);
  return m;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("sac_update: non-finite ") + what);
}

}  // namespace

void SacConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("agent: gamma must be in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("agent: tau must be in (0, 1]");
  if (!(lr > 0.0)) throw ConfigError("agent: lr must be > 0");
  if (batch < 1) throw ConfigError("agent: batch must be >= 1");
  if (episodes_per_epoch < 1) throw ConfigError("agent: episodes_per_epoch must be >= 1");
  if (grad_steps_per_epoch < 0) throw ConfigError("agent: grad_steps_per_epoch must be >= 0");
  if (!(init_alpha > 0.0)) throw ConfigError("agent: init_alpha must be > 0");
  if (hidden_layers < 1 || hidden_units < 1) throw ConfigError("agent: bad hidden layer spec");
  if (buffer_capacity < 1) throw ConfigError("agent: buffer_capacity must be >= 1");
}

nn::MlpSpec PolicyShape::policy_mlp() const {
  nn::MlpSpec s;
  s.input_dim = context_dim();
  s.hidden_layers = hidden_layers;
  s.hidden_units = hidden_units;
  s.output_dim = 2 * act_dim;
  return s;
}

nn::MlpSpec PolicyShape::critic_mlp() const {
  nn::MlpSpec s;
  s.input_dim = context_dim() + act_dim;
  s.hidden_layers = hidden_layers;
  s.hidden_units = hidden_units;
  s.output_dim = 1;
  return s;
}

Matrix policy_context(const PolicyShape& shape, const Matrix& s, std::span<const int> L,
                      const Matrix& z) {
  const auto n = s.rows();
  if (s.cols() != shape.obs_dim) throw ConfigError("policy: observation width mismatch");
  if (static_cast<Eigen::Index>(L.size()) != n) throw ConfigError("policy: one L per row required");
  if (shape.skill_dim > 0 && (z.rows() != n || z.cols() != shape.skill_dim)) {
    throw ConfigError("policy: skill input must be n x " + std::to_string(shape.skill_dim));
  }
  Matrix ctx(n, shape.context_dim());
  ctx.leftCols(shape.obs_dim) = s;
  ctx.middleCols(shape.obs_dim, shape.D) = encoder::embed_periods(L, shape.D);
  if (shape.skill_dim > 0) ctx.rightCols(shape.skill_dim) = z;
  return ctx;
}

SacAgent SacAgent::create(const PolicyShape& shape, const SacConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  if (!(shape.log_std_min < shape.log_std_max)) {
    throw ConfigError("agent: log_std_min must be < log_std_max");
  }
  SacAgent a;
  a.shape = shape;
  a.cfg = cfg;
  a.policy = nn::init_mlp(shape.policy_mlp(), rng, "pi.");
  a.q1 = nn::init_mlp(shape.critic_mlp(), rng, "q1.");
  a.q2 = nn::init_mlp(shape.critic_mlp(), rng, "q2.");
  a.q1_target = a.q1;
  a.q2_target = a.q2;
  a.log_alpha.add("log_alpha", {1}, Matrix::Constant(1, 1, std::log(cfg.init_alpha)));
  a.policy_opt = nn::AdamState::for_params(a.policy, cfg.lr);
  a.q1_opt = nn::AdamState::for_params(a.q1, cfg.lr);
  a.q2_opt = nn::AdamState::for_params(a.q2, cfg.lr);
  a.alpha_opt = nn::AdamState::for_params(a.log_alpha, cfg.lr);
  return a;
}

double SacAgent::alpha() const { return std::exp(log_alpha[0].value(0, 0)); }

double SacAgent::target_entropy() const {
  return std::isnan(cfg.target_entropy) ? -static_cast<double>(shape.act_dim) : cfg.target_entropy;
}

Vector sample_action_embedded(const PolicyShape& shape, const nn::ParamSet& policy,
                              const Vector& s, const Vector& embedding, const Vector& z,
                              ActionMode mode, std::mt19937_64& rng) {
  Vector ctx(shape.context_dim());
  ctx.head(shape.obs_dim) = s;
  ctx.segment(shape.obs_dim, shape.D) = embedding;
  if (shape.skill_dim > 0) {
    if (z.size() != shape.skill_dim) throw ConfigError("policy: skill vector width mismatch");
    ctx.tail(shape.skill_dim) = z;
  }
  const Vector out = nn::mlp_forward(shape.policy_mlp(), policy, ctx);
  Vector a(shape.act_dim);
  if (mode == ActionMode::mean) {
    for (int j = 0; j < shape.act_dim; ++j) a(j) = std::tanh(out(j));
    return a;
  }
  const double lmin = shape.log_std_min, lmax = shape.log_std_max;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int j = 0; j < shape.act_dim; ++j) {
    const double log_std = lmin + 0.5 * (lmax - lmin) * (std::tanh(out(shape.act_dim + j)) + 1.0);
    a(j) = std::tanh(out(j) + std::exp(log_std) * n01(rng));
  }
  return a;
}

Vector sample_action(const PolicyShape& shape, const nn::ParamSet& policy, const Vector& s, int L,
                     const Vector& z, ActionMode mode, std::mt19937_64& rng) {
  return sample_action_embedded(shape, policy, s, encoder::embed_period(L, shape.D), z, mode, rng);
}

SquashedSample sample_batch(const PolicyShape& shape, const nn::ParamSet& policy,
                            const Matrix& context, const Matrix& noise) {
  nn::Tape tape;
  auto vars = nn::bind_constants(tape, policy);
  TapeSample ts = tape_sample(tape, shape, vars, tape.constant(context), noise);
  return {ts.action.value(), ts.log_prob.value().col(0)};
}

nn::Var critic_loss(nn::Tape& tape, const PolicyShape& shape, std::span<const nn::Var> q_params,
                    const Matrix& context, const Matrix& action, const Vector& target) {
  nn::Var q = nn::mlp_forward(shape.critic_mlp(), q_params,
                              tape.constant(critic_input(context, action)));
  return nn::mean(nn::square(q - tape.constant(Matrix(target))));
}

Vector td_target(const SacAgent& agent, const SacBatch& batch, const Vector& reward,
                 const Matrix& next_noise) {
  const Matrix ctx_next = policy_context(agent.shape, batch.s_next, batch.L, batch.z);
  const SquashedSample next = sample_batch(agent.shape, agent.policy, ctx_next, next_noise);
  const Matrix in = critic_input(ctx_next, next.action);
  const Vector q1 = nn::mlp_forward(agent.shape.critic_mlp(), agent.q1_target, in).col(0);
  const Vector q2 = nn::mlp_forward(agent.shape.critic_mlp(), agent.q2_target, in).col(0);
  const Vector soft = q1.cwiseMin(q2) - agent.alpha() * next.log_prob;
  return reward.array() + agent.cfg.gamma * (1.0 - batch.done.array()) * soft.array();
}

SacMetrics sac_update(SacAgent& agent, const SacBatch& batch, const RewardFn& reward_fn,
                      std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw ConfigError("sac_update: empty batch");
  const PolicyShape& shape = agent.shape;
  SacMetrics m;

  const Vector reward = reward_fn(batch);
  if (reward.size() != n) throw ConfigError("sac_update: reward_fn returned wrong length");
  m.mean_reward = reward.mean();
  require_finite(m.mean_reward, "reward");

  const Matrix ctx = policy_context(shape, batch.s, batch.L, batch.z);
  const Vector y = td_target(agent, batch, reward, normal_matrix(n, shape.act_dim, rng));

  double critic_total = 0.0;
  for (int c = 0; c < 2; ++c) {
    nn::ParamSet& q = c == 0 ? agent.q1 : agent.q2;
    nn::AdamState& opt = c == 0 ? agent.q1_opt : agent.q2_opt;
    nn::Tape tape;
    auto vars = nn::bind_params(tape, q);
    nn::Var loss = critic_loss(tape, shape, vars, ctx, batch.a, y);
    require_finite(loss.scalar(), "critic loss");
    critic_total += loss.scalar();
    tape.backward(loss);
    nn::adam_step(opt, q, nn::collect_grads(tape, vars));
  }
  m.critic_loss = 0.5 * critic_total;

  const double alpha = agent.alpha();
  Vector log_prob;
  {
    nn::Tape tape;
    auto pvars = nn::bind_params(tape, agent.policy);
    auto q1v = nn::bind_constants(tape, agent.q1);
    auto q2v = nn::bind_constants(tape, agent.q2);
    const ActorTerms at =
        actor_loss(tape, shape, pvars, q1v, q2v, ctx, normal_matrix(n, shape.act_dim, rng), alpha);
    require_finite(at.loss.scalar(), "actor loss");
    m.actor_loss = at.loss.scalar();
    m.mean_q = at.q_min.value().mean();
    log_prob = at.log_prob.value().col(0);
    tape.backward(at.loss);
    nn::adam_step(agent.policy_opt, agent.policy, nn::collect_grads(tape, pvars));
  }
  m.entropy = -log_prob.mean();

  if (agent.cfg.auto_entropy) {
    // d/d(log alpha) of -log_alpha * mean(log pi + H_target)
    const double g = -(log_prob.mean() + agent.target_entropy());
    nn::adam_step(agent.alpha_opt, agent.log_alpha, {Matrix::Constant(1, 1, g)});
  }
  m.alpha = agent.alpha();

  nn::polyak_update(agent.q1_target, agent.q1, agent.cfg.tau);
  nn::polyak_update(agent.q2_target, agent.q2, agent.cfg.tau);
  return m;
}

ActorTerms actor_loss(nn::Tape& tape, const PolicyShape& shape, std::span<const nn::Var> policy,
                      std::span<const nn::Var> q1, std::span<const nn::Var> q2, const Matrix& context,
                      const Matrix& noise, double alpha) {
  nn::Var c = tape.constant(context);
  TapeSample ts = tape_sample(tape, shape, policy, c, noise);
  nn::Var qmin = nn::minimum(critic_forward(shape, q1, c, ts.action), critic_forward(shape, q2, c, ts.action));
  return {nn::mean(alpha * ts.log_prob - qmin), ts.log_prob, qmin};
}

SkillTrajectory rollout_episode(const envs::EnvSpec& env, const PolicyShape& shape,
                                const nn::ParamSet& policy, int L, const Vector& z,
                                ActionMode mode, std::uint64_t env_seed, std::mt19937_64& rng) {
  if (L < 1) throw ConfigError("rollout: L must be >= 1");
  if (env.obs_dim != shape.obs_dim || env.act_dim != shape.act_dim) {
    throw ConfigError("rollout: policy and env dimensions differ");
  }
  const int T = env.episode_length;
  SkillTrajectory traj;
  traj.L = L;
  traj.z = z;
  traj.env_seed = env_seed;
  traj.states.resize(T + 1, env.obs_dim);
  traj.actions.resize(T, env.act_dim);
  traj.v_x.resize(T);
  traj.task_reward.resize(T);
  traj.r_psd = Vector::Zero(T);
  traj.r_ext = Vector::Zero(T);

  const Vector embedding = encoder::embed_period(L, shape.D);
  envs::EnvState state = envs::reset(env, env_seed);
  traj.states.row(0) = state.observation.transpose();
  for (int t = 0; t < T; ++t) {
    const Vector a = sample_action_embedded(shape, policy, state.observation, embedding, z, mode, rng);
    envs::StepResult r = envs::step(env, state, a);
    traj.actions.row(t) = a.transpose();
    traj.v_x(t) = r.info.v_x;
    traj.task_reward(t) = r.info.task_reward;
    state = std::move(r.state);
    traj.states.row(t + 1) = state.observation.transpose();
  }
  return traj;
}

Episode to_episode(const SkillTrajectory& traj, std::int64_t episode_id) {
  const int T = traj.length();
  Episode e;
  e.id = episode_id;
  e.L = traj.L;
  e.z = traj.z;
  e.s = traj.states.topRows(T);
  e.a = traj.actions;
  e.s_next = traj.states.bottomRows(T);
  e.v_x = traj.v_x;
  // Episodes end by time limit only, so every transition bootstraps.
  e.done.assign(static_cast<std::size_t>(T), 0);
  return e;
}

}  // namespace psd::sac
