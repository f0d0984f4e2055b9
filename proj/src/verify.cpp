#include "psd/verify.hpp"

#include "psd/analysis.hpp"
#include "psd/checkpoint.hpp"
#include "psd/encoder.hpp"
#include "psd/envs.hpp"
#include "psd/errors.hpp"
#include "psd/hierarchy.hpp"
#include "psd/metra.hpp"
#include "psd/reward.hpp"
#include "psd/sac.hpp"
#include "psd/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <random>

namespace psd::verify {

using nlohmann::json;

bool Report::pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return !checks.empty();
}

std::vector<std::string> Report::failures() const {
  std::vector<std::string> out;
  for (const auto& c : checks)
    if (!c.pass) out.push_back(c.name);
  return out;
}

std::string Report::to_json(int indent) const {
  json j;
  j["suite"] = suite;
  j["pass"] = pass();
  j["failures"] = failures();
  j["checks"] = json::array();
  for (const auto& c : checks) {
    json e = {{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"threshold", c.threshold}};
    if (!c.detail.empty()) e["detail"] = c.detail;
    j["checks"].push_back(std::move(e));
  }
  return j.dump(indent);
}

namespace {

Check below(std::string name, double value, double threshold, std::string detail = {}) {
  return {std::move(name), std::isfinite(value) && value < threshold, value, threshold, std::move(detail)};
}

Check flag(std::string name, bool ok, std::string detail = {}) {
  return {std::move(name), ok, ok ? 1.0 : 0.0, 1.0, std::move(detail)};
}

Matrix normal(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::vector<int> random_periods(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(2, 12);
  std::vector<int> L(static_cast<std::size_t>(n));
  for (auto& v : L) v = u(rng);
  return L;
}

double gradcheck_error(const nn::LossFn& loss, const nn::ParamSet& params) {
  const nn::GradSet analytic = nn::grad(loss, params);
  const nn::GradSet numeric = nn::finite_difference_grad(loss, params, 1e-6);
  return nn::max_relative_error(analytic, numeric);
}

void scale_params(nn::ParamSet& p, double s) {
  for (auto& e : p) e.value *= s;
}

}  // namespace

Report theorem(int L_lo, int L_hi, const std::vector<int>& dims, std::uint64_t seed, double objective_tol) {
  Report r{"theorem", {}};
  for (int d : dims) {
    for (int L = L_lo; L <= L_hi; ++L) {
      analysis::TheoremOptions opt;
      opt.seed = seed;
      const auto rep = analysis::theorem_oracle(L, d, opt);
      const std::string tag = "L=" + std::to_string(L) + ",d=" + std::to_string(d);
      r.checks.push_back(below("objective " + tag, std::abs(rep.objective - L), objective_tol,
                               "objective " + std::to_string(rep.objective)));
      r.checks.push_back(below("objective_bound " + tag, rep.objective - L, 1e-9));
      const double tol = 1e-2 * L;
      r.checks.push_back(below("radius " + tag, rep.max_radius_err, tol));
      r.checks.push_back(below("chord " + tag, rep.max_chord_err, tol));
      r.checks.push_back(below("antipodal " + tag, rep.max_antipodal_err, tol));
    }
  }
  return r;
}

Report gradcheck(std::uint64_t seed, double tol) {
  Report r{"gradcheck", {}};
  std::mt19937_64 rng(seed);
  const int n = 6;
  const int obs = 7;

  // Circular encoder, with constraints slack and with them violated.
  {
    encoder::EncoderShape shape;
    shape.cfg.hidden_layers = 2;
    shape.cfg.hidden_units = 8;
    shape.obs_dim = obs;
    shape.skill_dim = 2;
    TupleBatch b;
    b.L = random_periods(n, rng);
    b.s_t = normal(n, obs, rng);
    b.s_t1 = normal(n, obs, rng);
    b.s_tL = normal(n, obs, rng);
    b.z = normal(n, 2, rng);
    nn::ParamSet phi = encoder::init_encoder(shape, rng);
    auto loss = [&](nn::Tape& t, std::span<const nn::Var> v) {
      return encoder::psd_encoder_loss(t, shape, v, b);
    };
    r.checks.push_back(below("encoder", gradcheck_error(loss, phi), tol));
    scale_params(phi, 4.0);
    r.checks.push_back(below("encoder (constraints active)", gradcheck_error(loss, phi), tol));
  }

  // SAC critics and actor.
  {
    sac::PolicyShape shape;
    shape.obs_dim = obs;
    shape.act_dim = 2;
    shape.skill_dim = 2;
    shape.hidden_layers = 2;
    shape.hidden_units = 8;
    sac::SacConfig cfg;
    cfg.hidden_layers = 2;
    cfg.hidden_units = 8;
    const sac::SacAgent agent = sac::SacAgent::create(shape, cfg, rng);
    const std::vector<int> L = random_periods(n, rng);
    const Matrix ctx = sac::policy_context(shape, normal(n, obs, rng), L, normal(n, 2, rng));
    const Matrix act = normal(n, 2, rng, 0.5).array().tanh().matrix();
    const Vector target = normal(n, 1, rng).col(0);
    for (int c = 0; c < 2; ++c) {
      auto loss = [&](nn::Tape& t, std::span<const nn::Var> v) {
        return sac::critic_loss(t, shape, v, ctx, act, target);
      };
      r.checks.push_back(below(c == 0 ? "critic q1" : "critic q2",
                               gradcheck_error(loss, c == 0 ? agent.q1 : agent.q2), tol));
    }
    const Matrix noise = normal(n, 2, rng);
    auto actor = [&](nn::Tape& t, std::span<const nn::Var> v) {
      auto q1 = nn::bind_constants(t, agent.q1);
      auto q2 = nn::bind_constants(t, agent.q2);
      return sac::actor_loss(t, shape, v, q1, q2, ctx, noise, 0.2).loss;
    };
    r.checks.push_back(below("actor", gradcheck_error(actor, agent.policy), tol));
  }

  // METRA encoder.
  {
    metra::MetraConfig mc;
    mc.hidden_layers = 2;
    mc.hidden_units = 8;
    const metra::MetraShape shape{mc, obs, 8};
    const nn::ParamSet phi_m = metra::init_phi_m(shape, rng);
    const std::vector<int> L = random_periods(n, rng);
    const Matrix in_a = metra::phi_m_input(shape, normal(n, obs, rng), L);
    const Matrix in_b = metra::phi_m_input(shape, normal(n, obs, rng), L);
    const Matrix z = normal(n, mc.skill_dim, rng);
    auto loss = [&](nn::Tape& t, std::span<const nn::Var> v) {
      nn::Var disp = nn::mlp_forward(shape.mlp(), v, t.constant(in_b)) -
                     nn::mlp_forward(shape.mlp(), v, t.constant(in_a));
      return metra::metra_loss(t, disp, z, 30.0, mc.eps_m);
    };
    r.checks.push_back(below("metra encoder", gradcheck_error(loss, phi_m), tol));
  }

  // High-level PPO actor and critic.
  {
    hierarchy::HighLevelConfig hc;
    hc.hidden_units = 8;
    const auto pi = hierarchy::HighLevelPolicy::create(obs + 1, 4, hc, rng);
    const Matrix o = normal(n, obs + 1, rng);
    std::vector<int> a(static_cast<std::size_t>(n));
    std::uniform_int_distribution<int> pick(0, 3);
    for (auto& v : a) v = pick(rng);
    const Vector old_lp = Vector::Constant(n, std::log(0.25));
    const Vector adv = normal(n, 1, rng).col(0);
    auto actor = [&](nn::Tape& t, std::span<const nn::Var> v) {
      return hierarchy::ppo_actor_loss(t, pi.actor_spec, v, o, a, old_lp, adv, hc.clip, 0.01);
    };
    r.checks.push_back(below("ppo actor", gradcheck_error(actor, pi.actor), tol));
    const Matrix ret = normal(n, 1, rng);
    auto critic = [&](nn::Tape& t, std::span<const nn::Var> v) {
      nn::Var pred = nn::mlp_forward(pi.critic_spec, v, t.constant(o));
      return nn::mean(nn::square(pred - t.constant(ret)));
    };
    r.checks.push_back(below("ppo critic", gradcheck_error(critic, pi.critic), tol));
  }
  return r;
}

RunConfig tiny_config(std::uint64_t seed) {
  RunConfig c = default_config(envs::EnvName::ring_world);
  c.seed = seed;
  c.epochs = 3;
  c.env.episode_length = 40;
  c.agent.hidden_units = 16;
  c.agent.batch = 32;
  c.agent.episodes_per_epoch = 2;
  c.agent.grad_steps_per_epoch = 4;
  c.encoder.hidden_units = 16;
  c.encoder.batch = 32;
  c.encoder.steps_per_epoch = 4;
  c.bounds.L_min = 5;
  c.bounds.L_max = 8;
  c.bounds.interval_episodes = 2;
  c.bounds.eval_episodes = 1;
  return c;
}

Report invariants(std::uint64_t seed) {
  Report r{"invariants", {}};
  std::mt19937_64 rng(seed);

  // Spectral identities.
  for (int N : {64, 200, 257}) {
    const Vector x = normal(N, 1, rng).col(0);
    r.checks.push_back(below("parseval N=" + std::to_string(N), analysis::parseval_residual(x), 1e-9));
    const auto s = analysis::spectrum(x, 1);
    const Vector mag = analysis::naive_dft_magnitude(x.array() - x.mean());
    double err = 0.0;
    for (Eigen::Index k = 1; k < s.amps.size(); ++k) {
      const double scale = (2 * k == N) ? 1.0 / N : 2.0 / N;
      err = std::max(err, std::abs(s.amps(k) - scale * mag(k)));
    }
    r.checks.push_back(below("fft vs naive dft N=" + std::to_string(N), err, 1e-9));
  }

  // Reward range and symmetry.
  {
    bool ok = true;
    std::normal_distribution<double> d(0.0, 2.0);
    for (int i = 0; i < 1000; ++i) {
      const double delta = d(rng);
      const double v = reward::r_psd(delta, 10.0);
      ok = ok && v > 0.0 && v <= 1.0 && v == reward::r_psd(-delta, 10.0);
    }
    ok = ok && reward::r_psd(0.0, 10.0) == 1.0;
    r.checks.push_back(flag("r_psd in (0,1] and even", ok));
  }

  // Ideal polygon geometry has zero relative error.
  {
    const int L = 6;
    const double chord = L * std::sin(M_PI / (2.0 * L));
    const auto g = analysis::geometry_from_distances(L, Vector::Constant(32, chord),
                                                     Vector::Constant(32, L), Vector::Zero(32));
    r.checks.push_back(below("ideal polygon rel_err", g.rel_err_onestep + g.rel_err_Lstep, 1e-12));
  }

  // Feasible configurations never beat L.
  {
    double worst = -1e300;
    for (int trial = 0; trial < 200; ++trial) {
      const int L = 2 + trial % 5;
      Matrix p = normal(2 * L, 3, rng, 2.0);
      while (analysis::polygon_violation(p, L) > 0.0) p *= 0.9;
      worst = std::max(worst, analysis::polygon_objective(p, L, 0.5) - L);
    }
    r.checks.push_back(below("feasible objective <= L", worst, 1e-9));
  }

  // Config round trip for every env's defaults.
  for (auto e : {envs::EnvName::ring_world, envs::EnvName::swing_mass, envs::EnvName::tempo_track,
                 envs::EnvName::ring_plane}) {
    const RunConfig c = default_config(e);
    const std::string once = dump_config(c);
    const bool ok = parse_config(once) == c && dump_config(parse_config(once)) == once;
    r.checks.push_back(flag("config round trip " + std::string(envs::to_string(e)), ok));
  }

  // Env replay from logged actions is bit-exact.
  for (auto e : {envs::EnvName::ring_world, envs::EnvName::swing_mass, envs::EnvName::ring_plane}) {
    const envs::EnvSpec spec = envs::EnvSpec::make(e, 50);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vector> actions, observations;
    envs::EnvState s = envs::reset(spec, 99);
    for (int t = 0; t < spec.episode_length; ++t) {
      Vector a(spec.act_dim);
      for (auto& v : a) v = u(rng);
      s = envs::step(spec, s, a).state;
      actions.push_back(a);
      observations.push_back(s.observation);
    }
    bool ok = true;
    envs::EnvState replay = envs::reset(spec, 99);
    for (std::size_t t = 0; t < actions.size(); ++t) {
      replay = envs::step(spec, replay, actions[t]).state;
      ok = ok && replay.observation == observations[t];
    }
    r.checks.push_back(flag("env replay " + std::string(envs::to_string(e)), ok));
  }

  // Checkpoints, resume and reproducibility on a tiny run.
  {
    const RunConfig cfg = tiny_config(seed);
    train::TrainerState a = train::make_trainer(cfg);
    train::run_epoch(a);
    const std::string bytes = ckpt::serialize(a);
    train::TrainerState restored = ckpt::deserialize(bytes);
    r.checks.push_back(flag("checkpoint round trip bitwise", ckpt::serialize(restored) == bytes));

    while (a.epoch < cfg.epochs) train::run_epoch(a);
    while (restored.epoch < cfg.epochs) train::run_epoch(restored);
    r.checks.push_back(flag("resume matches uninterrupted run", ckpt::serialize(a) == ckpt::serialize(restored)));

    train::TrainerState b = train::make_trainer(cfg);
    while (b.epoch < cfg.epochs) train::run_epoch(b);
    r.checks.push_back(flag("single-worker run reproducible", ckpt::serialize(a) == ckpt::serialize(b)));

    RunConfig threaded = cfg;
    threaded.workers = 2;
    train::TrainerState c = train::make_trainer(threaded);
    while (c.epoch < cfg.epochs) train::run_epoch(c);
    bool same = c.agent.policy == a.agent.policy && c.phi == a.phi;
    r.checks.push_back(flag("worker count does not change results", same));
  }
  return r;
}

}  // namespace psd::verify
