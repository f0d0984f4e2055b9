#include "psd/envs.hpp"

#include "psd/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace psd::envs {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::array<int, 3> kTempoPeriods{12, 20, 32};

// Swing mass: x'' = -k x - c x' + u_max * a
constexpr double kSwingStiffness = 4.0;
constexpr double kSwingDamping = 0.1;
constexpr double kSwingTorque = 5.0;

// Internal layout of ring-based states.
constexpr int kTheta = 0;
constexpr int kOmegaPrev = 1;
constexpr int kDistractor0 = 2;
constexpr int kRingInternal = kDistractor0 + kRingDistractors;

double wrap_angle(double theta) {
  double w = std::fmod(theta, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w -= kTwoPi;
  return w;
}

double clamp1(double a) { return std::clamp(a, -1.0, 1.0); }

bool ring_based(EnvName n) { return n != EnvName::swing_mass; }

void write_ring_obs(const Vector& internal, Vector& obs) {
  obs(0) = std::cos(internal(kTheta));
  obs(1) = std::sin(internal(kTheta));
  obs(2) = internal(kOmegaPrev);
  for (int i = 0; i < kRingDistractors; ++i) obs(3 + i) = internal(kDistractor0 + i);
}

Vector ring_reset_internal(std::mt19937_64& rng, int extra) {
  Vector internal = Vector::Zero(kRingInternal + extra);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::normal_distribution<double> noise(0.0, kDistractorSigma);
  internal(kTheta) = phase(rng);
  internal(kOmegaPrev) = 0.0;
  for (int i = 0; i < kRingDistractors; ++i) internal(kDistractor0 + i) = noise(rng);
  return internal;
}

// Advances the ring part in place, returns omega.
double ring_advance(Vector& internal, double action) {
  const double omega = clamp1(action) * kRingOmegaMax;
  internal(kTheta) = wrap_angle(internal(kTheta) + omega);
  internal(kOmegaPrev) = omega;
  return omega;
}

int tempo_period_at(int step_index, int offset) {
  const int slot = (step_index / kTempoSwitchInterval + offset) % static_cast<int>(kTempoPeriods.size());
  return kTempoPeriods[static_cast<std::size_t>(slot)];
}

}  // namespace

std::string_view to_string(EnvName name) {
  switch (name) {
    case EnvName::ring_world: return "ring_world";
    case EnvName::swing_mass: return "swing_mass";
    case EnvName::tempo_track: return "tempo_track";
    case EnvName::ring_plane: return "ring_plane";
  }
  return "unknown";
}

EnvName env_name_from_string(std::string_view name) {
  if (name == "ring_world") return EnvName::ring_world;
  if (name == "swing_mass") return EnvName::swing_mass;
  if (name == "tempo_track") return EnvName::tempo_track;
  if (name == "ring_plane") return EnvName::ring_plane;
  throw ConfigError("unknown env name '" + std::string(name) + "'");
}

EnvSpec EnvSpec::make(EnvName name, int episode_length) {
  EnvSpec s;
  s.name = name;
  s.episode_length = episode_length;
  switch (name) {
    case EnvName::ring_world:
      s.obs_dim = 3 + kRingDistractors;
      s.act_dim = 1;
      break;
    case EnvName::swing_mass:
      s.obs_dim = 2;
      s.act_dim = 1;
      break;
    case EnvName::tempo_track:
      s.obs_dim = 3 + kRingDistractors;
      s.act_dim = 1;
      break;
    case EnvName::ring_plane:
      s.obs_dim = 3 + kRingDistractors + 2;
      s.act_dim = 3;
      break;
  }
  return s;
}

void EnvSpec::validate() const {
  const EnvSpec native = make(name, episode_length);
  if (obs_dim < 1 || act_dim < 1 || episode_length < 1 || !(action_bound > 0.0)) {
    throw ConfigError("EnvSpec: dims and episode_length must be >= 1, action_bound > 0");
  }
  if (obs_dim != native.obs_dim || act_dim != native.act_dim) {
    throw ConfigError("EnvSpec: dims do not match env '" + std::string(to_string(name)) + "'");
  }
}

EnvState reset(const EnvSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  EnvState s;
  s.step_index = 0;
  s.observation = Vector::Zero(spec.obs_dim);
  switch (spec.name) {
    case EnvName::ring_world:
      s.internal = ring_reset_internal(rng, 0);
      write_ring_obs(s.internal, s.observation);
      break;
    case EnvName::tempo_track: {
      s.internal = ring_reset_internal(rng, 1);
      s.internal(kRingInternal) = static_cast<double>(seed % kTempoPeriods.size());
      write_ring_obs(s.internal, s.observation);
      break;
    }
    case EnvName::ring_plane:
      s.internal = ring_reset_internal(rng, 2);
      write_ring_obs(s.internal, s.observation);
      break;
    case EnvName::swing_mass: {
      std::uniform_real_distribution<double> x0(-0.1, 0.1);
      s.internal = Vector::Zero(2);
      s.internal(0) = x0(rng);
      s.observation = s.internal;
      break;
    }
  }
  return s;
}

StepResult step(const EnvSpec& spec, const EnvState& state, const Vector& action) {
  if (action.size() != spec.act_dim) {
    throw ConfigError("step: action has " + std::to_string(action.size()) + " entries, expected " +
                      std::to_string(spec.act_dim));
  }
  StepResult r;
  r.state.internal = state.internal;
  r.state.observation = state.observation;
  r.state.step_index = state.step_index + 1;
  Vector& in = r.state.internal;
  switch (spec.name) {
    case EnvName::ring_world: {
      const double omega = ring_advance(in, action(0));
      write_ring_obs(in, r.state.observation);
      r.info.v_x = omega / kRingOmegaMax;
      break;
    }
    case EnvName::tempo_track: {
      const int period = tempo_period_at(state.step_index, static_cast<int>(in(kRingInternal)));
      const double omega = ring_advance(in, action(0));
      write_ring_obs(in, r.state.observation);
      r.info.v_x = omega / kRingOmegaMax;
      const double target = kTwoPi / period;
      r.info.task_reward = std::abs(std::abs(omega) - target) <= kTempoTolerance * target ? 1.0 : 0.0;
      break;
    }
    case EnvName::ring_plane: {
      const double omega = ring_advance(in, action(0));
      in(kRingInternal) += kPlaneSpeed * clamp1(action(1));
      in(kRingInternal + 1) += kPlaneSpeed * clamp1(action(2));
      write_ring_obs(in, r.state.observation);
      r.state.observation(3 + kRingDistractors) = in(kRingInternal);
      r.state.observation(4 + kRingDistractors) = in(kRingInternal + 1);
      r.info.v_x = omega / kRingOmegaMax;
      break;
    }
    case EnvName::swing_mass: {
      double x = in(0);
      double v = in(1);
      const double u = kSwingTorque * clamp1(action(0));
      v += kSwingDt * (-kSwingStiffness * x - kSwingDamping * v + u);
      v = std::clamp(v, -kSwingClamp, kSwingClamp);
      x += kSwingDt * v;
      x = std::clamp(x, -kSwingClamp, kSwingClamp);
      in(0) = x;
      in(1) = v;
      r.state.observation = in;
      r.info.v_x = std::abs(v);
      break;
    }
  }
  return r;
}

double ring_action_for_period(int L) {
  if (L < 1) throw InfeasiblePeriod("period variable must be >= 1");
  const double omega = std::numbers::pi / L;
  if (omega > kRingOmegaMax + 1e-12) {
    throw InfeasiblePeriod("L = " + std::to_string(L) + " needs omega = pi/" + std::to_string(L) +
                           " above the limit pi/4");
  }
  return omega / kRingOmegaMax;
}

Vector scripted_periodic_policy(const EnvSpec& spec, const EnvState& /*state*/, int L) {
  if (!ring_based(spec.name)) {
    throw ConfigError("scripted_periodic_policy: only ring-based envs are supported");
  }
  Vector a = Vector::Zero(spec.act_dim);
  a(0) = ring_action_for_period(L);
  return a;
}

double ring_phase(const EnvState& state) { return state.internal(kTheta); }

int tempo_target_period(const EnvState& state) {
  return tempo_period_at(state.step_index, static_cast<int>(state.internal(kRingInternal)));
}

Eigen::Vector2d plane_position(const EnvState& state) {
  return {state.internal(kRingInternal), state.internal(kRingInternal + 1)};
}

EnvState swing_mass_state(double x, double v) {
  EnvState s;
  s.internal = Vector(2);
  s.internal << x, v;
  s.observation = s.internal;
  return s;
}

}  // namespace psd::envs
