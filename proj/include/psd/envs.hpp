#pragma once

// Deterministic toy environments with analytically known periodic structure.
//
//   ring_world   phase on a circle, action sets the angular velocity
//   swing_mass   damped driven oscillator (semi-implicit Euler)
//   tempo_track  ring_world with a switching target period (downstream task)
//   ring_plane   ring_world x a free particle on a plane (direction + period)

#include <Eigen/Dense>

#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

namespace psd::envs {

using Vector = Eigen::VectorXd;

enum class EnvName { ring_world, swing_mass, tempo_track, ring_plane };

std::string_view to_string(EnvName name);
/// Throws ConfigError for unknown names.
EnvName env_name_from_string(std::string_view name);

inline constexpr double kRingOmegaMax = std::numbers::pi / 4.0;
inline constexpr int kRingDistractors = 4;
inline constexpr double kDistractorSigma = 0.01;
inline constexpr double kSwingDt = 0.05;
inline constexpr double kSwingClamp = 10.0;
inline constexpr int kTempoSwitchInterval = 100;
inline constexpr double kTempoTolerance = 0.15;
inline constexpr double kPlaneSpeed = 0.05;

struct EnvSpec {
  EnvName name = EnvName::ring_world;
  int obs_dim = 0;
  int act_dim = 0;
  int episode_length = 200;
  double action_bound = 1.0;

  /// Spec with the env's native dimensions filled in.
  static EnvSpec make(EnvName name, int episode_length = 200);
  void validate() const;
};

struct EnvState {
  Vector observation;
  int step_index = 0;
  /// Env-private: ring_world {theta, omega_prev, d0..d3}; swing_mass {x, v};
  /// tempo_track ring state + {switch offset}; ring_plane ring state + {px, py}.
  Vector internal;
};

struct StepInfo {
  double v_x = 0.0;
  /// Downstream task reward (tempo_track only, otherwise 0).
  double task_reward = 0.0;
};

struct StepResult {
  EnvState state;
  StepInfo info;
};

EnvState reset(const EnvSpec& spec, std::uint64_t seed);
/// Actions are clamped to [-1, 1]^act_dim.
StepResult step(const EnvSpec& spec, const EnvState& state, const Vector& action);

/// Action producing omega = pi / L on ring-based envs (first action channel).
/// Throws InfeasiblePeriod when pi / L exceeds the velocity limit.
double ring_action_for_period(int L);
/// Full scripted action for `spec` (ring-based only); extra channels are zero.
Vector scripted_periodic_policy(const EnvSpec& spec, const EnvState& state, int L);

/// Indices of the phase channels (cos, sin) in ring-based observations.
inline constexpr int kPhaseCos = 0;
inline constexpr int kPhaseSin = 1;

/// ring_world phase theta in [0, 2pi).
double ring_phase(const EnvState& state);
/// tempo_track target period at the state's step index.
int tempo_target_period(const EnvState& state);
/// ring_plane planar position.
Eigen::Vector2d plane_position(const EnvState& state);

/// Builds a swing_mass state at a given (x, v); used for equilibrium checks.
EnvState swing_mass_state(double x, double v);

}  // namespace psd::envs
