#include "psd/reward.hpp"

#include "psd/errors.hpp"

#include <cmath>

namespace psd::reward {

void RewardConfig::validate() const {
  if (!(kappa > 0.0)) throw ConfigError("reward: kappa must be > 0");
  if (!(v_star > 0.0)) throw ConfigError("reward: v_star must be > 0");
}

double delta_from_distance(double one_step_distance, int L) {
  return one_step_distance - encoder::optimal_chord(L);
}

double delta(const encoder::EncoderShape& shape, const nn::ParamSet& phi, const Vector& s_t,
             const Vector& s_t1, int L, const Vector& z) {
  const Vector a = encoder::encode(shape, phi, s_t, L, z);
  const Vector b = encoder::encode(shape, phi, s_t1, L, z);
  return delta_from_distance((b - a).norm(), L);
}

double r_psd(double delta, double kappa) {
  if (!(kappa > 0.0)) throw ConfigError("r_psd: kappa must be > 0");
  return std::exp(-kappa * delta * delta);
}

double r_ext(double v_x, double v_star) {
  if (!(v_star > 0.0)) throw ConfigError("r_ext: v_star must be > 0");
  return v_x >= v_star ? 1.0 : v_x / v_star;
}

double combine(double r_psd_value, double r_ext_value, std::optional<double> r_metra,
               const RewardConfig& cfg) {
  double r = cfg.alpha_psd * r_psd_value;
  if (cfg.use_ext) r += r_ext_value;
  if (r_metra) r += *r_metra;
  return r;
}

Vector r_psd_batch(const encoder::EncoderShape& shape, const nn::ParamSet& phi, const Matrix& s,
                   const Matrix& s_next, std::span<const int> L, const Matrix& z, double kappa) {
  const Matrix a = encoder::encode_batch(shape, phi, s, L, z);
  const Matrix b = encoder::encode_batch(shape, phi, s_next, L, z);
  const Vector dist = (b - a).rowwise().norm();
  Vector r(dist.size());
  for (Eigen::Index i = 0; i < dist.size(); ++i) {
    r(i) = r_psd(delta_from_distance(dist(i), L[static_cast<std::size_t>(i)]), kappa);
  }
  return r;
}

}  // namespace psd::reward
