#include "psd/metra.hpp"

#include "psd/encoder.hpp"
#include "psd/errors.hpp"

#include <algorithm>
#include <cmath>

namespace psd::metra {

void MetraConfig::validate() const {
  if (skill_dim < 1) throw ConfigError("metra: skill_dim must be >= 1");
  if (kind == SkillKind::discrete && skill_dim < 2) {
    throw ConfigError("metra: discrete skills need skill_dim >= 2");
  }
  if (!(eps_m > 0.0)) throw ConfigError("metra: eps_m must be > 0");
  if (lambda_m_init < 0.0) throw ConfigError("metra: lambda_m_init must be >= 0");
  if (!(lambda_lr > 0.0) || !(lr > 0.0)) throw ConfigError("metra: learning rates must be > 0");
  if (alpha_psd < 0.0) throw ConfigError("metra: alpha_psd must be >= 0");
  if (batch < 1) throw ConfigError("metra: batch must be >= 1");
}

SkillVector sample_skill(const MetraConfig& cfg, std::mt19937_64& rng) {
  SkillVector out;
  out.kind = cfg.kind;
  const int n = cfg.skill_dim;
  if (cfg.kind == SkillKind::discrete) {
    std::uniform_int_distribution<int> pick(0, n - 1);
    out.z = Vector::Constant(n, -1.0 / n);
    out.z(pick(rng)) += 1.0;
    return out;
  }
  std::normal_distribution<double> n01(0.0, 1.0);
  Vector z(n);
  double norm = 0.0;
  while (norm < 1e-12) {
    for (int i = 0; i < n; ++i) z(i) = n01(rng);
    norm = z.norm();
  }
  out.z = z / norm;
  return out;
}

nn::MlpSpec MetraShape::mlp() const {
  nn::MlpSpec s;
  s.input_dim = obs_dim + (uses_period() ? D : 0);
  s.hidden_layers = cfg.hidden_layers;
  s.hidden_units = cfg.hidden_units;
  s.output_dim = cfg.skill_dim;
  return s;
}

nn::ParamSet init_phi_m(const MetraShape& shape, std::mt19937_64& rng) {
  shape.cfg.validate();
  return nn::init_mlp(shape.mlp(), rng, "phim.");
}

Matrix phi_m_input(const MetraShape& shape, const Matrix& s, std::span<const int> L) {
  if (s.cols() != shape.obs_dim) throw ConfigError("metra: observation width mismatch");
  if (!shape.uses_period()) return s;
  if (static_cast<Eigen::Index>(L.size()) != s.rows()) {
    throw ConfigError("metra: one L per row required");
  }
  Matrix in(s.rows(), shape.obs_dim + shape.D);
  in << s, encoder::embed_periods(L, shape.D);
  return in;
}

Matrix encode_m(const MetraShape& shape, const nn::ParamSet& params, const Matrix& s,
                std::span<const int> L) {
  return nn::mlp_forward(shape.mlp(), params, phi_m_input(shape, s, L));
}

Vector r_metra_batch(const MetraShape& shape, const nn::ParamSet& params, const Matrix& s,
                     const Matrix& s_next, const Matrix& z, std::span<const int> L) {
  if (z.rows() != s.rows() || z.cols() != shape.cfg.skill_dim) {
    throw ConfigError("metra: skill input must be n x " + std::to_string(shape.cfg.skill_dim));
  }
  const Matrix disp = encode_m(shape, params, s_next, L) - encode_m(shape, params, s, L);
  return disp.cwiseProduct(z).rowwise().sum();
}

double r_metra(const MetraShape& shape, const nn::ParamSet& params, const Vector& s,
               const Vector& s_next, const Vector& z, int L) {
  const int Ls[1] = {L};
  return r_metra_batch(shape, params, s.transpose(), s_next.transpose(), z.transpose(), Ls)(0);
}

double lambda_gradient(const Vector& sq_dist, double eps_m) {
  if (sq_dist.size() == 0) return 0.0;
  return -(1.0 - sq_dist.array()).min(eps_m).mean();
}

nn::Var metra_loss(nn::Tape& tape, nn::Var displacement, const Matrix& z, double lambda_m,
                   double eps_m) {
  nn::Var zc = tape.constant(z);
  nn::Var dot = nn::row_sum(displacement * zc);
  nn::Var slack = nn::min_scalar(nn::add_scalar(-nn::row_sum(nn::square(displacement)), 1.0), eps_m);
  return -nn::mean(dot + lambda_m * slack);
}

MetraMetrics metra_update(const MetraShape& shape, nn::ParamSet& phi_m, nn::AdamState& adam,
                          double& lambda_m, const SacBatch& batch) {
  if (batch.size() == 0) throw ConfigError("metra_update: empty batch");
  nn::Tape tape;
  auto vars = nn::bind_params(tape, phi_m);
  nn::Var a = nn::mlp_forward(shape.mlp(), vars, tape.constant(phi_m_input(shape, batch.s, batch.L)));
  nn::Var b = nn::mlp_forward(shape.mlp(), vars,
                              tape.constant(phi_m_input(shape, batch.s_next, batch.L)));
  nn::Var disp = b - a;
  nn::Var loss = metra_loss(tape, disp, batch.z, lambda_m, shape.cfg.eps_m);
  if (!std::isfinite(loss.scalar())) throw NumericError("metra_update: non-finite loss");

  const Matrix& d = disp.value();
  const Vector sq = d.rowwise().squaredNorm();
  MetraMetrics m;
  m.objective = -loss.scalar();
  m.mean_dist = sq.array().sqrt().mean();
  m.mean_reward = d.cwiseProduct(batch.z).rowwise().sum().mean();

  tape.backward(loss);
  nn::adam_step(adam, phi_m, nn::collect_grads(tape, vars));

  lambda_m = std::max(0.0, lambda_m + shape.cfg.lambda_lr * lambda_gradient(sq, shape.cfg.eps_m));
  m.lambda_m = lambda_m;
  return m;
}

}  // namespace psd::metra
