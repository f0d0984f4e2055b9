#pragma once

#include "psd/buffer.hpp"
#include "psd/nn.hpp"

#include <random>

namespace psd::metra {

using nn::Matrix;
using nn::Vector;

enum class SkillKind { continuous, discrete };

struct MetraConfig {
  int skill_dim = 2;
  SkillKind kind = SkillKind::continuous;
  double eps_m = 1e-3;
  double lambda_m_init = 30.0;
  double lambda_lr = 1e-4;
  double lr = 1e-4;
  double alpha_psd = 1.0;
  int batch = 256;
  int hidden_layers = 2;
  int hidden_units = 256;
  /// phi_m(s, L) and phi_L(s, z). Off reproduces the naive summation.
  bool mutual_conditioning = true;

  void validate() const;
};

struct SkillVector {
  Vector z;
  SkillKind kind = SkillKind::continuous;
  int dim() const { return static_cast<int>(z.size()); }
};

/// Unit-norm Gaussian direction, or a zero-centred one-hot (1 - 1/n at one index, -1/n elsewhere).
SkillVector sample_skill(const MetraConfig& cfg, std::mt19937_64& rng);

/// phi_m: obs [+ Embed(L)] -> R^skill_dim.
struct MetraShape {
  MetraConfig cfg;
  int obs_dim = 1;
  int D = 8;

  bool uses_period() const { return cfg.mutual_conditioning; }
  nn::MlpSpec mlp() const;
};

nn::ParamSet init_phi_m(const MetraShape& shape, std::mt19937_64& rng);

Matrix phi_m_input(const MetraShape& shape, const Matrix& s, std::span<const int> L);
Matrix encode_m(const MetraShape& shape, const nn::ParamSet& params, const Matrix& s,
                std::span<const int> L);

/// (phi_m(s') - phi_m(s))^T z for one transition.
double r_metra(const MetraShape& shape, const nn::ParamSet& params, const Vector& s,
               const Vector& s_next, const Vector& z, int L);
Vector r_metra_batch(const MetraShape& shape, const nn::ParamSet& params, const Matrix& s,
                     const Matrix& s_next, const Matrix& z, std::span<const int> L);

/// dJ_lambda / dlambda = -mean(min(eps, 1 - |dphi|^2)).
double lambda_gradient(const Vector& sq_dist, double eps_m);

/// -J_phi_m given latent displacements (n x k) and skills (n x k).
nn::Var metra_loss(nn::Tape& tape, nn::Var displacement, const Matrix& z, double lambda_m,
                   double eps_m);

struct MetraMetrics {
  double objective = 0.0;   // J_phi_m on the batch before the step
  double lambda_m = 0.0;    // after the step
  double mean_dist = 0.0;   // mean |phi_m(s') - phi_m(s)|
  double mean_reward = 0.0; // mean (phi_m(s') - phi_m(s))^T z
};

/// One Adam step on phi_m and one projected ascent step on lambda_m.
MetraMetrics metra_update(const MetraShape& shape, nn::ParamSet& phi_m, nn::AdamState& adam,
                          double& lambda_m, const SacBatch& batch);

}  // namespace psd::metra
