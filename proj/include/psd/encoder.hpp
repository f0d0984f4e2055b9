#pragma once

// Circular latent encoder phi_L(s) and its constrained training objective.
//
// States L steps apart are pushed to antipodal points of a circle of diameter
// L, consecutive states to the vertices of a regular 2L-gon. The constraints
// enter through fixed multipliers acting on min(eps, slack) terms.

#include "psd/autodiff.hpp"
#include "psd/buffer.hpp"
#include "psd/nn.hpp"

#include <optional>
#include <random>
#include <span>

namespace psd::encoder {

using nn::Matrix;
using nn::Vector;

/// Sinusoidal embedding of the period variable: e_i = sin(L w_i) for even i,
/// cos(L w_i) for odd i, with w_i = 10000^(-2 floor(i/2) / D).
Vector embed_period(int L, int D);
/// Row i holds embed_period(L[i], D).
Matrix embed_periods(std::span<const int> L, int D);

/// Side length of the regular 2L-gon inscribed in a circle of diameter L.
double optimal_chord(int L);

struct PsdEncoderConfig {
  int d = 3;             // latent dimension
  int D = 8;             // period embedding width
  double k = 0.5;        // centering weight
  double eps = 1e-5;     // constraint relaxation
  double lambda1 = 5.0;  // L-step constraint multiplier (fixed)
  double lambda2 = 5.0;  // 1-step constraint multiplier (fixed)
  double lr = 1e-4;
  int batch = 1024;
  int hidden_layers = 2;
  int hidden_units = 256;
  /// Allows d = 2 (unstable in practice, off by default).
  bool allow_planar = false;
  /// Encoder gradient steps per training epoch.
  int steps_per_epoch = 64;

  void validate() const;
};

/// Network layout for phi(s, Embed(L) [, z]).
struct EncoderShape {
  PsdEncoderConfig cfg;
  int obs_dim = 1;
  int skill_dim = 0;  // > 0 when the encoder is conditioned on a skill vector

  nn::MlpSpec mlp() const;
  int input_dim() const { return obs_dim + cfg.D + skill_dim; }
};

nn::ParamSet init_encoder(const EncoderShape& shape, std::mt19937_64& rng);

/// concat(s, Embed(L), z) row by row.
Matrix encoder_input(const EncoderShape& shape, const Matrix& s, std::span<const int> L,
                     const Matrix& z);

Vector encode(const EncoderShape& shape, const nn::ParamSet& params, const Vector& s, int L,
              const Vector& z = Vector());
Matrix encode_batch(const EncoderShape& shape, const nn::ParamSet& params, const Matrix& s,
                    std::span<const int> L, const Matrix& z = Matrix());
nn::Var encode(nn::Tape& tape, const EncoderShape& shape, std::span<const nn::Var> params,
               const Matrix& s, std::span<const int> L, const Matrix& z);

/// -J_PSD evaluated on latent triples (phi(s_t), phi(s_t+1), phi(s_t+L)), each n x d.
nn::Var psd_loss_from_latents(nn::Tape& tape, nn::Var z_t, nn::Var z_t1, nn::Var z_tL,
                              std::span<const int> L, const PsdEncoderConfig& cfg);
double psd_loss_from_latents(const Matrix& z_t, const Matrix& z_t1, const Matrix& z_tL,
                             std::span<const int> L, const PsdEncoderConfig& cfg);

/// -J_PSD of the encoder on a tuple batch. Throws ConfigError on an empty batch.
nn::Var psd_encoder_loss(nn::Tape& tape, const EncoderShape& shape,
                         std::span<const nn::Var> params, const TupleBatch& batch);
double psd_encoder_loss(const EncoderShape& shape, const nn::ParamSet& params,
                        const TupleBatch& batch);

struct EncoderStepMetrics {
  double loss = 0.0;
  double mean_1step_dist = 0.0;
  double mean_Lstep_dist = 0.0;
  double mean_antipodal_sum = 0.0;  // batch mean of |phi(s_t+L) + phi(s_t)|
};

/// One Adam step on -J_PSD using a freshly sampled tuple batch. Returns nullopt
/// (and leaves params untouched) when the buffer holds fewer valid tuples than
/// the batch size.
std::optional<EncoderStepMetrics> train_encoder_step(const EncoderShape& shape,
                                                     nn::ParamSet& params, nn::AdamState& adam,
                                                     const EpisodeBuffer& buffer,
                                                     std::mt19937_64& rng);

/// Same as above on a given batch.
EncoderStepMetrics train_encoder_step(const EncoderShape& shape, nn::ParamSet& params,
                                      nn::AdamState& adam, const TupleBatch& batch);

}  // namespace psd::encoder
