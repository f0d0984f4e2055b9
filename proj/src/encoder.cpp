#include "psd/encoder.hpp"

#include "psd/errors.hpp"

#include <cmath>
#include <numbers>

namespace psd::encoder {

namespace {

constexpr double kNormFloor = 1e-24;

Matrix period_column(std::span<const int> L, auto f) {
  Matrix c(static_cast<Eigen::Index>(L.size()), 1);
  for (std::size_t i = 0; i < L.size(); ++i) c(static_cast<Eigen::Index>(i), 0) = f(L[i]);
  return c;
}

}  // namespace

Vector embed_period(int L, int D) {
  if (D < 2 || D % 2 != 0) throw ConfigError("embed_period: D must be even and >= 2");
  if (L < 0) throw ConfigError("embed_period: L must be >= 0");
  Vector e(D);
  for (int i = 0; i < D; ++i) {
    const double w = std::pow(10000.0, -2.0 * static_cast<double>(i / 2) / static_cast<double>(D));
    e(i) = (i % 2 == 0) ? std::sin(L * w) : std::cos(L * w);
  }
  return e;
}

Matrix embed_periods(std::span<const int> L, int D) {
  Matrix m(static_cast<Eigen::Index>(L.size()), D);
  for (std::size_t i = 0; i < L.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = embed_period(L[i], D).transpose();
  }
  return m;
}

double optimal_chord(int L) {
  if (L < 1) throw ConfigError("optimal_chord: L must be >= 1");
  return L * std::sin(std::numbers::pi / (2.0 * L));
}

void PsdEncoderConfig::validate() const {
  if (d < 2 || (d < 3 && !allow_planar)) {
    throw ConfigError("encoder: latent dimension d must be >= 3 (set allow_planar for d = 2)");
  }
  if (D < 2 || D % 2 != 0) throw ConfigError("encoder: embedding width D must be even and >= 2");
  if (!(k > 0.0)) throw ConfigError("encoder: k must be > 0");
  if (!(eps > 0.0)) throw ConfigError("encoder: eps must be > 0");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("encoder: lambda1, lambda2 must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("encoder: lr must be > 0");
  if (batch < 1) throw ConfigError("encoder: batch must be >= 1");
  if (steps_per_epoch < 0) throw ConfigError("encoder: steps_per_epoch must be >= 0");
}

nn::MlpSpec EncoderShape::mlp() const {
  nn::MlpSpec s;
  s.input_dim = input_dim();
  s.hidden_layers = cfg.hidden_layers;
  s.hidden_units = cfg.hidden_units;
  s.output_dim = cfg.d;
  return s;
}

nn::ParamSet init_encoder(const EncoderShape& shape, std::mt19937_64& rng) {
  shape.cfg.validate();
  return nn::init_mlp(shape.mlp(), rng);
}

Matrix encoder_input(const EncoderShape& shape, const Matrix& s, std::span<const int> L,
                     const Matrix& z) {
  const auto n = s.rows();
  if (s.cols() != shape.obs_dim) {
    throw ConfigError("encoder: observation has " + std::to_string(s.cols()) + " dims, expected " +
                      std::to_string(shape.obs_dim));
  }
  if (static_cast<Eigen::Index>(L.size()) != n) throw ConfigError("encoder: one L per row required");
  if (shape.skill_dim > 0 && (z.rows() != n || z.cols() != shape.skill_dim)) {
    throw ConfigError("encoder: skill input must be n x " + std::to_string(shape.skill_dim));
  }
  Matrix in(n, shape.input_dim());
  in.leftCols(shape.obs_dim) = s;
  in.middleCols(shape.obs_dim, shape.cfg.D) = embed_periods(L, shape.cfg.D);
  if (shape.skill_dim > 0) in.rightCols(shape.skill_dim) = z;
  return in;
}

Vector encode(const EncoderShape& shape, const nn::ParamSet& params, const Vector& s, int L,
              const Vector& z) {
  Matrix zs = z.size() > 0 ? Matrix(z.transpose()) : Matrix();
  const int Ls[1] = {L};
  return encode_batch(shape, params, s.transpose(), Ls, zs).row(0).transpose();
}

Matrix encode_batch(const EncoderShape& shape, const nn::ParamSet& params, const Matrix& s,
                    std::span<const int> L, const Matrix& z) {
  return nn::mlp_forward(shape.mlp(), params, encoder_input(shape, s, L, z));
}

nn::Var encode(nn::Tape& tape, const EncoderShape& shape, std::span<const nn::Var> params,
               const Matrix& s, std::span<const int> L, const Matrix& z) {
  return nn::mlp_forward(shape.mlp(), params, tape.constant(encoder_input(shape, s, L, z)));
}

nn::Var psd_loss_from_latents(nn::Tape& tape, nn::Var z_t, nn::Var z_t1, nn::Var z_tL,
                              std::span<const int> L, const PsdEncoderConfig& cfg) {
  if (L.empty()) throw ConfigError("psd loss: empty batch");
  const Matrix Lcol = period_column(L, [](int l) { return static_cast<double>(l); });
  const Matrix chord = period_column(L, [](int l) { return optimal_chord(l); });

  nn::Var dist_L = nn::row_norm(z_tL - z_t, kNormFloor);
  nn::Var anti = nn::row_norm(z_tL + z_t, kNormFloor);
  nn::Var dist_1 = nn::row_norm(z_t1 - z_t, kNormFloor);
  nn::Var slack_L = nn::min_scalar(tape.constant(Lcol) - dist_L, cfg.eps);
  nn::Var slack_1 = nn::min_scalar(tape.constant(chord) - dist_1, cfg.eps);
  nn::Var objective = dist_L - cfg.k * anti + cfg.lambda1 * slack_L + cfg.lambda2 * slack_1;
  return -nn::mean(objective);
}

double psd_loss_from_latents(const Matrix& z_t, const Matrix& z_t1, const Matrix& z_tL,
                             std::span<const int> L, const PsdEncoderConfig& cfg) {
  nn::Tape tape;
  return psd_loss_from_latents(tape, tape.constant(z_t), tape.constant(z_t1), tape.constant(z_tL),
                               L, cfg)
      .scalar();
}

nn::Var psd_encoder_loss(nn::Tape& tape, const EncoderShape& shape,
                         std::span<const nn::Var> params, const TupleBatch& batch) {
  if (batch.size() == 0) throw ConfigError("psd loss: empty batch");
  nn::Var z_t = encode(tape, shape, params, batch.s_t, batch.L, batch.z);
  nn::Var z_t1 = encode(tape, shape, params, batch.s_t1, batch.L, batch.z);
  nn::Var z_tL = encode(tape, shape, params, batch.s_tL, batch.L, batch.z);
  return psd_loss_from_latents(tape, z_t, z_t1, z_tL, batch.L, shape.cfg);
}

double psd_encoder_loss(const EncoderShape& shape, const nn::ParamSet& params,
                        const TupleBatch& batch) {
  nn::Tape tape;
  auto vars = nn::bind_constants(tape, params);
  return psd_encoder_loss(tape, shape, vars, batch).scalar();
}

EncoderStepMetrics train_encoder_step(const EncoderShape& shape, nn::ParamSet& params,
                                      nn::AdamState& adam, const TupleBatch& batch) {
  nn::Tape tape;
  auto vars = nn::bind_params(tape, params);
  nn::Var z_t = encode(tape, shape, vars, batch.s_t, batch.L, batch.z);
  nn::Var z_t1 = encode(tape, shape, vars, batch.s_t1, batch.L, batch.z);
  nn::Var z_tL = encode(tape, shape, vars, batch.s_tL, batch.L, batch.z);
  nn::Var loss = psd_loss_from_latents(tape, z_t, z_t1, z_tL, batch.L, shape.cfg);

  EncoderStepMetrics m;
  m.loss = loss.scalar();
  m.mean_1step_dist = (z_t1.value() - z_t.value()).rowwise().norm().mean();
  m.mean_Lstep_dist = (z_tL.value() - z_t.value()).rowwise().norm().mean();
  m.mean_antipodal_sum = (z_tL.value() + z_t.value()).rowwise().norm().mean();

  tape.backward(loss);
  nn::adam_step(adam, params, nn::collect_grads(tape, vars));
  return m;
}

std::optional<EncoderStepMetrics> train_encoder_step(const EncoderShape& shape,
                                                     nn::ParamSet& params, nn::AdamState& adam,
                                                     const EpisodeBuffer& buffer,
                                                     std::mt19937_64& rng) {
  if (buffer.count_tuple_starts() < static_cast<std::size_t>(shape.cfg.batch)) return std::nullopt;
  const TupleBatch batch = buffer.sample_tuple_batch(shape.cfg.batch, rng);
  return train_encoder_step(shape, params, adam, batch);
}

}  // namespace psd::encoder
