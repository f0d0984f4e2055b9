#include "doctest.h"
#include "gen.hpp"

#include "psd/encoder.hpp"
#include "psd/errors.hpp"

#include <cmath>
#include <numbers>

using namespace psd;
using namespace psd::encoder;

namespace {

// Vertex i of the regular 2L-gon of diameter L in the first two latent axes.
Vector vertex(int i, int L, int d) {
  const double a = std::numbers::pi * i / L;
  Vector v = Vector::Zero(d);
  v(0) = 0.5 * L * std::cos(a);
  v(1) = 0.5 * L * std::sin(a);
  return v;
}

struct Triples {
  Matrix t, t1, tL;
  std::vector<int> L;
};

Triples polygon_triples(int L, int d, double scale = 1.0) {
  Triples r;
  const int n = 2 * L;
  r.t.resize(n, d);
  r.t1.resize(n, d);
  r.tL.resize(n, d);
  for (int i = 0; i < n; ++i) {
    r.t.row(i) = scale * vertex(i, L, d).transpose();
    r.t1.row(i) = scale * vertex(i + 1, L, d).transpose();
    r.tL.row(i) = scale * vertex(i + L, L, d).transpose();
    r.L.push_back(L);
  }
  return r;
}

}  // namespace

TEST_CASE("embed_period examples") {
  const Vector e0 = embed_period(0, 4);
  CHECK(e0(0) == 0.0);
  CHECK(e0(1) == 1.0);
  CHECK(e0(2) == 0.0);
  CHECK(e0(3) == 1.0);
  const Vector e1 = embed_period(1, 4);
  CHECK(e1(0) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(e1(1) == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  CHECK(e1(2) == doctest::Approx(std::sin(0.01)).epsilon(1e-13));
  CHECK(e1(3) == doctest::Approx(std::cos(0.01)).epsilon(1e-13));
  CHECK_THROWS_AS(embed_period(3, 5), ConfigError);
}

TEST_CASE("property: embeddings stay in [-1, 1]") {
  for (int c = 0; c < 50; ++c) {
    auto g = gen::rng(c);
    const Vector e = embed_period(gen::integer(g, 0, 100000), 2 * gen::integer(g, 1, 8));
    CHECK(e.cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("optimal_chord examples") {
  CHECK(optimal_chord(1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(optimal_chord(10) == doctest::Approx(1.5643446504).epsilon(1e-10));
  CHECK(optimal_chord(20) == doctest::Approx(1.5691819145).epsilon(1e-10));
}

TEST_CASE("encode is pure and depends on L") {
  EncoderShape shape;
  shape.cfg.hidden_units = 32;
  shape.obs_dim = 7;
  std::mt19937_64 rng(0);
  const nn::ParamSet p = init_encoder(shape, rng);
  const Vector s = gen::vector(rng, 7);
  CHECK(encode(shape, p, s, 5) == encode(shape, p, s, 5));
  CHECK(encode(shape, p, s, 5) != encode(shape, p, s, 10));
}

TEST_CASE("zero final layer gives the bias regardless of the state") {
  EncoderShape shape;
  shape.cfg.hidden_units = 16;
  shape.obs_dim = 3;
  std::mt19937_64 rng(1);
  nn::ParamSet p = init_encoder(shape, rng);
  p.at("l2.w").setZero();
  p.at("l2.b") << 0.5, -1.0, 2.0;
  const Vector a = encode(shape, p, gen::vector(rng, 3), 7);
  const Vector b = encode(shape, p, gen::vector(rng, 3), 7);
  CHECK(a == b);
  CHECK(a(2) == 2.0);
}

TEST_CASE("config rejects d = 2 unless planar is allowed") {
  PsdEncoderConfig cfg;
  cfg.d = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.allow_planar = true;
  CHECK_NOTHROW(cfg.validate());
  cfg.D = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("exact polygon: loss is -L with both slacks at zero") {
  PsdEncoderConfig cfg;
  for (int L : {2, 5, 10, 20}) {
    const Triples tr = polygon_triples(L, 3);
    CAPTURE(L);
    CHECK(psd_loss_from_latents(tr.t, tr.t1, tr.tL, tr.L, cfg) ==
          doctest::Approx(-static_cast<double>(L)).epsilon(1e-12));
  }
}

TEST_CASE("shrunk polygon: both constraint terms saturate at eps") {
  PsdEncoderConfig cfg;
  const int L = 10;
  const Triples tr = polygon_triples(L, 3, 0.99);
  const double expected = -(0.99 * L + (cfg.lambda1 + cfg.lambda2) * cfg.eps);
  CHECK(psd_loss_from_latents(tr.t, tr.t1, tr.tL, tr.L, cfg) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("k-term: coincident endpoints at c add k |2c| to the loss") {
  PsdEncoderConfig cfg;
  cfg.lambda1 = cfg.lambda2 = 0.0;
  Matrix c(1, 3);
  c << 0.3, -0.4, 1.2;
  const std::vector<int> L{10};
  const double loss = psd_loss_from_latents(c, c, c, L, cfg);
  CHECK(loss == doctest::Approx(cfg.k * 2.0 * c.norm()).epsilon(1e-11));
}

TEST_CASE("lambda1 term saturates at eps for a large slack") {
  PsdEncoderConfig cfg;
  cfg.k = 0.0;
  cfg.lambda2 = 0.0;
  Matrix zt(1, 3), ztL(1, 3);
  zt.setZero();
  ztL << 0.0, 0.0, 0.0;  // L-step slack = L = 10
  const std::vector<int> L{10};
  CHECK(psd_loss_from_latents(zt, zt, ztL, L, cfg) == doctest::Approx(-cfg.lambda1 * cfg.eps));
}

TEST_CASE("violated constraints are penalised linearly") {
  PsdEncoderConfig cfg;
  cfg.k = 0.0;
  const int L = 4;
  Matrix zt = Matrix::Zero(1, 3), ztL = Matrix::Zero(1, 3), zt1 = Matrix::Zero(1, 3);
  ztL(0, 0) = 6.0;  // 2 over the diameter
  const std::vector<int> Ls{L};
  const double chord_slack = optimal_chord(L);
  const double expected = -(6.0 + cfg.lambda1 * -2.0 + cfg.lambda2 * std::min(cfg.eps, chord_slack));
  CHECK(psd_loss_from_latents(zt, zt1, ztL, Ls, cfg) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("tape and plain loss agree, and the encoder gradient matches finite differences") {
  EncoderShape shape;
  shape.cfg.hidden_units = 8;
  shape.obs_dim = 4;
  for (int c = 0; c < 4; ++c) {
    auto g = gen::rng(c, 3);
    nn::ParamSet p = init_encoder(shape, g);
    if (c % 2) {
      for (auto& e : p) e.value *= 4.0;  // push latents past the constraints
    }
    TupleBatch b;
    const int n = 12;
    b.s_t = gen::matrix(g, n, 4);
    b.s_t1 = gen::matrix(g, n, 4);
    b.s_tL = gen::matrix(g, n, 4);
    b.z = Matrix(n, 0);
    for (int i = 0; i < n; ++i) b.L.push_back(gen::integer(g, 2, 20));
    nn::LossFn loss = [&](nn::Tape& t, std::span<const nn::Var> v) {
      return psd_encoder_loss(t, shape, v, b);
    };
    const auto vg = nn::value_and_grad(loss, p);
    CHECK(vg.value == doctest::Approx(psd_encoder_loss(shape, p, b)).epsilon(1e-12));
    CHECK(nn::max_relative_error(vg.grads, nn::finite_difference_grad(loss, p, 1e-6)) < 1e-4);
  }
}

TEST_CASE("empty batch is a configuration error") {
  EncoderShape shape;
  shape.obs_dim = 2;
  shape.cfg.hidden_units = 4;
  std::mt19937_64 rng(0);
  const nn::ParamSet p = init_encoder(shape, rng);
  TupleBatch b;
  b.s_t = b.s_t1 = b.s_tL = Matrix(0, 2);
  CHECK_THROWS_AS(psd_encoder_loss(shape, p, b), ConfigError);
}

TEST_CASE("train_encoder_step skips when the buffer is too small") {
  EncoderShape shape;
  shape.obs_dim = 2;
  shape.cfg.hidden_units = 4;
  shape.cfg.batch = 64;
  std::mt19937_64 rng(0);
  nn::ParamSet p = init_encoder(shape, rng);
  const nn::ParamSet before = p;
  nn::AdamState adam = nn::AdamState::for_params(p, 1e-3);
  EpisodeBuffer buf;
  Episode e;
  e.L = 10;
  e.s = Matrix::Zero(20, 2);
  e.s_next = Matrix::Zero(20, 2);
  e.a = Matrix::Zero(20, 1);
  e.v_x = Vector::Zero(20);
  e.done.assign(20, 0);
  buf.push_episode(e);
  CHECK_FALSE(train_encoder_step(shape, p, adam, buf, rng).has_value());
  CHECK(p == before);
}
