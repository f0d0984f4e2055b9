#include "doctest.h"
#include "gen.hpp"

#include "psd/errors.hpp"
#include "psd/reward.hpp"

#include <cmath>

using namespace psd;
using namespace psd::reward;

TEST_CASE("delta from a one-step distance") {
  CHECK(delta_from_distance(encoder::optimal_chord(7), 7) == 0.0);
  CHECK(delta_from_distance(0.0, 10) == doctest::Approx(-encoder::optimal_chord(10)));
  CHECK(delta_from_distance(1.6643, 10) == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("delta through an encoder equals the distance form") {
  encoder::EncoderShape shape;
  shape.obs_dim = 3;
  shape.cfg.hidden_units = 8;
  std::mt19937_64 rng(2);
  const nn::ParamSet phi = encoder::init_encoder(shape, rng);
  const Vector s = gen::vector(rng, 3), s1 = gen::vector(rng, 3);
  const double dist = (encoder::encode(shape, phi, s1, 6) - encoder::encode(shape, phi, s, 6)).norm();
  CHECK(delta(shape, phi, s, s1, 6) == doctest::Approx(delta_from_distance(dist, 6)).epsilon(1e-14));
  CHECK(delta(shape, phi, s, s, 6) == doctest::Approx(-encoder::optimal_chord(6)).epsilon(1e-14));
}

TEST_CASE("r_psd examples") {
  CHECK(r_psd(0.0, 10.0) == 1.0);
  CHECK(r_psd(std::sqrt(0.1), 10.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("property: r_psd is even and in (0, 1]") {
  for (int c = 0; c < 200; ++c) {
    auto g = gen::rng(c);
    const double d = gen::uniform(g, -3.0, 3.0);
    const double k = gen::uniform(g, 0.1, 50.0);
    CHECK(r_psd(d, k) == r_psd(-d, k));
    CHECK(r_psd(d, k) <= 1.0);
    CHECK(r_psd(d, k) >= 0.0);
  }
}

TEST_CASE("r_ext examples") {
  CHECK(r_ext(0.6, 0.5) == 1.0);
  CHECK(r_ext(0.25, 0.5) == 0.5);
  CHECK(r_ext(-0.1, 0.5) == doctest::Approx(-0.2).epsilon(1e-15));
}

TEST_CASE("combine examples") {
  RewardConfig cfg;
  CHECK(combine(0.9, 1.0, std::nullopt, cfg) == doctest::Approx(0.9));
  cfg.use_ext = true;
  CHECK(combine(0.9, 1.0, std::nullopt, cfg) == doctest::Approx(1.9));
  cfg.use_ext = false;
  CHECK(combine(0.5, 0.0, 0.7, cfg) == doctest::Approx(1.2));
  cfg.alpha_psd = 0.0;
  CHECK(combine(0.5, 0.0, 0.7, cfg) == doctest::Approx(0.7));
}

TEST_CASE("batched rewards equal per-transition rewards") {
  encoder::EncoderShape shape;
  shape.obs_dim = 4;
  shape.cfg.hidden_units = 8;
  std::mt19937_64 rng(9);
  const nn::ParamSet phi = encoder::init_encoder(shape, rng);
  const Matrix s = gen::matrix(rng, 10, 4), s1 = gen::matrix(rng, 10, 4);
  std::vector<int> L;
  for (int i = 0; i < 10; ++i) L.push_back(5 + i);
  const Vector r = r_psd_batch(shape, phi, s, s1, L, Matrix(10, 0), 10.0);
  for (int i = 0; i < 10; ++i) {
    const double d = delta(shape, phi, s.row(i).transpose(), s1.row(i).transpose(), L[i]);
    CHECK(r(i) == doctest::Approx(r_psd(d, 10.0)).epsilon(1e-13));
  }
}

TEST_CASE("reward config validation") {
  RewardConfig cfg;
  cfg.kappa = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
