#include "doctest.h"
#include "gen.hpp"

#include "psd/errors.hpp"
#include "psd/metra.hpp"

#include <cmath>

using namespace psd;
using namespace psd::metra;

namespace {

// phi_m(s) = s on a 2-D observation, so displacements are s' - s.
MetraShape identity_shape(nn::ParamSet& p) {
  MetraShape shape;
  shape.cfg.skill_dim = 2;
  shape.cfg.hidden_layers = 0;
  shape.cfg.mutual_conditioning = false;
  shape.obs_dim = 2;
  p = nn::ParamSet();
  p.add("phim.l0.w", {2, 2}, Matrix::Identity(2, 2));
  p.add("phim.l0.b", {2}, Matrix::Zero(1, 2));
  return shape;
}

}  // namespace

TEST_CASE("continuous skills have unit norm") {
  MetraConfig cfg;
  std::mt19937_64 rng(0);
  for (int i = 0; i < 100; ++i) {
    const SkillVector z = sample_skill(cfg, rng);
    CHECK(z.dim() == 2);
    CHECK(z.z.norm() == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("discrete skills are zero-centred one-hots") {
  MetraConfig cfg;
  cfg.kind = SkillKind::discrete;
  cfg.skill_dim = 4;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Vector z = sample_skill(cfg, rng).z;
    CHECK(std::abs(z.sum()) < 1e-15);
    int hot = 0;
    for (int j = 0; j < 4; ++j) {
      if (z(j) == 0.75) ++hot;
      else CHECK(z(j) == -0.25);
    }
    CHECK(hot == 1);
  }
}

TEST_CASE("continuous skill mean is near zero") {
  MetraConfig cfg;
  cfg.skill_dim = 3;
  std::mt19937_64 rng(2);
  Vector sum = Vector::Zero(3);
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample_skill(cfg, rng).z;
  // Each coordinate of a uniform unit vector in 3-D has variance 1/3.
  const double sigma = std::sqrt(1.0 / 3.0 / n);
  CHECK((sum / n).cwiseAbs().maxCoeff() < 3.0 * sigma);
}

TEST_CASE("r_metra is the displacement dotted with z") {
  nn::ParamSet p;
  const MetraShape shape = identity_shape(p);
  Vector s = Vector::Zero(2), s1(2), z(2);
  s1 << 0.6, 0.8;
  z << 0.6, 0.8;
  CHECK(r_metra(shape, p, s, s1, z, 10) == doctest::Approx(1.0).epsilon(1e-15));
  z << -0.8, 0.6;
  CHECK(std::abs(r_metra(shape, p, s, s1, z, 10)) < 1e-15);
  CHECK(r_metra(shape, p, s1, s1, z, 10) == 0.0);
}

TEST_CASE("lambda gradient signs") {
  CHECK(lambda_gradient(Vector::Ones(5), 1e-3) == 0.0);
  CHECK(lambda_gradient(Vector::Constant(3, 4.0), 1e-3) == doctest::Approx(3.0));
  CHECK(lambda_gradient(Vector::Constant(3, 0.01), 1e-3) == doctest::Approx(-1e-3));
}

TEST_CASE("metra_update projects lambda_m to be non-negative") {
  MetraShape shape;
  shape.cfg.hidden_units = 8;
  shape.cfg.lambda_lr = 100.0;
  shape.obs_dim = 3;
  std::mt19937_64 rng(3);
  nn::ParamSet p = init_phi_m(shape, rng);
  nn::AdamState adam = nn::AdamState::for_params(p, 1e-3);
  SacBatch b;
  b.s = gen::matrix(rng, 16, 3, 0.01);
  b.s_next = b.s;
  b.z = gen::matrix(rng, 16, 2);
  b.a = Matrix::Zero(16, 1);
  b.v_x = Vector::Zero(16);
  b.done = Vector::Zero(16);
  b.L.assign(16, 10);
  double lambda = 0.05;
  for (int i = 0; i < 5; ++i) {
    metra_update(shape, p, adam, lambda, b);
    CHECK(lambda >= 0.0);
  }
  CHECK(lambda == 0.0);
}

TEST_CASE("metra loss gradient matches finite differences") {
  MetraShape shape;
  shape.cfg.hidden_units = 8;
  shape.obs_dim = 3;
  std::mt19937_64 rng(4);
  nn::ParamSet p = init_phi_m(shape, rng);
  for (auto& e : p) e.value *= 3.0;
  const Matrix s = gen::matrix(rng, 10, 3), s1 = gen::matrix(rng, 10, 3), z = gen::matrix(rng, 10, 2);
  const std::vector<int> L(10, 7);
  nn::LossFn loss = [&](nn::Tape& t, std::span<const nn::Var> v) {
    nn::Var a = nn::mlp_forward(shape.mlp(), v, t.constant(phi_m_input(shape, s, L)));
    nn::Var b = nn::mlp_forward(shape.mlp(), v, t.constant(phi_m_input(shape, s1, L)));
    return metra_loss(t, b - a, z, 30.0, 1e-3);
  };
  CHECK(nn::max_relative_error(nn::grad(loss, p), nn::finite_difference_grad(loss, p, 1e-6)) < 1e-4);
}

TEST_CASE("mutual conditioning controls whether phi_m sees L") {
  MetraShape shape;
  shape.obs_dim = 5;
  CHECK(shape.mlp().input_dim == 5 + 8);
  shape.cfg.mutual_conditioning = false;
  CHECK(shape.mlp().input_dim == 5);
}

TEST_CASE("metra config validation") {
  MetraConfig cfg;
  cfg.eps_m = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MetraConfig{};
  cfg.kind = SkillKind::discrete;
  cfg.skill_dim = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
