#include "doctest.h"
#include "gen.hpp"

#include "psd/errors.hpp"
#include "psd/reward.hpp"
#include "psd/sampling.hpp"

#include <cmath>

using namespace psd;
using namespace psd::sampling;

namespace {

SamplingBounds bounds(int lo, int hi, bool once_min = false, bool once_max = false) {
  SamplingBounds b;
  b.L_min = lo;
  b.L_max = hi;
  b.updated_once_min = once_min;
  b.updated_once_max = once_max;
  return b;
}

}  // namespace

TEST_CASE("discrete periods cover both ends") {
  CHECK(discrete_periods(bounds(5, 20)) == std::vector<int>{5, 10, 15, 20});
  CHECK(discrete_periods(bounds(10, 10)) == std::vector<int>{10});
  CHECK(discrete_periods(bounds(5, 7)) == std::vector<int>{5, 6, 7});
}

TEST_CASE("mean episode return") {
  CHECK(mean_episode_return({Vector::Ones(200)}) == 200.0);
  const Vector r = Vector::Constant(200, std::exp(-1.0));
  CHECK(mean_episode_return({r, r}) == doctest::Approx(200.0 * std::exp(-1.0)));
  CHECK(reward::r_psd(std::sqrt(0.1), 10.0) * 200 == doctest::Approx(73.5759).epsilon(1e-5));
}

TEST_CASE("expansion of L_max above alpha T") {
  const auto r = update_bounds(bounds(5, 10), 100.0, 185.0, 200);
  CHECK(r.bounds.L_max == 11);
  CHECK(r.bounds.updated_once_max);
  CHECK(r.max_change == BoundChange::expanded);
}

TEST_CASE("shrink is gated on a prior expansion") {
  auto r = update_bounds(bounds(5, 10), 100.0, 70.0, 200);
  CHECK(r.bounds.L_max == 10);
  CHECK(r.max_change == BoundChange::none);
  r = update_bounds(bounds(5, 10, false, true), 100.0, 70.0, 200);
  CHECK(r.bounds.L_max == 9);
  CHECK(r.max_change == BoundChange::shrunk);
}

TEST_CASE("L_min expansion is clamped at the floor") {
  auto r = update_bounds(bounds(5, 10), 190.0, 100.0, 200);
  CHECK(r.bounds.L_min == 5);
  r = update_bounds(bounds(8, 10), 190.0, 100.0, 200);
  CHECK(r.bounds.L_min == 7);
  CHECK(r.bounds.updated_once_min);
  r = update_bounds(bounds(8, 12, true, false), 10.0, 100.0, 200);
  CHECK(r.bounds.L_min == 9);
  CHECK(r.min_change == BoundChange::shrunk);
}

TEST_CASE("in-between returns leave the bounds alone") {
  const auto r = update_bounds(bounds(6, 10, true, true), 120.0, 150.0, 200);
  CHECK(r.bounds.L_min == 6);
  CHECK(r.bounds.L_max == 10);
}

TEST_CASE("crossing updates are discarded") {
  const auto r = update_bounds(bounds(10, 10, true, true), 10.0, 10.0, 200);
  CHECK(r.bounds.L_min <= r.bounds.L_max);
  CHECK((r.min_change == BoundChange::discarded || r.max_change == BoundChange::discarded));
}

TEST_CASE("property: bounds move by at most N and keep their invariants") {
  for (int c = 0; c < 500; ++c) {
    auto g = gen::rng(c, 21);
    SamplingBounds b = bounds(5, 5);
    b.N = gen::integer(g, 1, 3);
    bool expanded_max = false, expanded_min = false;
    for (int step = 0; step < 40; ++step) {
      const double rmin = gen::uniform(g, 0.0, 200.0);
      const double rmax = gen::uniform(g, 0.0, 200.0);
      const auto r = update_bounds(b, rmin, rmax, 200);
      REQUIRE(std::abs(r.bounds.L_min - b.L_min) <= b.N);
      REQUIRE(std::abs(r.bounds.L_max - b.L_max) <= b.N);
      REQUIRE(r.bounds.L_min >= b.floor);
      REQUIRE(r.bounds.L_min <= r.bounds.L_max);
      if (r.max_change == BoundChange::shrunk) REQUIRE(expanded_max);
      if (r.min_change == BoundChange::shrunk) REQUIRE(expanded_min);
      // The gate opens once R > alpha T, even when the floor clamps the move.
      expanded_max |= rmax > b.alpha * 200;
      expanded_min |= rmin > b.alpha * 200;
      b = r.bounds;
    }
  }
}

TEST_CASE("scripted success up to L* drives L_max to L* + N") {
  const int L_star = 17;
  SamplingBounds b = bounds(5, 5);
  for (int step = 0; step < 40; ++step) {
    const double rmax = b.L_max <= L_star ? 195.0 : 100.0;
    const auto r = update_bounds(b, 195.0, rmax, 200);
    CHECK(r.bounds.L_max >= b.L_max);
    b = r.bounds;
  }
  CHECK(b.L_max == L_star + b.N);
}

TEST_CASE("evaluate_bound is a mean return in (0, T]") {
  EvalContext ctx;
  ctx.env = envs::EnvSpec::make(envs::EnvName::ring_world, 50);
  ctx.policy_shape.obs_dim = ctx.env.obs_dim;
  ctx.policy_shape.hidden_units = 8;
  ctx.encoder_shape.obs_dim = ctx.env.obs_dim;
  ctx.encoder_shape.cfg.hidden_units = 8;
  std::mt19937_64 rng(0);
  const auto agent = sac::SacAgent::create(ctx.policy_shape, sac::SacConfig{}, rng);
  const auto phi = encoder::init_encoder(ctx.encoder_shape, rng);
  const double R = evaluate_bound(ctx, agent.policy, phi, 10, 3);
  CHECK(R > 0.0);
  CHECK(R <= 50.0);
  CHECK(evaluate_bound(ctx, agent.policy, phi, 10, 3) == R);
}

TEST_CASE("bounds validation") {
  SamplingBounds b = bounds(4, 10);
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = bounds(6, 5);
  CHECK_THROWS_AS(b.validate(), ConfigError);
  b = bounds(5, 10);
  b.beta = 0.95;
  CHECK_THROWS_AS(b.validate(), ConfigError);
}
