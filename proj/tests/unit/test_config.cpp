#include "doctest.h"
#include "gen.hpp"

#include "psd/config.hpp"
#include "psd/errors.hpp"

#include <string>

using namespace psd;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults round-trip for every env") {
  for (auto n : {envs::EnvName::ring_world, envs::EnvName::swing_mass, envs::EnvName::tempo_track,
                 envs::EnvName::ring_plane}) {
    const RunConfig c = default_config(n);
    const RunConfig back = parse_config(dump_config(c));
    CHECK(back == c);
    CHECK(dump_config(back) == dump_config(c));
  }
}

TEST_CASE("defaults mirror the hyperparameter tables") {
  const RunConfig c = default_config();
  CHECK(c.encoder.k == 0.5);
  CHECK(c.encoder.eps == 1e-5);
  CHECK(c.encoder.d == 3);
  CHECK(c.encoder.D == 8);
  CHECK(c.encoder.batch == 1024);
  CHECK(c.agent.gamma == 0.99);
  CHECK(c.agent.tau == 0.995);
  CHECK(c.agent.episodes_per_epoch == 8);
  CHECK(c.agent.grad_steps_per_epoch == 64);
  CHECK(c.agent.buffer_capacity == 500000);
  CHECK(c.bounds.alpha == 0.9);
  CHECK(c.bounds.beta == 0.4);
  CHECK(c.bounds.floor == 5);
  CHECK(c.bounds.eval_episodes == 5);
  CHECK(c.bounds.interval_episodes == 1000);
}

TEST_CASE("minimal config fills in defaults") {
  const RunConfig c = parse_config(R"({"env": {"name": "ring_world"}, "seed": 3, "epochs": 7})");
  CHECK(c.seed == 3);
  CHECK(c.epochs == 7);
  CHECK(c.env.obs_dim == 7);
  CHECK_FALSE(c.metra.has_value());
}

TEST_CASE("required fields are named") {
  CHECK(error_of(R"({"env": {"name": "ring_world"}, "epochs": 7})").find("seed") != std::string::npos);
  CHECK(error_of(R"({"env": {"name": "ring_world"}, "seed": 1})").find("epochs") != std::string::npos);
  CHECK(error_of(R"({"seed": 1, "epochs": 1})").find("env") != std::string::npos);
}

TEST_CASE("unknown keys and wrong types are rejected with a path") {
  CHECK(error_of(R"({"env": {"name": "ring_world"}, "seed": 1, "epochs": 1, "bogus": 2})")
            .find("bogus") != std::string::npos);
  CHECK(error_of(R"({"env": {"name": "ring_world"}, "seed": 1, "epochs": 1, "encoder": {"kk": 1}})")
            .find("encoder.kk") != std::string::npos);
  CHECK(error_of(R"({"env": {"name": "ring_world"}, "seed": 1, "epochs": "x"})").find("epochs") !=
        std::string::npos);
  CHECK_FALSE(error_of("{not json").empty());
}

TEST_CASE("invariants are validated on load") {
  CHECK_FALSE(error_of(R"({"env": {"name": "ring_world"}, "seed": 1, "epochs": 1,
                           "bounds": {"L_min": 3, "L_max": 10}})")
                  .empty());
  CHECK_FALSE(error_of(R"({"env": {"name": "ring_world"}, "seed": 1, "epochs": 1,
                           "agent": {"gamma": 1.5}})")
                  .empty());
  CHECK_FALSE(error_of(R"({"env": {"name": "hopper"}, "seed": 1, "epochs": 1})").empty());
}

TEST_CASE("property: randomly perturbed configs are fixed points of dump/parse") {
  for (int c = 0; c < 30; ++c) {
    auto g = gen::rng(c, 71);
    RunConfig cfg = default_config(static_cast<envs::EnvName>(gen::integer(g, 0, 3)));
    cfg.seed = g();
    cfg.epochs = gen::integer(g, 1, 5000);
    cfg.workers = gen::integer(g, 1, 8);
    cfg.encoder.k = gen::uniform(g, 0.0, 2.0);
    cfg.encoder.lr = gen::uniform(g, 1e-6, 1e-2);
    cfg.agent.lr = gen::uniform(g, 1e-6, 1e-2);
    cfg.agent.tau = gen::uniform(g, 0.5, 1.0);
    cfg.bounds.L_min = gen::integer(g, 5, 10);
    cfg.bounds.L_max = cfg.bounds.L_min + gen::integer(g, 0, 20);
    cfg.reward.use_ext = g() % 2;
    cfg.hann_window = g() % 2;
    if (g() % 2) cfg.metra = metra::MetraConfig{};
    if (g() % 2) cfg.high_level = hierarchy::HighLevelConfig{};
    const RunConfig back = parse_config(dump_config(cfg));
    CHECK(back == cfg);
  }
}
