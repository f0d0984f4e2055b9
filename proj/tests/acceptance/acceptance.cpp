// Acceptance checks, one per numbered criterion. Each prints a single
// "criterion N: PASS|FAIL ..." line and exits non-zero on failure.
//
// Criteria 3, 4, 6 and 8 share one end-to-end training run that is cached
// under --cache and resumed from its checkpoint when interrupted.

#include "CLI11.hpp"
#include "psd/analysis.hpp"
#include "psd/checkpoint.hpp"
#include "psd/config.hpp"
#include "psd/hierarchy.hpp"
#include "psd/run.hpp"
#include "psd/sampling.hpp"
#include "psd/trainer.hpp"
#include "psd/verify.hpp"

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace psd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  fs::path cache = "acceptance_cache";
  int e2e_epochs = 1500;
  int adaptive_epochs = 800;
  int metra_epochs = 600;
  bool verbose = false;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

run::RunOptions progress(bool verbose, const char* tag) {
  run::RunOptions o;
  o.dump_artifacts = true;
  o.run_downstream = false;
  if (verbose) {
    o.on_epoch = [tag](const train::EpochMetrics& m) {
      if (m.epoch % 50 == 0) {
        std::fprintf(stderr, "[%s] epoch %d R_psd %.1f L [%d, %d]\n", tag, m.epoch, m.mean_return_psd,
                     m.L_min, m.L_max);
      }
    };
  }
  return o;
}

/// Trains `cfg` into `dir`, or reuses/continues a cached run with the same config.
train::TrainerState cached_run(RunConfig cfg, const fs::path& dir, bool verbose, const char* tag) {
  cfg.out_dir = dir.string();
  const fs::path ck = dir / "checkpoint.bin";
  if (fs::exists(ck)) {
    try {
      train::TrainerState st = ckpt::load(ck);
      RunConfig want = cfg;
      want.epochs = st.cfg.epochs;
      want.out_dir = st.cfg.out_dir;  // same cache reached through a different path
      if (st.cfg == want && st.epoch <= cfg.epochs) {
        if (st.epoch == cfg.epochs && fs::exists(dir / "spectrum.csv")) return st;
        st.cfg.epochs = cfg.epochs;
        return run::continue_training(std::move(st), progress(verbose, tag)).state;
      }
    } catch (const std::exception& e) {
      std::fprintf(stderr, "[%s] ignoring cached checkpoint: %s\n", tag, e.what());
    }
  }
  fs::remove_all(dir);
  return run::train(cfg, progress(verbose, tag)).state;
}

// ---- shared end-to-end run ------------------------------------------------

RunConfig e2e_config(int epochs) {
  RunConfig c = default_config(envs::EnvName::ring_world);
  c.seed = 0;
  c.epochs = epochs;
  c.bounds.L_min = 5;
  c.bounds.L_max = 20;
  c.bounds.adaptive = false;
  c.agent.hidden_units = 64;
  c.encoder.hidden_units = 64;
  c.encoder.steps_per_epoch = 16;
  c.checkpoint_every = 50;
  return c;
}

train::TrainerState& shared_run(const Options& o) {
  static std::optional<train::TrainerState> st;
  if (!st) st = cached_run(e2e_config(o.e2e_epochs), o.cache / "e2e", o.verbose, "e2e");
  return *st;
}

std::uint64_t eval_seed(int i) { return 0xACCE97ULL + static_cast<std::uint64_t>(i); }

std::vector<int> greedy_periods(const train::TrainerState& st, int L, int episodes) {
  std::vector<int> out;
  for (int i = 0; i < episodes; ++i) {
    const SkillTrajectory tr = train::evaluate_skill(st, L, {}, eval_seed(i));
    const auto p = analysis::autocorr_period(tr.states.col(envs::kPhaseCos));
    out.push_back(p ? *p : -1);
  }
  return out;
}

// ---- criteria -------------------------------------------------------------

Outcome c1(const Options&) {
  const auto t0 = Clock::now();
  const verify::Report r = verify::theorem(2, 4, {2, 3});
  const double secs = seconds_since(t0);
  std::string detail;
  for (const auto& c : r.checks) {
    if (c.name.rfind("objective ", 0) == 0) detail += c.name.substr(10) + ":" + c.detail + " ";
  }
  const auto fails = r.failures();
  for (const auto& f : fails) detail += "FAILED:" + f + " ";
  detail += "time=" + fmt("%.1fs", secs);
  return {r.pass() && secs < 120.0, detail};
}

Outcome c2(const Options&) {
  const auto t0 = Clock::now();
  const envs::EnvSpec env = envs::EnvSpec::make(envs::EnvName::ring_world);
  const std::vector<int> periods{5, 10, 20};
  EpisodeBuffer buffer(500000);
  std::int64_t id = 0;
  for (int L : periods) {
    for (int e = 0; e < 10; ++e, ++id) {
      envs::EnvState s = envs::reset(env, 1000 + static_cast<std::uint64_t>(id));
      std::vector<Transition> tr;
      for (int t = 0; t < env.episode_length; ++t) {
        const Vector a = envs::scripted_periodic_policy(env, s, L);
        const envs::StepResult r = envs::step(env, s, a);
        tr.push_back({id, t, L, s.observation, a, r.state.observation, r.info.v_x, false, {}});
        s = r.state;
      }
      buffer.push_episode(tr);
    }
  }
  encoder::EncoderShape shape;
  shape.obs_dim = env.obs_dim;
  shape.cfg.hidden_units = 64;
  std::mt19937_64 rng(0);
  nn::ParamSet phi = encoder::init_encoder(shape, rng);
  nn::AdamState adam = nn::AdamState::for_params(phi, shape.cfg.lr);
  const int steps = 3000;
  for (int i = 0; i < steps; ++i) encoder::train_encoder_step(shape, phi, adam, buffer, rng);

  bool pass = true;
  std::string detail;
  for (int L : periods) {
    const auto g = analysis::geometry_report(shape, phi, buffer, L, 1000, rng);
    pass = pass && g.rel_err_onestep < 5.0 && g.rel_err_Lstep < 5.0;
    detail += "L=" + std::to_string(L) + " err1=" + fmt("%.2f%%", g.rel_err_onestep) +
              " errL=" + fmt("%.2f%%", g.rel_err_Lstep) + " ";
  }
  const double secs = seconds_since(t0);
  detail += "time=" + fmt("%.0fs", secs);
  return {pass && secs < 600.0, detail};
}

Outcome c3(const Options& o) {
  const auto& st = shared_run(o);
  bool pass = true;
  std::string detail = "epochs=" + std::to_string(st.epoch) + " ";
  for (int L : {5, 10, 15, 20}) {
    const auto p = greedy_periods(st, L, 5);
    for (int v : p) pass = pass && std::abs(v - 2 * L) <= 1;
    detail += "L=" + std::to_string(L) + ":[" + join(p) + "] ";
  }
  return {pass, detail + "(want 2L+-1, -1 = aperiodic)"};
}

Outcome c4(const Options& o) {
  const auto& st = shared_run(o);
  const std::vector<int> periods{5, 10, 15, 20};
  std::vector<SkillTrajectory> trajs;
  for (int L : periods) trajs.push_back(train::evaluate_skill(st, L, {}, eval_seed(0)));
  const auto stats = analysis::random_rollout_stats(st.cfg.env, 10, eval_seed(100));
  const auto proj = analysis::normalize_and_project(trajs, stats);
  bool pass = true;
  double fmin = 1e9, fmax = 0.0;
  std::string detail;
  for (std::size_t i = 0; i < periods.size(); ++i) {
    const Vector& x = proj.series[i];
    const auto s = analysis::spectrum(x, 4, st.cfg.hann_window);
    const double f = s.top_k.empty() ? 0.0 : s.top_k[0].first;
    const double bin = 1.0 / static_cast<double>(x.size());
    const double want = 1.0 / (2.0 * periods[i]);
    pass = pass && std::abs(f - want) <= bin + 1e-12;
    fmin = std::min(fmin, f);
    fmax = std::max(fmax, f);
    detail += "L=" + std::to_string(periods[i]) + " f=" + fmt("%.4f", f) + " (want " + fmt("%.4f", want) + ") ";
  }
  const double ratio = fmin > 0.0 ? fmax / fmin : 0.0;
  pass = pass && ratio >= 3.0;
  return {pass, detail + "ratio=" + fmt("%.2f", ratio)};
}

Outcome c5(const Options& o) {
  // Rule, gating and clamp cases.
  using sampling::BoundChange;
  auto b = [](int lo, int hi, bool om, bool oM) {
    sampling::SamplingBounds s;
    s.L_min = lo;
    s.L_max = hi;
    s.updated_once_min = om;
    s.updated_once_max = oM;
    return s;
  };
  const std::vector<std::pair<std::string, bool>> unit = {
      {"expand", sampling::update_bounds(b(5, 10, 0, 0), 100, 185, 200).bounds.L_max == 11},
      {"gate", sampling::update_bounds(b(5, 10, 0, 0), 100, 70, 200).bounds.L_max == 10},
      {"shrink", sampling::update_bounds(b(5, 10, 0, 1), 100, 70, 200).bounds.L_max == 9},
      {"clamp", sampling::update_bounds(b(5, 10, 0, 0), 190, 100, 200).bounds.L_min == 5},
      {"min_expand", sampling::update_bounds(b(8, 10, 0, 0), 190, 100, 200).bounds.L_min == 7},
      {"hold", sampling::update_bounds(b(6, 10, 1, 1), 120, 150, 200).bounds.L_max == 10},
  };
  bool unit_pass = true;
  std::string detail = "unit:";
  for (const auto& [name, ok] : unit) {
    unit_pass = unit_pass && ok;
    if (!ok) detail += " FAILED:" + name;
  }
  detail += unit_pass ? "ok " : " ";

  // Integration from [10, 10].
  RunConfig cfg = e2e_config(o.adaptive_epochs);
  cfg.seed = 1;
  cfg.bounds.L_min = cfg.bounds.L_max = 10;
  cfg.bounds.adaptive = true;
  cfg.bounds.interval_episodes = 40;
  cfg.out_dir = (o.cache / "adaptive").string();
  train::TrainerState st = train::make_trainer(cfg);
  std::vector<int> history{st.bounds.L_max};
  int run = 0, best_run = 0;
  bool shrunk_first = false;
  while (st.epoch < cfg.epochs && best_run < 3) {
    const auto m = train::run_epoch(st);
    if (!m.bounds_eval) continue;
    if (m.bounds_eval->max_change == BoundChange::expanded) {
      history.push_back(m.L_max);
      best_run = std::max(best_run, ++run);
    } else {
      run = 0;
      if (m.bounds_eval->max_change == BoundChange::shrunk) {
        shrunk_first = true;
        break;
      }
    }
  }
  detail += "L_max history=[" + join(history) + "] consecutive=" + std::to_string(best_run) +
            " epochs=" + std::to_string(st.epoch) + (shrunk_first ? " shrink-before-3" : "");
  return {unit_pass && best_run >= 3 && !shrunk_first, detail};
}

Outcome c6(const Options& o) {
  const auto& st = shared_run(o);
  const auto p = greedy_periods(st, 12, 5);
  bool pass = true;
  for (int v : p) pass = pass && std::abs(v - 24) <= 2;
  return {pass, "L=12 periods=[" + join(p) + "] (want 24+-2)"};
}

Outcome c7(const Options& o) {
  RunConfig cfg = default_config(envs::EnvName::ring_plane);
  cfg.seed = 0;
  cfg.epochs = o.metra_epochs;
  cfg.bounds.L_min = 5;
  cfg.bounds.L_max = 20;
  cfg.bounds.adaptive = false;
  cfg.agent.hidden_units = 64;
  cfg.encoder.hidden_units = 64;
  cfg.encoder.steps_per_epoch = 16;
  cfg.metra->hidden_units = 64;
  cfg.checkpoint_every = 50;
  const train::TrainerState st = cached_run(cfg, o.cache / "metra", o.verbose, "metra");

  auto rollout = [&](int L, const Vector& z) { return train::evaluate_skill(st, L, z, eval_seed(0)); };
  auto top1 = [&](const SkillTrajectory& tr) {
    const auto s = analysis::spectrum(tr.states.col(envs::kPhaseCos), 1, cfg.hann_window);
    return s.top_k.empty() ? 0.0 : s.top_k[0].first;
  };
  const int T = cfg.env.episode_length;
  const double bin = 1.0 / (T + 1);
  const int px = 3 + envs::kRingDistractors;

  bool pass = true;
  std::string detail;
  for (int k = 0; k < 4; ++k) {
    const double ang = k * std::numbers::pi / 4.0;
    Vector z(2);
    z << std::cos(ang), std::sin(ang);
    const SkillTrajectory a = rollout(10, z), b = rollout(10, -z);
    const double da = (a.states.row(T).segment(px, 2) - a.states.row(0).segment(px, 2)).dot(z.transpose());
    const double db = (b.states.row(T).segment(px, 2) - b.states.row(0).segment(px, 2)).dot(z.transpose());
    const double fa = top1(a), fb = top1(b);
    const bool ok = da > 0.0 && db < 0.0 && std::abs(fa - fb) <= bin + 1e-12;
    pass = pass && ok;
    detail += "z" + std::to_string(k) + ":(d+=" + fmt("%.2f", da) + ",d-=" + fmt("%.2f", db) +
              ",df=" + fmt("%.4f", std::abs(fa - fb)) + ") ";
  }
  Vector z(2);
  z << 1.0, 0.0;
  const double f5 = top1(rollout(5, z)), f20 = top1(rollout(20, z));
  const double shift = std::abs(f5 - f20) / bin;
  pass = pass && shift >= 2.0 - 1e-9;
  detail += "f(L=5)=" + fmt("%.4f", f5) + " f(L=20)=" + fmt("%.4f", f20) + " shift=" + fmt("%.1f bins", shift);
  return {pass, detail};
}

Outcome c8(const Options& o) {
  const auto& st = shared_run(o);
  hierarchy::HighLevelConfig hl;
  const envs::EnvSpec tempo = envs::EnvSpec::make(envs::EnvName::tempo_track, hl.episode_length);
  hierarchy::TempoTrackTask task(tempo, st.agent.shape, st.agent.policy,
                                 sampling::discrete_periods(st.bounds), hl.H);
  const auto res = hierarchy::train_high_level(task, hl, 0);
  const bool pass = res.final_return > 0.0 && res.final_return >= 2.0 * res.random_return;
  return {pass, "trained=" + fmt("%.2f", res.final_return) + " random=" + fmt("%.2f", res.random_return) +
                    " over " + std::to_string(hl.eval_episodes) + " episodes"};
}

Outcome c9(const Options&) {
  const verify::Report g = verify::gradcheck();
  const verify::Report inv = verify::invariants();
  double max_err = 0.0;
  for (const auto& c : g.checks) max_err = std::max(max_err, c.value);
  std::string detail = "gradcheck max_rel_err=" + fmt("%.2e", max_err);
  for (const auto& c : inv.checks) {
    if (c.name.find("parseval") != std::string::npos || c.name.find("checkpoint") != std::string::npos ||
        c.name.find("reproducib") != std::string::npos) {
      detail += " " + c.name + "=" + (c.pass ? "ok" : "FAIL");
    }
  }
  for (const auto& f : g.failures()) detail += " FAILED:" + f;
  for (const auto& f : inv.failures()) detail += " FAILED:" + f;
  return {g.pass() && inv.pass(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 128 << 20);

  CLI::App app{"Acceptance checks"};
  std::vector<std::string> which;
  Options o;
  bool train_only = false;
  app.add_option("criteria", which, "c1..c9 or all")->default_val(std::vector<std::string>{"all"});
  app.add_option("--cache", o.cache, "Directory for cached training runs");
  app.add_option("--e2e-epochs", o.e2e_epochs);
  app.add_option("--adaptive-epochs", o.adaptive_epochs);
  app.add_option("--metra-epochs", o.metra_epochs);
  app.add_flag("--train-shared", train_only, "Only train (or resume) the shared end-to-end run");
  app.add_flag("-v,--verbose", o.verbose);
  CLI11_PARSE(app, argc, argv);

  if (train_only) {
    const auto t0 = Clock::now();
    const auto& st = shared_run(o);
    std::printf("shared run: %d epochs in %s\n", st.epoch, fmt("%.0fs", seconds_since(t0)).c_str());
    return 0;
  }

  const std::map<std::string, std::function<Outcome(const Options&)>> all = {
      {"c1", c1}, {"c2", c2}, {"c3", c3}, {"c4", c4}, {"c5", c5},
      {"c6", c6}, {"c7", c7}, {"c8", c8}, {"c9", c9}};
  if (which.size() == 1 && which[0] == "all") which = {"c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9"};

  int failures = 0;
  for (const auto& name : which) {
    const auto it = all.find(name);
    if (it == all.end()) {
      std::fprintf(stderr, "unknown criterion '%s'\n", name.c_str());
      return 2;
    }
    Outcome out;
    try {
      out = it->second(o);
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %s: %s  %s\n", name.substr(1).c_str(), out.pass ? "PASS" : "FAIL",
                out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
