#include "psd/run.hpp"

#include "psd/analysis.hpp"
#include "psd/artifacts.hpp"
#include "psd/checkpoint.hpp"
#include "psd/errors.hpp"
#include "psd/hierarchy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace psd::run {

namespace fs = std::filesystem;

namespace {

std::string numbered(const char* stem, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%02d.csv", stem, i);
  return buf;
}

/// Keeps the lines of metrics.jsonl whose epoch is <= last_epoch.
void truncate_metrics(const fs::path& path, int last_epoch) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string line, kept;
  while (std::getline(in, line)) {
    const auto key = line.find("\"epoch\":");
    if (key == std::string::npos) continue;
    if (std::stoi(line.substr(key + 8)) <= last_epoch) kept += line + '\n';
  }
  in.close();
  std::ofstream(path, std::ios::binary | std::ios::trunc) << kept;
}

}  // namespace

std::vector<int> dump_periods(int L_min, int L_max, int count) {
  std::vector<int> out;
  for (int i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    out.push_back(static_cast<int>(std::lround(L_min + frac * (L_max - L_min))));
  }
  return out;
}

RunResult train(const RunConfig& cfg, const RunOptions& opts) {
  return continue_training(train::make_trainer(cfg), opts);
}

RunResult continue_training(train::TrainerState st, const RunOptions& opts) {
  const fs::path dir = st.cfg.out_dir;
  fs::create_directories(dir);
  const fs::path metrics_path = dir / "metrics.jsonl";
  const fs::path ckpt_path = dir / "checkpoint.bin";
  if (st.epoch == 0) {
    std::ofstream(metrics_path, std::ios::trunc);
  } else {
    truncate_metrics(metrics_path, st.epoch);
  }

  std::ofstream metrics(metrics_path, std::ios::binary | std::ios::app);
  if (!metrics) throw DataError("cannot open " + metrics_path.string());
  while (st.epoch < st.cfg.epochs) {
    const train::EpochMetrics m = train::run_epoch(st);
    metrics << io::metrics_line(m) << '\n';
    metrics.flush();
    if (opts.on_epoch) opts.on_epoch(m);
    if (st.cfg.checkpoint_every > 0 && st.epoch % st.cfg.checkpoint_every == 0) ckpt::save(st, ckpt_path);
  }
  ckpt::save(st, ckpt_path);

  RunResult res{std::move(st), dir, std::nullopt, std::nullopt};
  if (opts.dump_artifacts) dump_skills(res.state, dir);
  if (opts.run_downstream && res.state.cfg.high_level) {
    const auto [ret, rnd] = downstream(res.state, dir);
    res.downstream_return = ret;
    res.downstream_random = rnd;
  }
  return res;
}

void dump_skills(const train::TrainerState& st, const fs::path& dir) {
  const RunConfig& cfg = st.cfg;
  const fs::path traj_dir = dir / "traj";
  fs::create_directories(traj_dir);
  const std::uint64_t base = train::eval_seed_base(cfg) + 0xD0000;
  std::mt19937_64 rng(base);

  const std::vector<int> periods = dump_periods(st.bounds.L_min, st.bounds.L_max, cfg.dump_skills);
  std::vector<SkillTrajectory> trajs;
  std::vector<Matrix> latents;
  for (std::size_t i = 0; i < periods.size(); ++i) {
    const Vector z = cfg.metra ? metra::sample_skill(*cfg.metra, rng).z : Vector();
    SkillTrajectory traj = train::evaluate_skill(st, periods[i], z, base + i);
    io::write_trajectory_csv(traj_dir / numbered("skill", static_cast<int>(i)), traj);

    const Eigen::Index n = traj.states.rows();
    const std::vector<int> Ls(static_cast<std::size_t>(n), traj.L);
    Matrix zs = st.enc_shape.skill_dim > 0 ? Matrix(z.transpose().replicate(n, 1)) : Matrix();
    latents.push_back(encoder::encode_batch(st.enc_shape, st.phi, traj.states, Ls, zs));
    std::ofstream lat(traj_dir / numbered("latent", static_cast<int>(i)), std::ios::binary);
    io::write_latent_csv(lat, traj.L, latents.back());
    trajs.push_back(std::move(traj));
  }
  if (trajs.empty()) return;

  if (cfg.encoder.d >= 2) {
    Matrix pooled(0, cfg.encoder.d);
    for (const auto& l : latents) {
      pooled.conservativeResize(pooled.rows() + l.rows(), Eigen::NoChange);
      pooled.bottomRows(l.rows()) = l;
    }
    const analysis::Pca pca = analysis::fit_pca(pooled, 2);
    std::vector<Matrix> projected;
    for (const auto& l : latents) projected.push_back(analysis::project(pca, l));
    std::ofstream out(dir / "pca.csv", std::ios::binary);
    io::write_pca_csv(out, periods, projected);
  }

  const analysis::NormStats stats = analysis::random_rollout_stats(cfg.env, 10, base);
  const analysis::Projection proj = analysis::normalize_and_project(trajs, stats);
  std::vector<io::SpectrumRow> rows;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto s = analysis::spectrum(proj.series[i], 4, cfg.hann_window);
    for (const auto& r : io::spectrum_rows(static_cast<int>(i), trajs[i].L, s)) rows.push_back(r);
  }
  std::ofstream spec(dir / "spectrum.csv", std::ios::binary);
  io::write_spectrum_csv(spec, rows);

  for (int L : {st.bounds.L_min, st.bounds.L_max}) {
    try {
      const auto rep = analysis::geometry_report(st.enc_shape, st.phi, st.buffer, L, 4096, rng);
      std::ofstream(dir / ("geometry_L" + std::to_string(L) + ".json"), std::ios::binary)
          << io::geometry_json(rep) << '\n';
    } catch (const InsufficientData&) {
      // Nothing stored at this period (e.g. a run of zero epochs).
    }
    if (st.bounds.L_min == st.bounds.L_max) break;
  }
}

std::pair<double, double> downstream(const train::TrainerState& st, const fs::path& dir) {
  const RunConfig& cfg = st.cfg;
  if (!cfg.high_level) throw ConfigError("downstream: config has no high_level section");
  const auto& hl = *cfg.high_level;
  std::vector<int> periods = hl.action_space;
  if (periods.empty()) periods = sampling::discrete_periods(st.bounds, st.bounds.num_periods);
  // Skills trained on ring_world transfer unchanged: tempo_track shares its
  // observation and action layout.
  if (cfg.env.name != envs::EnvName::ring_world && cfg.env.name != envs::EnvName::tempo_track) {
    throw ConfigError("downstream: skills must be trained on ring_world or tempo_track");
  }
  const envs::EnvSpec tempo = envs::EnvSpec::make(envs::EnvName::tempo_track, hl.episode_length);
  hierarchy::TempoTrackTask task(tempo, st.agent.shape, st.agent.policy, periods, hl.H);
  const auto result = hierarchy::train_high_level(task, hl, cfg.seed, std::max(1, hl.epochs / 20));
  std::ofstream out(dir / "downstream.jsonl", std::ios::binary | std::ios::trunc);
  for (const auto& e : result.history) out << io::downstream_line(e) << '\n';
  return {result.final_return, result.random_return};
}

}  // namespace psd::run
