#include "psd/analysis.hpp"
#include "psd/artifacts.hpp"
#include "psd/checkpoint.hpp"
#include "psd/config.hpp"
#include "psd/errors.hpp"
#include "psd/run.hpp"
#include "psd/verify.hpp"

#include <CLI11.hpp>

#include <malloc.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace psd;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("not a number in list: '" + item + "'");
    }
  }
  return out;
}

/// "2..4" or "3" or "2,3,5".
std::vector<int> parse_int_range(const std::string& text) {
  std::vector<int> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("empty range '" + text + "'");
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  for (double v : parse_list(text)) out.push_back(static_cast<int>(v));
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path + " for writing");
  f << text;
}

std::vector<fs::path> trajectory_files(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto name = e.path().filename().string();
        if (e.path().extension() == ".csv" && name.rfind("latent", 0) != 0) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      out.emplace_back(in);
    } else {
      throw DataError("no such file or directory: " + in);
    }
  }
  if (out.empty()) throw DataError("no trajectory CSV files found");
  return out;
}

SkillTrajectory as_trajectory(const io::TrajectoryTable& t) {
  SkillTrajectory s;
  s.L = t.L;
  s.z = t.z;
  s.states = t.obs;
  s.actions = t.act;
  return s;
}

struct TrainArgs {
  std::string config, resume, out;
  std::optional<int> epochs, workers;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  train::TrainerState st;
  if (!a.resume.empty()) {
    st = ckpt::load(a.resume);
    if (!a.config.empty()) std::cerr << "note: --config is ignored when resuming\n";
  } else {
    if (a.config.empty()) throw ConfigError("train: --config or --resume is required");
    RunConfig cfg = load_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    st = train::make_trainer(cfg);
  }
  if (a.epochs) st.cfg.epochs = *a.epochs;
  if (a.workers) st.cfg.workers = *a.workers;
  if (const char* env = std::getenv("PSD_OUT"); env && *env) st.cfg.out_dir = env;
  if (!a.out.empty()) st.cfg.out_dir = a.out;
  st.cfg.validate();

  run::RunOptions opts;
  if (!a.quiet) {
    opts.on_epoch = [](const train::EpochMetrics& m) {
      std::fprintf(stderr, "epoch %d  L=[%d,%d]  R_psd=%.2f  enc=%s  alpha=%.4f\n", m.epoch, m.L_min,
                   m.L_max, m.mean_return_psd,
                   m.encoder_loss ? io::format_number(*m.encoder_loss).c_str() : "-", m.alpha);
    };
  }
  const run::RunResult res = run::continue_training(std::move(st), opts);
  if (res.downstream_return) {
    std::fprintf(stderr, "downstream: trained %.3f  random %.3f\n", *res.downstream_return,
                 *res.downstream_random);
  }
  std::cout << (res.out_dir / "checkpoint.bin").string() << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt_path, int L, const std::string& z_text, std::uint64_t seed,
             const std::string& out) {
  const train::TrainerState st = ckpt::load(ckpt_path);
  Vector z;
  if (!z_text.empty()) {
    const auto v = parse_list(z_text);
    z = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  } else if (st.cfg.metra) {
    std::mt19937_64 rng(seed);
    z = metra::sample_skill(*st.cfg.metra, rng).z;
  }
  if (st.cfg.metra && z.size() != st.cfg.metra->skill_dim)
    throw ConfigError("eval: --z needs " + std::to_string(st.cfg.metra->skill_dim) + " values");
  if (!st.cfg.metra && z.size() != 0) throw ConfigError("eval: this checkpoint takes no --z");
  const SkillTrajectory traj = train::evaluate_skill(st, L, z, seed);
  std::ostringstream csv;
  io::write_trajectory_csv(csv, traj);
  write_text(out, csv.str());
  const auto p = analysis::autocorr_period(traj.states.col(envs::kPhaseCos));
  std::fprintf(stderr, "L=%d  period=%s  R_psd=%.2f\n", L, p ? std::to_string(*p).c_str() : "none",
               traj.r_psd.sum());
  return 0;
}

int cmd_spectrum(const std::vector<std::string>& inputs, int top_k, const std::string& env_name,
                 bool hann, const std::string& out) {
  std::vector<SkillTrajectory> trajs;
  for (const auto& f : trajectory_files(inputs)) trajs.push_back(as_trajectory(io::read_trajectory_csv(f)));
  envs::EnvSpec env = envs::EnvSpec::make(envs::env_name_from_string(env_name));
  if (env.obs_dim != trajs.front().states.cols())
    throw DataError("trajectories have " + std::to_string(trajs.front().states.cols()) +
                    " observation columns but " + env_name + " has " + std::to_string(env.obs_dim));
  const auto stats = analysis::random_rollout_stats(env, 10, 0);
  const auto proj = analysis::normalize_and_project(trajs, stats);
  std::vector<io::SpectrumRow> rows;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto s = analysis::spectrum(proj.series[i], top_k, hann);
    for (const auto& r : io::spectrum_rows(static_cast<int>(i), trajs[i].L, s)) rows.push_back(r);
  }
  std::ostringstream csv;
  io::write_spectrum_csv(csv, rows);
  write_text(out, csv.str());
  return 0;
}

int cmd_geometry(const std::string& ckpt_path, const std::string& buffer_path, int L, int samples,
                 std::uint64_t seed, const std::string& out) {
  const train::TrainerState st = ckpt::load(ckpt_path);
  std::optional<train::TrainerState> other;
  if (!buffer_path.empty() && buffer_path != ckpt_path) other = ckpt::load(buffer_path);
  const EpisodeBuffer& buffer = other ? other->buffer : st.buffer;
  std::mt19937_64 rng(seed);
  const auto rep = analysis::geometry_report(st.enc_shape, st.phi, buffer, L, samples, rng);
  write_text(out, io::geometry_json(rep) + "\n");
  return 0;
}

int cmd_pca(const std::string& ckpt_path, const std::string& periods, const std::string& out) {
  const train::TrainerState st = ckpt::load(ckpt_path);
  if (st.cfg.encoder.d < 2) throw ConfigError("pca: latent dimension must be >= 2");
  const std::vector<int> Ls = periods.empty()
                                  ? run::dump_periods(st.bounds.L_min, st.bounds.L_max, 4)
                                  : parse_int_range(periods);
  std::vector<Matrix> latents;
  Matrix pooled(0, st.cfg.encoder.d);
  std::mt19937_64 rng(train::eval_seed_base(st.cfg));
  for (std::size_t i = 0; i < Ls.size(); ++i) {
    const Vector z = st.cfg.metra ? metra::sample_skill(*st.cfg.metra, rng).z : Vector();
    const SkillTrajectory traj = train::evaluate_skill(st, Ls[i], z, train::eval_seed_base(st.cfg) + i);
    const Eigen::Index n = traj.states.rows();
    const std::vector<int> L(static_cast<std::size_t>(n), Ls[i]);
    const Matrix zs = st.enc_shape.skill_dim > 0 ? Matrix(z.transpose().replicate(n, 1)) : Matrix();
    latents.push_back(encoder::encode_batch(st.enc_shape, st.phi, traj.states, L, zs));
    pooled.conservativeResize(pooled.rows() + n, Eigen::NoChange);
    pooled.bottomRows(n) = latents.back();
  }
  const auto pca = analysis::fit_pca(pooled, 2);
  std::vector<Matrix> projected;
  for (const auto& l : latents) projected.push_back(analysis::project(pca, l));
  std::ostringstream csv;
  io::write_pca_csv(csv, Ls, projected);
  write_text(out, csv.str());
  return 0;
}

int cmd_period(const std::string& path, int channel) {
  const io::TrajectoryTable t = io::read_trajectory_csv(fs::path(path));
  if (channel < 0 || channel >= t.obs.cols()) throw ConfigError("period: no obs channel " + std::to_string(channel));
  const auto p = analysis::autocorr_period(t.obs.col(channel));
  if (!p) {
    std::cout << "none\n";
    return kExitFail;
  }
  std::cout << *p << '\n';
  return 0;
}

int report(const verify::Report& r, const std::string& out) {
  write_text(out, r.to_json() + "\n");
  for (const auto& name : r.failures()) std::cerr << "FAILED: " << name << '\n';
  return r.pass() ? 0 : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates and frees many large temporaries; keep them on the heap
  // instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 128 << 20);

  CLI::App app{"Periodic skill discovery: training, evaluation and analysis"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train skills from a JSON config (or resume a checkpoint)");
  train->add_option("--config", ta.config, "Run configuration (JSON)");
  train->add_option("--resume", ta.resume, "Checkpoint to continue from");
  train->add_option("--epochs", ta.epochs, "Total number of epochs (overrides the config)");
  train->add_option("--seed", ta.seed, "Seed (overrides the config)");
  train->add_option("--workers", ta.workers, "Rollout threads");
  train->add_option("--out", ta.out, "Output directory (overrides PSD_OUT and the config)");
  train->add_flag("--quiet", ta.quiet, "No per-epoch progress on stderr");

  std::string cfg_env = "ring_world", cfg_out;
  auto* config = app.add_subcommand("config", "Print the default configuration for an env");
  config->add_option("--env", cfg_env, "ring_world | swing_mass | tempo_track | ring_plane");
  config->add_option("--out", cfg_out, "Write to a file instead of stdout");

  std::string ev_ckpt, ev_z, ev_out;
  int ev_L = 10;
  std::uint64_t ev_seed = 0;
  auto* eval = app.add_subcommand("eval", "Roll out the frozen policy at any integer L");
  eval->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
  eval->add_option("--L", ev_L, "Period variable")->required()->check(CLI::PositiveNumber);
  eval->add_option("--z", ev_z, "Comma-separated skill vector (METRA runs)");
  eval->add_option("--seed", ev_seed, "Environment seed");
  eval->add_option("--out", ev_out, "Trajectory CSV path (default stdout)");

  auto* analyze = app.add_subcommand("analyze", "Spectrum, geometry, PCA and period analyses");
  analyze->require_subcommand(1);
  std::vector<std::string> sp_in;
  std::string sp_env = "ring_world", sp_out;
  int sp_k = 4;
  bool sp_hann = false;
  auto* spectrum = analyze->add_subcommand("spectrum", "Top-k frequencies of trajectory CSVs");
  spectrum->add_option("inputs", sp_in, "Trajectory CSV files or directories")->required();
  spectrum->add_option("--top-k", sp_k, "Frequencies per skill")->check(CLI::PositiveNumber);
  spectrum->add_option("--env", sp_env, "Env used for normalisation statistics");
  spectrum->add_flag("--hann", sp_hann, "Apply a Hann window");
  spectrum->add_option("--out", sp_out, "CSV path (default stdout)");

  std::string ge_ckpt, ge_buf, ge_out;
  int ge_L = 10, ge_n = 4096;
  std::uint64_t ge_seed = 0;
  auto* geometry = analyze->add_subcommand("geometry", "Latent distance statistics at one L");
  geometry->add_option("ckpt", ge_ckpt, "Checkpoint holding the encoder")->required();
  geometry->add_option("buffer", ge_buf, "Checkpoint whose replay buffer is sampled (default: same)");
  geometry->add_option("--L", ge_L, "Period")->check(CLI::PositiveNumber);
  geometry->add_option("--samples", ge_n, "Tuples sampled")->check(CLI::PositiveNumber);
  geometry->add_option("--seed", ge_seed, "Sampling seed");
  geometry->add_option("--out", ge_out, "JSON path (default stdout)");

  std::string pc_ckpt, pc_L, pc_out;
  auto* pca = analyze->add_subcommand("pca", "2-D PCA of latent trajectories");
  pca->add_option("ckpt", pc_ckpt, "Checkpoint")->required();
  pca->add_option("--L", pc_L, "Periods, e.g. 5,10,20 or 5..8 (default: 4 across the bounds)");
  pca->add_option("--out", pc_out, "CSV path (default stdout)");

  std::string pe_in;
  int pe_channel = envs::kPhaseCos;
  auto* period = analyze->add_subcommand("period", "Autocorrelation period of a trajectory CSV");
  period->add_option("traj", pe_in, "Trajectory CSV")->required();
  period->add_option("--channel", pe_channel, "Observation channel");

  auto* verify_cmd = app.add_subcommand("verify", "Self-checks");
  verify_cmd->require_subcommand(1);
  std::string vt_L = "2..4", vt_d = "2,3", v_out;
  std::uint64_t v_seed = 0;
  auto* theorem = verify_cmd->add_subcommand("theorem", "Optimal latent configuration oracle");
  theorem->add_option("--L", vt_L, "Periods, e.g. 2..4");
  theorem->add_option("--d", vt_d, "Latent dimensions, e.g. 2,3");
  auto* gradcheck = verify_cmd->add_subcommand("gradcheck", "Finite-difference gradient checks");
  auto* invariants = verify_cmd->add_subcommand("invariants", "Round trips, determinism, identities");
  for (auto* sub : {theorem, gradcheck, invariants}) {
    sub->add_option("--seed", v_seed, "Seed");
    sub->add_option("--out", v_out, "Report JSON path (default stdout)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(ta);
    if (*config) {
      write_text(cfg_out, dump_config(default_config(envs::env_name_from_string(cfg_env))) + "\n");
      return 0;
    }
    if (*eval) return cmd_eval(ev_ckpt, ev_L, ev_z, ev_seed, ev_out);
    if (*spectrum) return cmd_spectrum(sp_in, sp_k, sp_env, sp_hann, sp_out);
    if (*geometry) return cmd_geometry(ge_ckpt, ge_buf, ge_L, ge_n, ge_seed, ge_out);
    if (*pca) return cmd_pca(pc_ckpt, pc_L, pc_out);
    if (*period) return cmd_period(pe_in, pe_channel);
    if (*theorem) {
      const auto Ls = parse_int_range(vt_L);
      return report(verify::theorem(Ls.front(), Ls.back(), parse_int_range(vt_d), v_seed), v_out);
    }
    if (*gradcheck) return report(verify::gradcheck(v_seed), v_out);
    if (*invariants) return report(verify::invariants(v_seed), v_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InfeasiblePeriod& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << " (last checkpoint left intact)\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFail;
  }
  return kExitFail;
}
