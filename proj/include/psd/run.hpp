#pragma once

// End-to-end runs: the training loop with metrics and checkpoints, the final
// skill dumps, and the downstream hierarchical stage when configured.

#include "psd/config.hpp"
#include "psd/trainer.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace psd::run {

struct RunOptions {
  /// Called after every epoch (progress output).
  std::function<void(const train::EpochMetrics&)> on_epoch;
  bool dump_artifacts = true;
  bool run_downstream = true;
};

struct RunResult {
  train::TrainerState state;
  std::filesystem::path out_dir;
  std::optional<double> downstream_return;
  std::optional<double> downstream_random;
};

/// Output files under cfg.out_dir:
///   metrics.jsonl, checkpoint.bin, traj/skill_XX.csv, traj/latent_XX.csv,
///   pca.csv, spectrum.csv, geometry_L<L>.json, downstream.jsonl.
/// A NumericError propagates after the last periodic checkpoint is left intact.
RunResult train(const RunConfig& cfg, const RunOptions& opts = {});

/// Continues `st` up to st.cfg.epochs. Lines of an existing metrics.jsonl past
/// st.epoch are dropped first, so the epoch sequence has neither gaps nor repeats.
RunResult continue_training(train::TrainerState st, const RunOptions& opts = {});

/// `count` evenly spaced integer periods over [L_min, L_max], duplicates kept
/// so skill ids stay aligned with the requested count.
std::vector<int> dump_periods(int L_min, int L_max, int count);

/// Mean-mode rollouts of the dumped skills plus their latent, PCA, spectrum and
/// geometry artifacts.
void dump_skills(const train::TrainerState& st, const std::filesystem::path& dir);

/// Trains the high-level PPO policy on top of the frozen skills and writes
/// downstream.jsonl. Returns {trained return, random-selection return}.
std::pair<double, double> downstream(const train::TrainerState& st, const std::filesystem::path& dir);

}  // namespace psd::run
