#pragma once

#include "psd/encoder.hpp"
#include "psd/envs.hpp"
#include "psd/hierarchy.hpp"
#include "psd/metra.hpp"
#include "psd/reward.hpp"
#include "psd/sac.hpp"
#include "psd/sampling.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace psd {

struct RunConfig {
  envs::EnvSpec env = envs::EnvSpec::make(envs::EnvName::ring_world);
  encoder::PsdEncoderConfig encoder;
  sac::SacConfig agent;
  reward::RewardConfig reward;
  sampling::SamplingBounds bounds;
  std::optional<metra::MetraConfig> metra;
  std::optional<hierarchy::HighLevelConfig> high_level;
  std::uint64_t seed = 0;
  int epochs = 0;
  int workers = 1;
  std::string out_dir = "runs/psd";
  /// Checkpoint every n epochs (0: only at the end).
  int checkpoint_every = 0;
  /// Number of evenly spaced skills dumped as trajectory CSVs after training.
  int dump_skills = 16;
  /// Hann window before the FFT in spectrum exports.
  bool hann_window = false;

  void validate() const;
};

/// Strict JSON parse: unknown keys and wrong types raise ConfigError naming the key
/// path; env.name, seed and epochs are required.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical JSON with every field present; parse_config(dump_config(c)) == c.
std::string dump_config(const RunConfig& cfg, int indent = 2);
/// A complete config with all defaults (seed 0, epochs 1) for the given env.
RunConfig default_config(envs::EnvName env = envs::EnvName::ring_world);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace psd
