#pragma once

// Text artifacts written by training and analysis runs: metrics JSONL, trajectory,
// latent, PCA and spectrum CSVs, and the geometry report JSON. Numbers are
// written in shortest round-trip form, so reading a file back is exact.

#include "psd/analysis.hpp"
#include "psd/hierarchy.hpp"
#include "psd/trainer.hpp"
#include "psd/trajectory.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace psd::io {

std::string format_number(double v);

std::string metrics_line(const train::EpochMetrics& m);
std::string downstream_line(const hierarchy::DownstreamEpoch& e);

/// `t,L,[z_*],obs_*,act_*,r_psd,r_ext`, one row per action.
void write_trajectory_csv(std::ostream& out, const SkillTrajectory& traj);
void write_trajectory_csv(const std::filesystem::path& path, const SkillTrajectory& traj);

struct TrajectoryTable {
  int L = 1;
  Vector z;
  Matrix obs;  // T x obs_dim
  Matrix act;  // T x act_dim
  Vector r_psd;
  Vector r_ext;
};

/// Parses a trajectory CSV; throws DataError naming the row (1-based, header = 1)
/// on malformed input.
TrajectoryTable read_trajectory_csv(std::istream& in);
TrajectoryTable read_trajectory_csv(const std::filesystem::path& path);

/// `t,L,z_0..z_{d-1}` for the latent of every state.
void write_latent_csv(std::ostream& out, int L, const Matrix& latents);
/// `t,L,pc1,pc2`.
void write_pca_csv(std::ostream& out, const std::vector<int>& Ls,
                   const std::vector<Matrix>& projected);

struct SpectrumRow {
  int skill_id = 0;
  int L = 0;
  double freq = 0.0;
  double amp = 0.0;
  int rank = 0;  // 1-based
};

std::vector<SpectrumRow> spectrum_rows(int skill_id, int L, const analysis::Spectrum& s);
void write_spectrum_csv(std::ostream& out, const std::vector<SpectrumRow>& rows);

std::string geometry_json(const analysis::GeometryReport& r);

}  // namespace psd::io
