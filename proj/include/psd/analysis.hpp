#pragma once

// Verification and figure-data tools: spectra, PCA projection, autocorrelation
// period, latent geometry statistics, and a numeric optimiser for the circular
// latent objective over free points.

#include "psd/buffer.hpp"
#include "psd/encoder.hpp"
#include "psd/envs.hpp"
#include "psd/trajectory.hpp"

#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace psd::analysis {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---- normalisation and PCA ----------------------------------------------

struct NormStats {
  Vector mean;
  Vector std;  // floored
};

inline constexpr double kStdFloor = 1e-8;

/// Per-dimension mean/std over the rows of all matrices.
NormStats compute_stats(const std::vector<Matrix>& samples, double std_floor = kStdFloor);
/// Stats from `episodes` uniform-random-action rollouts (at least 10).
NormStats random_rollout_stats(const envs::EnvSpec& env, int episodes, std::uint64_t seed);

struct Pca {
  Vector mean;
  Matrix components;          // k x dim, rows are unit principal directions
  Vector explained_variance;  // k, descending
  double total_variance = 0.0;
};

/// Eigendecomposition of the sample covariance. Each component's largest-magnitude
/// entry is made positive.
Pca fit_pca(const Matrix& X, int k);
Matrix project(const Pca& pca, const Matrix& X);

struct Projection {
  Pca pca;  // fitted on the pooled standardised states, k = 1
  std::vector<Vector> series;
};

/// Standardise each trajectory with `stats`, fit PCA on all states pooled, and
/// project every trajectory onto the first component.
Projection normalize_and_project(const std::vector<SkillTrajectory>& trajs, const NormStats& stats);

// ---- spectra --------------------------------------------------------------

struct Spectrum {
  Vector freqs;  // cycles per step, k / N for k = 0..N/2
  Vector amps;   // single-sided amplitude
  std::vector<std::pair<double, double>> top_k;  // (freq, amp), DC excluded
};

/// Mean-removed real FFT of length N = series.size() (>= 8).
Spectrum spectrum(const Vector& series, int k, bool hann = false);

/// |sum x^2 - (1/N) sum |X_k|^2| / max(sum x^2, tiny), over the full complex spectrum.
double parseval_residual(const Vector& series);

/// Plain O(N^2) DFT magnitudes |X_k| for k = 0..N/2.
Vector naive_dft_magnitude(const Vector& series);

// ---- periodicity ----------------------------------------------------------

/// Normalised autocorrelation (unbiased per-lag normalisation) for lags 0..max_lag.
Vector autocorrelation(const Vector& series, int max_lag);

/// Lag of the first local autocorrelation maximum reaching `prominence` after the
/// curve has dropped below it. nullopt for constant or aperiodic series.
std::optional<int> autocorr_period(const Vector& series, double prominence = 0.5);

// ---- latent geometry ------------------------------------------------------

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<int> counts;
};

Histogram histogram(const Vector& values, int bins = 64);

struct GeometryReport {
  int L = 1;
  Histogram onestep;
  Histogram Lstep;
  double onestep_mean = 0.0;
  double Lstep_mean = 0.0;
  double antipodal_mean = 0.0;
  double rel_err_onestep = 0.0;  // percent
  double rel_err_Lstep = 0.0;    // percent
};

GeometryReport geometry_from_distances(int L, const Vector& onestep, const Vector& Lstep,
                                       const Vector& antipodal);

/// Samples `n_samples` tuples at period L; throws InsufficientData when the buffer
/// holds fewer valid starts.
GeometryReport geometry_report(const encoder::EncoderShape& shape, const nn::ParamSet& phi,
                               const EpisodeBuffer& buffer, int L, int n_samples,
                               std::mt19937_64& rng);

// ---- optimal latent configuration ---------------------------------------

struct TheoremReport {
  int L = 0;
  int d = 0;
  Matrix points;  // 2L x d
  double objective = 0.0;
  double max_radius_err = 0.0;     // | |p_i| - L/2 |
  double max_chord_err = 0.0;      // | |p_{i+1} - p_i| - L sin(pi/2L) |
  double max_antipodal_err = 0.0;  // | p_{i+L} + p_i |
  int restarts = 0;
  bool converged = false;

  bool checks_pass(double tol) const {
    return max_radius_err <= tol && max_chord_err <= tol && max_antipodal_err <= tol;
  }
};

struct TheoremOptions {
  double k = 0.5;
  int restarts = 16;
  int outer_iterations = 40;
  int inner_steps = 1500;
  double mu_start = 1.0;
  double mu_end = 100.0;
  std::uint64_t seed = 0;
};

/// Objective of free points: mean_i |p_{i+L} - p_i| - k |p_{i+L} + p_i| (cyclic indices).
double polygon_objective(const Matrix& points, int L, double k);
/// Largest violation of |p_{i+L} - p_i| <= L and |p_{i+1} - p_i| <= L sin(pi/2L).
double polygon_violation(const Matrix& points, int L);

/// Maximises the objective under both distance constraints with an annealed
/// penalty (plus multiplier estimates) and random restarts; the returned points are
/// rescaled onto the feasible set.
TheoremReport theorem_oracle(int L, int d, const TheoremOptions& opt = {});

/// Reference configuration: regular 2L-gon of diameter L in the first two axes.
Matrix regular_polygon(int L, int d);

}  // namespace psd::analysis
