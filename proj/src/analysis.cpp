#include "psd/analysis.hpp"

#include "psd/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

namespace psd::analysis {

// ---- normalisation and PCA ----------------------------------------------

NormStats compute_stats(const std::vector<Matrix>& samples, double std_floor) {
  if (samples.empty()) throw DataError("compute_stats: no samples");
  const auto dim = samples.front().cols();
  Eigen::Index n = 0;
  Vector sum = Vector::Zero(dim);
  for (const auto& m : samples) {
    if (m.cols() != dim) throw DataError("compute_stats: inconsistent dimensions");
    sum += m.colwise().sum().transpose();
    n += m.rows();
  }
  if (n < 2) throw DataError("compute_stats: need at least two rows");
  NormStats st;
  st.mean = sum / static_cast<double>(n);
  Vector sq = Vector::Zero(dim);
  for (const auto& m : samples) {
    sq += (m.rowwise() - st.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  st.std = (sq / static_cast<double>(n)).array().sqrt().max(std_floor).matrix();
  return st;
}

NormStats random_rollout_stats(const envs::EnvSpec& env, int episodes, std::uint64_t seed) {
  if (episodes < 10) throw ConfigError("random_rollout_stats: need at least 10 episodes");
  std::vector<Matrix> all;
  for (int e = 0; e < episodes; ++e) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(e));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    envs::EnvState st = envs::reset(env, seed + static_cast<std::uint64_t>(e));
    Matrix states(env.episode_length + 1, env.obs_dim);
    states.row(0) = st.observation.transpose();
    Vector a(env.act_dim);
    for (int t = 0; t < env.episode_length; ++t) {
      for (int j = 0; j < env.act_dim; ++j) a(j) = u(rng);
      st = envs::step(env, st, a).state;
      states.row(t + 1) = st.observation.transpose();
    }
    all.push_back(std::move(states));
  }
  return compute_stats(all);
}

Pca fit_pca(const Matrix& X, int k) {
  if (X.rows() < 2) throw DataError("pca: need at least two samples");
  if (k < 1 || k > X.cols()) throw ConfigError("pca: k out of range");
  Pca p;
  p.mean = X.colwise().mean().transpose();
  const Matrix C = X.rowwise() - p.mean.transpose();
  const Matrix cov = (C.transpose() * C) / static_cast<double>(X.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success) throw NumericError("pca: eigendecomposition failed");
  const auto dim = X.cols();
  p.components.resize(k, dim);
  p.explained_variance.resize(k);
  for (int i = 0; i < k; ++i) {
    // Eigenvalues are ascending.
    Vector v = es.eigenvectors().col(dim - 1 - i);
    Eigen::Index idx = 0;
    v.cwiseAbs().maxCoeff(&idx);
    if (v(idx) < 0.0) v = -v;
    p.components.row(i) = v.transpose();
    p.explained_variance(i) = std::max(0.0, es.eigenvalues()(dim - 1 - i));
  }
  p.total_variance = std::max(0.0, es.eigenvalues().sum());
  return p;
}

Matrix project(const Pca& pca, const Matrix& X) {
  return (X.rowwise() - pca.mean.transpose()) * pca.components.transpose();
}

Projection normalize_and_project(const std::vector<SkillTrajectory>& trajs, const NormStats& stats) {
  if (trajs.empty()) throw DataError("normalize_and_project: no trajectories");
  const auto dim = stats.mean.size();
  Eigen::Index rows = 0;
  for (const auto& t : trajs) {
    if (t.states.cols() != dim) throw DataError("normalize_and_project: dimension mismatch");
    rows += t.states.rows();
  }
  Matrix pooled(rows, dim);
  std::vector<Matrix> normed;
  Eigen::Index r = 0;
  for (const auto& t : trajs) {
    Matrix m = ((t.states.rowwise() - stats.mean.transpose()).array().rowwise() /
                stats.std.transpose().array())
                   .matrix();
    pooled.middleRows(r, m.rows()) = m;
    r += m.rows();
    normed.push_back(std::move(m));
  }
  const Vector spread = (pooled.colwise().maxCoeff() - pooled.colwise().minCoeff()).transpose();
  if ((spread.array() == 0.0).all()) {
    throw DataError("normalize_and_project: every dimension is constant (dims 0.." +
                    std::to_string(dim - 1) + ")");
  }
  Projection out;
  out.pca = fit_pca(pooled, 1);
  for (const auto& m : normed) out.series.push_back(project(out.pca, m).col(0));
  return out;
}

// ---- spectra --------------------------------------------------------------

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<std::complex<double>> rfft(const Vector& x) {
  const int n = static_cast<int>(x.size());
  std::vector<double> in(x.data(), x.data() + n);
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n / 2 + 1));
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

}  // namespace

Spectrum spectrum(const Vector& series, int k, bool hann) {
  const auto n = series.size();
  if (n < 8) throw DataError("spectrum: series must have at least 8 samples");
  if (k < 0) throw ConfigError("spectrum: k must be >= 0");
  Vector x = series.array() - series.mean();
  if (hann) {
    for (Eigen::Index t = 0; t < n; ++t) {
      x(t) *= 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * t / static_cast<double>(n - 1)));
    }
  }
  const auto X = rfft(x);
  const auto bins = static_cast<Eigen::Index>(X.size());
  Spectrum s;
  s.freqs.resize(bins);
  s.amps.resize(bins);
  for (Eigen::Index i = 0; i < bins; ++i) {
    s.freqs(i) = static_cast<double>(i) / static_cast<double>(n);
    const bool single = i == 0 || (n % 2 == 0 && i == n / 2);
    s.amps(i) = (single ? 1.0 : 2.0) * std::abs(X[static_cast<std::size_t>(i)]) / static_cast<double>(n);
  }
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 1; i < bins; ++i) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return s.amps(a) > s.amps(b); });
  for (int i = 0; i < k && i < static_cast<int>(order.size()); ++i) {
    s.top_k.emplace_back(s.freqs(order[i]), s.amps(order[i]));
  }
  return s;
}

double parseval_residual(const Vector& series) {
  const auto n = series.size();
  if (n < 1) throw DataError("parseval: empty series");
  const auto X = rfft(series);
  double spec = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const bool single = i == 0 || (n % 2 == 0 && static_cast<Eigen::Index>(i) == n / 2);
    spec += (single ? 1.0 : 2.0) * std::norm(X[i]);
  }
  spec /= static_cast<double>(n);
  const double time = series.squaredNorm();
  return std::abs(time - spec) / std::max(time, 1e-300);
}

Vector naive_dft_magnitude(const Vector& series) {
  const auto n = series.size();
  Vector mag(n / 2 + 1);
  for (Eigen::Index k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n);
      acc += series(t) * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    mag(k) = std::abs(acc);
  }
  return mag;
}

// ---- periodicity ----------------------------------------------------------

Vector autocorrelation(const Vector& series, int max_lag) {
  const auto n = series.size();
  if (max_lag < 0 || max_lag >= n) throw ConfigError("autocorrelation: max_lag out of range");
  const Vector y = series.array() - series.mean();
  const double var = y.squaredNorm() / static_cast<double>(n);
  Vector r = Vector::Zero(max_lag + 1);
  if (var <= 0.0) return r;
  for (int k = 0; k <= max_lag; ++k) {
    const auto m = n - k;
    r(k) = y.head(m).dot(y.tail(m)) / static_cast<double>(m) / var;
  }
  return r;
}

std::optional<int> autocorr_period(const Vector& series, double prominence) {
  const auto n = series.size();
  if (n < 4) return std::nullopt;
  const Vector y = series.array() - series.mean();
  if (y.cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, series.cwiseAbs().maxCoeff())) {
    return std::nullopt;
  }
  const int max_lag = static_cast<int>(n / 2);
  const Vector r = autocorrelation(series, max_lag);
  bool dipped = false;
  for (int k = 1; k < max_lag; ++k) {
    if (r(k) < prominence) {
      dipped = true;
      continue;
    }
    if (dipped && r(k) >= r(k - 1) && r(k) >= r(k + 1)) return k;
  }
  return std::nullopt;
}

// ---- latent geometry ------------------------------------------------------

Histogram histogram(const Vector& values, int bins) {
  if (bins < 1) throw ConfigError("histogram: bins must be >= 1");
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  if (values.size() == 0) return h;
  h.lo = values.minCoeff();
  h.hi = values.maxCoeff();
  const double width = h.hi > h.lo ? (h.hi - h.lo) / bins : 1.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    int b = static_cast<int>((values(i) - h.lo) / width);
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

GeometryReport geometry_from_distances(int L, const Vector& onestep, const Vector& Lstep,
                                       const Vector& antipodal) {
  if (onestep.size() == 0 || Lstep.size() == 0) throw DataError("geometry: no samples");
  GeometryReport g;
  g.L = L;
  g.onestep = histogram(onestep);
  g.Lstep = histogram(Lstep);
  g.onestep_mean = onestep.mean();
  g.Lstep_mean = Lstep.mean();
  g.antipodal_mean = antipodal.size() > 0 ? antipodal.mean() : 0.0;
  const double chord = encoder::optimal_chord(L);
  g.rel_err_onestep = std::abs(g.onestep_mean - chord) / chord * 100.0;
  g.rel_err_Lstep = std::abs(g.Lstep_mean - L) / static_cast<double>(L) * 100.0;
  return g;
}

GeometryReport geometry_report(const encoder::EncoderShape& shape, const nn::ParamSet& phi,
                               const EpisodeBuffer& buffer, int L, int n_samples,
                               std::mt19937_64& rng) {
  if (buffer.count_tuple_starts(L) < static_cast<std::size_t>(n_samples)) {
    throw InsufficientData("geometry_report: buffer holds fewer than " +
                           std::to_string(n_samples) + " tuples at L = " + std::to_string(L));
  }
  const TupleBatch b = buffer.sample_tuple_batch(n_samples, rng, L);
  const Matrix z0 = encoder::encode_batch(shape, phi, b.s_t, b.L, b.z);
  const Matrix z1 = encoder::encode_batch(shape, phi, b.s_t1, b.L, b.z);
  const Matrix zL = encoder::encode_batch(shape, phi, b.s_tL, b.L, b.z);
  return geometry_from_distances(L, (z1 - z0).rowwise().norm(), (zL - z0).rowwise().norm(),
                                 (zL + z0).rowwise().norm());
}

// ---- optimal latent configuration ---------------------------------------

namespace {

constexpr double kSmooth = 1e-9;

double smooth_norm(const Vector& v) { return std::sqrt(v.squaredNorm() + kSmooth * kSmooth); }

struct Penalised {
  double value;  // objective minus penalty
  Matrix grad;   // gradient of value
};

// Augmented-Lagrangian value for inequality constraints g <= 0 with multipliers lam.
Penalised penalised(const Matrix& P, int L, double k, double mu, const Vector& lam_L,
                    const Vector& lam_c) {
  const int n = 2 * L;
  const double chord = encoder::optimal_chord(L);
  Penalised out{0.0, Matrix::Zero(P.rows(), P.cols())};
  for (int i = 0; i < n; ++i) {
    const int j = (i + L) % n;
    const int nx = (i + 1) % n;
    const Vector a = P.row(j) - P.row(i);
    const Vector b = P.row(j) + P.row(i);
    const Vector c = P.row(nx) - P.row(i);
    const double na = smooth_norm(a), nb = smooth_norm(b), nc = smooth_norm(c);
    out.value += (na - k * nb) / n;
    Vector ga = a / na, gb = b / nb, gc = c / nc;
    double wa = 1.0 / n;
    // max(0, lam + mu g) is the derivative of the penalty w.r.t. g
    const double sL = std::max(0.0, lam_L(i) + mu * (na - L));
    const double sc = std::max(0.0, lam_c(i) + mu * (nc - chord));
    out.value -= (sL * sL - lam_L(i) * lam_L(i)) / (2.0 * mu);
    out.value -= (sc * sc - lam_c(i) * lam_c(i)) / (2.0 * mu);
    wa -= sL;
    out.grad.row(j) += (wa * ga - (k / n) * gb).transpose();
    out.grad.row(i) += (-wa * ga - (k / n) * gb).transpose();
    out.grad.row(nx) += (-sc * gc).transpose();
    out.grad.row(i) += (sc * gc).transpose();
  }
  return out;
}

Matrix rescale_feasible(const Matrix& P, int L) {
  const int n = 2 * L;
  const double chord = encoder::optimal_chord(L);
  double s = 1.0;
  for (int i = 0; i < n; ++i) {
    const double dL = (P.row((i + L) % n) - P.row(i)).norm();
    const double dc = (P.row((i + 1) % n) - P.row(i)).norm();
    if (dL > L) s = std::min(s, L / dL);
    if (dc > chord) s = std::min(s, chord / dc);
  }
  return P * s;
}

}  // namespace

double polygon_objective(const Matrix& points, int L, double k) {
  const int n = 2 * L;
  if (points.rows() != n) throw ConfigError("polygon_objective: need 2L points");
  double f = 0.0;
  for (int i = 0; i < n; ++i) {
    const int j = (i + L) % n;
    f += (points.row(j) - points.row(i)).norm() - k * (points.row(j) + points.row(i)).norm();
  }
  return f / n;
}

double polygon_violation(const Matrix& points, int L) {
  const int n = 2 * L;
  const double chord = encoder::optimal_chord(L);
  double v = 0.0;
  for (int i = 0; i < n; ++i) {
    v = std::max(v, (points.row((i + L) % n) - points.row(i)).norm() - L);
    v = std::max(v, (points.row((i + 1) % n) - points.row(i)).norm() - chord);
  }
  return v;
}

Matrix regular_polygon(int L, int d) {
  if (L < 1 || d < 2) throw ConfigError("regular_polygon: need L >= 1, d >= 2");
  Matrix P = Matrix::Zero(2 * L, d);
  for (int i = 0; i < 2 * L; ++i) {
    const double th = std::numbers::pi * i / L;
    P(i, 0) = 0.5 * L * std::cos(th);
    P(i, 1) = 0.5 * L * std::sin(th);
  }
  return P;
}

TheoremReport theorem_oracle(int L, int d, const TheoremOptions& opt) {
  if (L < 2 || L > 6) throw ConfigError("theorem_oracle: L must be in [2, 6]");
  if (d < 2 || d > 3) throw ConfigError("theorem_oracle: d must be 2 or 3");
  const int n = 2 * L;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> n01(0.0, 1.0);

  TheoremReport best;
  best.L = L;
  best.d = d;
  best.objective = -std::numeric_limits<double>::infinity();
  best.restarts = opt.restarts;

  for (int r = 0; r < opt.restarts; ++r) {
    Matrix P(n, d);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < d; ++c) P(i, c) = 0.5 * L * n01(rng);
    Vector lam_L = Vector::Zero(n), lam_c = Vector::Zero(n);
    Matrix m = Matrix::Zero(n, d), v = Matrix::Zero(n, d);
    std::int64_t step = 0;
    for (int outer = 0; outer < opt.outer_iterations; ++outer) {
      const double frac = opt.outer_iterations > 1
                              ? std::min(1.0, static_cast<double>(outer) / (opt.outer_iterations / 2))
                              : 1.0;
      const double mu = opt.mu_start * std::pow(opt.mu_end / opt.mu_start, frac);
      for (int it = 0; it < opt.inner_steps; ++it) {
        const double lr = 0.02 * L * std::pow(0.01, static_cast<double>(it) / opt.inner_steps) /
                          (1.0 + outer);
        const Penalised p = penalised(P, L, opt.k, mu, lam_L, lam_c);
        ++step;
        m = 0.9 * m + 0.1 * p.grad;
        v = 0.999 * v + 0.001 * p.grad.cwiseProduct(p.grad);
        const double c1 = 1.0 - std::pow(0.9, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(0.999, static_cast<double>(step));
        P.array() += lr * (m.array() / c1) / ((v.array() / c2).sqrt() + 1e-12);
      }
      const double chord = encoder::optimal_chord(L);
      for (int i = 0; i < n; ++i) {
        lam_L(i) = std::max(0.0, lam_L(i) + mu * ((P.row((i + L) % n) - P.row(i)).norm() - L));
        lam_c(i) = std::max(0.0, lam_c(i) + mu * ((P.row((i + 1) % n) - P.row(i)).norm() - chord));
      }
    }
    const bool converged = polygon_violation(P, L) < 1e-4 * L;
    const Matrix F = rescale_feasible(P, L);
    const double f = polygon_objective(F, L, opt.k);
    if (f > best.objective) {
      best.objective = f;
      best.points = F;
    }
    best.converged = best.converged || converged;
  }

  const double chord = encoder::optimal_chord(L);
  for (int i = 0; i < n; ++i) {
    best.max_radius_err = std::max(best.max_radius_err, std::abs(best.points.row(i).norm() - 0.5 * L));
    best.max_chord_err = std::max(
        best.max_chord_err, std::abs((best.points.row((i + 1) % n) - best.points.row(i)).norm() - chord));
    best.max_antipodal_err =
        std::max(best.max_antipodal_err, (best.points.row((i + L) % n) + best.points.row(i)).norm());
  }
  return best;
}

}  // namespace psd::analysis
