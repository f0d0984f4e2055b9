#pragma once

// Episode-contiguous replay storage. Episodes are appended whole and evicted
// whole (FIFO), so L-step tuples never straddle an episode boundary.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace psd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Transition {
  std::int64_t episode_id = 0;
  int t = 0;
  int L = 1;
  Vector s;
  Vector a;
  Vector s_next;
  double v_x = 0.0;
  bool done = false;
  Vector z;  // empty unless skills are in use
};

struct Episode {
  std::int64_t id = 0;
  int L = 1;
  Vector z;        // skill vector (possibly empty)
  Matrix s;        // T x obs
  Matrix a;        // T x act
  Matrix s_next;   // T x obs
  Vector v_x;      // T
  std::vector<std::uint8_t> done;  // T

  int length() const { return static_cast<int>(s.rows()); }
};

/// Builds an Episode from per-step transitions; throws DataError if they are
/// not one contiguous run (t = 0..T-1, single id, single L, single z).
Episode episode_from_transitions(std::span<const Transition> transitions);

struct SacBatch {
  std::vector<int> L;
  Matrix s;
  Matrix a;
  Matrix s_next;
  Vector v_x;
  Vector done;  // 1.0 for terminal transitions
  Matrix z;     // n x skill_dim (0 columns when unused)

  int size() const { return static_cast<int>(L.size()); }
};

struct TupleBatch {
  std::vector<int> L;
  Matrix s_t;
  Matrix s_t1;
  Matrix s_tL;
  Matrix z;                  // n x skill_dim (0 columns when unused)
  std::vector<int> start;    // sampled t, for diagnostics
  std::vector<std::int64_t> episode;  // sampled episode id

  int size() const { return static_cast<int>(L.size()); }
};

class EpisodeBuffer {
 public:
  explicit EpisodeBuffer(std::size_t capacity = 500000);

  /// Appends one episode, evicting the oldest whole episodes while over capacity.
  void push_episode(Episode episode);
  void push_episode(std::span<const Transition> transitions);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t episode_count() const { return episodes_.size(); }
  const std::deque<Episode>& episodes() const { return episodes_; }
  void clear();

  /// Uniform over stored transitions.
  SacBatch sample_sac_batch(int n, std::mt19937_64& rng) const;

  /// Episode drawn uniformly among those long enough, then t uniform in [0, T-1-L].
  /// With `only_L`, restricts to episodes with that period. Throws InsufficientData
  /// when no valid start exists.
  TupleBatch sample_tuple_batch(int n, std::mt19937_64& rng,
                                std::optional<int> only_L = std::nullopt) const;

  /// Number of valid tuple starts (sum over episodes of max(0, T - L)).
  std::size_t count_tuple_starts(std::optional<int> only_L = std::nullopt) const;

 private:
  void rebuild_index();

  std::size_t capacity_;
  std::size_t size_ = 0;
  std::deque<Episode> episodes_;
  std::vector<std::size_t> prefix_;  // prefix_[i] = transitions before episode i
};

}  // namespace psd
