#include "psd/buffer.hpp"

#include "psd/errors.hpp"

#include <algorithm>

namespace psd {

Episode episode_from_transitions(std::span<const Transition> transitions) {
  if (transitions.empty()) throw DataError("episode: no transitions");
  const Transition& first = transitions.front();
  const auto T = static_cast<Eigen::Index>(transitions.size());
  Episode ep;
  ep.id = first.episode_id;
  ep.L = first.L;
  ep.z = first.z;
  ep.s.resize(T, first.s.size());
  ep.a.resize(T, first.a.size());
  ep.s_next.resize(T, first.s_next.size());
  ep.v_x.resize(T);
  ep.done.resize(static_cast<std::size_t>(T));
  for (Eigen::Index i = 0; i < T; ++i) {
    const Transition& tr = transitions[static_cast<std::size_t>(i)];
    if (tr.t != static_cast<int>(i)) {
      throw DataError("episode: non-contiguous t (expected " + std::to_string(i) + ", got " +
                      std::to_string(tr.t) + ")");
    }
    if (tr.episode_id != first.episode_id) throw DataError("episode: mixed episode ids");
    if (tr.L != first.L) throw DataError("episode: mixed L within one episode");
    if (tr.z.size() != first.z.size() || (tr.z.size() > 0 && tr.z != first.z)) {
      throw DataError("episode: mixed skill vectors within one episode");
    }
    if (tr.s.size() != first.s.size() || tr.s_next.size() != first.s.size() ||
        tr.a.size() != first.a.size()) {
      throw DataError("episode: inconsistent dimensions");
    }
    ep.s.row(i) = tr.s.transpose();
    ep.a.row(i) = tr.a.transpose();
    ep.s_next.row(i) = tr.s_next.transpose();
    ep.v_x(i) = tr.v_x;
    ep.done[static_cast<std::size_t>(i)] = tr.done ? 1 : 0;
  }
  return ep;
}

EpisodeBuffer::EpisodeBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("buffer: capacity must be > 0");
}

void EpisodeBuffer::clear() {
  episodes_.clear();
  prefix_.clear();
  size_ = 0;
}

void EpisodeBuffer::push_episode(Episode episode) {
  const auto T = static_cast<std::size_t>(episode.length());
  if (T == 0) throw DataError("buffer: empty episode");
  if (T > capacity_) throw DataError("buffer: episode longer than capacity");
  if (episode.L < 1) throw DataError("buffer: L must be >= 1");
  if (episode.a.rows() != episode.s.rows() || episode.s_next.rows() != episode.s.rows() ||
      episode.v_x.size() != episode.s.rows() || episode.done.size() != T) {
    throw DataError("buffer: episode arrays disagree on length");
  }
  if (!episodes_.empty()) {
    const Episode& ref = episodes_.front();
    if (ref.s.cols() != episode.s.cols() || ref.a.cols() != episode.a.cols() ||
        ref.z.size() != episode.z.size()) {
      throw DataError("buffer: episode dimensions differ from stored episodes");
    }
  }
  size_ += T;
  episodes_.push_back(std::move(episode));
  while (size_ > capacity_) {
    size_ -= static_cast<std::size_t>(episodes_.front().length());
    episodes_.pop_front();
  }
  rebuild_index();
}

void EpisodeBuffer::push_episode(std::span<const Transition> transitions) {
  push_episode(episode_from_transitions(transitions));
}

void EpisodeBuffer::rebuild_index() {
  prefix_.resize(episodes_.size());
  std::size_t acc = 0;
  for (std::size_t i = 0; i < episodes_.size(); ++i) {
    prefix_[i] = acc;
    acc += static_cast<std::size_t>(episodes_[i].length());
  }
}

SacBatch EpisodeBuffer::sample_sac_batch(int n, std::mt19937_64& rng) const {
  if (size_ == 0) throw InsufficientData("buffer: empty");
  if (n < 1) throw ConfigError("buffer: batch size must be >= 1");
  const Episode& ref = episodes_.front();
  SacBatch b;
  b.L.resize(static_cast<std::size_t>(n));
  b.s.resize(n, ref.s.cols());
  b.a.resize(n, ref.a.cols());
  b.s_next.resize(n, ref.s.cols());
  b.v_x.resize(n);
  b.done.resize(n);
  b.z.resize(n, ref.z.size());
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  for (int i = 0; i < n; ++i) {
    const std::size_t g = pick(rng);
    const auto it = std::upper_bound(prefix_.begin(), prefix_.end(), g);
    const auto e = static_cast<std::size_t>(std::distance(prefix_.begin(), it) - 1);
    const Episode& ep = episodes_[e];
    const auto t = static_cast<Eigen::Index>(g - prefix_[e]);
    b.L[static_cast<std::size_t>(i)] = ep.L;
    b.s.row(i) = ep.s.row(t);
    b.a.row(i) = ep.a.row(t);
    b.s_next.row(i) = ep.s_next.row(t);
    b.v_x(i) = ep.v_x(t);
    b.done(i) = ep.done[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
    if (ep.z.size() > 0) b.z.row(i) = ep.z.transpose();
  }
  return b;
}

std::size_t EpisodeBuffer::count_tuple_starts(std::optional<int> only_L) const {
  std::size_t n = 0;
  for (const Episode& ep : episodes_) {
    if (only_L && ep.L != *only_L) continue;
    if (ep.length() >= ep.L + 1) n += static_cast<std::size_t>(ep.length() - ep.L);
  }
  return n;
}

TupleBatch EpisodeBuffer::sample_tuple_batch(int n, std::mt19937_64& rng,
                                             std::optional<int> only_L) const {
  if (n < 1) throw ConfigError("buffer: batch size must be >= 1");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < episodes_.size(); ++i) {
    const Episode& ep = episodes_[i];
    if (only_L && ep.L != *only_L) continue;
    if (ep.length() >= ep.L + 1) valid.push_back(i);
  }
  if (valid.empty()) throw InsufficientData("buffer: no valid (L, s_t, s_t+1, s_t+L) tuple");
  const Episode& ref = episodes_[valid.front()];
  TupleBatch b;
  b.L.resize(static_cast<std::size_t>(n));
  b.start.resize(static_cast<std::size_t>(n));
  b.episode.resize(static_cast<std::size_t>(n));
  b.s_t.resize(n, ref.s.cols());
  b.s_t1.resize(n, ref.s.cols());
  b.s_tL.resize(n, ref.s.cols());
  b.z.resize(n, ref.z.size());
  std::uniform_int_distribution<std::size_t> pick_ep(0, valid.size() - 1);
  for (int i = 0; i < n; ++i) {
    const Episode& ep = episodes_[valid[pick_ep(rng)]];
    std::uniform_int_distribution<int> pick_t(0, ep.length() - 1 - ep.L);
    const int t = pick_t(rng);
    b.L[static_cast<std::size_t>(i)] = ep.L;
    b.start[static_cast<std::size_t>(i)] = t;
    b.episode[static_cast<std::size_t>(i)] = ep.id;
    b.s_t.row(i) = ep.s.row(t);
    b.s_t1.row(i) = ep.s_next.row(t);
    b.s_tL.row(i) = ep.s.row(t + ep.L);
    if (ep.z.size() > 0) b.z.row(i) = ep.z.transpose();
  }
  return b;
}

}  // namespace psd
