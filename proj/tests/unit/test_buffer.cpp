#include "doctest.h"
#include "gen.hpp"

#include "psd/buffer.hpp"
#include "psd/errors.hpp"

#include <cmath>
#include <map>

using namespace psd;

namespace {

// States encode (episode id, t) so tuple sampling can be audited exactly.
Episode make_episode(std::int64_t id, int T, int L, int obs = 2) {
  Episode e;
  e.id = id;
  e.L = L;
  e.s.resize(T, obs);
  e.s_next.resize(T, obs);
  e.a = Matrix::Zero(T, 1);
  e.v_x = Vector::Zero(T);
  e.done.assign(static_cast<std::size_t>(T), 0);
  for (int t = 0; t < T; ++t) {
    e.s.row(t).setConstant(0.0);
    e.s(t, 0) = static_cast<double>(id);
    e.s(t, 1) = t;
    e.s_next.row(t) = e.s.row(t);
    e.s_next(t, 1) = t + 1;
  }
  return e;
}

std::vector<Transition> transitions(std::int64_t id, int T, int L) {
  std::vector<Transition> out;
  for (int t = 0; t < T; ++t) {
    Transition tr;
    tr.episode_id = id;
    tr.t = t;
    tr.L = L;
    tr.s = Vector::Constant(2, t);
    tr.a = Vector::Zero(1);
    tr.s_next = Vector::Constant(2, t + 1);
    out.push_back(tr);
  }
  return out;
}

}  // namespace

TEST_CASE("push_episode grows the buffer by the episode length") {
  EpisodeBuffer b(1000);
  b.push_episode(make_episode(0, 200, 10));
  CHECK(b.size() == 200);
  CHECK(b.episode_count() == 1);
}

TEST_CASE("eviction is whole-episode FIFO") {
  EpisodeBuffer b(300);
  b.push_episode(make_episode(0, 200, 10));
  b.push_episode(make_episode(1, 200, 10));
  CHECK(b.size() == 200);
  CHECK(b.episodes().front().id == 1);
}

TEST_CASE("transitions must be contiguous with one L") {
  auto tr = transitions(3, 10, 5);
  CHECK_NOTHROW(episode_from_transitions(tr));
  auto mixed = tr;
  mixed[4].L = 6;
  CHECK_THROWS_AS(episode_from_transitions(mixed), DataError);
  auto gap = tr;
  gap.erase(gap.begin() + 3);
  CHECK_THROWS_AS(episode_from_transitions(gap), DataError);
  auto ids = tr;
  ids[9].episode_id = 4;
  CHECK_THROWS_AS(episode_from_transitions(ids), DataError);
}

TEST_CASE("valid tuple starts are T - L") {
  EpisodeBuffer b;
  b.push_episode(make_episode(0, 21, 20));
  CHECK(b.count_tuple_starts() == 1);
  std::mt19937_64 rng(1);
  const TupleBatch tb = b.sample_tuple_batch(16, rng);
  for (int s : tb.start) CHECK(s == 0);
  b.clear();
  b.push_episode(make_episode(0, 200, 10));
  CHECK(b.count_tuple_starts() == 190);
}

TEST_CASE("no valid tuple start raises InsufficientData") {
  EpisodeBuffer b;
  b.push_episode(make_episode(0, 10, 10));
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(b.sample_tuple_batch(4, rng), InsufficientData);
  CHECK_THROWS_AS(b.sample_tuple_batch(4, rng, 7), InsufficientData);
}

TEST_CASE("tuple start indices are uniform (chi-square)") {
  EpisodeBuffer b;
  b.push_episode(make_episode(0, 200, 10));
  std::mt19937_64 rng(123);
  std::vector<int> counts(190, 0);
  const int draws = 100000;
  int done = 0;
  while (done < draws) {
    const TupleBatch tb = b.sample_tuple_batch(1000, rng);
    for (int s : tb.start) ++counts[static_cast<std::size_t>(s)];
    done += 1000;
  }
  const double expect = static_cast<double>(draws) / 190.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // 189 degrees of freedom: the p = 0.01 critical value is about 237.
  CHECK(chi2 < 237.0);
}

TEST_CASE("property: tuples never cross episodes or mix L") {
  for (int c = 0; c < 20; ++c) {
    auto g = gen::rng(c, 99);
    EpisodeBuffer b(static_cast<std::size_t>(gen::integer(g, 100, 2000)));
    const int episodes = gen::integer(g, 1, 12);
    for (int e = 0; e < episodes; ++e) {
      b.push_episode(make_episode(e, gen::integer(g, 5, 150), gen::integer(g, 1, 30)));
    }
    if (b.count_tuple_starts() == 0) continue;
    std::map<std::int64_t, int> L_of;
    for (const auto& e : b.episodes()) L_of[e.id] = e.L;
    const TupleBatch tb = b.sample_tuple_batch(256, g);
    for (int i = 0; i < tb.size(); ++i) {
      const auto id = static_cast<double>(tb.episode[static_cast<std::size_t>(i)]);
      const int t = tb.start[static_cast<std::size_t>(i)];
      const int L = tb.L[static_cast<std::size_t>(i)];
      CHECK(L == L_of.at(tb.episode[static_cast<std::size_t>(i)]));
      CHECK(tb.s_t(i, 0) == id);
      CHECK(tb.s_t1(i, 0) == id);
      CHECK(tb.s_tL(i, 0) == id);
      CHECK(tb.s_t(i, 1) == t);
      CHECK(tb.s_t1(i, 1) == t + 1);
      CHECK(tb.s_tL(i, 1) == t + L);
    }
    CHECK(b.size() <= b.capacity());
  }
}

TEST_CASE("sac batches cover stored transitions") {
  EpisodeBuffer b;
  b.push_episode(make_episode(0, 50, 5));
  b.push_episode(make_episode(1, 50, 7));
  std::mt19937_64 rng(5);
  const SacBatch sb = b.sample_sac_batch(500, rng);
  CHECK(sb.size() == 500);
  for (int i = 0; i < sb.size(); ++i) {
    const int expect_L = sb.s(i, 0) == 0.0 ? 5 : 7;
    CHECK(sb.L[static_cast<std::size_t>(i)] == expect_L);
    CHECK(sb.s_next(i, 1) == sb.s(i, 1) + 1);
  }
}
