#include <doctest.h>

#include <stdexcept>

#include <map>
#include <tuple>

#include "support.hpp"
#include "vinlab/oracle.hpp"
#include "vinlab/random.hpp"

using namespace vinlab;
using namespace vinlab::testing;

namespace {

// Plain exhaustive search over the real environment, memoized on the full
// board. Independent of the planner's site bookkeeping.
struct BruteForce {
  std::map<std::tuple<std::array<std::uint8_t, kNumCells>, int, int>, int> memo;

  int value(const GridState& s, int h) {
    if (h == 0 || s.terminal) return 0;
    const auto key = std::make_tuple(s.cells, s.player_pos.index(), h);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    int best = -1000;
    for (int a = 0; a < kNumActions; ++a) {
      const auto r = step(s, static_cast<Action>(a));
      best = std::max(best, r.reward + (r.done ? 0 : value(r.next_state, h - 1)));
    }
    memo[key] = best;
    return best;
  }
};

int rollout(GridState s, int horizon) {
  int total = 0;
  for (int t = 0; t < horizon && !s.terminal; ++t) {
    const auto r = step(s, optimal_action(s, horizon - t));
    total += r.reward;
    s = r.next_state;
  }
  return total;
}

}  // namespace

TEST_CASE("adjacent target is worth 3") {
  CHECK(optimal_return(make_state(simplified(), {3, 3}, {{cell(3, 4), 2}}), 100) == 3);
}

TEST_CASE("far corner target is worth 3 within 100 moves") {
  CHECK(optimal_return(make_state(simplified(), {0, 0}, {{cell(7, 7), 2}}), 100) == 3);
  CHECK(optimal_return(make_state(simplified(), {0, 0}, {{cell(7, 7), 2}}), 14) == 3);
  CHECK(optimal_return(make_state(simplified(), {0, 0}, {{cell(7, 7), 2}}), 13) == 0);
}

TEST_CASE("target to the right means RIGHT") {
  const GridState s = make_state(simplified(), {3, 3}, {{cell(3, 4), 2}});
  CHECK(optimal_action(s, 1) == Action::Right);
  // with time to spare every inward move is worth 3, so UP wins the tie
  CHECK(optimal_action(s, 100) == Action::Up);
  CHECK(optimal_action(make_state(simplified(), {0, 3}, {{cell(0, 4), 2}}), 100) == Action::Down);
}

TEST_CASE("equal-value UP and LEFT paths break to UP") {
  const GridState s = make_state(simplified(), {4, 4}, {{cell(3, 3), 2}});
  CHECK(optimal_return(s, 2) == 3);
  CHECK(optimal_action(s, 2) == Action::Up);
}

TEST_CASE("attractors are collected on the way") {
  // Three attractors in a line then the target.
  const GridState s = make_state(simplified(), {0, 0},
                                 {{cell(0, 1), 3}, {cell(0, 2), 3}, {cell(0, 3), 3}, {cell(0, 4), 2}});
  CHECK(optimal_return(s, 100) == 6);
  CHECK(optimal_return(s, 3) == 3);
}

TEST_CASE("a walled-in player pays once to get out") {
  // repulsor on every neighbour, target far away
  const GridState s = make_state(simplified(), {4, 4},
                                 {{cell(3, 4), 4}, {cell(5, 4), 4}, {cell(4, 3), 4}, {cell(4, 5), 4},
                                  {cell(0, 0), 2}});
  CHECK(optimal_return(s, 1) == -1);
  CHECK(optimal_return(s, 100) == 2);
}

TEST_CASE("horizon is clamped to the turns left") {
  GridState s = make_state(simplified(), {0, 0}, {{cell(7, 7), 2}});
  s.turn = 90;
  CHECK(optimal_return(s, 100) == 0);
  s.turn = 86;
  CHECK(optimal_return(s, 100) == 3);
}

TEST_CASE("oracle matches exhaustive search on small horizons") {
  BruteForce bf;
  const GameRules r = simplified();
  for (std::uint64_t e = 0; e < 40; ++e) {
    const GridState s = reset(r, e);
    for (int h : {0, 1, 2, 4, 6}) {
      CHECK(optimal_return(s, h) == bf.value(s, h));
    }
  }
  const GameRules wide = generate_rules(9, Variant::Autogen);
  for (std::uint64_t e = 0; e < 10; ++e) {
    const GridState s = reset(wide, e);
    CHECK(optimal_return(s, 5) == bf.value(s, 5));
  }
}

TEST_CASE("Bellman consistency and horizon monotonicity") {
  const GameRules r = simplified();
  for (std::uint64_t e = 100; e < 115; ++e) {
    const GridState s = reset(r, e);
    for (int h : {1, 5, 12, 30}) {
      int best = -1000;
      for (int a = 0; a < kNumActions; ++a) {
        const auto n = step(s, static_cast<Action>(a));
        best = std::max(best, n.reward + (n.done ? 0 : optimal_return(n.next_state, h - 1)));
      }
      CHECK(optimal_return(s, h) == best);
      CHECK(optimal_return(s, h + 1) >= optimal_return(s, h));
    }
  }
}

TEST_CASE("greedy rollout reproduces the optimal return") {
  const GameRules r = simplified();
  for (std::uint64_t e = 0; e < 10; ++e) {
    const GridState s = reset(r, e + 500);
    CHECK(rollout(s, kMaxTurns) == optimal_return(s, kMaxTurns));
  }
}

TEST_CASE("optimal return bounds random play") {
  const GameRules r = simplified();
  for (std::uint64_t e = 0; e < 5; ++e) {
    const GridState s0 = reset(r, e + 900);
    SplitMix64 rng(e);
    int best = -1000;
    for (int k = 0; k < 1000; ++k) {
      GridState s = s0;
      int total = 0;
      while (!s.terminal) {
        const auto n = step(s, static_cast<Action>(rng.below(kNumActions)));
        total += n.reward;
        s = n.next_state;
      }
      best = std::max(best, total);
    }
    CHECK(optimal_return(s0, kMaxTurns) >= best);
  }
}

TEST_CASE("planner tables agree with the rolling solver") {
  const GameRules r = simplified();
  for (std::uint64_t e = 0; e < 5; ++e) {
    GridState s = reset(r, e + 40);
    const ExactPlanner planner(s);
    CHECK(planner.value(s) == optimal_return(s));
    int total = 0;
    while (!s.terminal) {
      const Action a = planner.action(s);
      CHECK(a == optimal_action(s));
      CHECK(planner.value(s) == optimal_return(s));
      const auto n = step(s, a);
      total += n.reward;
      s = n.next_state;
    }
    CHECK(total == planner.value(reset(r, e + 40)));
    const auto ex = planner.exact_state(reset(r, e + 40));
    CHECK(ex.consumed_mask == 0u);
    CHECK(ex.turn == 0);
  }
}

TEST_CASE("oracle rejects bad inputs") {
  GridState s = make_state(simplified(), {0, 0}, {{cell(7, 7), 2}});
  CHECK_THROWS_AS(optimal_return(s, -1), std::invalid_argument);
  GridState t = step(s, Action::Up).next_state;
  CHECK_THROWS_AS(optimal_return(t), std::invalid_argument);
  CHECK_THROWS_AS(optimal_action(t), std::invalid_argument);
  GridState crowded = make_state(simplified(), {0, 0}, {{cell(7, 7), 2}});
  for (int c = 8; c < 8 + 17; ++c) crowded.cells[c] = 3;
  CHECK_THROWS_AS(optimal_return(crowded), std::invalid_argument);
  crowded.cells[8] = 0;
  CHECK_NOTHROW(optimal_return(crowded, 3));
}
