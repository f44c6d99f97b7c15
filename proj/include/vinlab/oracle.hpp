#pragma once

#include <cstdint>
#include <vector>

#include "vinlab/gridworld.hpp"

namespace vinlab {

inline constexpr int kMaxOracleSites = 16;

// Planner state: which of the root's consumable sites are gone.
struct ExactState {
  Position player_pos{};
  std::uint32_t consumed_mask = 0;
  int turn = 0;
  bool operator==(const ExactState&) const = default;
};

// Exact undiscounted backward induction over (position, consumed mask,
// remaining moves). The horizon is clamped to the turns left in the episode.
// Throws std::invalid_argument on terminal states, negative horizons and more
// than 16 consumable sites.
int optimal_return(const GridState& state, int horizon = kMaxTurns);
// Argmax of reward plus successor value; lowest action index on ties.
Action optimal_action(const GridState& state, int horizon = kMaxTurns);

// Keeps every value layer so a whole rollout from `root` is answered from one
// table. Memory is (horizon + 1) * 64 * 2^sites ints.
class ExactPlanner {
 public:
  explicit ExactPlanner(const GridState& root, int horizon = kMaxTurns);

  int sites() const { return static_cast<int>(site_cells_.size()); }
  int horizon() const { return horizon_; }
  // Only states reachable from the root are valid arguments.
  ExactState exact_state(const GridState& state) const;
  int value(const GridState& state) const;
  Action action(const GridState& state) const;
  int value(const ExactState& s) const;
  Action action(const ExactState& s) const;

 private:
  struct Outcome {
    int reward;
    bool done;
    int next_pos;
    std::uint32_t next_mask;
  };
  Outcome transition(int pos, std::uint32_t mask, int a) const;
  int remaining(int turn) const;
  int layer_value(int h, int pos, std::uint32_t mask) const;

  GridState root_;
  int horizon_ = 0;
  std::vector<int> site_cells_;
  std::vector<int> site_reward_;
  std::array<int, kNumCells> site_of_cell_{};
  int target_cell_ = -1;
  std::vector<std::vector<int>> layers_;  // layers_[h][mask * 64 + pos]
};

}  // namespace vinlab
