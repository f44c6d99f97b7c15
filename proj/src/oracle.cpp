#include "vinlab/oracle.hpp"

#include <algorithm>
#include <stdexcept>

namespace vinlab {

namespace {

struct Model {
  std::vector<int> site_cells;
  std::vector<int> site_reward;
  std::array<int, kNumCells> site_of_cell{};
  int target_cell = -1;
  int horizon = 0;

  struct Outcome {
    int reward;
    bool done;
    int next_pos;
    std::uint32_t next_mask;
  };

  Outcome transition(int pos, std::uint32_t mask, int a) const {
    const Position p = moved(Position{pos / kGridSize, pos % kGridSize}, static_cast<Action>(a));
    if (!p.on_grid()) return {kOffGridReward, true, pos, mask};
    const int cell = p.index();
    if (cell == target_cell) return {class_reward(ObjectClass::Target), true, cell, mask};
    const int s = site_of_cell[cell];
    if (s >= 0 && !(mask >> s & 1u)) return {site_reward[s], false, cell, mask | (1u << s)};
    return {0, false, cell, mask};
  }

  std::size_t layer_size() const { return (std::size_t{1} << site_cells.size()) * kNumCells; }

  // V_h from V_{h-1}.
  void advance(const std::vector<int>& prev, std::vector<int>& next) const {
    const std::uint32_t masks = 1u << site_cells.size();
    next.resize(layer_size());
    for (std::uint32_t m = 0; m < masks; ++m) {
      for (int pos = 0; pos < kNumCells; ++pos) {
        int best = 0;
        for (int a = 0; a < kNumActions; ++a) {
          const auto o = transition(pos, m, a);
          const int v = o.reward + (o.done ? 0 : prev[static_cast<std::size_t>(o.next_mask) * kNumCells + o.next_pos]);
          if (a == 0 || v > best) best = v;
        }
        next[static_cast<std::size_t>(m) * kNumCells + pos] = best;
      }
    }
  }

  // Action values at (pos, mask) given V_{h-1}.
  std::array<int, kNumActions> q_values(const std::vector<int>& prev, int pos, std::uint32_t mask,
                                        bool horizon_left) const {
    std::array<int, kNumActions> q{};
    for (int a = 0; a < kNumActions; ++a) {
      const auto o = transition(pos, mask, a);
      q[a] = o.reward + (o.done || !horizon_left ? 0 : prev[static_cast<std::size_t>(o.next_mask) * kNumCells + o.next_pos]);
    }
    return q;
  }
};

Model build_model(const GridState& state, int horizon) {
  if (state.terminal) throw std::invalid_argument("oracle: state is terminal");
  if (horizon < 0) throw std::invalid_argument("oracle: horizon must be non-negative");
  if (!state.player_pos.on_grid()) throw std::invalid_argument("oracle: player is off the grid");
  Model m;
  m.site_of_cell.fill(-1);
  for (int cell = 0; cell < kNumCells; ++cell) {
    const ObjectClass c = state.class_at(cell);
    if (c == ObjectClass::Target) {
      m.target_cell = cell;
    } else if (c == ObjectClass::Attractor || c == ObjectClass::Repulsor) {
      m.site_of_cell[cell] = static_cast<int>(m.site_cells.size());
      m.site_cells.push_back(cell);
      m.site_reward.push_back(class_reward(c));
    }
  }
  if (m.site_cells.size() > static_cast<std::size_t>(kMaxOracleSites)) {
    throw std::invalid_argument("oracle: more than 16 consumable sites");
  }
  m.horizon = std::min(horizon, kMaxTurns - state.turn);
  return m;
}

int argmax_low(const std::array<int, kNumActions>& q) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a) {
    if (q[a] > q[best]) best = a;
  }
  return best;
}

// V_{h-1} for the root's horizon h, by rolling layers.
std::vector<int> value_before_root(const Model& m) {
  std::vector<int> prev(m.layer_size(), 0), next;
  for (int h = 1; h < m.horizon; ++h) {
    m.advance(prev, next);
    prev.swap(next);
  }
  return prev;
}

}  // namespace

int optimal_return(const GridState& state, int horizon) {
  const Model m = build_model(state, horizon);
  if (m.horizon <= 0) return 0;
  const auto prev = value_before_root(m);
  const auto q = m.q_values(prev, state.player_pos.index(), 0, m.horizon > 1);
  return *std::max_element(q.begin(), q.end());
}

Action optimal_action(const GridState& state, int horizon) {
  const Model m = build_model(state, horizon);
  if (m.horizon <= 0) return Action::Up;
  const auto prev = value_before_root(m);
  return static_cast<Action>(argmax_low(m.q_values(prev, state.player_pos.index(), 0, m.horizon > 1)));
}

// ---------------------------------------------------------------------------

ExactPlanner::ExactPlanner(const GridState& root, int horizon) : root_(root) {
  const Model m = build_model(root, horizon);
  horizon_ = m.horizon;
  site_cells_ = m.site_cells;
  site_reward_ = m.site_reward;
  site_of_cell_ = m.site_of_cell;
  target_cell_ = m.target_cell;
  constexpr std::size_t kMaxEntries = std::size_t{1} << 27;
  if (m.layer_size() * static_cast<std::size_t>(horizon_ + 1) > kMaxEntries) {
    throw std::invalid_argument("ExactPlanner: value table too large, use optimal_return");
  }
  layers_.assign(static_cast<std::size_t>(horizon_) + 1, {});
  layers_[0].assign(m.layer_size(), 0);
  for (int h = 1; h <= horizon_; ++h) m.advance(layers_[h - 1], layers_[h]);
}

ExactPlanner::Outcome ExactPlanner::transition(int pos, std::uint32_t mask, int a) const {
  const Position p = moved(Position{pos / kGridSize, pos % kGridSize}, static_cast<Action>(a));
  if (!p.on_grid()) return {kOffGridReward, true, pos, mask};
  const int cell = p.index();
  if (cell == target_cell_) return {class_reward(ObjectClass::Target), true, cell, mask};
  const int s = site_of_cell_[cell];
  if (s >= 0 && !(mask >> s & 1u)) return {site_reward_[s], false, cell, mask | (1u << s)};
  return {0, false, cell, mask};
}

int ExactPlanner::remaining(int turn) const { return horizon_ - (turn - root_.turn); }

int ExactPlanner::layer_value(int h, int pos, std::uint32_t mask) const {
  return layers_[h][static_cast<std::size_t>(mask) * kNumCells + pos];
}

ExactState ExactPlanner::exact_state(const GridState& state) const {
  if (state.terminal) throw std::invalid_argument("ExactPlanner: state is terminal");
  ExactState s{state.player_pos, 0, state.turn};
  for (std::size_t i = 0; i < site_cells_.size(); ++i) {
    if (state.cells[site_cells_[i]] == 0) s.consumed_mask |= 1u << i;
  }
  return s;
}

int ExactPlanner::value(const ExactState& s) const {
  const int h = remaining(s.turn);
  if (h <= 0) return 0;
  if (h > horizon_) throw std::invalid_argument("ExactPlanner: state precedes the root");
  return layer_value(h, s.player_pos.index(), s.consumed_mask);
}

Action ExactPlanner::action(const ExactState& s) const {
  const int h = remaining(s.turn);
  if (h <= 0) return Action::Up;
  if (h > horizon_) throw std::invalid_argument("ExactPlanner: state precedes the root");
  std::array<int, kNumActions> q{};
  for (int a = 0; a < kNumActions; ++a) {
    const auto o = transition(s.player_pos.index(), s.consumed_mask, a);
    q[a] = o.reward + (o.done ? 0 : layer_value(h - 1, o.next_pos, o.next_mask));
  }
  return static_cast<Action>(argmax_low(q));
}

int ExactPlanner::value(const GridState& state) const { return value(exact_state(state)); }
Action ExactPlanner::action(const GridState& state) const { return action(exact_state(state)); }

}  // namespace vinlab
