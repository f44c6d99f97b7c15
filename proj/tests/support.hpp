#pragma once

#include <initializer_list>
#include <stdexcept>
#include <utility>

#include "vinlab/gridworld.hpp"

namespace vinlab::testing {

inline int cell(int row, int col) { return row * kGridSize + col; }

// Board with only the listed (cell, channel) sites and the player.
inline GridState make_state(const GameRules& rules, Position player,
                            std::initializer_list<std::pair<int, int>> sites = {}) {
  GridState s;
  s.rules = rules;
  s.player_pos = player;
  for (auto [c, ch] : sites) s.cells[c] = static_cast<std::uint8_t>(ch);
  return s;
}

inline GameRules simplified() { return generate_rules(0, Variant::Simplified); }

// Simplified class layout on the 8-channel autogen object space.
inline GameRules padded_simplified() {
  GameRules r = simplified();
  r.variant = Variant::Autogen;
  r.num_channels = kMaxChannels;
  return r;
}

}  // namespace vinlab::testing
