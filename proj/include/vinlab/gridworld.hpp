#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vinlab/tensor.hpp"

namespace vinlab {

inline constexpr int kGridSize = 8;
inline constexpr int kNumCells = kGridSize * kGridSize;
inline constexpr int kMaxTurns = 100;
inline constexpr int kMaxChannels = 8;
inline constexpr int kSimplifiedChannels = 5;
inline constexpr int kNumActions = 4;

enum class ObjectClass : std::uint8_t { Empty, Player, Target, Attractor, Repulsor };
inline constexpr int kNumObjectClasses = 5;

enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };

enum class Variant { Simplified, Autogen };

// Reward for moving onto a cell of the given class.
int class_reward(ObjectClass c);
const char* class_name(ObjectClass c);
std::optional<ObjectClass> parse_class(const std::string& name);
const char* action_name(Action a);
const char* variant_name(Variant v);
std::optional<Variant> parse_variant(const std::string& name);

inline constexpr int kOffGridReward = -3;

struct CountRange {
  int min = 1;
  int max = 3;
  bool operator==(const CountRange&) const = default;
};

// One member of the game family: which observation channel carries which
// object class. Channels never assigned are left unmapped and never emitted.
struct GameRules {
  std::uint64_t seed = 0;
  Variant variant = Variant::Simplified;
  int num_channels = kSimplifiedChannels;
  std::array<std::optional<ObjectClass>, kMaxChannels> channel_class{};
  // Sites placed per mapped Attractor/Repulsor channel at reset.
  CountRange consumable_count{};

  bool operator==(const GameRules&) const = default;

  int player_channel() const;
  int target_channel() const;
  std::vector<int> channels_of(ObjectClass c) const;

  // Throws std::logic_error describing the first violated invariant.
  void validate() const;

  // `seed = <n>` then `channel <i> = <class-name>` per mapped channel.
  std::string serialize() const;
  static GameRules parse(const std::string& text);
};

GameRules generate_rules(std::uint64_t seed, Variant variant);

struct Position {
  int row = 0;
  int col = 0;
  bool operator==(const Position&) const = default;
  bool on_grid() const { return row >= 0 && row < kGridSize && col >= 0 && col < kGridSize; }
  int index() const { return row * kGridSize + col; }
};

Position moved(Position p, Action a);

struct GridState {
  // Terrain channel per cell; 0 (the Empty channel) for empty cells. The
  // player is not stored here, the cell under the player is always empty.
  std::array<std::uint8_t, kNumCells> cells{};
  Position player_pos{};
  int turn = 0;
  bool terminal = false;
  GameRules rules{};
  std::uint64_t episode_rng_state = 0;

  bool operator==(const GridState&) const = default;

  ObjectClass class_at(int cell) const;
  // Cells currently holding an Attractor or Repulsor site.
  std::vector<int> consumable_cells() const;
  int non_empty_count() const;
};

struct StepResult {
  GridState next_state;
  int reward = 0;
  bool done = false;
};

GridState reset(const GameRules& rules, std::uint64_t episode_seed);
StepResult step(const GridState& state, Action action);

// Compact observation: channel index per cell, player cell already written on
// the Player channel. Cheap to store in replay memory.
struct Observation {
  std::array<std::uint8_t, kNumCells> channel{};
  int num_channels = kSimplifiedChannels;
  bool operator==(const Observation&) const = default;

  Tensor to_tensor() const;
  void write_tensor(Tensor& out) const;
};

Observation observe(const GridState& state);
Tensor encode_observation(const GridState& state);

// Embeds a simplified observation into an 8-channel one by zero-padding
// channels 5..7.
Observation pad_observation(const Observation& obs, int num_channels);

std::string render_ascii(const GridState& state);

}  // namespace vinlab
