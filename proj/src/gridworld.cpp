#include "vinlab/gridworld.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "vinlab/random.hpp"

namespace vinlab {

int class_reward(ObjectClass c) {
  switch (c) {
    case ObjectClass::Target: return 3;
    case ObjectClass::Attractor: return 1;
    case ObjectClass::Repulsor: return -1;
    case ObjectClass::Empty:
    case ObjectClass::Player: return 0;
  }
  return 0;
}

const char* class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::Empty: return "Empty";
    case ObjectClass::Player: return "Player";
    case ObjectClass::Target: return "Target";
    case ObjectClass::Attractor: return "Attractor";
    case ObjectClass::Repulsor: return "Repulsor";
  }
  return "?";
}

std::optional<ObjectClass> parse_class(const std::string& name) {
  for (int i = 0; i < kNumObjectClasses; ++i) {
    auto c = static_cast<ObjectClass>(i);
    if (name == class_name(c)) return c;
  }
  return std::nullopt;
}

const char* action_name(Action a) {
  switch (a) {
    case Action::Up: return "UP";
    case Action::Down: return "DOWN";
    case Action::Left: return "LEFT";
    case Action::Right: return "RIGHT";
  }
  return "?";
}

const char* variant_name(Variant v) {
  return v == Variant::Simplified ? "simplified" : "autogen";
}

std::optional<Variant> parse_variant(const std::string& name) {
  if (name == "simplified") return Variant::Simplified;
  if (name == "autogen") return Variant::Autogen;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// GameRules

std::vector<int> GameRules::channels_of(ObjectClass c) const {
  std::vector<int> out;
  for (int i = 0; i < num_channels; ++i) {
    if (channel_class[i] == c) out.push_back(i);
  }
  return out;
}

int GameRules::player_channel() const {
  auto ch = channels_of(ObjectClass::Player);
  return ch.empty() ? -1 : ch.front();
}

int GameRules::target_channel() const {
  auto ch = channels_of(ObjectClass::Target);
  return ch.empty() ? -1 : ch.front();
}

void GameRules::validate() const {
  if (num_channels != kSimplifiedChannels && num_channels != kMaxChannels) {
    throw std::logic_error("GameRules: num_channels must be 5 or 8");
  }
  for (int i = num_channels; i < kMaxChannels; ++i) {
    if (channel_class[i].has_value()) throw std::logic_error("GameRules: channel beyond num_channels is mapped");
  }
  if (channel_class[0] != ObjectClass::Empty) throw std::logic_error("GameRules: channel 0 must be Empty");
  if (channels_of(ObjectClass::Empty).size() != 1) throw std::logic_error("GameRules: Empty must map to channel 0 only");
  if (channels_of(ObjectClass::Player).size() != 1) throw std::logic_error("GameRules: exactly one Player channel required");
  if (channels_of(ObjectClass::Target).size() != 1) throw std::logic_error("GameRules: exactly one Target channel required");
  const auto attractors = channels_of(ObjectClass::Attractor).size();
  const auto repulsors = channels_of(ObjectClass::Repulsor).size();
  if (attractors < 1 || attractors > 2) throw std::logic_error("GameRules: Attractor must map to 1 or 2 channels");
  if (repulsors < 1 || repulsors > 2) throw std::logic_error("GameRules: Repulsor must map to 1 or 2 channels");
  if (variant == Variant::Simplified) {
    static constexpr ObjectClass kOrder[] = {ObjectClass::Empty, ObjectClass::Player, ObjectClass::Target,
                                             ObjectClass::Attractor, ObjectClass::Repulsor};
    if (num_channels != kSimplifiedChannels) throw std::logic_error("GameRules: simplified variant has 5 channels");
    for (int i = 0; i < kSimplifiedChannels; ++i) {
      if (channel_class[i] != kOrder[i]) throw std::logic_error("GameRules: simplified channel order violated");
    }
  }
  if (consumable_count.min < 0 || consumable_count.max < consumable_count.min) {
    throw std::logic_error("GameRules: bad consumable count range");
  }
}

std::string GameRules::serialize() const {
  std::ostringstream os;
  os << "seed = " << seed << '\n';
  os << "variant = " << variant_name(variant) << '\n';
  os << "channels = " << num_channels << '\n';
  os << "sites = " << consumable_count.min << ' ' << consumable_count.max << '\n';
  for (int i = 0; i < num_channels; ++i) {
    if (channel_class[i]) os << "channel " << i << " = " << class_name(*channel_class[i]) << '\n';
  }
  return os.str();
}

GameRules GameRules::parse(const std::string& text) {
  GameRules r;
  r.channel_class.fill(std::nullopt);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key, eq;
    ls >> key;
    if (key == "channel") {
      int idx = -1;
      std::string name;
      ls >> idx >> eq >> name;
      auto cls = parse_class(name);
      if (idx < 0 || idx >= kMaxChannels || eq != "=" || !cls) {
        throw std::invalid_argument("GameRules::parse: bad channel line: " + line);
      }
      r.channel_class[idx] = *cls;
      continue;
    }
    ls >> eq;
    if (eq != "=") throw std::invalid_argument("GameRules::parse: bad line: " + line);
    if (key == "seed") {
      ls >> r.seed;
    } else if (key == "variant") {
      std::string v;
      ls >> v;
      auto parsed = parse_variant(v);
      if (!parsed) throw std::invalid_argument("GameRules::parse: unknown variant " + v);
      r.variant = *parsed;
    } else if (key == "channels") {
      ls >> r.num_channels;
    } else if (key == "sites") {
      ls >> r.consumable_count.min >> r.consumable_count.max;
    } else {
      throw std::invalid_argument("GameRules::parse: unknown key " + key);
    }
    if (ls.fail()) throw std::invalid_argument("GameRules::parse: bad value: " + line);
  }
  r.validate();
  return r;
}

GameRules generate_rules(std::uint64_t seed, Variant variant) {
  GameRules r;
  r.seed = seed;
  r.variant = variant;
  r.channel_class.fill(std::nullopt);
  if (variant == Variant::Simplified) {
    r.num_channels = kSimplifiedChannels;
    r.channel_class[0] = ObjectClass::Empty;
    r.channel_class[1] = ObjectClass::Player;
    r.channel_class[2] = ObjectClass::Target;
    r.channel_class[3] = ObjectClass::Attractor;
    r.channel_class[4] = ObjectClass::Repulsor;
    return r;
  }

  r.num_channels = kMaxChannels;
  r.channel_class[0] = ObjectClass::Empty;
  SplitMix64 rng(seed);
  std::array<int, kMaxChannels - 1> pool{};
  std::iota(pool.begin(), pool.end(), 1);
  for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(pool[i], pool[j]);
  }
  const int attractors = rng.range(1, 2);
  const int repulsors = rng.range(1, 2);
  std::size_t next = 0;
  r.channel_class[pool[next++]] = ObjectClass::Player;
  r.channel_class[pool[next++]] = ObjectClass::Target;
  for (int i = 0; i < attractors; ++i) r.channel_class[pool[next++]] = ObjectClass::Attractor;
  for (int i = 0; i < repulsors; ++i) r.channel_class[pool[next++]] = ObjectClass::Repulsor;
  return r;
}

// ---------------------------------------------------------------------------
// Dynamics

Position moved(Position p, Action a) {
  switch (a) {
    case Action::Up: --p.row; break;
    case Action::Down: ++p.row; break;
    case Action::Left: --p.col; break;
    case Action::Right: ++p.col; break;
  }
  return p;
}

ObjectClass GridState::class_at(int cell) const {
  const auto& cls = rules.channel_class[cells[cell]];
  return cls.value_or(ObjectClass::Empty);
}

std::vector<int> GridState::consumable_cells() const {
  std::vector<int> out;
  for (int i = 0; i < kNumCells; ++i) {
    const auto c = class_at(i);
    if (c == ObjectClass::Attractor || c == ObjectClass::Repulsor) out.push_back(i);
  }
  return out;
}

int GridState::non_empty_count() const {
  return static_cast<int>(std::count_if(cells.begin(), cells.end(), [](std::uint8_t c) { return c != 0; }));
}

GridState reset(const GameRules& rules, std::uint64_t episode_seed) {
  GridState s;
  s.rules = rules;
  SplitMix64 rng(derive_seed(episode_seed, rules.seed));

  std::vector<int> placements;  // channel per object, player first
  placements.push_back(rules.player_channel());
  placements.push_back(rules.target_channel());
  for (auto cls : {ObjectClass::Attractor, ObjectClass::Repulsor}) {
    for (int ch : rules.channels_of(cls)) {
      const int n = rng.range(rules.consumable_count.min, rules.consumable_count.max);
      placements.insert(placements.end(), n, ch);
    }
  }
  if (placements.size() > static_cast<std::size_t>(kNumCells)) {
    throw std::invalid_argument("reset: more objects than grid cells");
  }

  std::array<int, kNumCells> order{};
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < placements.size(); ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(kNumCells - i));
    std::swap(order[i], order[j]);
    const int cell = order[i];
    if (i == 0) {
      s.player_pos = {cell / kGridSize, cell % kGridSize};
    } else {
      s.cells[cell] = static_cast<std::uint8_t>(placements[i]);
    }
  }
  s.episode_rng_state = rng.state();
  return s;
}

StepResult step(const GridState& state, Action action) {
  if (state.terminal) throw std::logic_error("step: state is terminal");
  StepResult out{state, 0, false};
  GridState& next = out.next_state;
  next.turn = state.turn + 1;
  next.player_pos = moved(state.player_pos, action);

  if (!next.player_pos.on_grid()) {
    out.reward = kOffGridReward;
    out.done = true;
  } else {
    const int cell = next.player_pos.index();
    const ObjectClass cls = next.class_at(cell);
    out.reward = class_reward(cls);
    if (cls == ObjectClass::Target) out.done = true;
    next.cells[cell] = 0;
  }
  if (next.turn >= kMaxTurns) out.done = true;
  next.terminal = out.done;
  return out;
}

// ---------------------------------------------------------------------------
// Observations

void Observation::write_tensor(Tensor& out) const {
  if (out.shape() != Shape3{kGridSize, kGridSize, num_channels}) {
    out.reshape({kGridSize, kGridSize, num_channels});
  } else {
    out.fill(0.0);
  }
  auto v = out.values();
  for (int i = 0; i < kNumCells; ++i) v[static_cast<std::size_t>(i) * num_channels + channel[i]] = 1.0;
}

Tensor Observation::to_tensor() const {
  Tensor t;
  write_tensor(t);
  return t;
}

Observation observe(const GridState& state) {
  if (state.terminal) throw std::logic_error("observe: state is terminal");
  Observation o;
  o.num_channels = state.rules.num_channels;
  o.channel = state.cells;
  o.channel[state.player_pos.index()] = static_cast<std::uint8_t>(state.rules.player_channel());
  return o;
}

Tensor encode_observation(const GridState& state) { return observe(state).to_tensor(); }

Observation pad_observation(const Observation& obs, int num_channels) {
  if (num_channels < obs.num_channels) throw std::invalid_argument("pad_observation: cannot shrink");
  Observation out = obs;
  out.num_channels = num_channels;
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

struct Glyphs {
  std::array<char, kMaxChannels> by_channel{};
  std::vector<std::pair<char, int>> legend;  // (glyph, channel) in legend order
};

Glyphs glyphs_for(const GameRules& rules) {
  Glyphs g;
  g.by_channel.fill('?');
  auto assign = [&](ObjectClass cls, const char* chars) {
    int k = 0;
    for (int ch : rules.channels_of(cls)) {
      g.by_channel[ch] = chars[k++];
      g.legend.emplace_back(g.by_channel[ch], ch);
    }
  };
  assign(ObjectClass::Empty, ".");
  assign(ObjectClass::Player, "P");
  assign(ObjectClass::Target, "T");
  assign(ObjectClass::Attractor, "+*");
  assign(ObjectClass::Repulsor, "-x");
  return g;
}

}  // namespace

std::string render_ascii(const GridState& state) {
  const Glyphs g = glyphs_for(state.rules);
  std::ostringstream os;
  os << "rules seed=" << state.rules.seed << " variant=" << variant_name(state.rules.variant)
     << " channels=" << state.rules.num_channels << '\n';
  for (const auto& [glyph, ch] : g.legend) {
    os << glyph << " channel " << ch << ' ' << class_name(*state.rules.channel_class[ch]) << '\n';
  }
  os << "turn " << state.turn << (state.terminal ? " terminal" : "") << '\n';
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const Position p{r, c};
      if (p == state.player_pos && !state.terminal) {
        os << 'P';
      } else {
        os << g.by_channel[state.cells[p.index()]];
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace vinlab
