#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vinlab/gridworld.hpp"
#include "vinlab/random.hpp"
#include "vinlab/vinnet.hpp"

namespace vinlab {

struct Schedule {
  double eps_start = 1.0;
  double eps_end = 0.1;
  long anneal_steps = 50000;
  double eps_test = 0.05;
};

double epsilon_at(const Schedule& schedule, long step);

// Lowest index among the maximal entries.
Action greedy_action(std::span<const double> q);
Action select_action(std::span<const double> q, double epsilon, SplitMix64& rng);

struct Transition {
  Observation obs;
  Action action = Action::Up;
  double reward = 0.0;
  std::optional<Observation> next_obs;  // empty exactly when done
  bool done = false;
};

// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t insertions() const { return inserted_; }
  // i-th oldest transition still held.
  const Transition& operator[](std::size_t i) const;
  const Transition& sample(SplitMix64& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;  // slot of the oldest item once full
  std::uint64_t inserted_ = 0;
};

double ddqn_target(const Transition& t, const VinNetwork& online, const VinNetwork& target, double gamma);

// Scratch buffers for train_step so a training loop allocates once.
struct TrainScratch {
  ForwardCache online;
  ForwardCache next_online;
  ForwardCache next_target;
};

// One minibatch update: uniform sampling with replacement, mean squared TD
// error on the taken action only, one optimizer step. Returns the loss.
double train_step(VinNetwork& online, const VinNetwork& target, const ReplayBuffer& buffer, int batch_size,
                  double gamma, Adam& optimizer, SplitMix64& rng, TrainScratch& scratch);
double train_step(VinNetwork& online, const VinNetwork& target, const ReplayBuffer& buffer, int batch_size,
                  double gamma, Adam& optimizer, SplitMix64& rng);

struct Checkpoint;

// Passed to TrainConfig::on_checkpoint after every evaluation.
struct TrainProgress {
  const Checkpoint& checkpoint;
  const VinNetwork& net;
  double mean_loss;  // over the train steps since the previous checkpoint
};

struct TrainConfig {
  long steps = 100000;
  long warmup = 500;
  long target_update_interval = 500;
  long eval_interval = 1000;
  int eval_episodes = 20;
  int batch_size = 32;
  std::size_t buffer_capacity = 50000;
  // 0.99 leaves neighbouring actions too close in value to separate; see README
  double gamma = 0.9;
  double learning_rate = 1e-3;
  Schedule schedule{};
  std::uint64_t master_seed = 0;
  // Stop once two consecutive checkpoints reach this average reward.
  std::optional<double> stop_threshold;
  // Observer only; not part of describe() or the reproducibility contract.
  std::function<void(const TrainProgress&)> on_checkpoint;

  void validate() const;
  std::string describe() const;
};

struct Checkpoint {
  long step = 0;
  double avg_test_reward = 0.0;
  double epsilon = 0.0;
  bool operator==(const Checkpoint&) const = default;
};

struct TrainingHistory {
  std::vector<Checkpoint> checkpoints;
  std::string config_snapshot;

  // `step,avg_test_reward,epsilon`, one row per checkpoint.
  std::string to_csv() const;
  static TrainingHistory from_csv(const std::string& text);
  void save_csv(const std::string& path) const;
  static TrainingHistory load_csv(const std::string& path);

  double final_reward() const;
  // Mean of the last n checkpoints (fewer if the history is shorter).
  double tail_mean(std::size_t n) const;
};

// Average undiscounted return of `episodes` epsilon-greedy episodes whose
// starting positions come from `episode_seed_base` + index.
double evaluate(const VinNetwork& net, const GameRules& rules, int episodes, double epsilon,
                std::uint64_t episode_seed_base, SplitMix64& policy_rng);

// Mean return of uniformly random actions over `episodes` episodes.
double random_policy_return(const GameRules& rules, int episodes, std::uint64_t seed);

TrainingHistory run_training(const GameRules& rules, VinNetwork& net, const TrainConfig& config);

}  // namespace vinlab
