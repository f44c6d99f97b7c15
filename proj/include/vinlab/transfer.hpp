#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vinlab/ddqn.hpp"
#include "vinlab/gridworld.hpp"
#include "vinlab/vinnet.hpp"

namespace vinlab {

// First checkpoint whose reward meets the threshold and whose successor does
// too. The final checkpoint has no successor and counts on its own.
std::optional<long> steps_to_threshold(const TrainingHistory& history, double threshold);

// "attention", "reward", "attention+reward", "action_attention", "vi",
// "q_values"; any '+'-joined list of layer names is accepted.
std::vector<std::string> parse_layer_set(const std::string& text);
std::string layer_set_name(const std::vector<std::string>& layers);
const std::vector<std::string>& standard_layer_sets();

// ---------------------------------------------------------------------------
// Self-transfer: reinitialize part of a trained network, freeze the rest,
// retrain and measure recovery.

struct SelfTransferSpec {
  std::string base_params_file;  // used by the file overload only
  std::vector<std::string> layer_set;
  GameRules rules = generate_rules(0, Variant::Simplified);
  // steps, learning rate, master seed and the rest of the retrain loop.
  TrainConfig train = default_retrain_config();
  // Recovery means coming within this margin of the base reward.
  double recovery_margin = 0.5;
  bool stop_on_recovery = true;
  int base_eval_episodes = 100;

  static TrainConfig default_retrain_config();
  void validate() const;
};

struct SelfTransferResult {
  std::string layer_set;
  double base_reward = 0.0;
  double recovery_threshold = 0.0;
  TrainingHistory history;
  std::optional<long> steps_to_recovery;
  bool frozen_intact = false;
  std::size_t trainable_parameters = 0;
};

SelfTransferResult run_self_transfer(const VinNetwork& base, const SelfTransferSpec& spec);
SelfTransferResult run_self_transfer(const SelfTransferSpec& spec);

// Mean test return of a network under the evaluation protocol of a config.
double base_reward(const VinNetwork& net, const GameRules& rules, const TrainConfig& config, int episodes);

// ---------------------------------------------------------------------------
// Cross-seed transfer on the auto-generated family.

struct TransferSpec {
  std::uint64_t source_seed = 0;
  std::uint64_t target_seed = 1;
  long source_steps = 100000;
  long control_steps = 100000;
  long transfer_steps = 100000;
  double threshold = 2.0;
  // Learning rate of the transfer phase; the base rate when unset.
  std::optional<double> transfer_learning_rate;
  // Shared loop settings; steps and learning rate are overridden per phase.
  TrainConfig train = default_transfer_config();
  // Stop the control and transfer phases once the threshold is held.
  bool stop_at_threshold = true;
  // Off only for the identical-rules limit, where the copied layers are kept.
  bool reinitialize_inputs = true;

  static TrainConfig default_transfer_config();
  void validate() const;
};

struct SpeedupResult {
  std::optional<long> steps_to_threshold_control;
  std::optional<long> steps_to_threshold_transfer;
  std::optional<double> ratio;  // control / max(transfer, 1)
};

SpeedupResult compute_speedup(const TrainingHistory& control, const TrainingHistory& transfer, double threshold);

struct TransferResult {
  TrainingHistory source;
  TrainingHistory control;
  TrainingHistory transfer;
  SpeedupResult speedup;
  bool frozen_intact = false;
  std::size_t transfer_trainable = 0;
  VinNetwork source_network;
};

// Phase 1 trains on the source rules unless `pretrained_source` is given.
TransferResult run_autogen_transfer(const TransferSpec& spec, const VinNetwork* pretrained_source = nullptr);
// Same protocol with explicit rules (the autogen entry point generates them
// from the seeds).
TransferResult run_transfer(const GameRules& source, const GameRules& target, const TransferSpec& spec,
                            const VinNetwork* pretrained_source = nullptr);

// ---------------------------------------------------------------------------
// Seed-pair selection.

struct PairConstraints {
  int target_repulsor_channels = 2;
  // Allowed number of channels 1..7 mapped to the same class in both rules.
  int min_shared_meanings = 0;
  int max_shared_meanings = 0;
  int max_attempts = 100000;
};

int shared_meanings(const GameRules& a, const GameRules& b);
bool pair_satisfies(const GameRules& source, const GameRules& target, const PairConstraints& c);
// Rejection sampling; throws std::runtime_error after max_attempts.
std::pair<std::uint64_t, std::uint64_t> select_seed_pair(SplitMix64& rng, const PairConstraints& c = {});

// ---------------------------------------------------------------------------

// Runs fn(0..count-1) on at most `jobs` threads. The first exception is
// rethrown after all workers finish.
void run_parallel(int count, int jobs, const std::function<void(int)>& fn);

double median(std::vector<double> values);

}  // namespace vinlab
