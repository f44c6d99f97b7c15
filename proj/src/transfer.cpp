#include "vinlab/transfer.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace vinlab {

std::optional<long> steps_to_threshold(const TrainingHistory& history, double threshold) {
  const auto& c = history.checkpoints;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i].avg_test_reward < threshold) continue;
    if (i + 1 == c.size() || c[i + 1].avg_test_reward >= threshold) return c[i].step;
  }
  return std::nullopt;
}

std::vector<std::string> parse_layer_set(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string part;
  while (std::getline(is, part, '+')) {
    layer_id(part);  // validates
    if (std::find(out.begin(), out.end(), part) != out.end()) {
      throw std::invalid_argument("layer set repeats " + part);
    }
    out.push_back(part);
  }
  if (out.empty()) throw std::invalid_argument("empty layer set");
  return out;
}

std::string layer_set_name(const std::vector<std::string>& layers) {
  std::string s;
  for (const auto& l : layers) {
    if (!s.empty()) s += '+';
    s += l;
  }
  return s;
}

const std::vector<std::string>& standard_layer_sets() {
  static const std::vector<std::string> sets = {"attention", "reward",         "attention+reward",
                                                "action_attention", "vi", "q_values"};
  return sets;
}

// ---------------------------------------------------------------------------

TrainConfig SelfTransferSpec::default_retrain_config() {
  TrainConfig c;
  c.steps = 100000;
  c.eval_interval = 250;
  return c;
}

void SelfTransferSpec::validate() const {
  if (layer_set.empty()) throw std::invalid_argument("self-transfer: layer set is empty");
  for (const auto& l : layer_set) layer_id(l);
  if (!(recovery_margin >= 0.0)) throw std::invalid_argument("self-transfer: recovery margin must be >= 0");
  if (base_eval_episodes <= 0) throw std::invalid_argument("self-transfer: base_eval_episodes must be > 0");
  train.validate();
  rules.validate();
}

double base_reward(const VinNetwork& net, const GameRules& rules, const TrainConfig& config, int episodes) {
  SplitMix64 policy(derive_seed(config.master_seed, "base-eval-policy"));
  return evaluate(net, rules, episodes, config.schedule.eps_test, derive_seed(config.master_seed, "eval-episodes"),
                  policy);
}

namespace {

bool frozen_layers_match(const VinNetwork& after, const VinNetwork& before) {
  for (int i = 0; i < kNumLayers; ++i) {
    const auto& l = after.layers()[i];
    if (l.frozen && !l.same_values(before.layers()[i])) return false;
  }
  return true;
}

// Reinitialize `layers`, freeze everything else.
void prepare_retrain(VinNetwork& net, const std::vector<std::string>& layers, std::uint64_t seed) {
  set_all_frozen(net, true);
  SplitMix64 rng(seed);
  for (const auto& name : layers) {
    reinitialize_layer(net, name, rng);
    net.layer(name).frozen = false;
  }
}

}  // namespace

SelfTransferResult run_self_transfer(const VinNetwork& base, const SelfTransferSpec& spec) {
  spec.validate();
  if (base.num_channels() != spec.rules.num_channels) {
    throw std::invalid_argument("self-transfer: base network channels do not match the rules");
  }
  SelfTransferResult r;
  r.layer_set = layer_set_name(spec.layer_set);

  VinNetwork net = base;
  set_all_frozen(net, false);
  r.base_reward = base_reward(net, spec.rules, spec.train, spec.base_eval_episodes);
  r.recovery_threshold = r.base_reward - spec.recovery_margin;

  prepare_retrain(net, spec.layer_set, derive_seed(spec.train.master_seed, "reinit:" + r.layer_set));
  r.trainable_parameters = net.trainable_parameter_count();

  TrainConfig cfg = spec.train;
  if (spec.stop_on_recovery) cfg.stop_threshold = r.recovery_threshold;
  r.history = run_training(spec.rules, net, cfg);
  r.steps_to_recovery = steps_to_threshold(r.history, r.recovery_threshold);
  r.frozen_intact = frozen_layers_match(net, base);
  return r;
}

SelfTransferResult run_self_transfer(const SelfTransferSpec& spec) {
  return run_self_transfer(VinNetwork::load_file(spec.base_params_file), spec);
}

// ---------------------------------------------------------------------------

TrainConfig TransferSpec::default_transfer_config() {
  TrainConfig c;
  c.eval_interval = 250;
  return c;
}

void TransferSpec::validate() const {
  if (source_seed == target_seed) throw std::invalid_argument("transfer: source and target seeds must differ");
  if (source_steps < 0 || control_steps < 0 || transfer_steps < 0) {
    throw std::invalid_argument("transfer: step counts must be >= 0");
  }
  // Returns lie in [-3 - repulsors, 3 + attractors]; at most 2 * 3 of each.
  if (!(threshold > -9.0 && threshold <= 9.0)) throw std::invalid_argument("transfer: threshold out of range");
  if (transfer_learning_rate && !(*transfer_learning_rate > 0.0)) {
    throw std::invalid_argument("transfer: learning rate must be > 0");
  }
  train.validate();
}

SpeedupResult compute_speedup(const TrainingHistory& control, const TrainingHistory& transfer, double threshold) {
  SpeedupResult s;
  s.steps_to_threshold_control = steps_to_threshold(control, threshold);
  s.steps_to_threshold_transfer = steps_to_threshold(transfer, threshold);
  if (s.steps_to_threshold_control && s.steps_to_threshold_transfer) {
    s.ratio = static_cast<double>(*s.steps_to_threshold_control) /
              static_cast<double>(std::max(*s.steps_to_threshold_transfer, 1L));
  }
  return s;
}

TransferResult run_transfer(const GameRules& source, const GameRules& target, const TransferSpec& spec,
                            const VinNetwork* pretrained_source) {
  spec.train.validate();
  if (source.num_channels != target.num_channels) throw std::invalid_argument("transfer: channel count mismatch");
  const std::uint64_t master = spec.train.master_seed;
  TransferResult r;

  if (pretrained_source) {
    if (pretrained_source->num_channels() != source.num_channels) {
      throw std::invalid_argument("transfer: pretrained network channels do not match the rules");
    }
    r.source_network = *pretrained_source;
    set_all_frozen(r.source_network, false);
  } else {
    r.source_network = build_network(source.num_channels, kDefaultViIterations, derive_seed(master, "init:source"));
    TrainConfig cfg = spec.train;
    cfg.steps = spec.source_steps;
    cfg.master_seed = derive_seed(master, "phase:source");
    r.source = run_training(source, r.source_network, cfg);
  }

  {
    VinNetwork control = build_network(target.num_channels, r.source_network.vi_iterations(),
                                       derive_seed(master, "init:control"));
    TrainConfig cfg = spec.train;
    cfg.steps = spec.control_steps;
    cfg.master_seed = derive_seed(master, "phase:target");
    if (spec.stop_at_threshold) cfg.stop_threshold = spec.threshold;
    r.control = run_training(target, control, cfg);
  }

  VinNetwork net = r.source_network;
  if (spec.reinitialize_inputs) {
    prepare_retrain(net, {"attention", "reward"}, derive_seed(master, "reinit:attention+reward"));
  } else {
    set_all_frozen(net, true);
    net.layer(LayerId::Attention).frozen = false;
    net.layer(LayerId::Reward).frozen = false;
  }
  r.transfer_trainable = net.trainable_parameter_count();
  TrainConfig cfg = spec.train;
  cfg.steps = spec.transfer_steps;
  // Same environment streams as the control so the two phases see the same
  // episodes and evaluation set.
  cfg.master_seed = derive_seed(master, "phase:target");
  if (spec.transfer_learning_rate) cfg.learning_rate = *spec.transfer_learning_rate;
  if (spec.stop_at_threshold) cfg.stop_threshold = spec.threshold;
  r.transfer = run_training(target, net, cfg);
  r.frozen_intact = frozen_layers_match(net, r.source_network);

  r.speedup = compute_speedup(r.control, r.transfer, spec.threshold);
  return r;
}

TransferResult run_autogen_transfer(const TransferSpec& spec, const VinNetwork* pretrained_source) {
  spec.validate();
  return run_transfer(generate_rules(spec.source_seed, Variant::Autogen),
                      generate_rules(spec.target_seed, Variant::Autogen), spec, pretrained_source);
}

// ---------------------------------------------------------------------------

int shared_meanings(const GameRules& a, const GameRules& b) {
  int n = 0;
  for (int ch = 1; ch < kMaxChannels; ++ch) {
    if (a.channel_class[ch] && a.channel_class[ch] == b.channel_class[ch]) ++n;
  }
  return n;
}

bool pair_satisfies(const GameRules& source, const GameRules& target, const PairConstraints& c) {
  if (source.seed == target.seed) return false;
  if (static_cast<int>(target.channels_of(ObjectClass::Repulsor).size()) != c.target_repulsor_channels) return false;
  const int shared = shared_meanings(source, target);
  return shared >= c.min_shared_meanings && shared <= c.max_shared_meanings;
}

std::pair<std::uint64_t, std::uint64_t> select_seed_pair(SplitMix64& rng, const PairConstraints& c) {
  if (c.max_attempts <= 0) throw std::invalid_argument("select_seed_pair: max_attempts must be > 0");
  for (int i = 0; i < c.max_attempts; ++i) {
    // Small seeds keep the pair easy to type on a command line.
    const std::uint64_t s = rng.below(1000000);
    const std::uint64_t t = rng.below(1000000);
    if (pair_satisfies(generate_rules(s, Variant::Autogen), generate_rules(t, Variant::Autogen), c)) return {s, t};
  }
  throw std::runtime_error("select_seed_pair: no pair satisfied the constraints within " +
                           std::to_string(c.max_attempts) + " attempts");
}

// ---------------------------------------------------------------------------

void run_parallel(int count, int jobs, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  jobs = std::clamp(jobs, 1, count);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace vinlab
