#include "vinlab/ddqn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vinlab {

double epsilon_at(const Schedule& s, long step) {
  if (step < 0) throw std::invalid_argument("epsilon_at: negative step");
  if (s.anneal_steps <= 0 || step >= s.anneal_steps) return s.eps_end;
  const double frac = static_cast<double>(step) / static_cast<double>(s.anneal_steps);
  return s.eps_start + (s.eps_end - s.eps_start) * frac;
}

Action greedy_action(std::span<const double> q) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a) {
    if (q[a] > q[best]) best = a;
  }
  return static_cast<Action>(best);
}

Action select_action(std::span<const double> q, double epsilon, SplitMix64& rng) {
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("select_action: epsilon outside [0, 1]");
  if (rng.uniform() < epsilon) return static_cast<Action>(rng.below(kNumActions));
  return greedy_action(q);
}

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (t.done == t.next_obs.has_value()) {
    throw std::invalid_argument("ReplayBuffer: done must hold exactly when next_obs is absent");
  }
  ++inserted_;
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::operator[](std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range("ReplayBuffer: index out of range");
  return items_[(head_ + i) % items_.size()];
}

const Transition& ReplayBuffer::sample(SplitMix64& rng) const {
  if (items_.empty()) throw std::logic_error("ReplayBuffer: sample from empty buffer");
  return items_[rng.below(items_.size())];
}

// ---------------------------------------------------------------------------
// Targets and updates

namespace {

double bootstrap(const Transition& t, const VinNetwork& online, const VinNetwork& target, double gamma,
                 ForwardCache& online_cache, ForwardCache& target_cache) {
  if (t.done) return t.reward;
  const auto q_online = forward_q(online, *t.next_obs, online_cache);
  const auto a = static_cast<int>(greedy_action(q_online));
  const auto q_target = forward_q(target, *t.next_obs, target_cache);
  return t.reward + gamma * q_target[a];
}

}  // namespace

double ddqn_target(const Transition& t, const VinNetwork& online, const VinNetwork& target, double gamma) {
  ForwardCache a, b;
  return bootstrap(t, online, target, gamma, a, b);
}

double train_step(VinNetwork& online, const VinNetwork& target, const ReplayBuffer& buffer, int batch_size,
                  double gamma, Adam& optimizer, SplitMix64& rng, TrainScratch& scratch) {
  if (batch_size <= 0) throw std::invalid_argument("train_step: batch_size must be positive");
  if (buffer.size() < static_cast<std::size_t>(batch_size)) {
    throw std::logic_error("train_step: replay buffer holds fewer transitions than one batch");
  }
  const bool any_trainable = online.trainable_parameter_count() > 0;
  double loss = 0.0;
  QValues dq{};
  for (int b = 0; b < batch_size; ++b) {
    const Transition& t = buffer.sample(rng);
    const double y = bootstrap(t, online, target, gamma, scratch.next_online, scratch.next_target);
    const auto q = forward_q(online, t.obs, scratch.online);
    const int a = static_cast<int>(t.action);
    const double err = q[a] - y;
    loss += err * err;
    if (any_trainable) {
      dq.fill(0.0);
      dq[a] = 2.0 * err / batch_size;
      backward_q(online, scratch.online, dq);
    }
  }
  optimizer.step(online.layers());
  return loss / batch_size;
}

double train_step(VinNetwork& online, const VinNetwork& target, const ReplayBuffer& buffer, int batch_size,
                  double gamma, Adam& optimizer, SplitMix64& rng) {
  TrainScratch scratch;
  return train_step(online, target, buffer, batch_size, gamma, optimizer, rng, scratch);
}

// ---------------------------------------------------------------------------
// Config and history

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("TrainConfig: " + m); };
  if (steps < 0) fail("steps must be >= 0");
  if (warmup < 0) fail("warmup must be >= 0");
  if (target_update_interval <= 0) fail("target_update_interval must be > 0");
  if (eval_interval <= 0) fail("eval_interval must be > 0");
  if (eval_episodes <= 0) fail("eval_episodes must be > 0");
  if (batch_size <= 0) fail("batch_size must be > 0");
  if (buffer_capacity < static_cast<std::size_t>(batch_size)) fail("buffer_capacity must hold one batch");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(schedule.eps_start >= 0.0 && schedule.eps_start <= 1.0 && schedule.eps_end >= 0.0 &&
        schedule.eps_end <= schedule.eps_start && schedule.eps_test >= 0.0 && schedule.eps_test <= 1.0)) {
    fail("epsilon schedule must satisfy 0 <= end <= start <= 1");
  }
  if (schedule.anneal_steps < 0) fail("anneal_steps must be >= 0");
}

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os << "steps=" << steps << " warmup=" << warmup << " target_update=" << target_update_interval
     << " eval_interval=" << eval_interval << " eval_episodes=" << eval_episodes << " batch=" << batch_size
     << " buffer=" << buffer_capacity << " gamma=" << format_double(gamma)
     << " lr=" << format_double(learning_rate) << " eps=" << format_double(schedule.eps_start) << "->"
     << format_double(schedule.eps_end) << "/" << schedule.anneal_steps
     << " eps_test=" << format_double(schedule.eps_test) << " seed=" << master_seed;
  return os.str();
}

std::string TrainingHistory::to_csv() const {
  std::ostringstream os;
  os << "step,avg_test_reward,epsilon\n";
  for (const auto& c : checkpoints) {
    os << c.step << ',' << format_double(c.avg_test_reward) << ',' << format_double(c.epsilon) << '\n';
  }
  return os.str();
}

TrainingHistory TrainingHistory::from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "step,avg_test_reward,epsilon") {
    throw std::invalid_argument("history CSV: missing header");
  }
  TrainingHistory h;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c)) {
      throw std::invalid_argument("history CSV: bad row: " + line);
    }
    Checkpoint cp;
    try {
      cp.step = std::stol(a);
      cp.avg_test_reward = std::stod(b);
      cp.epsilon = std::stod(c);
    } catch (const std::exception&) {
      throw std::invalid_argument("history CSV: bad row: " + line);
    }
    if (!h.checkpoints.empty() && cp.step <= h.checkpoints.back().step) {
      throw std::invalid_argument("history CSV: steps must be strictly increasing");
    }
    h.checkpoints.push_back(cp);
  }
  return h;
}

void TrainingHistory::save_csv(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << to_csv();
}

TrainingHistory TrainingHistory::load_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return from_csv(ss.str());
}

double TrainingHistory::final_reward() const {
  if (checkpoints.empty()) throw std::logic_error("TrainingHistory: empty");
  return checkpoints.back().avg_test_reward;
}

double TrainingHistory::tail_mean(std::size_t n) const {
  if (checkpoints.empty()) throw std::logic_error("TrainingHistory: empty");
  n = std::min(n, checkpoints.size());
  double s = 0.0;
  for (std::size_t i = checkpoints.size() - n; i < checkpoints.size(); ++i) s += checkpoints[i].avg_test_reward;
  return s / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Evaluation and the training loop

double evaluate(const VinNetwork& net, const GameRules& rules, int episodes, double epsilon,
                std::uint64_t episode_seed_base, SplitMix64& policy_rng) {
  ForwardCache cache;
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    GridState s = reset(rules, episode_seed_base + static_cast<std::uint64_t>(e));
    while (!s.terminal) {
      Action a;
      if (policy_rng.uniform() < epsilon) {
        a = static_cast<Action>(policy_rng.below(kNumActions));
      } else {
        a = greedy_action(forward_q(net, observe(s), cache));
      }
      auto r = step(s, a);
      total += r.reward;
      s = std::move(r.next_state);
    }
  }
  return total / episodes;
}

double random_policy_return(const GameRules& rules, int episodes, std::uint64_t seed) {
  SplitMix64 rng(seed);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    GridState s = reset(rules, rng.next());
    while (!s.terminal) {
      auto r = step(s, static_cast<Action>(rng.below(kNumActions)));
      total += r.reward;
      s = std::move(r.next_state);
    }
  }
  return total / episodes;
}

TrainingHistory run_training(const GameRules& rules, VinNetwork& net, const TrainConfig& config) {
  config.validate();
  if (net.num_channels() != rules.num_channels) {
    throw std::invalid_argument("run_training: network channels do not match the rules");
  }

  TrainingHistory history;
  history.config_snapshot = config.describe();

  const std::uint64_t eval_base = derive_seed(config.master_seed, "eval-episodes");
  SplitMix64 eval_rng(derive_seed(config.master_seed, "eval-policy"));
  SplitMix64 episode_rng(derive_seed(config.master_seed, "train-episodes"));
  SplitMix64 policy_rng(derive_seed(config.master_seed, "train-policy"));
  SplitMix64 replay_rng(derive_seed(config.master_seed, "replay"));

  VinNetwork target = net;
  Adam optimizer(AdamConfig{.learning_rate = config.learning_rate}, net.layers());
  ReplayBuffer buffer(config.buffer_capacity);
  TrainScratch scratch;
  ForwardCache act_cache;

  double loss_sum = 0.0;
  long loss_count = 0;
  auto checkpoint = [&](long step) {
    const double eps = epsilon_at(config.schedule, step);
    const double r = evaluate(net, rules, config.eval_episodes, config.schedule.eps_test, eval_base, eval_rng);
    history.checkpoints.push_back({step, r, eps});
    if (config.on_checkpoint) {
      config.on_checkpoint({history.checkpoints.back(), net, loss_count ? loss_sum / loss_count : 0.0});
    }
    loss_sum = 0.0;
    loss_count = 0;
  };
  auto reached = [&] {
    if (!config.stop_threshold || history.checkpoints.size() < 2) return false;
    const auto n = history.checkpoints.size();
    return history.checkpoints[n - 1].avg_test_reward >= *config.stop_threshold &&
           history.checkpoints[n - 2].avg_test_reward >= *config.stop_threshold;
  };

  checkpoint(0);
  GridState state = reset(rules, episode_rng.next());
  for (long t = 1; t <= config.steps; ++t) {
    const double eps = epsilon_at(config.schedule, t - 1);
    const Observation obs = observe(state);
    Action a;
    if (policy_rng.uniform() < eps) {
      a = static_cast<Action>(policy_rng.below(kNumActions));
    } else {
      a = greedy_action(forward_q(net, obs, act_cache));
    }
    StepResult res = step(state, a);
    Transition tr{obs, a, static_cast<double>(res.reward), std::nullopt, res.done};
    if (res.done) {
      state = reset(rules, episode_rng.next());
    } else {
      tr.next_obs = observe(res.next_state);
      state = std::move(res.next_state);
    }
    buffer.push(std::move(tr));

    if (t > config.warmup && buffer.size() >= static_cast<std::size_t>(config.batch_size)) {
      loss_sum += train_step(net, target, buffer, config.batch_size, config.gamma, optimizer, replay_rng, scratch);
      ++loss_count;
    }
    if (t % config.target_update_interval == 0) target.copy_values_from(net);
    if (t % config.eval_interval == 0) {
      checkpoint(t);
      if (reached()) break;
    }
  }
  return history;
}

}  // namespace vinlab
