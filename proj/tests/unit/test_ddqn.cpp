#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "vinlab/ddqn.hpp"

using namespace vinlab;
using namespace vinlab::testing;

namespace {

VinNetwork constant_network(QValues bias) {
  VinNetwork net = build_network(5, 4, 1);
  for (auto& l : net.layers()) std::fill(l.weights.begin(), l.weights.end(), 0.0);
  net.layer(LayerId::QValues).bias.assign(bias.begin(), bias.end());
  return net;
}

Observation some_obs(std::uint64_t e = 1) { return observe(reset(simplified(), e)); }

TrainConfig short_config(long steps, std::uint64_t seed) {
  TrainConfig c;
  c.steps = steps;
  c.warmup = 100;
  c.target_update_interval = 200;
  c.eval_interval = 500;
  c.eval_episodes = 3;
  c.buffer_capacity = 1000;
  c.schedule.anneal_steps = 1000;
  c.master_seed = seed;
  return c;
}

}  // namespace

TEST_CASE("epsilon schedule") {
  Schedule s;
  s.anneal_steps = 50000;
  CHECK(epsilon_at(s, 0) == 1.0);
  CHECK(epsilon_at(s, 50000) == doctest::Approx(0.1));
  CHECK(epsilon_at(s, 25000) == doctest::Approx(0.55));
  CHECK(epsilon_at(s, 900000) == doctest::Approx(0.1));
  double prev = 2.0;
  for (long t = 0; t < 60000; t += 777) {
    const double e = epsilon_at(s, t);
    CHECK(e <= prev);
    prev = e;
  }
  CHECK(s.eps_test == 0.05);
  CHECK_THROWS(epsilon_at(s, -1));
}

TEST_CASE("action selection") {
  SplitMix64 rng(1);
  const std::array<double, 4> q1{1, 3, 2, 0};
  CHECK(select_action(q1, 0.0, rng) == Action::Down);
  const std::array<double, 4> q2{2, 2, 0, 0};
  CHECK(select_action(q2, 0.0, rng) == Action::Up);
  std::array<int, 4> counts{};
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<int>(select_action(q1, 1.0, rng))];
  double chi2 = 0.0;
  for (int c : counts) {
    CHECK(std::abs(c / static_cast<double>(n) - 0.25) < 0.01);
    chi2 += (c - n / 4.0) * (c - n / 4.0) / (n / 4.0);
  }
  CHECK(chi2 < 11.34);  // 99% quantile, 3 degrees of freedom
  CHECK_THROWS(select_action(q1, 1.5, rng));
}

TEST_CASE("double-DQN targets") {
  const VinNetwork online = constant_network({0.0, 0.0, 5.0, 0.0});
  const VinNetwork target = constant_network({0.0, 0.0, 1.5, 9.0});
  Transition done{some_obs(), Action::Left, -3.0, std::nullopt, true};
  CHECK(ddqn_target(done, online, target, 0.99) == -3.0);
  Transition live{some_obs(), Action::Up, 1.0, some_obs(2), false};
  CHECK(ddqn_target(live, online, target, 0.0) == 1.0);
  // online picks action 2; target evaluates it (not its own argmax 3)
  CHECK(ddqn_target(live, online, target, 0.9) == doctest::Approx(2.35));
}

TEST_CASE("replay buffer is a FIFO ring") {
  ReplayBuffer buf(3);
  CHECK_THROWS(ReplayBuffer(0));
  for (int i = 0; i < 5; ++i) {
    buf.push({some_obs(), Action::Up, static_cast<double>(i), std::nullopt, true});
    CHECK(buf.size() == std::min<std::size_t>(i + 1, 3));
  }
  CHECK(buf.insertions() == 5);
  CHECK(buf[0].reward == 2.0);
  CHECK(buf[1].reward == 3.0);
  CHECK(buf[2].reward == 4.0);
  // done and next_obs must agree
  CHECK_THROWS(buf.push({some_obs(), Action::Up, 0.0, some_obs(), true}));
  CHECK_THROWS(buf.push({some_obs(), Action::Up, 0.0, std::nullopt, false}));
}

TEST_CASE("train step") {
  SplitMix64 rng(2);

  SUBCASE("already-correct targets give zero loss and no movement") {
    VinNetwork net = constant_network({0.5, -1.0, 0.25, 2.0});
    ReplayBuffer buf(10);
    for (int i = 0; i < 4; ++i) buf.push({some_obs(i), Action::Down, -1.0, std::nullopt, true});
    Adam opt(AdamConfig{}, net.layers());
    const VinNetwork before = net;
    CHECK(train_step(net, before, buf, 4, 0.9, opt, rng) == 0.0);
    CHECK(net == before);
  }
  SUBCASE("underfull buffer") {
    VinNetwork net = build_network(5, 4, 1);
    ReplayBuffer buf(10);
    buf.push({some_obs(), Action::Down, -1.0, std::nullopt, true});
    Adam opt(AdamConfig{}, net.layers());
    CHECK_THROWS(train_step(net, net, buf, 2, 0.9, opt, rng));
  }
  SUBCASE("a single transition can be fitted") {
    VinNetwork net = build_network(5, 20, 3);
    ReplayBuffer buf(1);
    buf.push({some_obs(4), Action::Right, 1.0, some_obs(5), false});
    Adam opt(AdamConfig{}, net.layers());
    const VinNetwork target = net;
    for (int i = 0; i < 500; ++i) train_step(net, target, buf, 1, 0.9, opt, rng);
    const double y = ddqn_target(buf[0], net, target, 0.9);
    const double q = forward_q(net, some_obs(4).to_tensor())[static_cast<int>(Action::Right)];
    CHECK((q - y) * (q - y) < 1e-4);
  }
}

TEST_CASE("backward only flows through the chosen action") {
  VinNetwork net = build_network(5, 20, 4);
  const Tensor obs = some_obs(6).to_tensor();
  ForwardCache cache;
  for (int a = 0; a < 4; ++a) {
    auto loss = [&] { return forward_q(net, obs, cache)[a]; };
    auto backprop = [&] {
      forward_q(net, obs, cache);
      QValues dq{};
      dq[a] = 1.0;
      backward_q(net, cache, dq);
    };
    const auto report = gradient_check(net.layers(), loss, backprop, 1e-4);
    CHECK(report.passed());
    // the other outputs' rows of the dense layer get nothing
    net.zero_grad();
    backprop();
    const auto& g = net.layer(LayerId::QValues).weight_grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (static_cast<int>(i % 4) != a) CHECK(g[i] == 0.0);
    }
    CHECK(net.layer(LayerId::QValues).bias_grad[a] == 1.0);
    net.zero_grad();
  }
}

TEST_CASE("config validation and description") {
  TrainConfig c;
  CHECK(c.gamma == 0.9);
  CHECK(c.buffer_capacity == 50000);
  CHECK(c.batch_size == 32);
  CHECK(c.warmup == 500);
  CHECK(c.target_update_interval == 500);
  CHECK(c.eval_interval == 1000);
  CHECK(c.eval_episodes == 20);
  CHECK(c.schedule.anneal_steps == 50000);
  CHECK_NOTHROW(c.validate());
  CHECK(c.describe().find("gamma=0.9") != std::string::npos);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("zero steps give only the initial evaluation") {
  VinNetwork net = build_network(5, 20, 1);
  auto c = short_config(0, 1);
  const auto h = run_training(simplified(), net, c);
  REQUIRE(h.checkpoints.size() == 1);
  CHECK(h.checkpoints[0].step == 0);
  CHECK(h.checkpoints[0].epsilon == 1.0);
}

TEST_CASE("untrained networks score like random play") {
  const double random = random_policy_return(simplified(), 1000, 5);
  CHECK(random == doctest::Approx(-2.38).epsilon(0.1));
  double sum = 0.0;
  const int nets = 10;
  for (int i = 0; i < nets; ++i) {
    const VinNetwork net = build_network(5, 20, 100 + i);
    SplitMix64 rng(i);
    sum += evaluate(net, simplified(), 50, 0.05, 1000 * i, rng);
  }
  // an untrained greedy policy walks off the grid about as often as a random one
  CHECK(std::abs(sum / nets - random) < 1.0);
}

TEST_CASE("training is reproducible and evaluation does not steer it") {
  const GameRules rules = simplified();
  VinNetwork a = build_network(5, 20, 7), b = a, c = a;
  const auto ha = run_training(rules, a, short_config(2000, 9));
  const auto hb = run_training(rules, b, short_config(2000, 9));
  CHECK(ha.checkpoints == hb.checkpoints);
  CHECK(ha.to_csv() == hb.to_csv());
  CHECK(a == b);
  CHECK(ha.checkpoints.size() == 5);

  auto other_eval = short_config(2000, 9);
  other_eval.eval_interval = 300;
  other_eval.eval_episodes = 7;
  run_training(rules, c, other_eval);
  CHECK(c == a);
}

TEST_CASE("early stop needs two checkpoints at the threshold") {
  VinNetwork net = build_network(5, 20, 7);
  auto cfg = short_config(3000, 9);
  cfg.stop_threshold = -100.0;
  const auto h = run_training(simplified(), net, cfg);
  REQUIRE(h.checkpoints.size() == 2);
  CHECK(h.checkpoints.back().step == 500);
}

TEST_CASE("checkpoint observer sees every evaluation") {
  VinNetwork net = build_network(5, 20, 7);
  auto cfg = short_config(1500, 2);
  std::vector<long> seen;
  cfg.on_checkpoint = [&](const TrainProgress& p) { seen.push_back(p.checkpoint.step); };
  const auto h = run_training(simplified(), net, cfg);
  CHECK(seen == std::vector<long>{0, 500, 1000, 1500});
  CHECK(h.checkpoints.size() == 4);
}

TEST_CASE("history CSV round-trips") {
  TrainingHistory h;
  h.checkpoints = {{0, -2.5, 1.0}, {1000, 0.1 + 0.2, 0.982}, {2000, 3.25, 0.964}};
  const std::string csv = h.to_csv();
  CHECK(csv.rfind("step,avg_test_reward,epsilon\n", 0) == 0);
  const auto back = TrainingHistory::from_csv(csv);
  CHECK(back.checkpoints == h.checkpoints);
  CHECK(back.final_reward() == 3.25);
  CHECK(back.tail_mean(2) == doctest::Approx((0.1 + 0.2 + 3.25) / 2));
  CHECK_THROWS(TrainingHistory::from_csv("step,reward\n"));
  CHECK_THROWS(TrainingHistory::from_csv("step,avg_test_reward,epsilon\n5,1,1\n5,1,1\n"));
}

TEST_CASE("networks and rules must agree on channels") {
  VinNetwork net = build_network(8, 20, 1);
  CHECK_THROWS_AS(run_training(simplified(), net, short_config(10, 1)), std::invalid_argument);
}
