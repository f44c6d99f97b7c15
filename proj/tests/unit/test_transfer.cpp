#include <doctest.h>

#include <atomic>
#include <set>

#include "support.hpp"
#include "vinlab/transfer.hpp"

using namespace vinlab;
using namespace vinlab::testing;

namespace {

TrainingHistory history(std::initializer_list<std::pair<long, double>> pts) {
  TrainingHistory h;
  for (auto [s, r] : pts) h.checkpoints.push_back({s, r, 0.1});
  return h;
}

TrainConfig tiny(long steps, std::uint64_t seed) {
  TrainConfig c;
  c.steps = steps;
  c.warmup = 50;
  c.target_update_interval = 100;
  c.eval_interval = 200;
  c.eval_episodes = 3;
  c.buffer_capacity = 500;
  c.schedule.anneal_steps = 500;
  c.master_seed = seed;
  return c;
}

}  // namespace

TEST_CASE("steps to threshold needs the next checkpoint to hold") {
  CHECK(steps_to_threshold(history({{0, -2}, {250, 2.5}, {500, 1.0}, {750, 2.1}, {1000, 2.2}}), 2.0) == 750);
  CHECK(steps_to_threshold(history({{0, -2}, {250, 2.5}, {500, 2.0}}), 2.0) == 250);
  // the final checkpoint counts on its own
  CHECK(steps_to_threshold(history({{0, -2}, {250, 1.0}, {500, 2.0}}), 2.0) == 500);
  CHECK_FALSE(steps_to_threshold(history({{0, -2}, {250, 1.9}}), 2.0).has_value());
  CHECK(steps_to_threshold(history({{0, 3}, {250, 3}}), 2.0) == 0);
}

TEST_CASE("layer sets") {
  CHECK(parse_layer_set("reward") == std::vector<std::string>{"reward"});
  CHECK(parse_layer_set("attention+reward") == std::vector<std::string>{"attention", "reward"});
  CHECK(layer_set_name({"attention", "reward"}) == "attention+reward");
  CHECK_THROWS_AS(parse_layer_set("reward+reward"), std::invalid_argument);
  CHECK_THROWS_AS(parse_layer_set("bogus"), std::invalid_argument);
  CHECK_THROWS_AS(parse_layer_set(""), std::invalid_argument);
  for (const auto& s : standard_layer_sets()) CHECK_NOTHROW(parse_layer_set(s));
  CHECK(standard_layer_sets().size() == 6);
}

TEST_CASE("speedup ratio") {
  const auto control = history({{0, -2}, {5000, 2.5}, {5250, 2.5}});
  const auto transfer = history({{0, -2}, {250, 2.5}, {500, 2.5}});
  const auto s = compute_speedup(control, transfer, 2.0);
  CHECK(s.steps_to_threshold_control == 5000);
  CHECK(s.steps_to_threshold_transfer == 250);
  CHECK(*s.ratio == 20.0);
  const auto instant = compute_speedup(control, history({{0, 3}, {250, 3}}), 2.0);
  CHECK(*instant.ratio == 5000.0);
  const auto never = compute_speedup(control, history({{0, -2}}), 2.0);
  CHECK_FALSE(never.ratio.has_value());
}

TEST_CASE("pair constraints") {
  GameRules a = generate_rules(1, Variant::Autogen);
  CHECK(shared_meanings(a, a) == 7 - static_cast<int>(std::count(a.channel_class.begin() + 1, a.channel_class.end(), std::nullopt)));
  CHECK_FALSE(pair_satisfies(a, a, {}));

  SplitMix64 rng(3);
  const auto [s, t] = select_seed_pair(rng);
  const GameRules src = generate_rules(s, Variant::Autogen), dst = generate_rules(t, Variant::Autogen);
  CHECK(s != t);
  CHECK(dst.channels_of(ObjectClass::Repulsor).size() == 2);
  CHECK(shared_meanings(src, dst) == 0);
  for (int ch = 1; ch < kMaxChannels; ++ch) {
    if (src.channel_class[ch]) CHECK(src.channel_class[ch] != dst.channel_class[ch]);
  }
  SplitMix64 again(3);
  CHECK(select_seed_pair(again) == std::make_pair(s, t));

  PairConstraints impossible;
  impossible.target_repulsor_channels = 3;
  impossible.max_attempts = 50;
  CHECK_THROWS_AS(select_seed_pair(rng, impossible), std::runtime_error);
}

TEST_CASE("self-transfer keeps frozen layers and retrains the chosen set") {
  VinNetwork base = build_network(5, 20, 21);
  for (const std::string set : {"reward", "attention+reward", "q_values"}) {
    SelfTransferSpec spec;
    spec.layer_set = parse_layer_set(set);
    spec.train = tiny(600, 4);
    spec.base_eval_episodes = 10;
    const auto r = run_self_transfer(base, spec);
    CHECK(r.layer_set == set);
    CHECK(r.frozen_intact);
    CHECK(r.recovery_threshold == doctest::Approx(r.base_reward - 0.5));
    std::size_t expected = 0;
    for (const auto& l : spec.layer_set) expected += base.layer(l).parameter_count();
    CHECK(r.trainable_parameters == expected);
    CHECK(r.history.checkpoints.front().step == 0);
  }
  SelfTransferSpec bad;
  CHECK_THROWS_AS(run_self_transfer(base, bad), std::invalid_argument);
  bad.layer_set = {"reward"};
  bad.rules = generate_rules(3, Variant::Autogen);
  CHECK_THROWS_AS(run_self_transfer(base, bad), std::invalid_argument);
}

TEST_CASE("self-transfer stops once recovered") {
  // an untrained base is trivially recovered from
  VinNetwork base = build_network(5, 20, 22);
  SelfTransferSpec spec;
  spec.layer_set = {"reward"};
  spec.train = tiny(5000, 5);
  spec.recovery_margin = 50.0;
  const auto r = run_self_transfer(base, spec);
  CHECK(r.steps_to_recovery == 0);
  CHECK(r.history.checkpoints.size() == 2);
}

TEST_CASE("autogen transfer phases") {
  TransferSpec spec;
  spec.source_seed = 2;
  spec.target_seed = 5;
  spec.source_steps = 400;
  spec.control_steps = 400;
  spec.transfer_steps = 400;
  spec.train = tiny(0, 8);
  const auto r = run_autogen_transfer(spec);
  CHECK(r.frozen_intact);
  CHECK(r.transfer_trainable == 16);
  CHECK(r.source.checkpoints.back().step == 400);
  CHECK(r.control.checkpoints.front().step == 0);
  CHECK(r.transfer.checkpoints.front().step == 0);

  // a given source network skips phase one
  const auto again = run_autogen_transfer(spec, &r.source_network);
  CHECK(again.source.checkpoints.empty());
  CHECK(again.control.checkpoints == r.control.checkpoints);
  CHECK(again.transfer.checkpoints == r.transfer.checkpoints);

  TransferSpec same = spec;
  same.target_seed = same.source_seed;
  CHECK_THROWS_AS(run_autogen_transfer(same), std::invalid_argument);
  TransferSpec lr = spec;
  lr.transfer_learning_rate = -1.0;
  CHECK_THROWS_AS(run_autogen_transfer(lr), std::invalid_argument);
}

TEST_CASE("identical rules without reinitialization start from the source") {
  const GameRules rules = generate_rules(4, Variant::Autogen);
  TransferSpec spec;
  spec.source_steps = 0;
  spec.control_steps = 0;
  spec.transfer_steps = 0;
  spec.reinitialize_inputs = false;
  spec.train = tiny(0, 2);
  VinNetwork source = build_network(8, 20, 5);
  const auto r = run_transfer(rules, rules, spec, &source);
  CHECK(r.frozen_intact);
  SplitMix64 rng(derive_seed(derive_seed(2, "phase:target"), "eval-policy"));
  const double direct = evaluate(source, rules, 3, 0.05, derive_seed(derive_seed(2, "phase:target"), "eval-episodes"), rng);
  CHECK(r.transfer.checkpoints.front().avg_test_reward == direct);
}

TEST_CASE("parallel runner") {
  std::vector<int> out(17, 0);
  std::atomic<int> calls{0};
  run_parallel(17, 4, [&](int i) {
    out[i] = i * i;
    ++calls;
  });
  CHECK(calls == 17);
  for (int i = 0; i < 17; ++i) CHECK(out[i] == i * i);
  CHECK_THROWS_AS(run_parallel(5, 2, [](int i) {
                    if (i == 3) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
  run_parallel(0, 3, [](int) { FAIL("called"); });
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0}) == 2.5);
  CHECK_THROWS(median({}));
}
