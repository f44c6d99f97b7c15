import numpy as np
import pytest

import vinlab
from vinlab import Action, ObjectClass, Variant

TINY = dict(warmup=50, target_update_interval=100, eval_interval=200, eval_episodes=2,
            buffer_capacity=500, anneal_steps=300)


def test_rules_and_episode():
    rules = vinlab.generate_rules(42, Variant.AUTOGEN)
    assert rules.num_channels == 8
    assert rules.channel_class[0] == ObjectClass.EMPTY
    assert vinlab.GameRules.parse(rules.serialize()) == rules

    state = vinlab.reset(rules, 7)
    assert state == vinlab.reset(rules, 7)
    obs = vinlab.observe(state)
    assert obs.shape == (8, 8, 8)
    assert np.all(obs.sum(axis=2) == 1.0)

    total = 0
    while not state.terminal:
        state, reward, done = vinlab.step(state, Action.UP)
        assert reward in (-3, -1, 0, 1, 3)
        total += reward
    assert state.turn <= 100
    with pytest.raises(Exception):
        vinlab.step(state, Action.UP)


def test_oracle_beats_random():
    rules = vinlab.generate_rules(0)
    state = vinlab.reset(rules, 3)
    best = vinlab.optimal_return(state)
    assert best >= 3
    assert vinlab.optimal_return(state, 0) == 0
    assert isinstance(vinlab.optimal_action(state), Action)


def test_network_accounting_and_gradients():
    net = vinlab.build_network(5, 20, 1)
    assert net.parameter_count() == 1146
    assert vinlab.build_network(8).parameter_count() == 1152
    assert net.layer_parameter_count("attention") + net.layer_parameter_count("reward") == 10
    assert vinlab.layer_names() == ["attention", "reward", "vi", "action_attention", "q_values"]
    state = vinlab.reset(vinlab.generate_rules(0), 5)
    q = net.q_values(state)
    assert len(q) == 4
    assert net.q_values_array(vinlab.observe(state)) == q
    assert vinlab.gradient_check(net, state) < 1e-4


def test_training_is_reproducible(tmp_path):
    rules = vinlab.generate_rules(0)
    a = vinlab.build_network(5, 20, 3)
    b = vinlab.build_network(5, 20, 3)
    ha = vinlab.train(rules, a, 400, 9, **TINY)
    hb = vinlab.train(rules, b, 400, 9, **TINY)
    assert ha == hb
    assert [row[0] for row in ha] == [0, 200, 400]
    assert a == b
    path = tmp_path / "net.txt"
    a.save(str(path))
    assert vinlab.VinNetwork.load(str(path)) == a
    with pytest.raises(KeyError):
        vinlab.train(rules, a, 10, 1, colour="blue")


def test_self_transfer_and_transfer():
    base = vinlab.build_network(5, 20, 4)
    r = vinlab.self_transfer(base, "attention+reward", 400, 2, **TINY)
    assert r["frozen_intact"]
    assert r["trainable_parameters"] == 10
    assert r["history"][0][0] == 0

    src, dst = vinlab.select_seed_pair(3)
    assert src != dst
    t = vinlab.transfer(src, dst, 300, 300, 300, -8.5, 1, **TINY)
    assert t["transfer_trainable"] == 16
    assert t["frozen_intact"]
    assert t["steps_to_threshold_transfer"] == 0


def test_schedule_and_threshold():
    assert vinlab.epsilon_at(0) == 1.0
    assert vinlab.epsilon_at(50000) == pytest.approx(0.1)
    assert vinlab.steps_to_threshold([(0, -2.0), (250, 2.5), (500, 2.1)], 2.0) == 250
    assert vinlab.steps_to_threshold([(0, -2.0)], 2.0) is None
