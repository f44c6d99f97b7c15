#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "vinlab/ddqn.hpp"
#include "vinlab/oracle.hpp"
#include "vinlab/plot.hpp"
#include "vinlab/transfer.hpp"

namespace py = pybind11;
using namespace vinlab;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
  py::array_t<double> a({t.height(), t.width(), t.channels()});
  auto v = t.values();
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

Tensor from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw std::invalid_argument("expected an (8, 8, C) array");
  Tensor t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), t.values().begin());
  return t;
}

py::list history_rows(const TrainingHistory& h) {
  py::list rows;
  for (const auto& c : h.checkpoints) rows.append(py::make_tuple(c.step, c.avg_test_reward, c.epsilon));
  return rows;
}

TrainConfig make_config(long steps, std::uint64_t master_seed, py::kwargs kw) {
  TrainConfig c;
  c.steps = steps;
  c.master_seed = master_seed;
  for (auto [k, v] : kw) {
    const auto key = k.cast<std::string>();
    if (key == "warmup") c.warmup = v.cast<long>();
    else if (key == "target_update_interval") c.target_update_interval = v.cast<long>();
    else if (key == "eval_interval") c.eval_interval = v.cast<long>();
    else if (key == "eval_episodes") c.eval_episodes = v.cast<int>();
    else if (key == "batch_size") c.batch_size = v.cast<int>();
    else if (key == "buffer_capacity") c.buffer_capacity = v.cast<std::size_t>();
    else if (key == "gamma") c.gamma = v.cast<double>();
    else if (key == "learning_rate") c.learning_rate = v.cast<double>();
    else if (key == "anneal_steps") c.schedule.anneal_steps = v.cast<long>();
    else if (key == "stop_threshold") c.stop_threshold = v.cast<double>();
    else throw py::key_error("unknown training option: " + key);
  }
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_vinlab, m) {
  m.doc() = "vinlab core bindings";

  py::enum_<Variant>(m, "Variant").value("SIMPLIFIED", Variant::Simplified).value("AUTOGEN", Variant::Autogen);
  py::enum_<Action>(m, "Action")
      .value("UP", Action::Up)
      .value("DOWN", Action::Down)
      .value("LEFT", Action::Left)
      .value("RIGHT", Action::Right);
  py::enum_<ObjectClass>(m, "ObjectClass")
      .value("EMPTY", ObjectClass::Empty)
      .value("PLAYER", ObjectClass::Player)
      .value("TARGET", ObjectClass::Target)
      .value("ATTRACTOR", ObjectClass::Attractor)
      .value("REPULSOR", ObjectClass::Repulsor);

  py::class_<GameRules>(m, "GameRules")
      .def_readonly("seed", &GameRules::seed)
      .def_readonly("variant", &GameRules::variant)
      .def_readonly("num_channels", &GameRules::num_channels)
      .def_property_readonly("channel_class",
                             [](const GameRules& r) {
                               std::vector<std::optional<ObjectClass>> out(r.channel_class.begin(),
                                                                           r.channel_class.begin() + r.num_channels);
                               return out;
                             })
      .def("channels_of", &GameRules::channels_of)
      .def("serialize", &GameRules::serialize)
      .def_static("parse", &GameRules::parse)
      .def("__eq__", [](const GameRules& a, const GameRules& b) { return a == b; })
      .def("__repr__", &GameRules::serialize);
  m.def("generate_rules", &generate_rules, py::arg("seed"), py::arg("variant") = Variant::Simplified);

  py::class_<GridState>(m, "GridState")
      .def_property_readonly("player_pos", [](const GridState& s) { return py::make_tuple(s.player_pos.row, s.player_pos.col); })
      .def_readonly("turn", &GridState::turn)
      .def_readonly("terminal", &GridState::terminal)
      .def_readonly("rules", &GridState::rules)
      .def_property_readonly("cells", [](const GridState& s) {
        return std::vector<int>(s.cells.begin(), s.cells.end());
      })
      .def("__eq__", [](const GridState& a, const GridState& b) { return a == b; });
  m.def("reset", &reset, py::arg("rules"), py::arg("episode_seed"));
  m.def(
      "step",
      [](const GridState& s, Action a) {
        const StepResult r = step(s, a);
        return py::make_tuple(r.next_state, r.reward, r.done);
      },
      py::arg("state"), py::arg("action"), "Returns (next_state, reward, done).");
  m.def("observe", [](const GridState& s) { return to_numpy(encode_observation(s)); }, py::arg("state"));
  m.def("render_ascii", &render_ascii, py::arg("state"));

  m.def("optimal_return", &optimal_return, py::arg("state"), py::arg("horizon") = kMaxTurns);
  m.def("optimal_action", &optimal_action, py::arg("state"), py::arg("horizon") = kMaxTurns);

  py::class_<VinNetwork>(m, "VinNetwork")
      .def_property_readonly("num_channels", &VinNetwork::num_channels)
      .def_property_readonly("vi_iterations", &VinNetwork::vi_iterations)
      .def("parameter_count", &VinNetwork::parameter_count)
      .def("trainable_parameter_count", &VinNetwork::trainable_parameter_count)
      .def("layer_parameter_count",
           [](const VinNetwork& n, const std::string& name) { return n.layer(name).parameter_count(); })
      .def("layer_weights", [](const VinNetwork& n, const std::string& name) { return n.layer(name).weights; })
      .def("set_frozen",
           [](VinNetwork& n, const std::vector<std::string>& names, bool frozen) { set_frozen(n, names, frozen); })
      .def("q_values", [](const VinNetwork& n, const GridState& s) { return forward_q(n, encode_observation(s)); })
      .def("q_values_array", [](const VinNetwork& n, const py::array_t<double>& obs) { return forward_q(n, from_numpy(obs)); })
      .def("save", &VinNetwork::save_file)
      .def_static("load", &VinNetwork::load_file)
      .def("__eq__", [](const VinNetwork& a, const VinNetwork& b) { return a == b; });
  m.def("build_network", &build_network, py::arg("num_channels"), py::arg("vi_iterations") = kDefaultViIterations,
        py::arg("init_seed") = 0);
  m.def("layer_names", [] { return std::vector<std::string>(kLayerNames.begin(), kLayerNames.end()); });
  m.def(
      "gradient_check",
      [](VinNetwork& net, const GridState& s, double tol) { return gradient_check(net, encode_observation(s), tol).max_rel_error; },
      py::arg("net"), py::arg("state"), py::arg("tolerance") = 1e-4, "Largest relative error over all layers.");

  m.def("epsilon_at", [](long step, long anneal_steps) {
    Schedule s;
    s.anneal_steps = anneal_steps;
    return epsilon_at(s, step);
  }, py::arg("step"), py::arg("anneal_steps") = 50000);
  m.def(
      "train",
      [](const GameRules& rules, VinNetwork& net, long steps, std::uint64_t master_seed, py::kwargs kw) {
        const TrainConfig c = make_config(steps, master_seed, kw);
        TrainingHistory h;
        {
          py::gil_scoped_release release;
          h = run_training(rules, net, c);
        }
        return history_rows(h);
      },
      py::arg("rules"), py::arg("net"), py::arg("steps"), py::arg("master_seed"),
      "Trains `net` in place; returns [(step, avg_test_reward, epsilon), ...]. Extra keyword arguments override "
      "training options (warmup, gamma, learning_rate, ...).");
  m.def(
      "evaluate",
      [](const VinNetwork& net, const GameRules& rules, int episodes, double epsilon, std::uint64_t seed) {
        SplitMix64 rng(derive_seed(seed, "eval-policy"));
        return evaluate(net, rules, episodes, epsilon, seed, rng);
      },
      py::arg("net"), py::arg("rules"), py::arg("episodes") = 20, py::arg("epsilon") = 0.05, py::arg("seed") = 0);
  m.def("random_policy_return", &random_policy_return, py::arg("rules"), py::arg("episodes"), py::arg("seed"));

  m.def(
      "steps_to_threshold",
      [](const std::vector<std::pair<long, double>>& pts, double threshold) {
        TrainingHistory h;
        for (auto [s, r] : pts) h.checkpoints.push_back({s, r, 0.0});
        return steps_to_threshold(h, threshold);
      },
      py::arg("history"), py::arg("threshold"));
  m.def(
      "select_seed_pair",
      [](std::uint64_t seed) {
        SplitMix64 rng(seed);
        return select_seed_pair(rng);
      },
      py::arg("seed"));
  m.def(
      "self_transfer",
      [](const VinNetwork& base, const std::string& layer_set, long steps, std::uint64_t master_seed, py::kwargs kw) {
        SelfTransferSpec spec;
        spec.layer_set = parse_layer_set(layer_set);
        spec.train = make_config(steps, master_seed, kw);
        spec.train.eval_interval = kw.contains("eval_interval") ? kw["eval_interval"].cast<long>() : 250;
        SelfTransferResult r;
        {
          py::gil_scoped_release release;
          r = run_self_transfer(base, spec);
        }
        py::dict d;
        d["base_reward"] = r.base_reward;
        d["recovery_threshold"] = r.recovery_threshold;
        d["steps_to_recovery"] = r.steps_to_recovery;
        d["frozen_intact"] = r.frozen_intact;
        d["trainable_parameters"] = r.trainable_parameters;
        d["history"] = history_rows(r.history);
        return d;
      },
      py::arg("base"), py::arg("layer_set"), py::arg("steps"), py::arg("master_seed"));
  m.def(
      "transfer",
      [](std::uint64_t source_seed, std::uint64_t target_seed, long source_steps, long control_steps,
         long transfer_steps, double threshold, std::uint64_t master_seed, py::kwargs kw) {
        TransferSpec spec;
        spec.source_seed = source_seed;
        spec.target_seed = target_seed;
        spec.source_steps = source_steps;
        spec.control_steps = control_steps;
        spec.transfer_steps = transfer_steps;
        spec.threshold = threshold;
        spec.train = make_config(0, master_seed, kw);
        spec.train.eval_interval = kw.contains("eval_interval") ? kw["eval_interval"].cast<long>() : 250;
        TransferResult r;
        {
          py::gil_scoped_release release;
          r = run_autogen_transfer(spec);
        }
        py::dict d;
        d["source"] = history_rows(r.source);
        d["control"] = history_rows(r.control);
        d["transfer"] = history_rows(r.transfer);
        d["steps_to_threshold_control"] = r.speedup.steps_to_threshold_control;
        d["steps_to_threshold_transfer"] = r.speedup.steps_to_threshold_transfer;
        d["ratio"] = r.speedup.ratio;
        d["frozen_intact"] = r.frozen_intact;
        d["transfer_trainable"] = r.transfer_trainable;
        return d;
      },
      py::arg("source_seed"), py::arg("target_seed"), py::arg("source_steps"), py::arg("control_steps"),
      py::arg("transfer_steps"), py::arg("threshold"), py::arg("master_seed"));
}
