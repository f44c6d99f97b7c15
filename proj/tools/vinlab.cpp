// vinlab: train, self-transfer, transfer, inspect, plot.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include "vinlab/ddqn.hpp"
#include "vinlab/manifest.hpp"
#include "vinlab/nnet.hpp"
#include "vinlab/plot.hpp"
#include "vinlab/transfer.hpp"

namespace fs = std::filesystem;
using namespace vinlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitInvalid = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::mutex g_log_mutex;

void log_line(const std::string& s) {
  std::lock_guard lock(g_log_mutex);
  std::cout << s << std::endl;
}

std::string output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("VINLAB_OUT"); env && *env) return env;
  return "vinlab-out";
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::string fmt(double v) { return format_double(v); }
std::string fmt(const std::optional<long>& v) { return v ? std::to_string(*v) : "not-reached"; }
std::string fmt(const std::optional<double>& v) { return v ? format_double(*v) : "undefined"; }

Variant variant_from(const std::string& s) {
  const auto v = parse_variant(s);
  if (!v) throw UsageError("unknown variant '" + s + "' (simplified or autogen)");
  return *v;
}

// Flags shared by every training subcommand.
struct LoopFlags {
  static const TrainConfig& defaults() {
    static const TrainConfig d;
    return d;
  }
  long warmup = defaults().warmup;
  long target_update = defaults().target_update_interval;
  long eval_interval = defaults().eval_interval;
  int eval_episodes = defaults().eval_episodes;
  int batch = defaults().batch_size;
  long buffer = static_cast<long>(defaults().buffer_capacity);
  double gamma = defaults().gamma;
  double lr = defaults().learning_rate;
  long anneal = defaults().schedule.anneal_steps;
  void add(CLI::App* app, long default_eval_interval) {
    eval_interval = default_eval_interval;
    app->add_option("--warmup", warmup, "environment steps before the first update")->check(CLI::NonNegativeNumber)->capture_default_str();
    app->add_option("--target-update", target_update, "steps between target-network copies")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--eval-interval", eval_interval, "steps between evaluations")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--eval-episodes", eval_episodes, "episodes per evaluation")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--batch", batch, "minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--buffer", buffer, "replay capacity")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--gamma", gamma, "discount factor")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    app->add_option("--lr", lr, "learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--anneal-steps", anneal, "steps to anneal epsilon from 1 to 0.1")->check(CLI::NonNegativeNumber)->capture_default_str();
  }

  TrainConfig config(long steps, std::uint64_t master) const {
    TrainConfig c;
    c.steps = steps;
    c.warmup = warmup;
    c.target_update_interval = target_update;
    c.eval_interval = eval_interval;
    c.eval_episodes = eval_episodes;
    c.batch_size = batch;
    c.buffer_capacity = static_cast<std::size_t>(buffer);
    c.gamma = gamma;
    c.learning_rate = lr;
    c.schedule.anneal_steps = anneal;
    c.master_seed = master;
    c.validate();
    return c;
  }
};

// Replicate r of an experiment seeded by `master`.
std::uint64_t replicate_seed(std::uint64_t master, int r) { return derive_seed(master, static_cast<std::uint64_t>(r)); }

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string variant = "simplified";
  std::uint64_t rules_seed = 0;
  long steps = 0;
  std::uint64_t master = 0;
  std::string out;
  std::string name = "train";
  int replicates = 1;
  int jobs = 1;
  int vi_iterations = kDefaultViIterations;
  LoopFlags loop;
};

int cmd_train(const TrainArgs& a) {
  const Variant variant = variant_from(a.variant);
  const GameRules rules = generate_rules(a.rules_seed, variant);
  const fs::path exp = fs::path(output_root(a.out)) / a.name;
  struct Row {
    double final_reward = 0.0;
    double tail = 0.0;
    std::optional<long> reached;
  };
  std::vector<Row> rows(static_cast<std::size_t>(a.replicates));

  Manifest m;
  m.set("subcommand", "train");
  m.set("variant", variant_name(variant));
  m.set("rules_seed", std::to_string(a.rules_seed));
  m.set("steps", std::to_string(a.steps));
  m.set("vi_iterations", std::to_string(a.vi_iterations));
  m.set("master_seed", std::to_string(a.master));
  m.set("replicates", std::to_string(a.replicates));
  m.set("config", a.loop.config(a.steps, a.master).describe());
  write_text(exp / "manifest.txt", m.serialize());
  write_text(exp / "rules.txt", rules.serialize());

  run_parallel(a.replicates, a.jobs, [&](int r) {
    const std::uint64_t seed = replicate_seed(a.master, r);
    TrainConfig cfg = a.loop.config(a.steps, seed);
    VinNetwork net = build_network(rules.num_channels, a.vi_iterations, derive_seed(seed, "init"));
    const auto h = run_training(rules, net, cfg);
    const fs::path dir = exp / "control" / std::to_string(r);
    write_text(dir / "history.csv", h.to_csv());
    std::ostringstream ps;
    net.save(ps);
    write_text(dir / "params.txt", ps.str());
    rows[r] = {h.final_reward(), h.tail_mean(5), steps_to_threshold(h, 2.0)};
    log_line("replicate " + std::to_string(r) + ": final average test reward " + fmt(h.final_reward()));
  });

  std::ostringstream s;
  s << "replicate,final_reward,tail5_mean,steps_to_2\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    s << r << ',' << fmt(rows[r].final_reward) << ',' << fmt(rows[r].tail) << ',' << fmt(rows[r].reached) << '\n';
  }
  write_text(exp / "summary.csv", s.str());
  log_line("wrote " + exp.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// self-transfer

struct SelfTransferArgs {
  std::vector<std::string> bases;
  std::vector<std::string> layer_sets;
  long steps = 100000;
  std::uint64_t master = 0;
  std::uint64_t rules_seed = 0;
  double margin = 0.5;
  bool no_early_stop = false;
  int base_eval_episodes = 100;
  std::string out;
  std::string name = "self-transfer";
  int replicates = 1;
  int jobs = 1;
  LoopFlags loop;
};

int cmd_self_transfer(const SelfTransferArgs& a) {
  std::vector<std::string> sets = a.layer_sets.empty() ? standard_layer_sets() : a.layer_sets;
  std::vector<std::vector<std::string>> parsed;
  for (const auto& s : sets) {
    try {
      parsed.push_back(parse_layer_set(s));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  std::vector<VinNetwork> bases;
  for (const auto& b : a.bases) bases.push_back(VinNetwork::load_file(b));
  const GameRules rules = generate_rules(a.rules_seed, Variant::Simplified);
  const fs::path exp = fs::path(output_root(a.out)) / a.name;

  Manifest m;
  m.set("subcommand", "self-transfer");
  for (std::size_t i = 0; i < a.bases.size(); ++i) m.set("base." + std::to_string(i), a.bases[i]);
  m.set("layer_sets", [&] {
    std::string s;
    for (const auto& p : parsed) s += (s.empty() ? "" : " ") + layer_set_name(p);
    return s;
  }());
  m.set("steps", std::to_string(a.steps));
  m.set("margin", fmt(a.margin));
  m.set("master_seed", std::to_string(a.master));
  m.set("replicates", std::to_string(a.replicates));
  m.set("config", a.loop.config(a.steps, a.master).describe());
  write_text(exp / "manifest.txt", m.serialize());

  const int runs = static_cast<int>(parsed.size()) * a.replicates;
  std::vector<SelfTransferResult> results(static_cast<std::size_t>(runs));
  run_parallel(runs, a.jobs, [&](int i) {
    const int set = i / a.replicates;
    const int r = i % a.replicates;
    SelfTransferSpec spec;
    spec.layer_set = parsed[set];
    spec.rules = rules;
    spec.train = a.loop.config(a.steps, replicate_seed(a.master, r));
    spec.recovery_margin = a.margin;
    spec.stop_on_recovery = !a.no_early_stop;
    spec.base_eval_episodes = a.base_eval_episodes;
    results[i] = run_self_transfer(bases[static_cast<std::size_t>(r) % bases.size()], spec);
    const auto& res = results[i];
    write_text(exp / res.layer_set / std::to_string(r) / "history.csv", res.history.to_csv());
    log_line(res.layer_set + " replicate " + std::to_string(r) + ": recovery at " + fmt(res.steps_to_recovery) +
             " (base " + fmt(res.base_reward) + ")");
  });

  std::ostringstream s;
  s << "layer_set,replicate,base_reward,recovery_threshold,steps_to_recovery,final_reward,trainable_parameters,"
       "frozen_intact\n";
  bool intact = true;
  for (int i = 0; i < runs; ++i) {
    const auto& res = results[i];
    intact = intact && res.frozen_intact;
    s << res.layer_set << ',' << i % a.replicates << ',' << fmt(res.base_reward) << ','
      << fmt(res.recovery_threshold) << ',' << fmt(res.steps_to_recovery) << ','
      << fmt(res.history.final_reward()) << ',' << res.trainable_parameters << ',' << (res.frozen_intact ? 1 : 0)
      << '\n';
  }
  write_text(exp / "summary.csv", s.str());
  log_line("wrote " + exp.string());
  if (!intact) throw std::runtime_error("a frozen layer changed during retraining");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// transfer

struct TransferArgs {
  std::optional<std::uint64_t> source_seed;
  std::optional<std::uint64_t> target_seed;
  bool select_pair = false;
  long source_steps = 100000;
  long control_steps = 100000;
  long transfer_steps = 100000;
  double threshold = 2.0;
  std::optional<double> transfer_lr;
  bool no_early_stop = false;
  std::uint64_t master = 0;
  std::string manifest;
  std::string out;
  std::string name = "transfer";
  int replicates = 1;
  int jobs = 1;
  LoopFlags loop;
};

void describe_rules(std::ostream& os, const char* role, const GameRules& r) {
  os << role << " seed " << r.seed << ':';
  for (int ch = 1; ch < kMaxChannels; ++ch) {
    os << ' ' << ch << '=' << (r.channel_class[ch] ? class_name(*r.channel_class[ch]) : "-");
  }
  os << '\n';
}

int cmd_transfer(TransferArgs a, const CLI::App& app) {
  if (!a.manifest.empty()) {
    // Manifest values fill in anything not given on the command line.
    const Manifest m = Manifest::load(a.manifest);
    auto given = [&](const char* flag) { return app.count(flag) > 0; };
    if (!given("--source-seed") && m.has("source_seed")) a.source_seed = m.get_u64("source_seed", 0);
    if (!given("--target-seed") && m.has("target_seed")) a.target_seed = m.get_u64("target_seed", 0);
    if (!given("--source-steps")) a.source_steps = m.get_long("source_steps", a.source_steps);
    if (!given("--control-steps")) a.control_steps = m.get_long("control_steps", a.control_steps);
    if (!given("--transfer-steps")) a.transfer_steps = m.get_long("transfer_steps", a.transfer_steps);
    if (!given("--threshold")) a.threshold = m.get_double("threshold", a.threshold);
    if (!given("--lr")) a.loop.lr = m.get_double("learning_rate", a.loop.lr);
    if (!given("--transfer-lr") && m.has("transfer_learning_rate")) {
      a.transfer_lr = m.get_double("transfer_learning_rate", 0.0);
    }
    if (!given("--replicates")) a.replicates = static_cast<int>(m.get_long("replicates", a.replicates));
    if (!given("--master-seed")) a.master = m.get_u64("master_seed", a.master);
    for (const auto& [k, v] : m.entries()) {
      static const char* known[] = {"source_seed",   "target_seed", "source_steps",
                                    "control_steps", "transfer_steps", "threshold",
                                    "learning_rate", "transfer_learning_rate", "replicates",
                                    "master_seed"};
      if (std::find_if(std::begin(known), std::end(known), [&](const char* x) { return k == x; }) ==
          std::end(known)) {
        throw UsageError("manifest: unknown key " + k);
      }
    }
    if (a.replicates <= 0) throw UsageError("replicates must be positive");
  }

  std::ostringstream evidence;
  if (a.select_pair) {
    if (a.source_seed || a.target_seed) throw UsageError("--select-pair excludes explicit seeds");
    SplitMix64 rng(derive_seed(a.master, "seed-pair"));
    const auto [s, t] = select_seed_pair(rng);
    a.source_seed = s;
    a.target_seed = t;
  }
  if (!a.source_seed || !a.target_seed) throw UsageError("give --source-seed and --target-seed, or --select-pair");
  if (*a.source_seed == *a.target_seed) throw UsageError("source and target seeds must differ");

  const GameRules src = generate_rules(*a.source_seed, Variant::Autogen);
  const GameRules dst = generate_rules(*a.target_seed, Variant::Autogen);
  describe_rules(evidence, "source", src);
  describe_rules(evidence, "target", dst);
  evidence << "target repulsor channels " << dst.channels_of(ObjectClass::Repulsor).size()
           << ", channels sharing a meaning " << shared_meanings(src, dst) << '\n';
  {
    std::lock_guard lock(g_log_mutex);
    std::cout << evidence.str();
  }

  const fs::path exp = fs::path(output_root(a.out)) / a.name;
  Manifest m;
  m.set("source_seed", std::to_string(*a.source_seed));
  m.set("target_seed", std::to_string(*a.target_seed));
  m.set("source_steps", std::to_string(a.source_steps));
  m.set("control_steps", std::to_string(a.control_steps));
  m.set("transfer_steps", std::to_string(a.transfer_steps));
  m.set("threshold", fmt(a.threshold));
  m.set("learning_rate", fmt(a.loop.lr));
  if (a.transfer_lr) m.set("transfer_learning_rate", fmt(*a.transfer_lr));
  m.set("replicates", std::to_string(a.replicates));
  m.set("master_seed", std::to_string(a.master));
  write_text(exp / "manifest.txt", m.serialize());
  write_text(exp / "pair.txt", evidence.str());

  std::vector<TransferResult> results(static_cast<std::size_t>(a.replicates));
  run_parallel(a.replicates, a.jobs, [&](int r) {
    TransferSpec spec;
    spec.source_seed = *a.source_seed;
    spec.target_seed = *a.target_seed;
    spec.source_steps = a.source_steps;
    spec.control_steps = a.control_steps;
    spec.transfer_steps = a.transfer_steps;
    spec.threshold = a.threshold;
    spec.transfer_learning_rate = a.transfer_lr;
    spec.stop_at_threshold = !a.no_early_stop;
    spec.train = a.loop.config(0, replicate_seed(a.master, r));
    auto res = run_autogen_transfer(spec);
    const std::string rep = std::to_string(r);
    write_text(exp / "source" / rep / "history.csv", res.source.to_csv());
    write_text(exp / "control" / rep / "history.csv", res.control.to_csv());
    write_text(exp / "transfer" / rep / "history.csv", res.transfer.to_csv());
    std::ostringstream ps;
    res.source_network.save(ps);
    write_text(exp / "source" / rep / "params.txt", ps.str());
    log_line("replicate " + rep + ": control " + fmt(res.speedup.steps_to_threshold_control) + ", transfer " +
             fmt(res.speedup.steps_to_threshold_transfer) + ", ratio " + fmt(res.speedup.ratio));
    results[r] = std::move(res);
  });

  std::ostringstream s;
  s << "replicate,steps_to_threshold_control,steps_to_threshold_transfer,ratio,transfer_trainable,frozen_intact\n";
  std::vector<double> ratios;
  bool invalid = false, intact = true;
  for (int r = 0; r < a.replicates; ++r) {
    const auto& res = results[r];
    s << r << ',' << fmt(res.speedup.steps_to_threshold_control) << ','
      << fmt(res.speedup.steps_to_threshold_transfer) << ',' << fmt(res.speedup.ratio) << ','
      << res.transfer_trainable << ',' << (res.frozen_intact ? 1 : 0) << '\n';
    if (!res.speedup.steps_to_threshold_control) invalid = true;
    // a transfer that never reaches the threshold counts as no speedup
    if (res.speedup.steps_to_threshold_control) ratios.push_back(res.speedup.ratio.value_or(0.0));
    intact = intact && res.frozen_intact;
  }
  s << "median,,,"
    << (ratios.empty() ? std::string("undefined") : fmt(median(ratios))) << ",,\n";
  write_text(exp / "summary.csv", s.str());
  log_line("wrote " + exp.string());
  if (!intact) throw std::runtime_error("a frozen layer changed during transfer");
  if (invalid) {
    std::cerr << "experiment invalid: the control never reached the threshold in some replicate\n";
    return kExitInvalid;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// inspect

struct InspectArgs {
  std::string variant = "simplified";
  std::uint64_t seed = 0;
  std::uint64_t episode_seed = 0;
  int frames = 3;
};

int cmd_inspect(const InspectArgs& a) {
  const GameRules rules = generate_rules(a.seed, variant_from(a.variant));
  std::cout << rules.serialize() << '\n';
  GridState s = reset(rules, a.episode_seed);
  SplitMix64 rng(derive_seed(a.episode_seed, "inspect-policy"));
  std::cout << render_ascii(s);
  for (int f = 0; f < a.frames && !s.terminal; ++f) {
    const auto act = static_cast<Action>(rng.below(kNumActions));
    auto res = step(s, act);
    std::cout << "\naction " << action_name(act) << " reward " << res.reward << (res.done ? " done" : "") << '\n';
    s = res.next_state;
    std::cout << render_ascii(s);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// plot

struct PlotArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::string output = "plot.svg";
  std::string title;
};

int cmd_plot(const PlotArgs& a) {
  if (a.inputs.empty()) throw UsageError("plot needs at least one history CSV");
  std::vector<Series> series;
  std::map<std::string, int> stem_count;
  for (const auto& p : a.inputs) ++stem_count[fs::path(p).stem().string()];
  for (const auto& p : a.inputs) {
    const auto h = TrainingHistory::load_csv(p);
    Series s;
    const fs::path path(p);
    s.label = path.stem().string();
    if (stem_count[s.label] > 1) {
      // disambiguate repeated stems (every run writes history.csv)
      fs::path rel = path.parent_path().parent_path().filename() / path.parent_path().filename() / path.stem();
      s.label = rel.generic_string();
    }
    for (const auto& c : h.checkpoints) {
      s.x.push_back(static_cast<double>(c.step));
      s.y.push_back(c.avg_test_reward);
    }
    if (s.x.empty()) throw std::runtime_error(p + ": no checkpoints");
    series.push_back(std::move(s));
  }
  ChartOptions o;
  o.title = a.title;
  fs::path target = a.output;
  if (target.is_relative()) target = fs::path(output_root(a.out)) / target;
  write_text(target, render_line_chart(series, o));
  log_line("wrote " + target.string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vinlab: value-iteration-network DDQN and transfer experiments on seeded grid worlds"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a network end to end");
  t->add_option("--variant", train.variant, "simplified or autogen")->capture_default_str();
  t->add_option("--rules-seed", train.rules_seed, "seed of the game rules")->capture_default_str();
  t->add_option("--steps", train.steps, "environment steps")->required()->check(CLI::NonNegativeNumber);
  t->add_option("--master-seed", train.master, "master seed")->required();
  t->add_option("--out", train.out, "output root (default $VINLAB_OUT or ./vinlab-out)");
  t->add_option("--name", train.name, "experiment directory name")->capture_default_str();
  t->add_option("--replicates", train.replicates, "independent runs")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--jobs", train.jobs, "concurrent runs")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--vi-iterations", train.vi_iterations, "value-iteration depth K")->check(CLI::PositiveNumber)->capture_default_str();
  train.loop.add(t, 1000);

  SelfTransferArgs st;
  auto* s = app.add_subcommand("self-transfer", "reinitialize layers of a trained network and retrain them");
  s->add_option("--base", st.bases, "trained parameter file; replicate i uses base i mod count")->required()->check(CLI::ExistingFile);
  s->add_option("--layers", st.layer_sets, "layer sets such as reward or attention+reward (default: the six standard sets)");
  s->add_option("--steps", st.steps, "retraining budget per run")->check(CLI::NonNegativeNumber)->capture_default_str();
  s->add_option("--master-seed", st.master, "master seed")->capture_default_str();
  s->add_option("--rules-seed", st.rules_seed, "seed of the simplified rules the base was trained on")->capture_default_str();
  s->add_option("--margin", st.margin, "recovery margin below the base reward")->check(CLI::NonNegativeNumber)->capture_default_str();
  s->add_flag("--no-early-stop", st.no_early_stop, "keep training after recovery");
  s->add_option("--base-eval-episodes", st.base_eval_episodes, "episodes used to measure the base reward")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--out", st.out, "output root (default $VINLAB_OUT or ./vinlab-out)");
  s->add_option("--name", st.name, "experiment directory name")->capture_default_str();
  s->add_option("--replicates", st.replicates, "runs per layer set")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--jobs", st.jobs, "concurrent runs")->check(CLI::PositiveNumber)->capture_default_str();
  st.loop.add(s, 250);

  TransferArgs tr;
  auto* x = app.add_subcommand("transfer", "cross-seed transfer with control and speedup");
  x->add_option("--source-seed", tr.source_seed, "autogen seed of the source game");
  x->add_option("--target-seed", tr.target_seed, "autogen seed of the target game");
  x->add_flag("--select-pair", tr.select_pair, "draw a constraint-satisfying pair from the master seed");
  x->add_flag("--no-early-stop", tr.no_early_stop, "keep training after the threshold is held");
  x->add_option("--source-steps", tr.source_steps, "source training steps")->check(CLI::NonNegativeNumber)->capture_default_str();
  x->add_option("--control-steps", tr.control_steps, "control budget")->check(CLI::NonNegativeNumber)->capture_default_str();
  x->add_option("--transfer-steps", tr.transfer_steps, "transfer budget")->check(CLI::NonNegativeNumber)->capture_default_str();
  x->add_option("--threshold", tr.threshold, "reward threshold for the speedup")->capture_default_str();
  x->add_option("--transfer-lr", tr.transfer_lr, "learning rate of the transfer phase")->check(CLI::PositiveNumber);
  x->add_option("--master-seed", tr.master, "master seed")->capture_default_str();
  x->add_option("--manifest", tr.manifest, "key = value experiment file")->check(CLI::ExistingFile);
  x->add_option("--out", tr.out, "output root (default $VINLAB_OUT or ./vinlab-out)");
  x->add_option("--name", tr.name, "experiment directory name")->capture_default_str();
  x->add_option("--replicates", tr.replicates, "independent runs")->check(CLI::PositiveNumber)->capture_default_str();
  x->add_option("--jobs", tr.jobs, "concurrent runs")->check(CLI::PositiveNumber)->capture_default_str();
  tr.loop.add(x, 250);

  InspectArgs in;
  auto* i = app.add_subcommand("inspect", "print the rules legend and a sample episode");
  i->add_option("--variant", in.variant, "simplified or autogen")->capture_default_str();
  i->add_option("--seed", in.seed, "rules seed")->capture_default_str();
  i->add_option("--episode-seed", in.episode_seed, "episode seed")->capture_default_str();
  i->add_option("--frames", in.frames, "random moves to show")->check(CLI::NonNegativeNumber)->capture_default_str();

  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "draw history CSVs as an SVG line chart");
  p->add_option("histories", pl.inputs, "history CSV files")->check(CLI::ExistingFile);
  p->add_option("-o,--output", pl.output, "SVG path; relative paths land in the output root")->capture_default_str();
  p->add_option("--out", pl.out, "output root (default $VINLAB_OUT or ./vinlab-out)");
  p->add_option("--title", pl.title, "chart title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*t) return cmd_train(train);
    if (*s) return cmd_self_transfer(st);
    if (*x) return cmd_transfer(tr, *x);
    if (*i) return cmd_inspect(in);
    if (*p) return cmd_plot(pl);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
