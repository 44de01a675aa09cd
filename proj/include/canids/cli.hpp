#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "canids/attack_synth.hpp"
#include "canids/can_codec.hpp"
#include "canids/correlation.hpp"
#include "canids/error.hpp"
#include "canids/eval.hpp"
#include "canids/features.hpp"
#include "canids/hash.hpp"
#include "canids/lstm.hpp"
#include "canids/net_sim.hpp"
#include "canids/pipeline.hpp"
#include "canids/report.hpp"
#include "canids/signal_catalog.hpp"
#include "canids/trace_gen.hpp"

namespace canids::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Every field a subcommand flag can write to.
struct Options {
  bool quiet = false;
  std::uint64_t seed = 42;

  std::string trace, catalog, labels, plan, features, model, out, svg, events, signal, write_catalog;
  double duration = 537.0;
  double rate = 100.0;
  std::optional<double> split;
  double threshold = 0.7;
  std::size_t window = 10;

  std::size_t neurons = 50;
  std::size_t epochs = 50;
  std::size_t batch = 128;
  double dropout = 0.0;
  double lr = 1e-3;
  double decision = 0.5;
  std::optional<std::size_t> expect_neurons;

  bool full_grid = false;
  std::size_t epochs_cap = 0;
  bool no_timing = false;
  double train_window = 10.0;
  double test_window = 5.0;

  double sim_duration = 10.0;
  double base_ms = 2.9;
  double jitter_ms = 0.2;
  bool malicious = false;
  double malicious_delay = 1.0;
  double comp_ms = 0.0;
  std::size_t reps = 50;

  bool sweep = false;
  bool no_sim = false;
};

namespace detail {

inline SignalCatalog load_catalog(const std::string& path) {
  if (path.empty()) return default_catalog();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog " + path);
  return load_catalog_csv(in);
}

inline Trace load_trace(const std::string& path) {
  try {
    return parse_log(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  }
}

inline FeatureMatrix load_features(const std::string& path) {
  std::istringstream in(read_file(path));
  return read_features_csv(in);
}

inline double default_split(const FeatureMatrix& m, const std::optional<double>& split) {
  if (split) return *split;
  if (m.rows() == 0) throw ConfigError("feature file has no rows");
  return kDefaultSplitFraction * m.timestamps.back();
}

inline void emit(const std::string& path, const std::string& bytes, std::ostream& out) {
  if (path.empty() || path == "-") out << bytes;
  else write_file(path, bytes);
}

inline TrainConfig train_config(const Options& o) {
  TrainConfig c;
  c.hidden_size = o.neurons;
  c.epochs = o.epochs;
  c.batch_size = o.batch;
  c.dropout = o.dropout;
  c.learning_rate = o.lr;
  c.threshold = o.decision;
  c.seed = o.seed;
  return c;
}

inline SimConfig sim_config(const Options& o) {
  SimConfig s;
  s.duration_s = o.sim_duration;
  s.frame_rate_hz = o.rate;
  s.base_ms = o.base_ms;
  s.jitter_ms = o.jitter_ms;
  s.malicious = o.malicious;
  s.malicious_delay_ms = o.malicious_delay;
  s.comp_latency_ms = o.comp_ms;
  s.timing_reps = o.reps;
  s.seed = o.seed;
  return s;
}

}  // namespace detail

class Cli {
public:
  Cli() : app_(std::make_unique<CLI::App>("In-vehicle network intrusion detection toolkit", "canids")) { build(); }

  CLI::App& app() { return *app_; }
  const Options& options() const { return opt_; }

  int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    out_ = &out;
    try {
      app_->parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app_->help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app_->help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        out << e.what() << '\n';
        return kExitOk;
      }
      err << "usage: " << e.what() << '\n';
      return kExitUsage;
    }
    try {
      for (auto* sub : app_->get_subcommands()) {
        const auto it = handlers_.find(sub->get_name());
        if (it != handlers_.end()) it->second();
      }
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "usage: " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      err << current_ << ": error: " << e.what() << '\n';
      return kExitRuntime;
    }
  }

  int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"canids"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
  }

private:
  void say(const std::string& line) {
    if (!opt_.quiet) *out_ << current_ << ": " << line << '\n';
  }

  CLI::App* sub(const std::string& name, const std::string& about, std::function<void()> fn) {
    auto* s = app_->add_subcommand(name, about);
    s->add_option("--seed", opt_.seed, "seed for every random draw")->capture_default_str();
    handlers_[name] = [this, name, fn = std::move(fn)] {
      current_ = name;
      fn();
    };
    return s;
  }

  static void add_catalog(CLI::App* s, Options& o) {
    s->add_option("--catalog", o.catalog, "signal catalog CSV (built-in catalog when omitted)");
  }

  static void add_training(CLI::App* s, Options& o) {
    s->add_option("--neurons", o.neurons, "LSTM and FC layer width")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--epochs", o.epochs, "training epochs")->capture_default_str();
    s->add_option("--batch", o.batch, "mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--dropout", o.dropout, "dropout probability before the FC layer")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 0.999999));
    s->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
    s->add_option("--threshold", o.decision, "attack probability threshold")->capture_default_str();
  }

  void build() {
    auto& a = *app_;
    a.set_help_all_flag("--help-all", "help for every subcommand");
    a.set_config("--config", "", "INI file; [subcommand] sections set flags, command-line flags win");
    a.add_flag("--quiet,-q", opt_.quiet, "suppress summary lines");
    a.require_subcommand(1, 1);
    a.fallthrough();
    auto& o = opt_;

    auto* g = sub("gen-trace", "synthesize an attack-free CAN trace", [this] { gen_trace_cmd(); });
    g->add_option("--out", o.out, "trace log to write")->required();
    g->add_option("--duration", o.duration, "seconds of traffic")->capture_default_str();
    g->add_option("--rate", o.rate, "frames per second per message")->capture_default_str();
    g->add_option("--write-catalog", o.write_catalog, "also write the catalog CSV here");
    add_catalog(g, o);

    auto* d = sub("decode", "print one signal as timestamp,value", [this] { decode_cmd(); });
    d->add_option("--trace", o.trace, "trace log")->required();
    d->add_option("--signal", o.signal, "signal name, or MESSAGE.SIGNAL")->required();
    d->add_option("--out", o.out, "CSV output (standard output when omitted)");
    add_catalog(d, o);

    auto* c = sub("correlate", "Pearson correlation of every signal pair", [this] { correlate_cmd(); });
    c->add_option("--trace", o.trace, "trace log")->required();
    c->add_option("--out", o.out, "correlation matrix CSV");
    c->add_option("--svg", o.svg, "heatmap SVG");
    c->add_option("--min-r", o.threshold, "report pairs with |r| above this")->capture_default_str();
    add_catalog(c, o);

    auto* i = sub("inject", "insert false-information attacks and label them", [this] { inject_cmd(); });
    i->add_option("--trace", o.trace, "attack-free trace log")->required();
    i->add_option("--plan", o.plan, "attack plan CSV (default plan when omitted)");
    i->add_option("--split", o.split, "train/test split in seconds for the default plan");
    i->add_option("--train-window", o.train_window, "default plan window length before the split")->capture_default_str();
    i->add_option("--test-window", o.test_window, "default plan window length after the split")->capture_default_str();
    i->add_option("--out", o.out, "output directory")->required();
    add_catalog(i, o);

    auto* f = sub("features", "value-hold feature matrix from a trace", [this] { features_cmd(); });
    f->add_option("--trace", o.trace, "trace log")->required();
    f->add_option("--labels", o.labels, "labels CSV from inject");
    f->add_option("--out", o.out, "features CSV")->required();
    add_catalog(f, o);

    auto* t = sub("train", "train the LSTM detector", [this] { train_cmd(); });
    t->add_option("--features", o.features, "features CSV")->required();
    t->add_option("--split", o.split, "seconds; rows before it train");
    t->add_option("--window", o.window, "sequence length")->capture_default_str()->check(CLI::PositiveNumber);
    t->add_option("--out", o.model, "checkpoint to write")->required();
    add_training(t, o);

    auto* p = sub("predict", "label every row of a feature file", [this] { predict_cmd(); });
    p->add_option("--model", o.model, "checkpoint")->required();
    p->add_option("--features", o.features, "features CSV")->required();
    p->add_option("--expect-neurons", o.expect_neurons, "fail unless the checkpoint has this width");
    p->add_option("--threshold", o.decision, "attack probability threshold")->capture_default_str();
    p->add_option("--out", o.out, "predictions CSV (standard output when omitted)");

    auto* e = sub("eval", "metrics on the test region", [this] { eval_cmd(); });
    e->add_option("--model", o.model, "checkpoint")->required();
    e->add_option("--features", o.features, "features CSV")->required();
    e->add_option("--split", o.split, "seconds; rows from it on are scored");
    e->add_option("--expect-neurons", o.expect_neurons, "fail unless the checkpoint has this width");
    e->add_option("--threshold", o.decision, "attack probability threshold")->capture_default_str();
    e->add_option("--out", o.out, "metrics CSV");

    auto* s = sub("sweep", "hyperparameter grid search", [this] { sweep_cmd(); });
    s->add_option("--features", o.features, "features CSV")->required();
    s->add_option("--split", o.split, "seconds; rows before it train");
    s->add_option("--window", o.window, "sequence length")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_flag("--full", o.full_grid, "all 48 cells instead of the 4-cell desk grid");
    s->add_option("--epochs-cap", o.epochs_cap, "clip every epoch count to this (0 keeps them)")->capture_default_str();
    s->add_flag("--no-timing", o.no_timing, "write 0 for train_s so outputs compare byte for byte");
    s->add_option("--out", o.out, "sweep CSV")->required();

    auto* m = sub("simulate", "discrete-event simulation of the vehicle network", [this] { simulate_cmd(); });
    m->add_option("--trace", o.trace, "trace to replay (synthesized when omitted)");
    m->add_option("--duration", o.sim_duration, "simulated seconds")->capture_default_str();
    m->add_option("--rate", o.rate, "frames per second per message")->capture_default_str();
    m->add_option("--base-ms", o.base_ms, "per-hop delay")->capture_default_str();
    m->add_option("--jitter-ms", o.jitter_ms, "per-hop uniform jitter half-width")->capture_default_str();
    m->add_flag("--malicious", o.malicious, "let the malicious ECU forge frames");
    m->add_option("--plan", o.plan, "attack plan CSV for the malicious ECU");
    m->add_option("--malicious-delay-ms", o.malicious_delay, "forging delay")->capture_default_str();
    m->add_option("--model", o.model, "checkpoint to attach at the brake ECU");
    m->add_option("--comp-ms", o.comp_ms, "computational latency when no model is attached")->capture_default_str();
    m->add_option("--reps", o.reps, "timed inference repetitions")->capture_default_str()->check(CLI::PositiveNumber);
    m->add_option("--events", o.events, "event log CSV");
    m->add_option("--out", o.out, "latency report CSV (standard output when omitted)");
    add_catalog(m, o);

    auto* r = sub("pipeline", "every stage end to end into one directory", [this] { pipeline_cmd(); });
    r->add_option("--out", o.out, "run directory")->required();
    r->add_option("--trace", o.trace, "trace log (synthesized when omitted)");
    r->add_option("--duration", o.duration, "seconds of synthesized traffic")->capture_default_str();
    r->add_option("--rate", o.rate, "frames per second per message")->capture_default_str();
    r->add_option("--split", o.split, "train/test split in seconds");
    r->add_option("--plan", o.plan, "attack plan CSV (default plan when omitted)");
    r->add_option("--window", o.window, "sequence length")->capture_default_str()->check(CLI::PositiveNumber);
    add_training(r, o);
    r->add_flag("--sweep", o.sweep, "also run the hyperparameter sweep");
    r->add_flag("--full", o.full_grid, "sweep all 48 cells");
    r->add_option("--epochs-cap", o.epochs_cap, "clip sweep epoch counts to this (0 keeps them)")->capture_default_str();
    r->add_flag("--no-sim", o.no_sim, "skip the network simulation");
    r->add_option("--sim-duration", o.sim_duration, "simulated seconds")->capture_default_str();
    r->add_flag("--malicious", o.malicious, "let the malicious ECU forge frames in the simulation");
    add_catalog(r, o);
  }

  // --- subcommands --------------------------------------------------------

  void gen_trace_cmd() {
    const auto catalog = detail::load_catalog(opt_.catalog);
    TraceGenConfig g;
    g.duration_s = opt_.duration;
    g.frame_rate_hz = opt_.rate;
    g.seed = opt_.seed;
    const auto trace = canids::gen_trace(g, catalog);
    write_file(opt_.out, write_log(trace));
    if (!opt_.write_catalog.empty()) {
      std::ostringstream c;
      write_catalog_csv(c, catalog);
      write_file(opt_.write_catalog, c.str());
    }
    say(std::to_string(trace.size()) + " frames over " + canids::detail::shortest(opt_.duration) + " s -> " + opt_.out);
  }

  void decode_cmd() {
    const auto catalog = detail::load_catalog(opt_.catalog);
    const auto dot = opt_.signal.find('.');
    const SignalSpec& spec = dot == std::string::npos
                                 ? catalog.find(opt_.signal)
                                 : catalog.find(opt_.signal.substr(0, dot), opt_.signal.substr(dot + 1));
    const auto trace = detail::load_trace(opt_.trace);
    std::ostringstream s;
    s << "timestamp,value\n";
    std::size_t n = 0;
    char buf[32];
    for (const auto& f : trace) {
      if (f.can_id != spec.message_id) continue;
      std::snprintf(buf, sizeof buf, "%.6f", f.timestamp);
      s << buf << ',' << canids::detail::shortest(decode_signal(f, spec)) << '\n';
      ++n;
    }
    detail::emit(opt_.out, s.str(), *out_);
    if (!opt_.out.empty()) say(std::to_string(n) + " samples of " + spec.message_name + "." + spec.signal_name);
  }

  void correlate_cmd() {
    const auto catalog = detail::load_catalog(opt_.catalog);
    const auto m = assemble(detail::load_trace(opt_.trace), catalog);
    const auto c = correlation_matrix(m);
    if (!opt_.out.empty()) {
      std::ostringstream s;
      write_correlation_csv(s, c);
      write_file(opt_.out, s.str());
    }
    if (!opt_.svg.empty()) {
      std::ostringstream s;
      write_heatmap_svg(s, c, &catalog);
      write_file(opt_.svg, s.str());
    }
    for (const auto& [i, j] : correlated_pairs(c, opt_.threshold)) {
      say(catalog.feature(i).signal_name + " ~ " + catalog.feature(j).signal_name + " r=" +
          canids::detail::fixed(c.at(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1)), 3));
    }
  }

  void inject_cmd() {
    const auto catalog = detail::load_catalog(opt_.catalog);
    const auto scenarios = default_scenarios();
    const auto trace = detail::load_trace(opt_.trace);
    AttackPlan plan;
    if (!opt_.plan.empty()) {
      std::istringstream in(read_file(opt_.plan));
      plan = read_plan_csv(in, catalog, opt_.seed, scenarios);
    } else {
      const double split = opt_.split.value_or(kDefaultSplitFraction * canids::detail::trace_end(trace));
      plan = default_plan(trace, split, opt_.seed, scenarios, {opt_.train_window, opt_.test_window});
    }
    const auto labeled = inject(trace, plan, catalog, scenarios);
    const std::filesystem::path dir(opt_.out);
    std::filesystem::create_directories(dir);
    write_file((dir / "trace.log").string(), write_log(labeled.frames));
    std::ostringstream l, p;
    write_labels_csv(l, labeled);
    write_file((dir / "labels.csv").string(), l.str());
    write_plan_csv(p, plan, catalog, scenarios);
    write_file((dir / "plan.csv").string(), p.str());
    say(std::to_string(labeled.provenance.size()) + " of " + std::to_string(labeled.frames.size()) +
        " frames falsified in " + std::to_string(plan.windows.size()) + " windows -> " + opt_.out);
  }

  void features_cmd() {
    const auto catalog = detail::load_catalog(opt_.catalog);
    LabeledTrace labeled;
    auto trace = detail::load_trace(opt_.trace);
    if (!opt_.labels.empty()) {
      std::istringstream in(read_file(opt_.labels));
      labeled = read_labels_csv(in, std::move(trace));
    } else {
      labeled.labels.assign(trace.size(), 0);
      labeled.scenario_of.assign(trace.size(), 0);
      labeled.frames = std::move(trace);
    }
    const auto m = assemble(labeled, catalog);
    std::ostringstream s;
    write_features_csv(s, m);
    write_file(opt_.out, s.str());
    say(std::to_string(m.rows()) + " rows x " + std::to_string(m.width) + " signals -> " + opt_.out);
  }

  void train_cmd() {
    const auto raw = detail::load_features(opt_.features);
    const double split = detail::default_split(raw, opt_.split);
    const auto data = split_features(raw, split);
    const auto w = windows(data.train, opt_.window);
    const auto cfg = detail::train_config(opt_);
    const auto r = train(w, cfg);
    for (std::size_t e = 0; e < r.history.loss.size(); ++e) {
      if (!opt_.quiet && (e + 1 == r.history.loss.size() || (e + 1) % 10 == 0 || e == 0)) {
        say("epoch " + std::to_string(e + 1) + " loss " + canids::detail::fixed(r.history.loss[e], 6));
      }
    }
    write_file(opt_.model, save_checkpoint(Checkpoint{r.model, opt_.window, cfg, data.normalizer}));
    say(std::to_string(w.size()) + " windows, " + std::to_string(cfg.hidden_size) + " neurons -> " + opt_.model);
  }

  Checkpoint load_model() const {
    const auto bytes = read_file(opt_.model);
    auto ck = load_checkpoint(bytes);
    if (opt_.expect_neurons && ck.model.hidden_size() != *opt_.expect_neurons) {
      ck = load_checkpoint(bytes, ck.model.input_size(), *opt_.expect_neurons);
    }
    return ck;
  }

  void predict_cmd() {
    const auto ck = load_model();
    const auto raw = detail::load_features(opt_.features);
    if (!ck.normalizer) throw CheckpointError("checkpoint carries no normalizer");
    const auto m = apply(*ck.normalizer, raw);
    std::ostringstream s;
    s << "timestamp,probability,label\n";
    std::size_t alerts = 0, n = 0;
    if (m.rows() >= ck.window_length) {
      for (const auto& w : windows(m, ck.window_length)) {
        const double p = forward(w, ck.model);
        const int label = p >= opt_.decision ? 1 : 0;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", m.timestamps[w.end_row]);
        s << buf << ',' << canids::detail::fixed(p, 6) << ',' << label << '\n';
        alerts += static_cast<std::size_t>(label);
        ++n;
      }
    }
    detail::emit(opt_.out, s.str(), *out_);
    if (!opt_.out.empty()) say(std::to_string(alerts) + " of " + std::to_string(n) + " windows flagged");
  }

  void eval_cmd() {
    const auto ck = load_model();
    const auto raw = detail::load_features(opt_.features);
    const double split = detail::default_split(raw, opt_.split);
    auto data = split_features(raw, split);
    if (ck.normalizer) data.test = apply(*ck.normalizer, raw.slice(raw.lower_bound(split), raw.rows()));
    const auto m = evaluate(ck.model, windows(data.test, ck.window_length), opt_.decision);
    if (!opt_.out.empty()) {
      std::ostringstream s;
      write_metrics_csv(s, m);
      write_file(opt_.out, s.str());
    }
    say(format_summary(m));
  }

  SweepGrid grid() const {
    SweepGrid g = opt_.full_grid ? SweepGrid::full() : SweepGrid::desk();
    if (opt_.epochs_cap > 0)
      for (auto& e : g.epochs) e = std::min(e, opt_.epochs_cap);
    return g;
  }

  void sweep_cmd() {
    const auto raw = detail::load_features(opt_.features);
    const auto data = split_features(raw, detail::default_split(raw, opt_.split));
    const auto tr = windows(data.train, opt_.window);
    const auto te = windows(data.test, opt_.window);
    SweepOptions so;
    so.seed = opt_.seed;
    so.base.seed = opt_.seed;
    so.record_timing = !opt_.no_timing;
    so.on_row = [this](const SweepRow& r, std::size_t k, std::size_t total) {
      say(std::to_string(k) + "/" + std::to_string(total) + " neurons " + std::to_string(r.hidden_size) + " epochs " +
          std::to_string(r.epochs) + " batch " + std::to_string(r.batch_size) + " dropout " +
          canids::detail::shortest(r.dropout) + ": " + (r.ok() ? format_summary(*r.metrics) : "failed: " + r.error));
    };
    const auto rows = canids::sweep(tr, te, grid(), so);
    std::ostringstream s;
    write_sweep_csv(s, rows);
    write_file(opt_.out, s.str());
    const auto& best = best_row(rows);
    say("best: neurons " + std::to_string(best.hidden_size) + " epochs " + std::to_string(best.epochs) + " batch " +
        std::to_string(best.batch_size) + " dropout " + canids::detail::shortest(best.dropout));
    for (const auto& r : rows)
      if (!r.ok()) throw Error("one or more sweep cells failed");
  }

  void simulate_cmd() {
    const auto catalog = detail::load_catalog(opt_.catalog);
    auto cfg = detail::sim_config(opt_);
    cfg.event_log = !opt_.events.empty();
    const Trace trace = opt_.trace.empty() ? sim_trace(cfg, catalog) : detail::load_trace(opt_.trace);
    std::optional<LabeledTrace> labeled;
    if (cfg.malicious) {
      const auto scenarios = default_scenarios();
      AttackPlan plan;
      if (!opt_.plan.empty()) {
        std::istringstream in(read_file(opt_.plan));
        plan = read_plan_csv(in, catalog, opt_.seed, scenarios);
      } else {
        const double end = canids::detail::trace_end(trace);
        plan = default_plan(trace, kDefaultSplitFraction * end, opt_.seed, scenarios,
                            {std::min(10.0, end / 10.0), std::min(5.0, end / 10.0)});
      }
      labeled = inject(trace, plan, catalog, scenarios);
    }
    std::optional<Checkpoint> ck;
    std::optional<Detector> det;
    if (!opt_.model.empty()) {
      ck = load_model();
      if (!ck->normalizer) throw CheckpointError("checkpoint carries no normalizer");
      det = Detector{&ck->model, &*ck->normalizer, ck->window_length, opt_.decision};
    }
    const auto report = run_sim(cfg, trace, catalog, labeled ? &*labeled : nullptr, det);
    std::ostringstream s;
    write_sim_report_csv(s, report);
    detail::emit(opt_.out, s.str(), *out_);
    if (cfg.event_log) write_file(opt_.events, report.event_log);
    const auto check = check_deadline(report, cfg);
    if (!opt_.out.empty()) {
      say(std::to_string(report.emissions) + " emissions, " + std::to_string(report.receptions) + " receptions, " +
          std::to_string(report.mutated) + " forged");
      say("combined latency " + canids::detail::fixed(report.overall_total_ms(), 3) + " ms against " +
          canids::detail::fixed(cfg.deadline_ms(), 3) + " ms: " + (check.overall ? "pass" : "fail"));
    }
  }

  void pipeline_cmd() {
    PipelineConfig pc;
    if (!opt_.trace.empty()) pc.trace_path = opt_.trace;
    pc.synth.duration_s = opt_.duration;
    pc.synth.frame_rate_hz = opt_.rate;
    pc.synth.seed = opt_.seed;
    pc.split_s = opt_.split;
    pc.attack_seed = opt_.seed;
    if (!opt_.plan.empty()) pc.plan_path = opt_.plan;
    pc.window_length = opt_.window;
    pc.train = detail::train_config(opt_);
    pc.run_sweep = opt_.sweep;
    pc.grid = grid();
    pc.simulate = !opt_.no_sim;
    pc.sim = detail::sim_config(opt_);
    pc.out_dir = opt_.out;
    pc.log = [this](const std::string& line) { say(line); };
    const auto catalog = detail::load_catalog(opt_.catalog);
    current_ = "pipeline";
    try {
      run_pipeline(pc, catalog);
    } catch (const StageError& e) {
      current_ = "pipeline/" + e.stage();
      throw Error(std::string(e.what()).substr(e.stage().size() + 2));
    }
    say("artifacts in " + opt_.out);
  }

  std::unique_ptr<CLI::App> app_;
  Options opt_;
  std::map<std::string, std::function<void()>> handlers_;
  std::ostream* out_ = &std::cout;
  std::string current_ = "canids";
};

}  // namespace canids::cli
