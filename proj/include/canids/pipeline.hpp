#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "canids/attack_synth.hpp"
#include "canids/can_codec.hpp"
#include "canids/error.hpp"
#include "canids/eval.hpp"
#include "canids/features.hpp"
#include "canids/hash.hpp"
#include "canids/lstm.hpp"
#include "canids/net_sim.hpp"
#include "canids/report.hpp"
#include "canids/signal_catalog.hpp"
#include "canids/trace_gen.hpp"

namespace canids {

inline constexpr double kDefaultSplitFraction = 350.0 / 537.0;

struct PipelineConfig {
  std::optional<std::string> trace_path;  // otherwise synthesize
  TraceGenConfig synth;
  std::optional<double> split_s;
  std::uint64_t attack_seed = 42;
  PlanLayout layout;
  std::optional<std::string> plan_path;
  std::size_t window_length = 10;
  TrainConfig train;
  bool run_sweep = false;
  SweepGrid grid = SweepGrid::desk();
  bool simulate = true;
  SimConfig sim;
  std::string out_dir = "run";
  // Progress lines, one per stage.
  std::function<void(const std::string&)> log;
};

struct PipelineResult {
  LstmModel model;
  Normalizer normalizer;
  MetricsReport metrics;
  std::vector<SweepRow> sweep;
  std::optional<SimReport> sim;
  double split_s = 0.0;
  std::size_t train_windows = 0;
  std::size_t test_windows = 0;
};

namespace detail {

inline std::string echo_config(const PipelineConfig& c, double split) {
  std::ostringstream s;
  s << "[trace]\n";
  if (c.trace_path) s << "path = " << *c.trace_path << '\n';
  else {
    s << "duration_s = " << shortest(c.synth.duration_s) << "\nframe_rate_hz = " << shortest(c.synth.frame_rate_hz)
      << "\nseed = " << c.synth.seed << '\n';
  }
  s << "split_s = " << shortest(split) << "\n\n[attack]\nseed = " << c.attack_seed
    << "\ntrain_window_s = " << shortest(c.layout.train_window_s)
    << "\ntest_window_s = " << shortest(c.layout.test_window_s) << '\n';
  if (c.plan_path) s << "plan = " << *c.plan_path << '\n';
  s << "\n[features]\nwindow = " << c.window_length << "\n\n[train]\nneurons = " << c.train.hidden_size
    << "\nepochs = " << c.train.epochs << "\nbatch = " << c.train.batch_size
    << "\ndropout = " << shortest(c.train.dropout) << "\nlr = " << shortest(c.train.learning_rate)
    << "\nthreshold = " << shortest(c.train.threshold) << "\nseed = " << c.train.seed << '\n';
  s << "\n[sweep]\nenabled = " << (c.run_sweep ? "true" : "false") << '\n';
  s << "\n[sim]\nenabled = " << (c.simulate ? "true" : "false") << "\nduration_s = " << shortest(c.sim.duration_s)
    << "\nframe_rate_hz = " << shortest(c.sim.frame_rate_hz) << "\nbase_ms = " << shortest(c.sim.base_ms)
    << "\njitter_ms = " << shortest(c.sim.jitter_ms) << "\nmalicious = " << (c.sim.malicious ? "true" : "false")
    << "\nmalicious_delay_ms = " << shortest(c.sim.malicious_delay_ms) << "\nseed = " << c.sim.seed << '\n';
  return s.str();
}

template <typename F>
auto run_stage(const std::string& stage, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace detail

inline constexpr std::string_view kManifestName = "manifest.txt";

// "<sha256>  <file>" per artifact, sorted by file name.
inline std::string write_manifest(const std::filesystem::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != kManifestName) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  std::string out;
  for (const auto& n : names) out += sha256_hex(read_file((dir / n).string())) + "  " + n + "\n";
  write_file((dir / kManifestName).string(), out);
  return out;
}

// Names of files whose current hash differs from the manifest (or that vanished).
inline std::vector<std::string> verify_manifest(const std::filesystem::path& dir) {
  std::istringstream in(read_file((dir / kManifestName).string()));
  std::vector<std::string> bad;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sep = line.find("  ");
    if (sep == std::string::npos) throw ParseError(0, "malformed manifest line: " + line);
    const std::string digest = line.substr(0, sep), name = line.substr(sep + 2);
    const auto path = dir / name;
    if (!std::filesystem::exists(path) || sha256_hex(read_file(path.string())) != digest) bad.push_back(name);
  }
  return bad;
}

struct SplitData {
  FeatureMatrix train;  // normalized
  FeatureMatrix test;
  Normalizer normalizer;
};

// Rows before `split_s` train, the rest test; the normalizer sees the train rows only.
inline SplitData split_features(const FeatureMatrix& raw, double split_s) {
  const std::size_t cut = raw.lower_bound(split_s);
  if (cut == 0 || cut == raw.rows()) throw ConfigError("split leaves one region without feature rows");
  SplitData d;
  const auto train_raw = raw.slice(0, cut);
  d.normalizer = fit_normalizer(train_raw);
  d.train = apply(d.normalizer, train_raw);
  d.test = apply(d.normalizer, raw.slice(cut, raw.rows()));
  return d;
}

inline PipelineResult run_pipeline(const PipelineConfig& config, const SignalCatalog& catalog = default_catalog(),
                                   const std::vector<AttackScenario>& scenarios = default_scenarios()) {
  namespace fs = std::filesystem;
  const fs::path dir(config.out_dir);
  auto say = [&](const std::string& s) {
    if (config.log) config.log(s);
  };
  auto put = [&](const std::string& name, const std::string& bytes) { write_file((dir / name).string(), bytes); };

  PipelineResult result;
  Trace trace;
  try {
    detail::run_stage("setup", [&] {
      fs::create_directories(dir);
      validate_scenarios(scenarios, catalog);
      if (config.window_length == 0) throw ConfigError("window length must be positive");
      config.train.validate();
      return 0;
    });

    trace = detail::run_stage("trace", [&] {
      if (config.trace_path) return parse_log(read_file(*config.trace_path));
      return gen_trace(config.synth, catalog);
    });
    const double duration = config.trace_path ? detail::trace_end(trace) : config.synth.duration_s;
    result.split_s = config.split_s.value_or(kDefaultSplitFraction * duration);
    if (!(result.split_s > 0.0 && result.split_s < duration)) {
      throw StageError("trace", "split_s must lie strictly between 0 and the trace duration " +
                                    detail::shortest(duration));
    }
    put("config.txt", detail::echo_config(config, result.split_s));
    put("trace.log", write_log(trace));
    say("trace: " + std::to_string(trace.size()) + " frames, split at " + detail::shortest(result.split_s) + " s");

    const auto labeled = detail::run_stage("inject", [&] {
      AttackPlan plan;
      if (config.plan_path) {
        std::istringstream in(read_file(*config.plan_path));
        plan = read_plan_csv(in, catalog, config.attack_seed, scenarios);
      } else {
        plan = default_plan(trace, result.split_s, config.attack_seed, scenarios, config.layout);
      }
      std::ostringstream p;
      write_plan_csv(p, plan, catalog, scenarios);
      put("plan.csv", p.str());
      auto l = inject(trace, plan, catalog, scenarios);
      std::ostringstream lab;
      write_labels_csv(lab, l);
      put("labels.csv", lab.str());
      return l;
    });
    say("inject: " + std::to_string(labeled.provenance.size()) + " frames falsified");

    const auto raw = detail::run_stage("features", [&] {
      auto m = assemble(labeled, catalog);
      std::ostringstream f;
      write_features_csv(f, m);
      put("features.csv", f.str());
      return m;
    });
    const auto data = detail::run_stage("features", [&] { return split_features(raw, result.split_s); });
    const auto train_w = detail::run_stage("features", [&] { return windows(data.train, config.window_length); });
    const auto test_w = detail::run_stage("features", [&] { return windows(data.test, config.window_length); });
    result.normalizer = data.normalizer;
    result.train_windows = train_w.size();
    result.test_windows = test_w.size();
    say("features: " + std::to_string(raw.rows()) + " rows, " + std::to_string(train_w.size()) + " train / " +
        std::to_string(test_w.size()) + " test windows");

    result.model = detail::run_stage("train", [&] {
      auto r = train(train_w, config.train);
      put("model.ckpt", save_checkpoint(Checkpoint{r.model, config.window_length, config.train, data.normalizer}));
      return r.model;
    });
    say("train: done");

    result.metrics = detail::run_stage("eval", [&] {
      auto m = evaluate(result.model, test_w, config.train.threshold);
      std::ostringstream out;
      write_metrics_csv(out, m);
      put("metrics.csv", out.str());
      return m;
    });
    say("eval: " + format_summary(result.metrics));

    if (config.run_sweep) {
      result.sweep = detail::run_stage("sweep", [&] {
        SweepOptions opt;
        opt.seed = config.train.seed;
        opt.base = config.train;
        opt.record_timing = false;
        auto rows = sweep(train_w, test_w, config.grid, opt);
        std::ostringstream out;
        write_sweep_csv(out, rows);
        put("sweep.csv", out.str());
        return rows;
      });
      say("sweep: " + std::to_string(result.sweep.size()) + " cells");
    }

    if (config.simulate) {
      result.sim = detail::run_stage("simulate", [&] {
        Detector det{&result.model, &result.normalizer, config.window_length, config.train.threshold};
        auto r = run_sim(config.sim, trace, catalog, &labeled, det);
        std::ostringstream out;
        write_sim_report_csv(out, r);
        put("sim_report.csv", out.str());
        return r;
      });
      say("simulate: combined latency " + detail::fixed(result.sim->overall_total_ms(), 3) + " ms");
    }
  } catch (...) {
    if (fs::exists(dir)) {
      try {
        write_manifest(dir);
      } catch (const std::exception&) {
      }
    }
    throw;
  }
  detail::run_stage("manifest", [&] { return write_manifest(dir); });
  return result;
}

}  // namespace canids
