#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "canids/can_codec.hpp"
#include "canids/error.hpp"
#include "canids/random.hpp"
#include "canids/signal_catalog.hpp"

namespace canids {

struct AttackScenario {
  int scenario_id = 0;
  std::string message_name;
  std::string signal_name;
  std::vector<unsigned> affected_bytes;  // 1-based byte positions
};

// Misbehavior scenarios 1-11: which signal is falsified and where its bytes sit.
inline std::vector<AttackScenario> default_scenarios() {
  return {
      {1, "EMS11", "TQI_ACOR", {2}},   {2, "EMS11", "N", {3, 4}},      {3, "EMS11", "TQFR", {6}},
      {4, "EMS11", "VS", {7}},         {5, "EMS12", "TPS", {6}},       {6, "EMS12", "PV_AV_CAN", {7}},
      {7, "EMS14", "VB", {4}},         {8, "EMS16", "TQI_MIN", {1}},   {9, "EMS16", "TQI", {2}},
      {10, "EMS16", "TQI_TARGET", {3}}, {11, "EMS16", "TQI_MAX", {6}},
  };
}

inline const AttackScenario& find_scenario(const std::vector<AttackScenario>& scenarios, int id) {
  for (const auto& s : scenarios)
    if (s.scenario_id == id) return s;
  throw ConfigError("unknown attack scenario " + std::to_string(id));
}

// Throws unless every scenario's bytes coincide with its signal's bit field.
inline void validate_scenarios(const std::vector<AttackScenario>& scenarios, const SignalCatalog& catalog) {
  for (const auto& sc : scenarios) {
    const auto& spec = catalog.find(sc.message_name, sc.signal_name);
    std::vector<unsigned> bytes;
    for (unsigned b : spec.byte_positions()) bytes.push_back(b + 1);
    if (bytes != sc.affected_bytes) {
      throw ConfigError("scenario " + std::to_string(sc.scenario_id) + ": affected bytes do not match the bit field of " +
                        sc.signal_name);
    }
  }
}

struct AttackWindow {
  int scenario_id = 0;
  double start_s = 0.0;
  double duration_s = 0.0;

  double end_s() const { return start_s + duration_s; }
  bool contains(double t) const { return t >= start_s && t < end_s(); }
};

struct AttackPlan {
  std::vector<AttackWindow> windows;
  std::map<int, double> sigma_by_signal;  // feature_no -> sigma in scaled units
  std::uint64_t seed = 42;
};

struct Provenance {
  std::size_t frame_index = 0;
  int scenario_id = 0;
  std::array<std::uint8_t, kMaxDlc> original_bytes{};
};

struct LabeledTrace {
  Trace frames;
  std::vector<std::uint8_t> labels;
  std::vector<int> scenario_of;  // 0 for untouched frames
  std::vector<Provenance> provenance;
};

// Sample standard deviation of every signal over an attack-free trace.
// A constant signal gets one scale step so that 3-sigma stays meaningful.
inline std::map<int, double> estimate_sigma(const Trace& trace, const SignalCatalog& catalog) {
  if (trace.empty()) throw ConfigError("cannot estimate sigma from an empty trace");
  const std::size_t n = catalog.size();
  std::vector<double> sum(n, 0.0), sum_sq_dev(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  std::vector<double> mean(n, 0.0);
  // Welford.
  for (const auto& f : trace) {
    if (!catalog.is_monitored(f.can_id)) continue;
    for (std::size_t i : catalog.signals_of(f.can_id)) {
      const double x = decode_signal(f, catalog.specs()[i]);
      ++count[i];
      const double delta = x - mean[i];
      mean[i] += delta / static_cast<double>(count[i]);
      sum_sq_dev[i] += delta * (x - mean[i]);
    }
  }
  std::map<int, double> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& spec = catalog.specs()[i];
    if (count[i] < 2) {
      throw ConfigError("need at least two " + spec.message_name + " frames to estimate sigma of " + spec.signal_name);
    }
    const double sd = std::sqrt(sum_sq_dev[i] / static_cast<double>(count[i] - 1));
    out[spec.feature_no] = sd > 0.0 ? sd : spec.scale;
  }
  return out;
}

// Uniform draw from [min, original - 3 sigma] U [original + 3 sigma, max].
inline double sample_false_value(double original, double sigma, const SignalSpec& spec, Rng& rng) {
  if (!(sigma > 0.0)) throw ConfigError(spec.signal_name + ": sigma must be positive");
  if (!(original >= spec.min_value && original <= spec.max_value)) {
    throw RangeError(spec.signal_name + ": original value outside the signal range");
  }
  const double band = 3.0 * sigma;
  const double lo_hi = original - band;
  const double hi_lo = original + band;
  const bool has_low = lo_hi >= spec.min_value;
  const bool has_high = hi_lo <= spec.max_value;
  if (!has_low && !has_high) {
    throw InjectionInfeasible(spec.signal_name, "3-sigma band around " + std::to_string(original) +
                                                    " covers the whole value range");
  }
  const double low_len = has_low ? lo_hi - spec.min_value : 0.0;
  const double high_len = has_high ? spec.max_value - hi_lo : 0.0;
  const double total = low_len + high_len;
  if (total <= 0.0) return has_low ? spec.min_value : spec.max_value;
  const double u = rng.uniform01() * total;
  if (has_low && (u < low_len || !has_high)) return std::min(spec.min_value + u, lo_hi);
  return std::min(hi_lo + (u - low_len), spec.max_value);
}

namespace detail {

inline double trace_end(const Trace& trace) { return trace.empty() ? 0.0 : trace.back().timestamp; }

inline void validate_windows(const AttackPlan& plan, const std::vector<AttackScenario>& scenarios, double end) {
  std::map<std::string, std::vector<AttackWindow>> by_message;
  for (const auto& w : plan.windows) {
    const auto& sc = find_scenario(scenarios, w.scenario_id);
    if (!(w.duration_s > 0.0) || w.start_s < 0.0 || w.end_s() > end + 1e-9) {
      throw ConfigError("attack window for scenario " + std::to_string(w.scenario_id) + " lies outside the trace");
    }
    by_message[sc.message_name].push_back(w);
  }
  for (auto& [msg, ws] : by_message) {
    std::sort(ws.begin(), ws.end(), [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
    for (std::size_t i = 1; i < ws.size(); ++i) {
      if (ws[i].start_s < ws[i - 1].end_s()) throw ConfigError("overlapping attack windows on " + msg);
    }
  }
}

}  // namespace detail

inline LabeledTrace inject(const Trace& trace, const AttackPlan& plan, const SignalCatalog& catalog,
                           const std::vector<AttackScenario>& scenarios) {
  detail::validate_windows(plan, scenarios, detail::trace_end(trace));

  struct Active {
    AttackWindow window;
    const SignalSpec* spec;
    std::uint32_t message_id;
    double sigma;
  };
  std::optional<std::map<int, double>> estimated;
  std::vector<Active> active;
  for (const auto& w : plan.windows) {
    const auto& sc = find_scenario(scenarios, w.scenario_id);
    const auto& spec = catalog.find(sc.message_name, sc.signal_name);
    double sigma = 0.0;
    if (auto it = plan.sigma_by_signal.find(spec.feature_no); it != plan.sigma_by_signal.end()) {
      sigma = it->second;
    } else {
      if (!estimated) estimated = estimate_sigma(trace, catalog);
      sigma = estimated->at(spec.feature_no);
    }
    active.push_back({w, &spec, spec.message_id, sigma});
  }

  LabeledTrace out;
  out.frames = trace;
  out.labels.assign(trace.size(), 0);
  out.scenario_of.assign(trace.size(), 0);
  Rng rng(plan.seed);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const RawFrame& f = trace[i];
    for (const auto& a : active) {
      if (a.message_id != f.can_id || !a.window.contains(f.timestamp)) continue;
      const double original = decode_signal(f, *a.spec);
      const double falsified = sample_false_value(original, a.sigma, *a.spec, rng);
      out.frames[i] = patch_bytes(f, *a.spec, encode_signal(falsified, *a.spec));
      out.labels[i] = 1;
      out.scenario_of[i] = a.window.scenario_id;
      out.provenance.push_back({i, a.window.scenario_id, f.data});
      break;
    }
  }
  return out;
}

// Undo every injection recorded in the provenance list.
inline Trace restore(const LabeledTrace& labeled) {
  Trace out = labeled.frames;
  for (const auto& p : labeled.provenance) out[p.frame_index].data = p.original_bytes;
  return out;
}

struct PlanLayout {
  double train_window_s = 10.0;
  double test_window_s = 5.0;
};

// One window per scenario in each of [0, split) and [split, end), placed
// uniformly at random so that windows on the same message never overlap.
inline AttackPlan default_plan(const Trace& trace, double split_s, std::uint64_t seed,
                               const std::vector<AttackScenario>& scenarios = default_scenarios(),
                               PlanLayout layout = {}) {
  const double end = detail::trace_end(trace);
  if (!(split_s > 0.0 && split_s < end)) throw ConfigError("split must fall inside the trace");

  std::vector<std::string> message_order;
  for (const auto& sc : scenarios)
    if (std::find(message_order.begin(), message_order.end(), sc.message_name) == message_order.end())
      message_order.push_back(sc.message_name);

  AttackPlan plan;
  plan.seed = seed;
  Rng rng(seed);
  const std::array<std::pair<double, double>, 2> regions{{{0.0, split_s}, {split_s, end}}};
  const std::array<double, 2> lengths{layout.train_window_s, layout.test_window_s};
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const auto [lo, hi] = regions[r];
    const double d = lengths[r];
    for (const auto& msg : message_order) {
      std::vector<int> ids;
      for (const auto& sc : scenarios)
        if (sc.message_name == msg) ids.push_back(sc.scenario_id);
      const double slack = (hi - lo) - static_cast<double>(ids.size()) * d;
      if (slack < 0.0) {
        throw ConfigError("trace too short to place " + std::to_string(ids.size()) + " disjoint " +
                          std::to_string(d) + " s windows on " + msg + " in [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + ")");
      }
      std::vector<double> gaps(ids.size());
      for (auto& g : gaps) g = rng.uniform01() * slack;
      std::sort(gaps.begin(), gaps.end());
      rng.shuffle(std::span<int>(ids));
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const double start = lo + gaps[k] + static_cast<double>(k) * d;
        plan.windows.push_back({ids[k], start, std::min(d, hi - start)});
      }
    }
  }
  std::sort(plan.windows.begin(), plan.windows.end(), [](const AttackWindow& a, const AttackWindow& b) {
    return a.start_s != b.start_s ? a.start_s < b.start_s : a.scenario_id < b.scenario_id;
  });
  return plan;
}

// ---------------------------------------------------------------------------
// Plan file: scenario_id,start_s,duration_s,sigma_override

inline void write_plan_csv(std::ostream& out, const AttackPlan& plan, const SignalCatalog& catalog,
                           const std::vector<AttackScenario>& scenarios = default_scenarios()) {
  out << "scenario_id,start_s,duration_s,sigma_override\n";
  for (const auto& w : plan.windows) {
    const auto& sc = find_scenario(scenarios, w.scenario_id);
    const auto& spec = catalog.find(sc.message_name, sc.signal_name);
    out << w.scenario_id << ',' << detail::shortest(w.start_s) << ',' << detail::shortest(w.duration_s) << ',';
    if (auto it = plan.sigma_by_signal.find(spec.feature_no); it != plan.sigma_by_signal.end())
      out << detail::shortest(it->second);
    out << '\n';
  }
}

inline AttackPlan read_plan_csv(std::istream& in, const SignalCatalog& catalog, std::uint64_t seed,
                                const std::vector<AttackScenario>& scenarios = default_scenarios()) {
  AttackPlan plan;
  plan.seed = seed;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!header) {
      if (t != "scenario_id,start_s,duration_s,sigma_override") throw ParseError(line_no, "unexpected plan header");
      header = true;
      continue;
    }
    const auto c = detail::split(t, ',');
    if (c.size() != 4) throw ParseError(line_no, "expected 4 plan columns");
    AttackWindow w;
    if (!detail::parse_number(detail::trim(c[0]), w.scenario_id) ||
        !detail::parse_number(detail::trim(c[1]), w.start_s) ||
        !detail::parse_number(detail::trim(c[2]), w.duration_s)) {
      throw ParseError(line_no, "malformed plan row");
    }
    const auto& sc = find_scenario(scenarios, w.scenario_id);
    const std::string sig = detail::trim(c[3]);
    if (!sig.empty()) {
      double sigma = 0.0;
      if (!detail::parse_number(sig, sigma) || !(sigma > 0.0)) throw ParseError(line_no, "malformed sigma_override");
      plan.sigma_by_signal[catalog.find(sc.message_name, sc.signal_name).feature_no] = sigma;
    }
    plan.windows.push_back(w);
  }
  return plan;
}

// Sidecar for a labeled log: line_no,label,scenario_id (line_no is 1-based).
inline void write_labels_csv(std::ostream& out, const LabeledTrace& labeled) {
  out << "line_no,label,scenario_id\n";
  for (std::size_t i = 0; i < labeled.labels.size(); ++i)
    out << (i + 1) << ',' << static_cast<int>(labeled.labels[i]) << ',' << labeled.scenario_of[i] << '\n';
}

// Reattaches sidecar labels to a parsed log. Provenance is not recoverable.
inline LabeledTrace read_labels_csv(std::istream& in, Trace frames) {
  LabeledTrace out;
  out.labels.assign(frames.size(), 0);
  out.scenario_of.assign(frames.size(), 0);
  std::string line;
  std::size_t line_no = 0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (line_no == 1) {
      if (t != "line_no,label,scenario_id") throw ParseError(line_no, "unexpected labels header");
      continue;
    }
    const auto c = detail::split(t, ',');
    std::size_t idx = 0;
    int label = 0, scenario = 0;
    if (c.size() != 3 || !detail::parse_number(c[0], idx) || !detail::parse_number(c[1], label) ||
        !detail::parse_number(c[2], scenario) || (label != 0 && label != 1)) {
      throw ParseError(line_no, "malformed label row");
    }
    if (idx < 1 || idx > frames.size()) throw ParseError(line_no, "label refers to a frame outside the log");
    out.labels[idx - 1] = static_cast<std::uint8_t>(label);
    out.scenario_of[idx - 1] = scenario;
    ++rows;
  }
  if (rows != frames.size()) {
    throw ParseError(line_no, "labels cover " + std::to_string(rows) + " of " + std::to_string(frames.size()) + " frames");
  }
  out.frames = std::move(frames);
  return out;
}

}  // namespace canids
