#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <sstream>
#include <functional>
#include <string>
#include <vector>

#include "canids/attack_synth.hpp"
#include "canids/can_codec.hpp"
#include "canids/error.hpp"
#include "canids/features.hpp"
#include "canids/lstm.hpp"
#include "canids/random.hpp"
#include "canids/signal_catalog.hpp"
#include "canids/trace_gen.hpp"

namespace canids {

struct Emitter {
  std::string ecu;
  std::vector<std::string> messages;
};

struct SimConfig {
  std::vector<std::string> ecus{"EMS", "MDPS", "ABS", "EPB", "ESC", "MALICIOUS"};
  std::vector<Emitter> emitters{{"EMS", {"EMS11", "EMS12", "EMS14", "EMS16"}}, {"MDPS", {"SAS11"}}};
  double frame_rate_hz = 100.0;
  double base_ms = 2.9;    // per hop
  double jitter_ms = 0.2;  // per hop, uniform in [-jitter, +jitter]
  int hops = 2;
  bool malicious = false;
  double malicious_delay_ms = 1.0;
  double duration_s = 10.0;
  std::uint64_t seed = 42;
  std::string detector_ecu = "ABS";
  std::size_t timing_reps = 50;
  // Used when no detector is attached.
  double comp_latency_ms = 0.0;
  bool event_log = false;

  double deadline_ms() const { return 1000.0 / frame_rate_hz; }

  std::size_t ecu_index(const std::string& name) const {
    const auto it = std::find(ecus.begin(), ecus.end(), name);
    if (it == ecus.end()) throw ConfigError("unknown ECU " + name);
    return static_cast<std::size_t>(it - ecus.begin());
  }

  void validate() const {
    if (ecus.size() < 2) throw ConfigError("simulation needs at least two ECUs");
    if (!(frame_rate_hz > 0.0)) throw ConfigError("frame_rate_hz must be positive");
    if (!(base_ms >= 0.0) || !(jitter_ms >= 0.0)) throw ConfigError("hop delays must be non-negative");
    if (jitter_ms > base_ms) throw ConfigError("jitter larger than the base delay would allow negative hop delays");
    if (hops < 1) throw ConfigError("at least one hop is required");
    if (!(malicious_delay_ms >= 0.0)) throw ConfigError("malicious delay must be non-negative");
    if (!(duration_s > 0.0)) throw ConfigError("duration_s must be positive");
    if (!(comp_latency_ms >= 0.0)) throw ConfigError("computational latency must be non-negative");
    for (const auto& e : emitters) ecu_index(e.ecu);
    if (malicious) ecu_index("MALICIOUS");
  }
};

// ---------------------------------------------------------------------------

struct InferenceTiming {
  double mean_ms = 0.0;
  double max_ms = 0.0;
  std::size_t reps = 0;
  bool low_rep = false;  // fewer than two repetitions: the warm-up sample is all there is
  int label = 0;
};

inline InferenceTiming measure_inference(const LstmModel& model, const SequenceWindow& window, std::size_t reps = 50,
                                         double threshold = 0.5) {
  if (reps == 0) throw ConfigError("measure_inference needs at least one repetition");
  std::vector<double> ms;
  ms.reserve(reps);
  InferenceTiming t;
  t.reps = reps;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const int label = predict(model, window, threshold);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    if (r == 0) t.label = label;
    else if (label != t.label) throw Error("inference is not deterministic");
  }
  std::span<const double> used(ms);
  if (reps > 1) used = used.subspan(1);
  else t.low_rep = true;
  double sum = 0.0;
  for (double v : used) {
    sum += v;
    t.max_ms = std::max(t.max_ms, v);
  }
  t.mean_ms = sum / static_cast<double>(used.size());
  return t;
}

inline bool meets_deadline(double comm_ms, double comp_ms, double deadline_ms) { return comm_ms + comp_ms < deadline_ms; }

// ---------------------------------------------------------------------------

struct MessageStats {
  std::string ecu;
  std::string message;
  std::size_t frames = 0;  // emitted
  std::map<std::string, std::size_t> received;  // per receiver
  std::size_t receptions = 0;
  double latency_sum_ms = 0.0;
  double max_latency_ms = 0.0;

  double avg_latency_ms() const { return receptions ? latency_sum_ms / static_cast<double>(receptions) : 0.0; }
};

struct SimReport {
  std::vector<MessageStats> messages;
  double comp_latency_ms = 0.0;
  std::optional<InferenceTiming> timing;
  double deadline_ms = 10.0;
  std::size_t emissions = 0;
  std::size_t receptions = 0;
  std::size_t mutated = 0;
  std::size_t detector_inferences = 0;
  std::size_t detector_alerts = 0;
  std::string event_log;

  double total_latency_ms(const MessageStats& m) const { return m.avg_latency_ms() + comp_latency_ms; }

  double overall_comm_ms() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& m : messages) {
      sum += m.latency_sum_ms;
      n += m.receptions;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
  }
  double overall_total_ms() const { return overall_comm_ms() + comp_latency_ms; }
};

struct DeadlineCheck {
  std::vector<std::pair<std::string, bool>> per_message;  // "ECU/MESSAGE"
  bool overall = true;
};

inline DeadlineCheck check_deadline(const SimReport& report, const SimConfig& config) {
  DeadlineCheck out;
  for (const auto& m : report.messages) {
    const bool ok = meets_deadline(m.avg_latency_ms(), report.comp_latency_ms, config.deadline_ms());
    out.per_message.emplace_back(m.ecu + "/" + m.message, ok);
    out.overall = out.overall && ok;
  }
  return out;
}

// Detector attached to one receiving ECU.
struct Detector {
  const LstmModel* model = nullptr;
  const Normalizer* normalizer = nullptr;
  std::size_t window_length = 10;
  double threshold = 0.5;
};

// Live synthesis: an attack-free trace at the simulation's frame rate.
inline Trace sim_trace(const SimConfig& config, const SignalCatalog& catalog) {
  TraceGenConfig g;
  g.duration_s = config.duration_s;
  g.frame_rate_hz = config.frame_rate_hz;
  g.seed = config.seed;
  return gen_trace(g, catalog);
}

namespace detail {

enum class EventType : int { emit = 0, at_switch = 1, receive = 2 };

inline const char* event_name(EventType t) {
  switch (t) {
    case EventType::emit: return "emit";
    case EventType::at_switch: return "switch";
    case EventType::receive: return "receive";
  }
  return "?";
}

struct Event {
  double time_ms;
  EventType type;
  std::size_t ecu;    // acting ECU: sender for emit/switch, receiver for receive
  std::uint64_t seq;  // frame sequence number
  std::size_t sender;
  double emitted_ms;

  // Ordering key (time, type, ecu, seq).
  bool operator>(const Event& o) const {
    if (time_ms != o.time_ms) return time_ms > o.time_ms;
    if (type != o.type) return static_cast<int>(type) > static_cast<int>(o.type);
    if (ecu != o.ecu) return ecu > o.ecu;
    return seq > o.seq;
  }
};

}  // namespace detail

// `trace` supplies the emitted frames; `labeled`, when given, is the same
// trace after injection and tells the malicious ECU which frames to mutate.
inline SimReport run_sim(const SimConfig& config, const Trace& trace, const SignalCatalog& catalog,
                         const LabeledTrace* labeled = nullptr, std::optional<Detector> detector = std::nullopt) {
  config.validate();
  if (config.malicious && !labeled) throw ConfigError("malicious ECU enabled without an attack plan");
  if (labeled && labeled->frames.size() != trace.size()) throw DimensionError("labeled trace does not match the trace");
  const std::size_t detector_ecu = detector ? config.ecu_index(config.detector_ecu) : 0;
  if (detector) {
    if (!detector->model || !detector->normalizer) throw ConfigError("detector needs a model and a normalizer");
    if (detector->model->input_size() != catalog.size() || detector->normalizer->min.size() != catalog.size()) {
      throw DimensionError("detector dimensions do not match the signal catalog (" + std::to_string(catalog.size()) +
                           " signals)");
    }
    if (detector->window_length == 0) throw ConfigError("detector window length must be positive");
  }

  // message id -> (sender ECU, stats slot)
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> route;
  SimReport report;
  report.deadline_ms = config.deadline_ms();
  for (const auto& e : config.emitters) {
    const std::size_t ei = config.ecu_index(e.ecu);
    for (const auto& name : e.messages) {
      const auto& info = catalog.message(name);
      route[info.id] = {ei, report.messages.size()};
      report.messages.push_back({e.ecu, name, 0, {}, 0, 0.0, 0.0});
    }
  }
  // Room for one forged-frame row per message so references stay valid.
  report.messages.reserve(2 * report.messages.size());
  std::map<std::uint32_t, std::size_t> mutated_slot;
  const std::size_t malicious_ecu = config.malicious ? config.ecu_index("MALICIOUS") : 0;

  struct FrameRecord {
    RawFrame frame;
    std::size_t slot;
    std::optional<std::size_t> mutate_with;  // index into labeled->frames
  };
  std::vector<FrameRecord> frames;
  std::priority_queue<detail::Event, std::vector<detail::Event>, std::greater<>> queue;
  const double end_ms = config.duration_s * 1000.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& f = trace[i];
    const double t = f.timestamp * 1000.0;
    if (t >= end_ms) break;
    const auto it = route.find(f.can_id);
    if (it == route.end()) continue;
    std::optional<std::size_t> mut;
    if (config.malicious && labeled->labels[i]) mut = i;
    frames.push_back({f, it->second.second, mut});
    queue.push({t, detail::EventType::emit, it->second.first, frames.size() - 1, it->second.first, t});
  }

  Rng rng(config.seed);
  auto hop = [&]() {
    const double j = config.jitter_ms > 0.0 ? rng.uniform(-config.jitter_ms, config.jitter_ms) : 0.0;
    return config.base_ms + j;
  };
  // All hops but the last happen before the switch.
  auto uplink = [&]() {
    double d = 0.0;
    for (int h = 0; h + 1 < config.hops; ++h) d += hop();
    return d;
  };

  std::optional<FeatureAssembler> assembler;
  std::vector<double> recent;  // normalized rows, ring of window_length
  std::size_t recent_rows = 0;
  std::optional<SequenceWindow> sample_window;
  std::vector<double> sample_buffer;
  if (detector) assembler.emplace(catalog);

  std::ostringstream log;
  if (config.event_log) log << "time_ms,event,ecu,message,frame_seq\n";
  auto message_name = [&](std::size_t seq) { return report.messages[frames[seq].slot].message; };

  while (!queue.empty()) {
    const detail::Event ev = queue.top();
    queue.pop();
    if (config.event_log) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", ev.time_ms);
      log << buf << ',' << detail::event_name(ev.type) << ',' << config.ecus[ev.ecu] << ',' << message_name(ev.seq)
          << ',' << ev.seq << '\n';
    }
    auto& stats = report.messages[frames[ev.seq].slot];
    switch (ev.type) {
      case detail::EventType::emit:
        ++stats.frames;
        ++report.emissions;
        queue.push({ev.time_ms + uplink(), detail::EventType::at_switch, ev.sender, ev.seq, ev.sender, ev.emitted_ms});
        break;
      case detail::EventType::at_switch:
        // Forward to everyone but the sender, whatever the frame contains.
        for (std::size_t r = 0; r < config.ecus.size(); ++r) {
          if (r == ev.sender) continue;
          queue.push({ev.time_ms + hop(), detail::EventType::receive, r, ev.seq, ev.sender, ev.emitted_ms});
        }
        break;
      case detail::EventType::receive: {
        const double latency = ev.time_ms - ev.emitted_ms;
        ++stats.received[config.ecus[ev.ecu]];
        ++stats.receptions;
        ++report.receptions;
        stats.latency_sum_ms += latency;
        stats.max_latency_ms = std::max(stats.max_latency_ms, latency);

        const auto& rec = frames[ev.seq];
        if (config.malicious && ev.ecu == malicious_ecu && rec.mutate_with) {
          const RawFrame& forged = labeled->frames[*rec.mutate_with];
          auto slot_it = mutated_slot.find(forged.can_id);
          if (slot_it == mutated_slot.end()) {
            slot_it = mutated_slot.emplace(forged.can_id, report.messages.size()).first;
            report.messages.push_back({"MALICIOUS", stats.message, 0, {}, 0, 0.0, 0.0});
          }
          frames.push_back({forged, slot_it->second, std::nullopt});
          ++report.mutated;
          const double t = ev.time_ms + config.malicious_delay_ms;
          queue.push({t, detail::EventType::emit, malicious_ecu, frames.size() - 1, malicious_ecu, t});
        }
        if (detector && ev.ecu == detector_ecu && assembler->push(rec.frame)) {
          const std::size_t width = catalog.size(), len = detector->window_length;
          if (recent.empty()) recent.assign(len * width, 0.0);
          // Shift the window up by one row and append.
          std::copy(recent.begin() + static_cast<std::ptrdiff_t>(width), recent.end(), recent.begin());
          auto row = std::span<double>(recent).subspan((len - 1) * width, width);
          std::copy(assembler->held().begin(), assembler->held().end(), row.begin());
          apply_in_place(*detector->normalizer, row);
          if (++recent_rows >= len) {
            SequenceWindow w{recent, len, width, 0, 0};
            ++report.detector_inferences;
            report.detector_alerts += static_cast<std::size_t>(predict(*detector->model, w, detector->threshold));
            if (sample_buffer.empty()) sample_buffer = recent;
          }
        }
        break;
      }
    }
  }

  if (detector) {
    if (sample_buffer.empty()) {
      sample_buffer.assign(detector->window_length * catalog.size(), 0.0);
    }
    const SequenceWindow w{sample_buffer, detector->window_length, catalog.size(), 0, 0};
    report.timing = measure_inference(*detector->model, w, config.timing_reps, detector->threshold);
    report.comp_latency_ms = report.timing->mean_ms;
  } else {
    report.comp_latency_ms = config.comp_latency_ms;
  }
  if (config.event_log) report.event_log = log.str();
  return report;
}

inline constexpr std::string_view kSimReportHeader =
    "ecu,message,frames,avg_latency_ms,comp_latency_ms,total_latency_ms,deadline_ms,pass";

inline void write_sim_report_csv(std::ostream& out, const SimReport& r) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  out << kSimReportHeader << '\n';
  std::size_t frames = 0;
  bool all = true;
  for (const auto& m : r.messages) {
    const bool ok = meets_deadline(m.avg_latency_ms(), r.comp_latency_ms, r.deadline_ms);
    all = all && ok;
    frames += m.frames;
    out << m.ecu << ',' << m.message << ',' << m.frames << ',' << num(m.avg_latency_ms()) << ','
        << num(r.comp_latency_ms) << ',' << num(r.total_latency_ms(m)) << ',' << num(r.deadline_ms) << ','
        << (ok ? "yes" : "no") << '\n';
  }
  const bool overall = all && meets_deadline(r.overall_comm_ms(), r.comp_latency_ms, r.deadline_ms);
  out << "Overall,all," << frames << ',' << num(r.overall_comm_ms()) << ',' << num(r.comp_latency_ms) << ','
      << num(r.overall_total_ms()) << ',' << num(r.deadline_ms) << ',' << (overall ? "yes" : "no") << '\n';
}

}  // namespace canids
