#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "canids/can_codec.hpp"
#include "canids/error.hpp"
#include "canids/random.hpp"
#include "canids/signal_catalog.hpp"

namespace canids {

struct CorrelationTarget {
  int feature_i = 0;  // 1-based
  int feature_j = 0;
  int sign = 1;       // +1 or -1
};

struct TraceGenConfig {
  double duration_s = 537.0;
  double frame_rate_hz = 100.0;
  std::uint64_t seed = 42;
  // Empty means "derive from the catalog's correlation lists".
  std::vector<CorrelationTarget> correlation_targets;
  double smoothness_s = 2.0;
  // Share of a correlated signal's variance explained by its group factor.
  double loading = 0.97;
  // Latent standard deviation as a fraction of the value range; coarse fields
  // (two bits or fewer) get the wider spread so quantization stays small.
  double spread = 0.12;
  double coarse_spread = 0.25;
};

// Every catalog pair listed as correlated, positive except TQFR, which falls
// as engine speed, vehicle speed and maximum torque rise.
inline std::vector<CorrelationTarget> default_correlation_targets(const SignalCatalog& catalog) {
  std::vector<CorrelationTarget> out;
  for (const auto& s : catalog.specs()) {
    for (int other : s.correlated_with) {
      if (other <= s.feature_no) continue;
      const bool inverse = s.signal_name == "TQFR" || catalog.feature(other).signal_name == "TQFR";
      out.push_back({s.feature_no, other, inverse ? -1 : 1});
    }
  }
  return out;
}

namespace detail {

struct LatentLayout {
  std::vector<int> group;        // per signal: group id or -1
  std::vector<int> orientation;  // per signal: +1 / -1 within its group
  int group_count = 0;
  std::optional<std::size_t> counter;   // 0-based signal index
  std::optional<std::size_t> checksum;
};

inline LatentLayout plan_latents(const SignalCatalog& catalog, const std::vector<CorrelationTarget>& targets) {
  const std::size_t n = catalog.size();
  LatentLayout layout;
  layout.group.assign(n, -1);
  layout.orientation.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& name = catalog.specs()[i].signal_name;
    if (name == "MSGCOUNT") layout.counter = i;
    if (name == "CHECKSUM") layout.checksum = i;
  }
  if (layout.checksum && !layout.counter) throw ConfigError("CHECKSUM needs a MSGCOUNT signal in the same catalog");

  auto is_sawtooth = [&](std::size_t i) { return i == layout.counter || i == layout.checksum; };
  std::vector<std::vector<std::pair<std::size_t, int>>> adj(n);
  for (const auto& t : targets) {
    if (t.feature_i < 1 || t.feature_j < 1 || static_cast<std::size_t>(t.feature_i) > n ||
        static_cast<std::size_t>(t.feature_j) > n || t.feature_i == t.feature_j) {
      throw ConfigError("correlation target refers to unknown feature pair " + std::to_string(t.feature_i) + "/" +
                        std::to_string(t.feature_j));
    }
    if (t.sign != 1 && t.sign != -1) throw ConfigError("correlation sign must be +1 or -1");
    const auto a = static_cast<std::size_t>(t.feature_i - 1);
    const auto b = static_cast<std::size_t>(t.feature_j - 1);
    if (is_sawtooth(a) || is_sawtooth(b)) {
      const bool pair = is_sawtooth(a) && is_sawtooth(b);
      if (!pair || t.sign != 1) {
        throw ConfigError("MSGCOUNT/CHECKSUM only support a positive correlation with each other");
      }
      continue;
    }
    adj[a].push_back({b, t.sign});
    adj[b].push_back({a, t.sign});
  }

  for (std::size_t root = 0; root < n; ++root) {
    if (layout.orientation[root] != 0 || adj[root].empty()) continue;
    const int id = layout.group_count++;
    layout.group[root] = id;
    layout.orientation[root] = 1;
    std::vector<std::size_t> stack{root};
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (const auto& [v, sign] : adj[u]) {
        const int want = layout.orientation[u] * sign;
        if (layout.orientation[v] == 0) {
          layout.orientation[v] = want;
          layout.group[v] = id;
          stack.push_back(v);
        } else if (layout.orientation[v] != want) {
          throw ConfigError("correlation signs are inconsistent around " + catalog.specs()[v].signal_name);
        }
      }
    }
  }
  return layout;
}

// Discrete Ornstein-Uhlenbeck process with unit stationary variance.
struct MeanReverting {
  double state = 0.0;
  void start(Rng& rng) { state = rng.normal(); }
  void step(Rng& rng, double phi, double kick) { state = phi * state + kick * rng.normal(); }
};

}  // namespace detail

inline Trace gen_trace(const TraceGenConfig& config, const SignalCatalog& catalog) {
  if (!(config.duration_s > 0.0)) throw ConfigError("duration_s must be positive");
  if (!(config.frame_rate_hz > 0.0)) throw ConfigError("frame_rate_hz must be positive");
  if (!(config.smoothness_s > 0.0)) throw ConfigError("smoothness_s must be positive");
  if (!(config.loading > 0.0 && config.loading <= 1.0)) throw ConfigError("loading must lie in (0, 1]");

  const auto targets =
      config.correlation_targets.empty() ? default_correlation_targets(catalog) : config.correlation_targets;
  const auto layout = detail::plan_latents(catalog, targets);

  const auto& messages = catalog.monitored_messages();
  const double tick_us = 1e6 / config.frame_rate_hz;
  const auto stagger_us = static_cast<std::int64_t>(std::floor(tick_us / static_cast<double>(messages.size())));
  if (stagger_us < 1) throw ConfigError("frame rate too high to interleave messages at microsecond resolution");
  const auto ticks = static_cast<std::int64_t>(std::floor(config.duration_s * config.frame_rate_hz + 1e-9));

  const std::size_t n = catalog.size();
  const double dt = 1.0 / config.frame_rate_hz;
  const double phi = std::exp(-dt / config.smoothness_s);
  const double kick = std::sqrt(1.0 - phi * phi);
  const double idio = std::sqrt(1.0 - config.loading * config.loading);

  Rng rng(config.seed);
  std::vector<detail::MeanReverting> factors(static_cast<std::size_t>(layout.group_count));
  std::vector<detail::MeanReverting> own(n);
  for (auto& f : factors) f.start(rng);
  for (auto& p : own) p.start(rng);

  std::vector<std::vector<std::size_t>> carried;
  for (const auto& m : messages) carried.push_back(catalog.signals_of(m.id));

  Trace trace;
  trace.reserve(static_cast<std::size_t>(ticks) * messages.size());
  std::vector<double> scaled(n, 0.0);
  for (std::int64_t k = 0; k < ticks; ++k) {
    if (k > 0) {
      for (auto& f : factors) f.step(rng, phi, kick);
      for (auto& p : own) p.step(rng, phi, kick);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& spec = catalog.specs()[i];
      double u = own[i].state;
      if (layout.group[i] >= 0) {
        u = config.loading * layout.orientation[i] * factors[static_cast<std::size_t>(layout.group[i])].state +
            idio * own[i].state;
      }
      const double range = spec.max_value - spec.min_value;
      const double spread = spec.bit_length <= 2 ? config.coarse_spread : config.spread;
      scaled[i] = std::clamp(spec.min_value + range * (0.5 + spread * u), spec.min_value, spec.max_value);
    }

    const auto base_us = static_cast<std::int64_t>(std::llround(static_cast<double>(k) * tick_us));
    for (std::size_t m = 0; m < messages.size(); ++m) {
      RawFrame f;
      f.can_id = messages[m].id;
      f.dlc = kMaxDlc;
      f.timestamp = static_cast<double>(base_us + static_cast<std::int64_t>(m) * stagger_us) / 1e6;
      for (std::size_t i : carried[m]) {
        const auto& spec = catalog.specs()[i];
        if (i == layout.checksum) continue;
        std::uint64_t raw = 0;
        if (i == layout.counter) {
          raw = static_cast<std::uint64_t>(k) & spec.max_raw();
        } else {
          raw = encode_signal(scaled[i], spec);
        }
        f = patch_bytes(f, spec, raw);
      }
      if (layout.checksum && catalog.specs()[*layout.checksum].message_id == f.can_id) {
        // Counter with the parity of the remaining payload folded into bit 0.
        const auto& spec = catalog.specs()[*layout.checksum];
        const auto& count_spec = catalog.specs()[*layout.counter];
        const auto own_bytes = spec.byte_positions();
        unsigned sum = 0;
        for (unsigned b = 0; b < f.dlc; ++b)
          if (std::find(own_bytes.begin(), own_bytes.end(), b) == own_bytes.end()) sum += f.data[b];
        const std::uint64_t count = static_cast<std::uint64_t>(k) & count_spec.max_raw();
        f = patch_bytes(f, spec, (count ^ (sum & 1u)) & spec.max_raw());
      }
      trace.push_back(f);
    }
  }
  return trace;
}

}  // namespace canids
