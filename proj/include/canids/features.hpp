#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "canids/attack_synth.hpp"
#include "canids/can_codec.hpp"
#include "canids/error.hpp"
#include "canids/signal_catalog.hpp"

namespace canids {

// Row-major matrix of held signal values, one row per monitored frame.
struct FeatureMatrix {
  std::size_t width = 0;
  std::vector<double> timestamps;
  std::vector<double> values;
  std::vector<std::uint8_t> labels;

  std::size_t rows() const { return timestamps.size(); }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * width, width}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * width, width}; }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows());
    for (std::size_t i = 0; i < rows(); ++i) out[i] = values[i * width + j];
    return out;
  }

  // Rows [begin, end).
  FeatureMatrix slice(std::size_t begin, std::size_t end) const {
    FeatureMatrix out;
    out.width = width;
    out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                          timestamps.begin() + static_cast<std::ptrdiff_t>(end));
    out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * width),
                      values.begin() + static_cast<std::ptrdiff_t>(end * width));
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  }

  // First row whose timestamp is >= t.
  std::size_t lower_bound(double t) const {
    return static_cast<std::size_t>(std::lower_bound(timestamps.begin(), timestamps.end(), t) - timestamps.begin());
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

// Holds the latest value of every signal; emits a row at each monitored
// frame once every signal has been observed.
class FeatureAssembler {
public:
  explicit FeatureAssembler(const SignalCatalog& catalog)
      : catalog_(&catalog), held_(catalog.size(), 0.0), seen_(catalog.size(), false) {}

  // Returns true when the frame produced a row (available through held()).
  bool push(const RawFrame& frame) {
    if (!catalog_->is_monitored(frame.can_id)) return false;
    for (std::size_t i : catalog_->signals_of(frame.can_id)) {
      held_[i] = decode_signal(frame, catalog_->specs()[i]);
      if (!seen_[i]) {
        seen_[i] = true;
        ++seen_count_;
      }
    }
    return warm();
  }

  bool warm() const { return seen_count_ == held_.size(); }
  std::span<const double> held() const { return held_; }

  // Name of the first signal not yet observed, if any.
  const SignalSpec* missing() const {
    for (std::size_t i = 0; i < seen_.size(); ++i)
      if (!seen_[i]) return &catalog_->specs()[i];
    return nullptr;
  }

private:
  const SignalCatalog* catalog_;
  std::vector<double> held_;
  std::vector<bool> seen_;
  std::size_t seen_count_ = 0;
};

inline FeatureMatrix assemble(const LabeledTrace& labeled, const SignalCatalog& catalog) {
  if (labeled.labels.size() != labeled.frames.size()) throw ConfigError("labels do not cover the trace");
  FeatureAssembler assembler(catalog);
  FeatureMatrix m;
  m.width = catalog.size();
  for (std::size_t i = 0; i < labeled.frames.size(); ++i) {
    if (!assembler.push(labeled.frames[i])) continue;
    m.timestamps.push_back(labeled.frames[i].timestamp);
    const auto held = assembler.held();
    m.values.insert(m.values.end(), held.begin(), held.end());
    m.labels.push_back(labeled.labels[i]);
  }
  if (const auto* s = assembler.missing()) {
    throw SignalError("signal " + s->message_name + "." + s->signal_name + " never appears in the trace");
  }
  return m;
}

inline FeatureMatrix assemble(const Trace& trace, const SignalCatalog& catalog) {
  LabeledTrace plain;
  plain.frames = trace;
  plain.labels.assign(trace.size(), 0);
  plain.scenario_of.assign(trace.size(), 0);
  return assemble(plain, catalog);
}

// ---------------------------------------------------------------------------

struct Normalizer {
  std::vector<double> min;
  std::vector<double> max;

  double apply(std::size_t j, double x) const {
    const double span = max[j] - min[j];
    if (!(span > 0.0)) return 0.0;
    return std::clamp((x - min[j]) / span, 0.0, 1.0);
  }

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

inline Normalizer fit_normalizer(const FeatureMatrix& train) {
  if (train.rows() == 0) throw ConfigError("cannot fit a normalizer on an empty slice");
  Normalizer n;
  n.min.assign(train.width, 0.0);
  n.max.assign(train.width, 0.0);
  for (std::size_t j = 0; j < train.width; ++j) n.min[j] = n.max[j] = train.values[j];
  for (std::size_t i = 1; i < train.rows(); ++i) {
    const auto r = train.row(i);
    for (std::size_t j = 0; j < train.width; ++j) {
      n.min[j] = std::min(n.min[j], r[j]);
      n.max[j] = std::max(n.max[j], r[j]);
    }
  }
  return n;
}

inline void apply_in_place(const Normalizer& norm, std::span<double> row) {
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = norm.apply(j, row[j]);
}

inline FeatureMatrix apply(const Normalizer& norm, const FeatureMatrix& m) {
  if (norm.min.size() != m.width) throw DimensionError("normalizer width does not match the feature matrix");
  FeatureMatrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) apply_in_place(norm, out.row(i));
  return out;
}

// ---------------------------------------------------------------------------

// View of `length` consecutive rows; labelled by its final row.
struct SequenceWindow {
  std::span<const double> inputs;  // length * width values, row-major
  std::size_t length = 0;
  std::size_t width = 0;
  std::uint8_t label = 0;
  std::size_t end_row = 0;  // index of the final row in the source matrix

  std::span<const double> step(std::size_t t) const { return inputs.subspan(t * width, width); }
};

// The returned windows borrow from `matrix`.
inline std::vector<SequenceWindow> windows(const FeatureMatrix& matrix, std::size_t length, std::size_t stride = 1) {
  if (length == 0 || stride == 0) throw ConfigError("window length and stride must be positive");
  if (matrix.rows() < length) {
    throw ConfigError("matrix has " + std::to_string(matrix.rows()) + " rows, fewer than the window length " +
                      std::to_string(length));
  }
  std::vector<SequenceWindow> out;
  out.reserve((matrix.rows() - length) / stride + 1);
  for (std::size_t start = 0; start + length <= matrix.rows(); start += stride) {
    const std::size_t last = start + length - 1;
    out.push_back({std::span<const double>(matrix.values.data() + start * matrix.width, length * matrix.width),
                   length, matrix.width, matrix.labels[last], last});
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: timestamp,f1..fN,label

inline void write_features_csv(std::ostream& out, const FeatureMatrix& m) {
  out << "timestamp";
  for (std::size_t j = 0; j < m.width; ++j) out << ",f" << (j + 1);
  out << ",label\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << detail::shortest(m.timestamps[i]);
    for (double v : m.row(i)) out << ',' << detail::shortest(v);
    out << ',' << static_cast<int>(m.labels[i]) << '\n';
  }
}

inline FeatureMatrix read_features_csv(std::istream& in) {
  FeatureMatrix m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto c = detail::split(detail::trim(line), ',');
    if (line_no == 1) {
      if (c.size() < 3 || c.front() != "timestamp" || c.back() != "label") throw ParseError(1, "unexpected features header");
      m.width = c.size() - 2;
      continue;
    }
    if (c.size() != m.width + 2) throw ParseError(line_no, "expected " + std::to_string(m.width + 2) + " columns");
    double t = 0.0;
    if (!detail::parse_number(c[0], t)) throw ParseError(line_no, "malformed timestamp");
    m.timestamps.push_back(t);
    for (std::size_t j = 0; j < m.width; ++j) {
      double v = 0.0;
      if (!detail::parse_number(c[1 + j], v)) throw ParseError(line_no, "malformed feature value");
      m.values.push_back(v);
    }
    int label = 0;
    if (!detail::parse_number(c.back(), label) || (label != 0 && label != 1)) throw ParseError(line_no, "malformed label");
    m.labels.push_back(static_cast<std::uint8_t>(label));
  }
  return m;
}

}  // namespace canids
