#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canids/error.hpp"
#include "canids/features.hpp"
#include "canids/lstm.hpp"

namespace canids {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

inline Confusion confusion(std::span<const std::uint8_t> labels, std::span<const std::uint8_t> predictions) {
  if (labels.size() != predictions.size()) throw DimensionError("labels and predictions differ in length");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = labels[i], p = predictions[i];
    if (y > 1 || p > 1) throw RangeError("labels and predictions must be 0 or 1");
    if (y == 1) (p == 1 ? c.tp : c.fn)++;
    else (p == 1 ? c.fp : c.tn)++;
  }
  return c;
}

struct MetricsReport {
  Confusion counts;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> fpr;

  std::size_t positives() const { return counts.tp + counts.fn; }
  std::size_t negatives() const { return counts.fp + counts.tn; }
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline MetricsReport metrics(const Confusion& c) {
  if (c.total() == 0) throw RangeError("metrics need at least one sample");
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  MetricsReport r;
  r.counts = c;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.fpr = ratio(c.fp, c.fp + c.tn);
  return r;
}

inline MetricsReport evaluate(const LstmModel& model, std::span<const SequenceWindow> test, double threshold = 0.5) {
  std::vector<std::uint8_t> labels, preds;
  labels.reserve(test.size());
  preds.reserve(test.size());
  for (const auto& w : test) {
    labels.push_back(w.label);
    preds.push_back(static_cast<std::uint8_t>(predict(model, w, threshold)));
  }
  return metrics(confusion(labels, preds));
}

// ---------------------------------------------------------------------------

struct SweepGrid {
  std::vector<std::size_t> neurons{50, 100};
  std::vector<std::size_t> epochs{50, 200, 500};
  std::vector<std::size_t> batches{32, 128, 512, 1024};
  std::vector<double> dropouts{0.0, 0.5};

  std::size_t size() const { return neurons.size() * epochs.size() * batches.size() * dropouts.size(); }

  static SweepGrid full() { return {}; }
  static SweepGrid desk() { return {{50}, {50}, {128, 512}, {0.0, 0.5}}; }
};

struct SweepRow {
  std::size_t hidden_size = 0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double dropout = 0.0;
  std::optional<MetricsReport> metrics;
  double train_seconds = 0.0;
  std::string error;

  bool ok() const { return metrics.has_value(); }
};

struct SweepOptions {
  std::uint64_t seed = 42;
  TrainConfig base;
  bool record_timing = true;
  // Called after each cell, for progress output.
  std::function<void(const SweepRow&, std::size_t index, std::size_t total)> on_row;
};

// Rows come out dropout-major, then neurons, epochs, batch. Cells that differ
// only in epoch count share one training run, evaluated as it passes each count.
inline std::vector<SweepRow> sweep(std::span<const SequenceWindow> train_set, std::span<const SequenceWindow> test_set,
                                   const SweepGrid& grid, const SweepOptions& options = {}) {
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double p : grid.dropouts)
    for (std::size_t h : grid.neurons)
      for (std::size_t e : grid.epochs)
        for (std::size_t b : grid.batches) rows.push_back({h, e, b, p, std::nullopt, 0.0, {}});

  std::vector<bool> done(rows.size(), false);
  std::size_t finished = 0;
  auto finish = [&](std::size_t k) {
    done[k] = true;
    ++finished;
    if (options.on_row) options.on_row(rows[k], finished, rows.size());
  };
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (done[k]) continue;
    std::vector<std::size_t> group;
    std::size_t max_epochs = 0;
    for (std::size_t j = k; j < rows.size(); ++j) {
      if (done[j] || rows[j].hidden_size != rows[k].hidden_size || rows[j].batch_size != rows[k].batch_size ||
          rows[j].dropout != rows[k].dropout)
        continue;
      group.push_back(j);
      max_epochs = std::max(max_epochs, rows[j].epochs);
    }
    TrainConfig cfg = options.base;
    cfg.hidden_size = rows[k].hidden_size;
    cfg.batch_size = rows[k].batch_size;
    cfg.dropout = rows[k].dropout;
    cfg.epochs = max_epochs;
    cfg.seed = options.seed;
    const auto t0 = std::chrono::steady_clock::now();
    auto score = [&](std::size_t epoch, const LstmModel& model) {
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::optional<MetricsReport> m;
      for (std::size_t j : group) {
        if (done[j] || rows[j].epochs != epoch) continue;
        if (!m) m = evaluate(model, test_set, cfg.threshold);
        rows[j].metrics = m;
        if (options.record_timing) rows[j].train_seconds = elapsed;
      }
      // Keep grid order in the progress callback: report in row order once scored.
      for (std::size_t j : group)
        if (!done[j] && rows[j].epochs == epoch) finish(j);
    };
    try {
      score(0, [&] {
        cfg.validate();
        if (train_set.empty()) throw ConfigError("training split is empty");
        LstmModel m(train_set.front().width, cfg.hidden_size);
        Rng rng(cfg.seed);
        glorot_init(m, rng);
        return m;
      }());
      train(train_set, cfg, [&](std::size_t epoch, const LstmModel& model, const TrainHistory&) { score(epoch, model); });
    } catch (const Error& e) {
      for (std::size_t j : group) {
        if (done[j]) continue;
        rows[j].error = e.what();
        if (options.record_timing) {
          rows[j].train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        finish(j);
      }
    }
  }
  return rows;
}

// accuracy, then precision, then recall, then the smaller batch; failed rows
// lose to any successful one.
inline bool better_row(const SweepRow& a, const SweepRow& b) {
  if (a.ok() != b.ok()) return a.ok();
  if (!a.ok()) return false;
  const auto& ma = *a.metrics;
  const auto& mb = *b.metrics;
  if (ma.accuracy != mb.accuracy) return ma.accuracy > mb.accuracy;
  const double pa = ma.precision.value_or(-1.0), pb = mb.precision.value_or(-1.0);
  if (pa != pb) return pa > pb;
  const double ra = ma.recall.value_or(-1.0), rb = mb.recall.value_or(-1.0);
  if (ra != rb) return ra > rb;
  if (a.batch_size != b.batch_size) return a.batch_size < b.batch_size;
  // Remaining ties resolve on hyperparameters so the pick does not depend on row order.
  if (a.hidden_size != b.hidden_size) return a.hidden_size < b.hidden_size;
  if (a.epochs != b.epochs) return a.epochs < b.epochs;
  return a.dropout < b.dropout;
}

inline const SweepRow& best_row(std::span<const SweepRow> rows) {
  if (rows.empty()) throw RangeError("best_row needs at least one row");
  const SweepRow* best = &rows.front();
  for (const auto& r : rows.subspan(1))
    if (better_row(r, *best)) best = &r;
  return *best;
}

}  // namespace canids
