#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "canids/eval.hpp"
#include "canids/report.hpp"

using namespace canids;

namespace {

std::vector<std::uint8_t> v(std::initializer_list<int> xs) {
  std::vector<std::uint8_t> out;
  for (int x : xs) out.push_back(static_cast<std::uint8_t>(x));
  return out;
}

MetricsReport report_from_percent(double acc, double prec, double rec) {
  MetricsReport m;
  m.accuracy = acc / 100;
  m.precision = prec / 100;
  m.recall = rec / 100;
  m.fpr = 0.0;
  return m;
}

SweepRow row(std::size_t h, std::size_t e, std::size_t b, double p, double acc, double prec, double rec) {
  return {h, e, b, p, report_from_percent(acc, prec, rec), 0.0, {}};
}

struct Dataset {
  std::vector<std::vector<double>> data;
  std::vector<SequenceWindow> windows;
};

Dataset noisy_dataset(std::size_t n, std::uint64_t seed) {
  Dataset d;
  Rng rng(seed);
  d.data.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const bool pos = rng.bernoulli(0.3);
    d.data[k].resize(5 * 3);
    for (double& x : d.data[k]) x = std::clamp((pos ? 0.6 : 0.4) + 0.2 * rng.normal(), 0.0, 1.0);
    d.windows.push_back({d.data[k], 5, 3, static_cast<std::uint8_t>(pos), k});
  }
  return d;
}

}  // namespace

TEST(Confusion, Examples) {
  EXPECT_EQ(confusion(v({1, 1, 0, 0}), v({1, 0, 0, 1})), (Confusion{1, 1, 1, 1}));
  const auto labels = v({1, 0, 1, 1, 0});
  const auto c = confusion(labels, labels);
  EXPECT_EQ(c.fp, 0u);
  EXPECT_EQ(c.fn, 0u);
  EXPECT_EQ(confusion(v({0, 0, 0}), v({1, 1, 1})), (Confusion{0, 3, 0, 0}));
  EXPECT_THROW(confusion(v({1}), v({1, 0})), DimensionError);
  EXPECT_THROW(confusion(v({2}), v({1})), RangeError);
}

TEST(Metrics, HandArithmetic) {
  const auto m = metrics({9, 1, 89, 1});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.98);
  EXPECT_DOUBLE_EQ(*m.precision, 0.90);
  EXPECT_DOUBLE_EQ(*m.recall, 0.90);
  EXPECT_DOUBLE_EQ(*m.fpr, 1.0 / 90);
  EXPECT_THROW(metrics({}), RangeError);
  const auto none = metrics({0, 0, 5, 0});
  EXPECT_FALSE(none.precision.has_value());
  EXPECT_FALSE(none.recall.has_value());
  EXPECT_DOUBLE_EQ(*none.fpr, 0.0);
  EXPECT_FALSE(metrics({3, 0, 0, 1}).fpr.has_value());
}

TEST(Metrics, MatchesBruteForceCounting) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + gen() % 60;
    std::vector<std::uint8_t> l(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = gen() & 1;
      p[i] = gen() & 1;
    }
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (l[i] && p[i]) ++tp;
      if (!l[i] && p[i]) ++fp;
      if (!l[i] && !p[i]) ++tn;
      if (l[i] && !p[i]) ++fn;
    }
    const auto m = metrics(confusion(l, p));
    ASSERT_EQ(m.counts, (Confusion{tp, fp, tn, fn}));
    ASSERT_EQ(m.accuracy, static_cast<double>(tp + tn) / static_cast<double>(n));
    if (tp + fp) ASSERT_EQ(*m.precision, static_cast<double>(tp) / static_cast<double>(tp + fp));
    else ASSERT_FALSE(m.precision);
    if (tp + fn) ASSERT_EQ(*m.recall, static_cast<double>(tp) / static_cast<double>(tp + fn));
    else ASSERT_FALSE(m.recall);
    if (fp + tn) ASSERT_EQ(*m.fpr, static_cast<double>(fp) / static_cast<double>(fp + tn));
    else ASSERT_FALSE(m.fpr);
  }
}

// Best dropout-0.5 model: accuracy 95%, precision 95%, recall 87%, fpr 2.11%.
TEST(Metrics, AnchorRowIsArithmeticallyConsistent) {
  std::vector<std::uint8_t> labels, preds;
  auto add = [&](int y, int p, int count) {
    for (int i = 0; i < count; ++i) {
      labels.push_back(static_cast<std::uint8_t>(y));
      preds.push_back(static_cast<std::uint8_t>(p));
    }
  };
  add(1, 1, 872);
  add(1, 0, 128);
  add(0, 1, 50);
  add(0, 0, 2320);
  const auto m = metrics(confusion(labels, preds));
  EXPECT_EQ(std::lround(100 * m.accuracy), 95);
  EXPECT_EQ(std::lround(100 * *m.precision), 95);
  EXPECT_EQ(std::lround(100 * *m.recall), 87);
  EXPECT_NEAR(100 * *m.fpr, 2.11, 0.005);
  EXPECT_EQ(format_summary(m), "accuracy 94.72%, precision 94.58%, recall 87.20%, fpr 2.11% (TP 872, FP 50, TN 2320, FN 128)");
}

TEST(BestRow, TieRules) {
  std::vector<SweepRow> rows{row(50, 50, 128, 0, 90, 80, 70), row(50, 50, 512, 0, 92, 70, 70)};
  EXPECT_EQ(best_row(rows).batch_size, 512u);
  rows = {row(50, 50, 128, 0, 92, 80, 70), row(50, 50, 512, 0, 92, 85, 60)};
  EXPECT_EQ(best_row(rows).batch_size, 512u);
  rows = {row(50, 50, 128, 0, 92, 85, 70), row(50, 50, 512, 0, 92, 85, 60)};
  EXPECT_EQ(best_row(rows).batch_size, 128u);
  rows = {row(50, 50, 1024, 0, 92, 85, 70), row(50, 50, 32, 0, 92, 85, 70)};
  EXPECT_EQ(best_row(rows).batch_size, 32u);
  SweepRow failed{50, 50, 8, 0, std::nullopt, 0, "boom"};
  rows = {failed, row(50, 50, 512, 0, 10, 10, 10)};
  EXPECT_EQ(best_row(rows).batch_size, 512u);
  EXPECT_THROW(best_row(std::vector<SweepRow>{}), RangeError);
}

TEST(BestRow, ReferenceDropoutHalfRows) {
  const double t[24][6] = {
      {50, 50, 32, 93, 90, 89},    {50, 50, 128, 95, 95, 87},   {50, 50, 512, 94, 93, 88},
      {50, 50, 1024, 94, 95, 87},  {50, 200, 32, 93, 88, 90},   {50, 200, 128, 93, 87, 90},
      {50, 200, 512, 94, 90, 90},  {50, 200, 1024, 93, 90, 89}, {50, 500, 32, 93, 89, 90},
      {50, 500, 128, 93, 88, 89},  {50, 500, 512, 92, 85, 90},  {50, 500, 1024, 94, 91, 89},
      {100, 50, 32, 93, 88, 89},   {100, 50, 128, 92, 86, 90},  {100, 50, 512, 93, 91, 88},
      {100, 50, 1024, 94, 94, 87}, {100, 200, 32, 93, 87, 90},  {100, 200, 128, 92, 85, 90},
      {100, 200, 512, 92, 85, 90}, {100, 200, 1024, 93, 86, 91}, {100, 500, 32, 92, 85, 90},
      {100, 500, 128, 88, 76, 92}, {100, 500, 512, 92, 86, 90},  {100, 500, 1024, 93, 87, 90}};
  std::vector<SweepRow> rows;
  for (const auto& r : t)
    rows.push_back(row(static_cast<std::size_t>(r[0]), static_cast<std::size_t>(r[1]), static_cast<std::size_t>(r[2]),
                       0.5, r[3], r[4], r[5]));
  std::mt19937_64 gen(3);
  for (int k = 0; k < 20; ++k) {
    const auto& best = best_row(rows);
    EXPECT_EQ(best.hidden_size, 50u);
    EXPECT_EQ(best.epochs, 50u);
    EXPECT_EQ(best.batch_size, 128u);
    std::shuffle(rows.begin(), rows.end(), gen);
  }
}

TEST(BestRow, PermutationInvariantWithFullTies) {
  std::vector<SweepRow> rows;
  for (std::size_t h : {50u, 100u})
    for (std::size_t e : {50u, 200u})
      for (double p : {0.0, 0.5}) rows.push_back(row(h, e, 128, p, 90, 90, 90));
  const auto first = best_row(rows);
  std::mt19937_64 gen(4);
  for (int k = 0; k < 20; ++k) {
    std::shuffle(rows.begin(), rows.end(), gen);
    const auto& b = best_row(rows);
    EXPECT_EQ(b.hidden_size, first.hidden_size);
    EXPECT_EQ(b.epochs, first.epochs);
    EXPECT_EQ(b.dropout, first.dropout);
  }
}

TEST(SweepGrid, Sizes) {
  EXPECT_EQ(SweepGrid::full().size(), 48u);
  EXPECT_EQ(SweepGrid::desk().size(), 4u);
}

TEST(Sweep, OrderAndAgreementWithSeparateRuns) {
  const auto train_set = noisy_dataset(60, 1);
  const auto test_set = noisy_dataset(40, 2);
  SweepGrid grid{{3, 4}, {0, 1, 3}, {8, 32}, {0.0, 0.5}};
  SweepOptions opt;
  opt.seed = 9;
  opt.record_timing = false;
  std::vector<std::size_t> progress;
  opt.on_row = [&](const SweepRow&, std::size_t i, std::size_t total) {
    progress.push_back(i);
    EXPECT_EQ(total, 24u);
  };
  const auto rows = sweep(train_set.windows, test_set.windows, grid, opt);
  ASSERT_EQ(rows.size(), 24u);
  EXPECT_EQ(progress.size(), 24u);
  std::size_t k = 0;
  for (double p : grid.dropouts)
    for (std::size_t h : grid.neurons)
      for (std::size_t e : grid.epochs)
        for (std::size_t b : grid.batches) {
          const auto& r = rows[k++];
          EXPECT_EQ(r.dropout, p);
          EXPECT_EQ(r.hidden_size, h);
          EXPECT_EQ(r.epochs, e);
          EXPECT_EQ(r.batch_size, b);
          ASSERT_TRUE(r.ok()) << r.error;
          TrainConfig cfg;
          cfg.hidden_size = h;
          cfg.epochs = e;
          cfg.batch_size = b;
          cfg.dropout = p;
          cfg.seed = 9;
          const auto alone = evaluate(train(train_set.windows, cfg).model, test_set.windows);
          EXPECT_EQ(*r.metrics, alone) << h << "/" << e << "/" << b << "/" << p;
          EXPECT_EQ(r.train_seconds, 0.0);
        }

  std::ostringstream a, b;
  write_sweep_csv(a, rows);
  write_sweep_csv(b, sweep(train_set.windows, test_set.windows, grid, opt));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Sweep, FailedCellsAreRecorded) {
  const auto train_set = noisy_dataset(20, 1);
  SweepGrid grid{{3}, {1}, {0, 4}, {0.0}};
  const auto rows = sweep(train_set.windows, train_set.windows, grid);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[0].ok());
  EXPECT_FALSE(rows[0].error.empty());
  EXPECT_TRUE(rows[1].ok());
  std::ostringstream s;
  write_sweep_csv(s, rows);
  EXPECT_NE(s.str().find("3,1,0,0,error,error,error,error,"), std::string::npos);
}

TEST(Report, SweepCsvShape) {
  std::vector<SweepRow> rows;
  for (int i = 0; i < 48; ++i) rows.push_back(row(50, 50, 128, i < 24 ? 0.0 : 0.5, 90, 90, 90));
  std::ostringstream s;
  write_sweep_csv(s, rows);
  std::istringstream in(s.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "neurons,epochs,batch,dropout,accuracy,precision,recall,fpr,train_s");
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
  }
  EXPECT_EQ(n, 48);
  std::ostringstream empty;
  write_sweep_csv(empty, std::vector<SweepRow>{});
  EXPECT_EQ(empty.str(), std::string(kSweepHeader) + "\n");
}

TEST(Report, MetricsCsv) {
  std::ostringstream s;
  write_metrics_csv(s, metrics({0, 0, 5, 0}));
  EXPECT_EQ(s.str(), "tp,fp,tn,fn,accuracy,precision,recall,fpr\n0,0,5,0,1.000000,n/a,n/a,0.000000\n");
}

TEST(Report, HeatmapHasOneCellPerEntry) {
  CorrelationMatrix c;
  c.size = 20;
  c.r.assign(400, 0.25);
  c.defined.assign(400, true);
  c.defined[21] = false;
  std::ostringstream s;
  write_heatmap_svg(s, c, nullptr);
  const auto svg = s.str();
  std::size_t cells = 0;
  for (auto pos = svg.find("<rect class=\"cell\""); pos != std::string::npos; pos = svg.find("<rect class=\"cell\"", pos + 1))
    ++cells;
  EXPECT_EQ(cells, 400u);
  EXPECT_NE(svg.find("#bbbbbb"), std::string::npos);
  EXPECT_EQ(detail::heat_color(0.0), "#ffffff");
  EXPECT_EQ(detail::heat_color(1.0), "#f0c814");
  EXPECT_EQ(detail::heat_color(-1.0), "#2166ac");
  std::ostringstream csv;
  write_correlation_csv(csv, c);
  EXPECT_NE(csv.str().find(",n/a"), std::string::npos);
}
