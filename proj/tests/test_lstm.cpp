#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "canids/lstm.hpp"

using namespace canids;

namespace {

LstmModel random_model(std::size_t d, std::size_t h, std::uint64_t seed, double scale = 0.5) {
  LstmModel m(d, h);
  Rng rng(seed);
  for (double& p : m.params()) p = rng.uniform(-scale, scale);
  return m;
}

struct OwnedWindows {
  std::vector<std::vector<double>> data;
  std::vector<SequenceWindow> windows;
};

OwnedWindows random_windows(std::size_t n, std::size_t t, std::size_t d, std::uint64_t seed) {
  OwnedWindows o;
  Rng rng(seed);
  o.data.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    o.data[k].resize(t * d);
    for (double& x : o.data[k]) x = rng.uniform01();
  }
  for (std::size_t k = 0; k < n; ++k)
    o.windows.push_back({o.data[k], t, d, static_cast<std::uint8_t>(k % 2), k});
  return o;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain loops over the flat parameter layout; shares nothing with the Eigen code.
double straight_forward(const std::vector<double>& P, std::size_t D, std::size_t H, const SequenceWindow& w,
                        const std::vector<double>* mask = nullptr) {
  const std::size_t cols = D + H;
  auto W = [&](std::size_t r, std::size_t c) { return P[r * cols + c]; };
  const std::size_t ob = 4 * H * cols;
  const std::size_t ofc = ob + 4 * H;
  const std::size_t ofb = ofc + H * H;
  const std::size_t oow = ofb + H;
  std::vector<double> h(H, 0.0), c(H, 0.0);
  for (std::size_t t = 0; t < w.length; ++t) {
    std::vector<double> xh(cols);
    for (std::size_t j = 0; j < D; ++j) xh[j] = w.inputs[t * D + j];
    for (std::size_t j = 0; j < H; ++j) xh[D + j] = h[j];
    std::vector<double> nh(H), nc(H);
    for (std::size_t u = 0; u < H; ++u) {
      double z[4];
      for (int g = 0; g < 4; ++g) {
        double acc = P[ob + g * H + u];
        for (std::size_t j = 0; j < cols; ++j) acc += W(g * H + u, j) * xh[j];
        z[g] = acc;
      }
      const double i = sig(z[0]), f = sig(z[1]), o = sig(z[2]), g = std::tanh(z[3]);
      nc[u] = f * c[u] + i * g;
      nh[u] = o * std::tanh(nc[u]);
    }
    h = nh;
    c = nc;
  }
  if (mask)
    for (std::size_t u = 0; u < H; ++u) h[u] *= (*mask)[u];
  double logit = P.back();
  for (std::size_t u = 0; u < H; ++u) {
    double a = P[ofb + u];
    for (std::size_t j = 0; j < H; ++j) a += P[ofc + u * H + j] * h[j];
    logit += P[oow + u] * std::max(a, 0.0);
  }
  return sig(logit);
}

}  // namespace

TEST(LstmModel, Layout) {
  EXPECT_EQ(LstmModel::param_count(20, 50), 4u * 50 * 70 + 200 + 2500 + 100 + 1);
  LstmModel m(3, 2);
  EXPECT_EQ(m.params().size(), LstmModel::param_count(3, 2));
  EXPECT_EQ(m.gate_weights().rows(), 8);
  EXPECT_EQ(m.gate_weights().cols(), 5);
  m.params().back() = 7.0;
  EXPECT_EQ(m.out_bias(), 7.0);
  m.params()[4 * 2 * 5] = 3.0;
  EXPECT_EQ(m.gate_bias()(0), 3.0);
  EXPECT_THROW(LstmModel(0, 3), DimensionError);
}

TEST(LstmStep, ZeroParametersClosedForm) {
  LstmModel m(3, 4);
  CellState s = zero_state(m);
  s.c << 1.0, -2.0, 0.5, 3.0;
  s.h << 0.1, 0.2, 0.3, 0.4;
  const std::vector<double> x{0.3, -1.0, 2.0};
  const auto n = lstm_step(x, s, m);
  for (int u = 0; u < 4; ++u) {
    EXPECT_DOUBLE_EQ(n.c(u), 0.5 * s.c(u));
    EXPECT_NEAR(n.h(u), 0.5 * std::tanh(0.5 * s.c(u)), 1e-15);
  }
}

TEST(LstmStep, TwoUnitHandComputation) {
  // D=1, H=2. Row order i0 i1 f0 f1 o0 o1 g0 g1, columns [x, h0, h1].
  LstmModel m(1, 2);
  const double W[8][3] = {{0.5, -0.2, 0.1}, {0.3, 0.4, -0.5}, {-0.1, 0.2, 0.3}, {0.6, -0.3, 0.2},
                          {0.2, 0.1, -0.4}, {-0.5, 0.3, 0.2}, {0.4, -0.6, 0.5}, {0.1, 0.2, -0.3}};
  const double B[8] = {0.1, -0.1, 0.2, 0.0, -0.2, 0.3, 0.05, -0.05};
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 3; ++c) m.gate_weights()(r, c) = W[r][c];
    m.gate_bias()(r) = B[r];
  }
  CellState s = zero_state(m);
  s.h << 0.2, -0.1;
  s.c << 0.5, -0.3;
  const std::vector<double> x{1.5};
  const auto n = lstm_step(x, s, m);

  // Unit 0, worked by hand.
  const double zi0 = 0.1 + 0.5 * 1.5 - 0.2 * 0.2 + 0.1 * -0.1;    // 0.80
  const double zf0 = 0.2 - 0.1 * 1.5 + 0.2 * 0.2 + 0.3 * -0.1;    // 0.06
  const double zo0 = -0.2 + 0.2 * 1.5 + 0.1 * 0.2 - 0.4 * -0.1;   // 0.16
  const double zg0 = 0.05 + 0.4 * 1.5 - 0.6 * 0.2 + 0.5 * -0.1;   // 0.48
  const double c0 = sig(zf0) * 0.5 + sig(zi0) * std::tanh(zg0);
  EXPECT_NEAR(zi0, 0.80, 1e-15);
  EXPECT_NEAR(n.c(0), c0, 1e-15);
  EXPECT_NEAR(n.h(0), sig(zo0) * std::tanh(c0), 1e-15);
  // Unit 1.
  const double zi1 = -0.1 + 0.3 * 1.5 + 0.4 * 0.2 - 0.5 * -0.1;
  const double zf1 = 0.0 + 0.6 * 1.5 - 0.3 * 0.2 + 0.2 * -0.1;
  const double zo1 = 0.3 - 0.5 * 1.5 + 0.3 * 0.2 + 0.2 * -0.1;
  const double zg1 = -0.05 + 0.1 * 1.5 + 0.2 * 0.2 - 0.3 * -0.1;
  const double c1 = sig(zf1) * -0.3 + sig(zi1) * std::tanh(zg1);
  EXPECT_NEAR(n.c(1), c1, 1e-15);
  EXPECT_NEAR(n.h(1), sig(zo1) * std::tanh(c1), 1e-15);
  EXPECT_LT(std::abs(n.h(0)), 1.0);
  EXPECT_THROW(lstm_step(std::vector<double>{1, 2}, s, m), DimensionError);
}

TEST(Forward, ZeroModelIsOneHalf) {
  LstmModel m(4, 3);
  auto w = random_windows(5, 6, 4, 1);
  for (const auto& x : w.windows) {
    EXPECT_EQ(forward(x, m), 0.5);
    EXPECT_EQ(predict(m, x), 1);
  }
}

TEST(Forward, MatchesStraightLineImplementation) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto m = random_model(5, 6, seed);
    const std::vector<double> P(m.params().begin(), m.params().end());
    auto w = random_windows(8, 10, 5, seed + 10);
    for (const auto& x : w.windows) {
      EXPECT_NEAR(forward(x, m), straight_forward(P, 5, 6, x), 1e-12);
      const double p = forward(x, m);
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
    std::vector<double> mask{2, 0, 2, 2, 0, 2};
    EXPECT_NEAR(forward(w.windows[0], m, mask), straight_forward(P, 5, 6, w.windows[0], &mask), 1e-12);
  }
}

TEST(Forward, ZeroMaskIgnoresInput) {
  const auto m = random_model(3, 4, 9);
  const std::vector<double> zero(4, 0.0);
  double expect_logit = m.out_bias();
  for (int u = 0; u < 4; ++u) expect_logit += m.out_weights()(u) * std::max(m.fc_bias()(u), 0.0);
  auto w = random_windows(4, 5, 3, 2);
  for (const auto& x : w.windows) EXPECT_NEAR(forward(x, m, zero), sig(expect_logit), 1e-15);
  EXPECT_THROW(forward(w.windows[0], m, std::vector<double>(3, 1.0)), DimensionError);
  LstmModel other(4, 4);
  EXPECT_THROW(forward(w.windows[0], other), DimensionError);
}

TEST(BceLoss, Examples) {
  EXPECT_EQ(bce_loss(1, 1.0), 0.0);
  EXPECT_EQ(bce_loss(0, 0.0), 0.0);
  const std::vector<std::uint8_t> y{1, 0};
  const std::vector<double> p{0.5, 0.5};
  EXPECT_NEAR(bce_loss(y, p), 0.693147, 1e-6);
  EXPECT_NEAR(bce_loss(0, 1.0), -std::log(1e-12), 1e-3);
  EXPECT_TRUE(std::isfinite(bce_loss(1, 0.0)));
  EXPECT_GT(bce_loss(1, 0.3), 0.0);
  EXPECT_THROW(bce_loss(y, std::vector<double>{0.5}), DimensionError);
}

class GradientCheck : public ::testing::TestWithParam<bool> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const std::size_t D = 3, H = 4, T = 3, B = 2;
  auto m = random_model(D, H, 21, 0.8);
  auto w = random_windows(B, T, D, 22);
  Eigen::MatrixXd masks;
  if (GetParam()) {
    masks.resize(H, B);
    masks << 2, 0, 0, 2, 2, 2, 2, 0;
  }
  const auto res = backward(m, w.windows, masks);
  auto loss_at = [&](const LstmModel& mm) {
    std::vector<double> p;
    std::vector<std::uint8_t> y;
    for (std::size_t k = 0; k < B; ++k) {
      if (GetParam()) {
        std::vector<double> col(masks.col(static_cast<Eigen::Index>(k)).data(),
                                masks.col(static_cast<Eigen::Index>(k)).data() + H);
        p.push_back(forward(w.windows[k], mm, col));
      } else {
        p.push_back(forward(w.windows[k], mm));
      }
      y.push_back(w.windows[k].label);
    }
    return bce_loss(y, p);
  };
  EXPECT_NEAR(res.loss, loss_at(m), 1e-12);
  const double step = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < m.params().size(); ++k) {
    auto plus = m, minus = m;
    plus.params()[k] += step;
    minus.params()[k] -= step;
    const double numeric = (loss_at(plus) - loss_at(minus)) / (2 * step);
    const double analytic = res.gradient[k];
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, rel);
    EXPECT_LT(rel, 1e-4) << "param " << k << " analytic " << analytic << " numeric " << numeric;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

INSTANTIATE_TEST_SUITE_P(Masks, GradientCheck, ::testing::Values(false, true));

TEST(Backward, OutBiasGradientIsMeanResidual) {
  const auto m = random_model(4, 5, 31);
  auto w = random_windows(7, 4, 4, 32);
  const auto res = backward(m, w.windows);
  double mean = 0.0;
  for (std::size_t k = 0; k < 7; ++k) mean += (res.probabilities[k] - w.windows[k].label) / 7.0;
  EXPECT_NEAR(res.gradient.back(), mean, 1e-15);
  for (std::size_t k = 0; k < 7; ++k) EXPECT_NEAR(res.probabilities[k], forward(w.windows[k], m), 1e-12);
}

TEST(Backward, PerfectPredictionHasZeroGradient) {
  LstmModel m(2, 3);
  m.out_bias() = 800.0;  // p rounds to exactly 1
  auto w = random_windows(3, 2, 2, 4);
  for (auto& x : w.windows) x.label = 1;
  const auto res = backward(m, w.windows);
  EXPECT_EQ(res.loss, 0.0);
  for (double g : res.gradient) EXPECT_EQ(g, 0.0);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  std::vector<double> p{1.0, -2.0, 3.0};
  const auto before = p;
  AdamState st;
  for (int i = 0; i < 3; ++i) adam_step(p, std::vector<double>(3, 0.0), st, {});
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.t, 3u);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  std::vector<double> p{0.0, 0.0, 0.0};
  AdamState st;
  adam_step(p, std::vector<double>{0.3, -5.0, 1e-3}, st, {});
  EXPECT_NEAR(p[0], -1e-3, 1e-10);
  EXPECT_NEAR(p[1], 1e-3, 1e-10);
  EXPECT_NEAR(p[2], -1e-3, 1e-7);
}

TEST(Adam, ThreeStepsOnAQuadratic) {
  // f(x) = x^2 from x = 1, lr 0.1, stepped by hand.
  const AdamParams hp{0.1, 0.9, 0.999, 1e-8};
  std::vector<double> x{1.0};
  AdamState st;
  double hx = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double g = 2 * hx;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    hx -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    adam_step(x, std::vector<double>{2 * x[0]}, st, hp);
    EXPECT_NEAR(x[0], hx, 1e-15) << t;
  }
  // First update is lr * sign, then gradients shrink slightly.
  EXPECT_NEAR(x[0], 0.7, 2e-3);
  EXPECT_THROW(adam_step(x, std::vector<double>{1, 2}, st, hp), DimensionError);
}

TEST(GlorotInit, RangesAndZeroBiases) {
  LstmModel m(20, 50);
  Rng rng(3);
  glorot_init(m, rng);
  const double lg = std::sqrt(6.0 / 120.0), lf = std::sqrt(6.0 / 100.0), lo = std::sqrt(6.0 / 51.0);
  EXPECT_LE(m.gate_weights().cwiseAbs().maxCoeff(), lg);
  EXPECT_GT(m.gate_weights().cwiseAbs().maxCoeff(), 0.9 * lg);
  EXPECT_LE(m.fc_weights().cwiseAbs().maxCoeff(), lf);
  EXPECT_LE(m.out_weights().cwiseAbs().maxCoeff(), lo);
  EXPECT_EQ(m.gate_bias().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(m.fc_bias().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(m.out_bias(), 0.0);
}

namespace {

OwnedWindows separable(std::size_t n, std::size_t t, std::size_t d) {
  OwnedWindows o;
  o.data.resize(n);
  for (std::size_t k = 0; k < n; ++k) o.data[k].assign(t * d, k % 2 ? 0.9 : 0.1);
  for (std::size_t k = 0; k < n; ++k) o.windows.push_back({o.data[k], t, d, static_cast<std::uint8_t>(k % 2), k});
  return o;
}

}  // namespace

TEST(Train, SeparableToySet) {
  auto w = separable(64, 10, 20);
  TrainConfig cfg;
  cfg.hidden_size = 8;
  cfg.batch_size = 16;
  cfg.epochs = 50;
  const auto res = train(w.windows, cfg);
  ASSERT_EQ(res.history.loss.size(), 50u);
  ASSERT_EQ(res.history.seconds.size(), 50u);
  for (const auto& x : w.windows) EXPECT_EQ(predict(res.model, x), x.label);
  for (std::size_t e = 5; e < 50; ++e) EXPECT_LE(res.history.loss[e], res.history.loss[e - 1]) << e;
}

TEST(Train, DeterministicAndResumable) {
  auto w = random_windows(40, 4, 3, 5);
  TrainConfig cfg;
  cfg.hidden_size = 5;
  cfg.batch_size = 7;
  cfg.epochs = 4;
  cfg.dropout = 0.5;
  const auto a = train(w.windows, cfg);
  const auto b = train(w.windows, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.history.loss, b.history.loss);

  std::vector<LstmModel> snapshots;
  train(w.windows, cfg, [&](std::size_t, const LstmModel& m, const TrainHistory&) { snapshots.push_back(m); });
  ASSERT_EQ(snapshots.size(), 4u);
  for (std::size_t e = 1; e <= 4; ++e) {
    auto c = cfg;
    c.epochs = e;
    EXPECT_EQ(train(w.windows, c).model, snapshots[e - 1]) << e;
  }
  cfg.seed = 43;
  EXPECT_NE(train(w.windows, cfg).model, a.model);
}

TEST(Train, ZeroEpochsReturnsInitialModel) {
  auto w = random_windows(10, 3, 2, 6);
  TrainConfig cfg;
  cfg.hidden_size = 4;
  cfg.epochs = 0;
  const auto res = train(w.windows, cfg);
  EXPECT_TRUE(res.history.loss.empty());
  LstmModel init(2, 4);
  Rng rng(cfg.seed);
  glorot_init(init, rng);
  EXPECT_EQ(res.model, init);
}

TEST(Train, Errors) {
  auto w = random_windows(10, 3, 2, 6);
  TrainConfig cfg;
  cfg.hidden_size = 4;
  cfg.epochs = 2;
  cfg.batch_size = 0;
  EXPECT_THROW(train(w.windows, cfg), ConfigError);
  cfg.batch_size = 4;
  cfg.dropout = 1.0;
  EXPECT_THROW(train(w.windows, cfg), ConfigError);
  cfg.dropout = 0.0;
  EXPECT_THROW(train(std::span<const SequenceWindow>{}, cfg), ConfigError);
  cfg.learning_rate = 1e300;
  for (auto& d : w.data)
    for (double& x : d) x *= 1e200;
  try {
    train(w.windows, cfg);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 1u);
  }
}

TEST(Predict, ThresholdTiesAndStream) {
  LstmModel zero(2, 3);
  FeatureMatrix fm;
  fm.width = 2;
  for (int i = 0; i < 15; ++i) {
    fm.timestamps.push_back(i);
    fm.values.push_back(i / 15.0);
    fm.values.push_back(1 - i / 15.0);
    fm.labels.push_back(0);
  }
  for (auto l : predict_stream(zero, fm, 10)) EXPECT_EQ(l, 1);
  const auto m = random_model(2, 3, 8, 2.0);
  const auto stream = predict_stream(m, fm, 10, 0.5);
  const auto ws = windows(fm, 10);
  ASSERT_EQ(stream.size(), ws.size());
  for (std::size_t k = 0; k < ws.size(); ++k) EXPECT_EQ(stream[k], predict(m, ws[k]));
  const double p = forward(ws[0], m);
  EXPECT_EQ(predict(m, ws[0], p), 1);
  EXPECT_EQ(predict(m, ws[0], std::nextafter(p, 2.0)), 0);
}

TEST(Predict, IndependentOfBatchComposition) {
  const auto m = random_model(3, 4, 12);
  auto w = random_windows(9, 5, 3, 13);
  const auto alone = predict_probabilities(m, w.windows);
  const auto batched = backward(m, w.windows).probabilities;
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_NEAR(alone[k], batched[k], 1e-12);
    std::span<const SequenceWindow> one(&w.windows[k], 1);
    EXPECT_EQ(predict_probabilities(m, one)[0], alone[k]);
  }
}

TEST(Relu, LayerOutputNonNegative) {
  const auto m = random_model(3, 6, 14, 2.0);
  auto w = random_windows(20, 4, 3, 15);
  for (const auto& x : w.windows) {
    CellState s = zero_state(m);
    for (std::size_t t = 0; t < x.length; ++t) s = lstm_step(x.step(t), s, m);
    const Eigen::VectorXd r = (m.fc_weights() * s.h + m.fc_bias()).cwiseMax(0.0);
    EXPECT_GE(r.minCoeff(), 0.0);
    EXPECT_LT(s.h.cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(Checkpoint, RoundtripIsBitExact) {
  auto m = random_model(20, 7, 99);
  m.params()[3] = -0.0;
  m.params()[4] = 1e-310;
  Checkpoint ck{m, 10, TrainConfig{}, Normalizer{std::vector<double>(20, 0.1), std::vector<double>(20, 0.7)}};
  ck.config->dropout = 0.5;
  const auto bytes = save_checkpoint(ck);
  const auto back = load_checkpoint(bytes);
  ASSERT_EQ(back.model.params().size(), m.params().size());
  for (std::size_t k = 0; k < m.params().size(); ++k)
    EXPECT_EQ(std::memcmp(&back.model.params()[k], &m.params()[k], sizeof(double)), 0) << k;
  EXPECT_EQ(back.window_length, 10u);
  ASSERT_TRUE(back.config.has_value());
  EXPECT_EQ(back.config->dropout, 0.5);
  EXPECT_EQ(back.normalizer, ck.normalizer);
  EXPECT_EQ(save_checkpoint(back), bytes);
  EXPECT_EQ(load_checkpoint(save_checkpoint(m)).model, m);
}

TEST(Checkpoint, Errors) {
  const auto m = random_model(20, 5, 1);
  const auto bytes = save_checkpoint(m);
  EXPECT_THROW(load_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  EXPECT_THROW(load_checkpoint(bytes.substr(0, 30)), CheckpointError);
  EXPECT_THROW(load_checkpoint(std::string("hello\n")), CheckpointError);
  auto flipped = bytes;
  flipped[flipped.size() - 5] ^= 0x40;
  EXPECT_THROW(load_checkpoint(flipped), CheckpointError);
  auto versioned = bytes;
  versioned.replace(versioned.find("version 1"), 9, "version 2");
  try {
    load_checkpoint(versioned);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  EXPECT_NO_THROW(load_checkpoint(bytes, 20, 5));
  EXPECT_THROW(load_checkpoint(save_checkpoint(random_model(20, 50, 1)), 20, 100), DimensionError);
}

TEST(Backward, ChunkedLargeBatchMatchesOnePass) {
  const auto m = random_model(3, 4, 41);
  auto w = random_windows(600, 3, 3, 42);
  Rng rng(43);
  const auto masks = dropout_masks(4, 600, 0.5, rng);
  const auto whole = backward(m, w.windows, masks);
  std::vector<const SequenceWindow*> ptrs;
  for (const auto& x : w.windows) ptrs.push_back(&x);
  BatchWorkspace ws;
  std::vector<double> grad(m.params().size(), 0.0);
  EXPECT_NEAR(ws.accumulate(m, ptrs, masks, grad), whole.loss, 1e-12);
  for (std::size_t k = 0; k < grad.size(); ++k) EXPECT_NEAR(grad[k], whole.gradient[k], 1e-12) << k;
}
