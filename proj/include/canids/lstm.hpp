#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "canids/error.hpp"
#include "canids/features.hpp"
#include "canids/hash.hpp"
#include "canids/random.hpp"

namespace canids {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Eigen's kernels peel by address, so buffers they read must sit on a fixed
// alignment or results drift in the last bit from run to run.
using AlignedVector = std::vector<double, Eigen::aligned_allocator<double>>;

// Single-layer LSTM, a ReLU layer of the same width, and one sigmoid output.
//
// Parameters live in one flat vector, in checkpoint order:
//   gate weights  4H x (D+H), rows ordered input, forget, output, candidate;
//                 columns [x ; h]; row-major
//   gate biases   4H, same gate order
//   fc weights    H x H, row-major
//   fc bias       H
//   out weights   H
//   out bias      1
class LstmModel {
public:
  LstmModel() = default;
  LstmModel(std::size_t input_size, std::size_t hidden_size)
      : input_(input_size), hidden_(hidden_size), params_(param_count(input_size, hidden_size), 0.0) {
    if (input_size == 0 || hidden_size == 0) throw DimensionError("LSTM dimensions must be positive");
  }

  static std::size_t param_count(std::size_t d, std::size_t h) { return 4 * h * (d + h) + 4 * h + h * h + 2 * h + 1; }

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  Eigen::Map<const RowMatrix> gate_weights() const { return {at(0), rows4(), static_cast<Eigen::Index>(input_ + hidden_)}; }
  Eigen::Map<RowMatrix> gate_weights() { return {at(0), rows4(), static_cast<Eigen::Index>(input_ + hidden_)}; }
  Eigen::Map<const Eigen::VectorXd> gate_bias() const { return {at(off_gate_bias()), rows4()}; }
  Eigen::Map<Eigen::VectorXd> gate_bias() { return {at(off_gate_bias()), rows4()}; }
  Eigen::Map<const RowMatrix> fc_weights() const { return {at(off_fc()), h(), h()}; }
  Eigen::Map<RowMatrix> fc_weights() { return {at(off_fc()), h(), h()}; }
  Eigen::Map<const Eigen::VectorXd> fc_bias() const { return {at(off_fc() + hidden_ * hidden_), h()}; }
  Eigen::Map<Eigen::VectorXd> fc_bias() { return {at(off_fc() + hidden_ * hidden_), h()}; }
  Eigen::Map<const Eigen::VectorXd> out_weights() const { return {at(off_out()), h()}; }
  Eigen::Map<Eigen::VectorXd> out_weights() { return {at(off_out()), h()}; }
  double out_bias() const { return params_.back(); }
  double& out_bias() { return params_.back(); }

  bool all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const LstmModel&, const LstmModel&) = default;

private:
  Eigen::Index h() const { return static_cast<Eigen::Index>(hidden_); }
  Eigen::Index rows4() const { return static_cast<Eigen::Index>(4 * hidden_); }
  std::size_t off_gate_bias() const { return 4 * hidden_ * (input_ + hidden_); }
  std::size_t off_fc() const { return off_gate_bias() + 4 * hidden_; }
  std::size_t off_out() const { return off_fc() + hidden_ * hidden_ + hidden_; }
  double* at(std::size_t off) { return params_.data() + off; }
  const double* at(std::size_t off) const { return params_.data() + off; }

  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
  AlignedVector params_;
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace detail {

template <typename Derived>
auto logistic_array(const Eigen::MatrixBase<Derived>& z) {
  return (1.0 + (-z.array()).exp()).inverse();
}

// Eigen has no packet tanh for doubles; this goes through the vectorized exp.
template <typename Derived>
Eigen::ArrayXXd tanh_array(const Eigen::MatrixBase<Derived>& z) {
  const Eigen::ArrayXXd a = z.array();
  const Eigen::ArrayXXd t = (-2.0 * a.abs()).exp();
  return a.sign() * (1.0 - t) / (1.0 + t);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Inference path, one sequence at a time.

struct CellState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;
};

inline CellState lstm_step(std::span<const double> x, const CellState& prev, const LstmModel& model) {
  const auto d = static_cast<Eigen::Index>(model.input_size());
  const auto hs = static_cast<Eigen::Index>(model.hidden_size());
  if (x.size() != model.input_size() || prev.h.size() != hs || prev.c.size() != hs) {
    throw DimensionError("lstm_step: input or state size mismatch");
  }
  const auto w = model.gate_weights();
  Eigen::VectorXd z = model.gate_bias();
  const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), d);
  z.noalias() += w.leftCols(d) * xv;
  z.noalias() += w.rightCols(hs) * prev.h;
  const Eigen::ArrayXd i = detail::logistic_array(z.segment(0, hs));
  const Eigen::ArrayXd f = detail::logistic_array(z.segment(hs, hs));
  const Eigen::ArrayXd o = detail::logistic_array(z.segment(2 * hs, hs));
  const Eigen::ArrayXd g = detail::tanh_array(z.segment(3 * hs, hs));
  CellState next;
  next.c = (f * prev.c.array() + i * g).matrix();
  next.h = (o * detail::tanh_array(next.c)).matrix();
  return next;
}

inline CellState zero_state(const LstmModel& model) {
  const auto hs = static_cast<Eigen::Index>(model.hidden_size());
  return {Eigen::VectorXd::Zero(hs), Eigen::VectorXd::Zero(hs)};
}

// Probability of attack for one window. `dropout_mask`, when given, scales
// the final hidden vector elementwise (inverted dropout: 0 or 1/(1-p)).
inline double forward(const SequenceWindow& window, const LstmModel& model,
                      std::optional<std::span<const double>> dropout_mask = std::nullopt) {
  if (window.width != model.input_size()) {
    throw DimensionError("window width " + std::to_string(window.width) + " does not match model input " +
                         std::to_string(model.input_size()));
  }
  CellState s = zero_state(model);
  for (std::size_t t = 0; t < window.length; ++t) s = lstm_step(window.step(t), s, model);
  const auto hs = static_cast<Eigen::Index>(model.hidden_size());
  Eigen::VectorXd hd = s.h;
  if (dropout_mask) {
    if (dropout_mask->size() != model.hidden_size()) throw DimensionError("dropout mask size mismatch");
    hd.array() *= Eigen::Map<const Eigen::ArrayXd>(dropout_mask->data(), hs);
  }
  Eigen::VectorXd a = model.fc_bias();
  a.noalias() += model.fc_weights() * hd;
  const Eigen::VectorXd r = a.cwiseMax(0.0);
  return logistic(model.out_weights().dot(r) + model.out_bias());
}

inline constexpr double kProbabilityClamp = 1e-12;

inline double bce_loss(int y, double p) {
  const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  // Outside the clamp a perfect prediction is exactly zero loss.
  if ((y == 1 && p >= 1.0) || (y == 0 && p <= 0.0)) return 0.0;
  return y == 1 ? -std::log(q) : -std::log1p(-q);
}

inline double bce_loss(std::span<const std::uint8_t> y, std::span<const double> p) {
  if (y.size() != p.size() || y.empty()) throw DimensionError("bce_loss: label/probability size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += bce_loss(y[i], p[i]);
  return total / static_cast<double>(y.size());
}

inline int predict(const LstmModel& model, const SequenceWindow& window, double threshold = 0.5) {
  return forward(window, model) >= threshold ? 1 : 0;
}

inline std::vector<double> predict_probabilities(const LstmModel& model, std::span<const SequenceWindow> windows) {
  std::vector<double> out(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) out[i] = forward(windows[i], model);
  return out;
}

// Labels for rows length-1 .. rows-1 of a normalized matrix.
inline std::vector<std::uint8_t> predict_stream(const LstmModel& model, const FeatureMatrix& normalized,
                                                std::size_t length, double threshold = 0.5) {
  std::vector<std::uint8_t> out;
  if (normalized.rows() < length) return out;
  out.reserve(normalized.rows() - length + 1);
  for (std::size_t end = length; end <= normalized.rows(); ++end) {
    const std::size_t start = end - length;
    SequenceWindow w{std::span<const double>(normalized.values.data() + start * normalized.width, length * normalized.width),
                     length, normalized.width, normalized.labels[end - 1], end - 1};
    out.push_back(static_cast<std::uint8_t>(predict(model, w, threshold)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training path: whole mini-batches as matrices, columns are samples.

struct BatchResult {
  double loss = 0.0;
  AlignedVector gradient;  // same layout as LstmModel::params()
  std::vector<double> probabilities;
};

class BatchWorkspace {
public:
  // Mean clamped cross-entropy over the batch and its exact gradient.
  // `masks` is H x B (column b scales sample b's final hidden vector) or empty.
  BatchResult backward(const LstmModel& model, std::span<const SequenceWindow* const> batch,
                       const Eigen::MatrixXd& masks) {
    BatchResult res;
    res.gradient.assign(model.params().size(), 0.0);
    loss_and_gradient(model, batch, masks, res.gradient, &res.probabilities, res.loss);
    return res;
  }

  // Accumulates into `grad` (which must be zeroed by the caller); returns mean loss.
  // Large batches go through in chunks so the per-step matrices stay in cache.
  double accumulate(const LstmModel& model, std::span<const SequenceWindow* const> batch, const Eigen::MatrixXd& masks,
                    std::span<double> grad) {
    constexpr std::size_t chunk = 256;
    if (batch.size() <= chunk) {
      double loss = 0.0;
      loss_and_gradient(model, batch, masks, grad, nullptr, loss);
      return loss;
    }
    double total = 0.0;
    for (std::size_t start = 0; start < batch.size(); start += chunk) {
      const std::size_t n = std::min(chunk, batch.size() - start);
      Eigen::MatrixXd part;
      if (masks.size() != 0) part = masks.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n));
      double loss = 0.0;
      loss_and_gradient(model, batch.subspan(start, n), part, grad, nullptr, loss, batch.size());
      total += loss;
    }
    return total;
  }

private:
  void loss_and_gradient(const LstmModel& model, std::span<const SequenceWindow* const> batch,
                         const Eigen::MatrixXd& masks, std::span<double> grad, std::vector<double>* probs,
                         double& loss_out, std::size_t denominator = 0) {
    using Eigen::Index;
    if (batch.empty()) throw DimensionError("empty batch");
    const Index d = static_cast<Index>(model.input_size());
    const Index hs = static_cast<Index>(model.hidden_size());
    const Index b = static_cast<Index>(batch.size());
    const std::size_t steps = batch.front()->length;
    const Index tb = static_cast<Index>(steps) * b;
    for (const auto* w : batch) {
      if (w->width != model.input_size() || w->length != steps) throw DimensionError("batch windows disagree in shape");
    }
    const bool masked = masks.size() != 0;
    if (masked && (masks.rows() != hs || masks.cols() != b)) throw DimensionError("dropout mask shape mismatch");

    x_.resize(d, tb);
    for (std::size_t t = 0; t < steps; ++t)
      for (Index j = 0; j < b; ++j) {
        const auto row = batch[static_cast<std::size_t>(j)]->step(t);
        x_.col(static_cast<Index>(t) * b + j) = Eigen::Map<const Eigen::VectorXd>(row.data(), d);
      }

    const auto w = model.gate_weights();
    const auto bias = model.gate_bias();
    zx_.noalias() = w.leftCols(d) * x_;
    hprev_.resize(hs, tb);
    ig_.resize(hs, tb);
    fg_.resize(hs, tb);
    og_.resize(hs, tb);
    gg_.resize(hs, tb);
    c_.resize(hs, tb);
    tc_.resize(hs, tb);
    h_.setZero(hs, b);
    cell_.setZero(hs, b);
    for (std::size_t t = 0; t < steps; ++t) {
      const Index col = static_cast<Index>(t) * b;
      hprev_.middleCols(col, b) = h_;
      z_ = zx_.middleCols(col, b);
      z_.noalias() += w.rightCols(hs) * h_;
      z_.colwise() += bias;
      ig_.middleCols(col, b) = detail::logistic_array(z_.topRows(hs)).matrix();
      fg_.middleCols(col, b) = detail::logistic_array(z_.middleRows(hs, hs)).matrix();
      og_.middleCols(col, b) = detail::logistic_array(z_.middleRows(2 * hs, hs)).matrix();
      gg_.middleCols(col, b) = detail::tanh_array(z_.bottomRows(hs)).matrix();
      cell_ = (fg_.middleCols(col, b).array() * cell_.array() +
               ig_.middleCols(col, b).array() * gg_.middleCols(col, b).array()).matrix();
      c_.middleCols(col, b) = cell_;
      tc_.middleCols(col, b) = detail::tanh_array(cell_).matrix();
      h_ = (og_.middleCols(col, b).array() * tc_.middleCols(col, b).array()).matrix();
    }

    hd_ = masked ? Eigen::MatrixXd(h_.cwiseProduct(masks)) : h_;
    a_ = model.fc_weights() * hd_;
    a_.colwise() += model.fc_bias();
    r_ = a_.cwiseMax(0.0);
    Eigen::RowVectorXd logit = model.out_weights().transpose() * r_;
    logit.array() += model.out_bias();
    const Eigen::RowVectorXd p = detail::logistic_array(logit).matrix();

    // Gradients are scaled by the full batch size when this is one chunk of it.
    const double n = static_cast<double>(denominator ? denominator : batch.size());
    Eigen::RowVectorXd dlogit(b);
    double loss = 0.0;
    for (Index j = 0; j < b; ++j) {
      const int y = batch[static_cast<std::size_t>(j)]->label;
      loss += bce_loss(y, p(j));
      dlogit(j) = (p(j) - y) / n;
    }
    loss_out = loss / n;
    if (probs) probs->assign(p.data(), p.data() + b);

    // Gradient views over the flat buffer.
    double* g = grad.data();
    Eigen::Map<RowMatrix> g_w(g, 4 * hs, d + hs);
    Eigen::Map<Eigen::VectorXd> g_b(g + 4 * hs * (d + hs), 4 * hs);
    double* g_fc_base = g + 4 * hs * (d + hs) + 4 * hs;
    Eigen::Map<RowMatrix> g_fcw(g_fc_base, hs, hs);
    Eigen::Map<Eigen::VectorXd> g_fcb(g_fc_base + hs * hs, hs);
    Eigen::Map<Eigen::VectorXd> g_outw(g_fc_base + hs * hs + hs, hs);
    double& g_outb = grad.back();

    g_outw.noalias() += r_ * dlogit.transpose();
    g_outb += dlogit.sum();
    da_ = (model.out_weights() * dlogit).cwiseProduct((a_.array() > 0.0).cast<double>().matrix());
    g_fcw.noalias() += da_ * hd_.transpose();
    g_fcb += da_.rowwise().sum();
    dh_.noalias() = model.fc_weights().transpose() * da_;
    if (masked) dh_ = dh_.cwiseProduct(masks);

    dz_.resize(4 * hs, tb);
    dc_.setZero(hs, b);
    for (std::size_t step = steps; step-- > 0;) {
      const Index col = static_cast<Index>(step) * b;
      const auto i = ig_.middleCols(col, b).array();
      const auto f = fg_.middleCols(col, b).array();
      const auto o = og_.middleCols(col, b).array();
      const auto gc = gg_.middleCols(col, b).array();
      const auto tc = tc_.middleCols(col, b).array();
      dc_.array() += dh_.array() * o * (1.0 - tc.square());
      if (step > 0) {
        dz_.block(hs, col, hs, b) = (dc_.array() * c_.middleCols(col - b, b).array() * f * (1.0 - f)).matrix();
      } else {
        dz_.block(hs, col, hs, b).setZero();
      }
      dz_.block(0, col, hs, b) = (dc_.array() * gc * i * (1.0 - i)).matrix();
      dz_.block(2 * hs, col, hs, b) = (dh_.array() * tc * o * (1.0 - o)).matrix();
      dz_.block(3 * hs, col, hs, b) = (dc_.array() * i * (1.0 - gc.square())).matrix();
      dc_.array() *= f;
      if (step > 0) dh_.noalias() = w.rightCols(hs).transpose() * dz_.middleCols(col, b);
    }
    g_w.leftCols(d).noalias() += dz_ * x_.transpose();
    g_w.rightCols(hs).noalias() += dz_ * hprev_.transpose();
    g_b += dz_.rowwise().sum();
  }

  Eigen::MatrixXd x_, zx_, z_, hprev_, ig_, fg_, og_, gg_, c_, tc_, h_, cell_, hd_, a_, r_, da_, dh_, dz_, dc_;
};

inline BatchResult backward(const LstmModel& model, std::span<const SequenceWindow> batch,
                            const Eigen::MatrixXd& masks = {}) {
  std::vector<const SequenceWindow*> ptrs;
  for (const auto& w : batch) ptrs.push_back(&w);
  BatchWorkspace ws;
  return ws.backward(model, ptrs, masks);
}

// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t hidden_size = 50;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  double dropout = 0.0;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double threshold = 0.5;
  std::uint64_t seed = 42;

  void validate() const {
    if (hidden_size == 0) throw ConfigError("hidden size must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  }
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
};

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update; advances state.t.
inline void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state, const AdamParams& hp) {
  if (grad.size() != params.size()) throw DimensionError("adam_step: gradient size mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = hp.beta1 * state.m[k] + (1.0 - hp.beta1) * grad[k];
    state.v[k] = hp.beta2 * state.v[k] + (1.0 - hp.beta2) * grad[k] * grad[k];
    const double mhat = state.m[k] / c1;
    const double vhat = state.v[k] / c2;
    params[k] -= hp.learning_rate * mhat / (std::sqrt(vhat) + hp.eps);
  }
}

inline void glorot_init(LstmModel& model, Rng& rng) {
  const double d = static_cast<double>(model.input_size());
  const double h = static_cast<double>(model.hidden_size());
  auto fill = [&](auto&& block, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = rng.uniform(-limit, limit);
  };
  fill(model.gate_weights(), d + h, h);
  model.gate_bias().setZero();
  fill(model.fc_weights(), h, h);
  model.fc_bias().setZero();
  auto ow = model.out_weights();
  fill(ow, h, 1.0);
  model.out_bias() = 0.0;
}

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> seconds;
};

struct TrainResult {
  LstmModel model;
  TrainHistory history;
};

inline Eigen::MatrixXd dropout_masks(std::size_t hidden, std::size_t batch, double p, Rng& rng) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(batch));
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.bernoulli(p) ? 0.0 : keep;
  return m;
}

using EpochCallback = std::function<void(std::size_t epoch, const LstmModel&, const TrainHistory&)>;

// Full deterministic training run over `train` (every window the same shape).
// Stopping after k epochs gives the same model as a run configured for k.
inline TrainResult train(std::span<const SequenceWindow> train_set, const TrainConfig& config,
                         const EpochCallback& on_epoch = {}) {
  config.validate();
  if (train_set.empty()) throw ConfigError("training split is empty");
  const std::size_t width = train_set.front().width;
  LstmModel model(width, config.hidden_size);
  Rng rng(config.seed);
  glorot_init(model, rng);

  TrainHistory history;
  AdamState adam;
  const AdamParams hp{config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps};
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  AlignedVector grad(model.params().size());
  std::vector<const SequenceWindow*> batch;
  BatchWorkspace ws;
  const Eigen::MatrixXd no_mask;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(&train_set[order[k]]);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      if (config.dropout > 0.0) {
        const auto masks = dropout_masks(config.hidden_size, batch.size(), config.dropout, rng);
        loss = ws.accumulate(model, batch, masks, grad);
      } else {
        loss = ws.accumulate(model, batch, no_mask, grad);
      }
      if (!std::isfinite(loss)) throw TrainingError(epoch, "loss is not finite");
      loss_sum += loss * static_cast<double>(batch.size());
      adam_step(model.params(), grad, adam, hp);
    }
    if (!model.all_finite()) throw TrainingError(epoch, "parameters diverged");
    history.loss.push_back(loss_sum / static_cast<double>(order.size()));
    history.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (on_epoch) on_epoch(epoch, model, history);
  }
  return {std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// Checkpoint: a text header terminated by "payload <bytes>\n", then the
// parameters as little-endian IEEE-754 doubles in LstmModel order.

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  LstmModel model;
  std::size_t window_length = 10;
  std::optional<TrainConfig> config;
  std::optional<Normalizer> normalizer;
};

namespace detail {

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw CheckpointError("corrupted payload: bad number '" + s + "'");
  return v;
}

inline void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline std::string save_checkpoint(const Checkpoint& ckpt) {
  const auto& m = ckpt.model;
  std::string payload;
  payload.reserve(m.params().size() * 8);
  for (double v : m.params()) detail::put_le(payload, v);

  std::ostringstream h;
  h << "canids-lstm-checkpoint\n";
  h << "version " << kCheckpointVersion << '\n';
  h << "input_size " << m.input_size() << '\n';
  h << "hidden_size " << m.hidden_size() << '\n';
  h << "window_length " << ckpt.window_length << '\n';
  h << "param_count " << m.params().size() << '\n';
  h << "order gate_w[i,f,o,g] gate_b[i,f,o,g] fc_w fc_b out_w out_b\n";
  if (ckpt.config) {
    const auto& c = *ckpt.config;
    h << "config hidden=" << c.hidden_size << " epochs=" << c.epochs << " batch=" << c.batch_size
      << " dropout=" << detail::shortest(c.dropout) << " lr=" << detail::shortest(c.learning_rate)
      << " threshold=" << detail::shortest(c.threshold) << " seed=" << c.seed << '\n';
  }
  if (ckpt.normalizer) {
    h << "norm_min";
    for (double v : ckpt.normalizer->min) h << ' ' << detail::hexfloat(v);
    h << "\nnorm_max";
    for (double v : ckpt.normalizer->max) h << ' ' << detail::hexfloat(v);
    h << '\n';
  }
  h << "sha256 " << sha256_hex(payload) << '\n';
  h << "payload " << payload.size() << '\n';
  return h.str() + payload;
}

inline std::string save_checkpoint(const LstmModel& model) { return save_checkpoint(Checkpoint{model, 10, std::nullopt, std::nullopt}); }

inline Checkpoint load_checkpoint(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw CheckpointError("corrupted payload: truncated header");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };
  if (next_line() != "canids-lstm-checkpoint") throw CheckpointError("corrupted payload: not a checkpoint");

  std::size_t input = 0, hidden = 0, count = 0, window = 10, payload_size = 0;
  int version = -1;
  std::string digest;
  Checkpoint ck;
  std::vector<double> nmin, nmax;
  for (;;) {
    std::istringstream line(next_line());
    std::string key;
    line >> key;
    if (key == "version") line >> version;
    else if (key == "input_size") line >> input;
    else if (key == "hidden_size") line >> hidden;
    else if (key == "window_length") line >> window;
    else if (key == "param_count") line >> count;
    else if (key == "sha256") line >> digest;
    else if (key == "norm_min" || key == "norm_max") {
      auto& dst = key == "norm_min" ? nmin : nmax;
      std::string tok;
      while (line >> tok) dst.push_back(detail::parse_hexfloat(tok));
      continue;
    } else if (key == "config") {
      TrainConfig c;
      std::string kv;
      while (line >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw CheckpointError("corrupted payload: bad config entry");
        const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "hidden") c.hidden_size = std::stoul(v);
        else if (k == "epochs") c.epochs = std::stoul(v);
        else if (k == "batch") c.batch_size = std::stoul(v);
        else if (k == "dropout") c.dropout = std::stod(v);
        else if (k == "lr") c.learning_rate = std::stod(v);
        else if (k == "threshold") c.threshold = std::stod(v);
        else if (k == "seed") c.seed = std::stoull(v);
      }
      ck.config = c;
      continue;
    } else if (key == "order") {
      continue;
    } else if (key == "payload") {
      line >> payload_size;
      break;
    } else {
      throw CheckpointError("corrupted payload: unknown header key '" + key + "'");
    }
    if (line.fail()) throw CheckpointError("corrupted payload: bad value for " + key);
  }
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  if (input == 0 || hidden == 0 || count != LstmModel::param_count(input, hidden)) {
    throw CheckpointError("corrupted payload: inconsistent dimensions");
  }
  if (payload_size != count * 8 || bytes.size() - pos != payload_size) {
    throw CheckpointError("corrupted payload: expected " + std::to_string(count * 8) + " payload bytes, found " +
                          std::to_string(bytes.size() - pos));
  }
  const auto payload = bytes.substr(pos);
  if (sha256_hex(payload) != digest) throw CheckpointError("corrupted payload: checksum mismatch");

  ck.model = LstmModel(input, hidden);
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  auto params = ck.model.params();
  for (std::size_t k = 0; k < count; ++k) params[k] = detail::get_le(p + 8 * k);
  ck.window_length = window;
  if (!nmin.empty() || !nmax.empty()) {
    if (nmin.size() != input || nmax.size() != input) throw CheckpointError("corrupted payload: normalizer width");
    ck.normalizer = Normalizer{nmin, nmax};
  }
  return ck;
}

inline Checkpoint load_checkpoint(std::string_view bytes, std::size_t expected_input, std::size_t expected_hidden) {
  Checkpoint ck = load_checkpoint(bytes);
  if (ck.model.input_size() != expected_input || ck.model.hidden_size() != expected_hidden) {
    throw DimensionError("checkpoint has input " + std::to_string(ck.model.input_size()) + " / hidden " +
                         std::to_string(ck.model.hidden_size()) + ", expected " + std::to_string(expected_input) +
                         " / " + std::to_string(expected_hidden));
  }
  return ck;
}

}  // namespace canids
