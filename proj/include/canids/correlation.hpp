#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "canids/error.hpp"
#include "canids/features.hpp"

namespace canids {

// Pearson product-moment coefficient; nullopt when either series is constant.
inline std::optional<double> try_pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("pearson: series lengths differ");
  if (x.size() < 2) throw DimensionError("pearson: need at least two samples");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  auto r = try_pearson(x, y);
  if (!r) throw RangeError("pearson: correlation undefined for a zero-variance series");
  return *r;
}

struct CorrelationMatrix {
  std::size_t size = 0;
  std::vector<double> r;         // row-major, NaN where undefined
  std::vector<bool> defined;

  double at(std::size_t i, std::size_t j) const { return r[i * size + j]; }
  bool is_defined(std::size_t i, std::size_t j) const { return defined[i * size + j]; }
};

inline CorrelationMatrix correlation_matrix(const FeatureMatrix& m) {
  CorrelationMatrix c;
  c.size = m.width;
  c.r.assign(m.width * m.width, std::nan(""));
  c.defined.assign(m.width * m.width, false);
  std::vector<std::vector<double>> cols(m.width);
  for (std::size_t j = 0; j < m.width; ++j) cols[j] = m.column(j);
  for (std::size_t i = 0; i < m.width; ++i) {
    for (std::size_t j = i; j < m.width; ++j) {
      const auto r = try_pearson(cols[i], cols[j]);
      if (!r) continue;
      const double v = i == j ? 1.0 : *r;
      c.r[i * m.width + j] = c.r[j * m.width + i] = v;
      c.defined[i * m.width + j] = c.defined[j * m.width + i] = true;
    }
  }
  return c;
}

// 1-based (i, j) pairs, i < j, with |r| strictly above the threshold.
inline std::vector<std::pair<int, int>> correlated_pairs(const CorrelationMatrix& c, double threshold = 0.7) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < c.size; ++i)
    for (std::size_t j = i + 1; j < c.size; ++j)
      if (c.is_defined(i, j) && std::abs(c.at(i, j)) > threshold)
        out.emplace_back(static_cast<int>(i + 1), static_cast<int>(j + 1));
  return out;
}

}  // namespace canids
