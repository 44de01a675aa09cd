#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>

#include "canids/correlation.hpp"
#include "canids/eval.hpp"
#include "canids/signal_catalog.hpp"

namespace canids {

namespace detail {

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string fixed_or_na(const std::optional<double>& v, int digits = 6) { return v ? fixed(*v, digits) : "n/a"; }

}  // namespace detail

inline constexpr std::string_view kSweepHeader = "neurons,epochs,batch,dropout,accuracy,precision,recall,fpr,train_s";

inline void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << kSweepHeader << '\n';
  for (const auto& r : rows) {
    out << r.hidden_size << ',' << r.epochs << ',' << r.batch_size << ',' << detail::shortest(r.dropout) << ',';
    if (r.ok()) {
      const auto& m = *r.metrics;
      out << detail::fixed(m.accuracy) << ',' << detail::fixed_or_na(m.precision) << ','
          << detail::fixed_or_na(m.recall) << ',' << detail::fixed_or_na(m.fpr);
    } else {
      out << "error,error,error,error";
    }
    out << ',' << detail::fixed(r.train_seconds, 3) << '\n';
  }
}

inline void write_metrics_csv(std::ostream& out, const MetricsReport& m) {
  out << "tp,fp,tn,fn,accuracy,precision,recall,fpr\n";
  out << m.counts.tp << ',' << m.counts.fp << ',' << m.counts.tn << ',' << m.counts.fn << ','
      << detail::fixed(m.accuracy) << ',' << detail::fixed_or_na(m.precision) << ','
      << detail::fixed_or_na(m.recall) << ',' << detail::fixed_or_na(m.fpr) << '\n';
}

inline std::string format_summary(const MetricsReport& m) {
  auto pct = [](const std::optional<double>& v) { return v ? detail::fixed(100.0 * *v, 2) + "%" : std::string("n/a"); };
  std::ostringstream s;
  s << "accuracy " << pct(m.accuracy) << ", precision " << pct(m.precision) << ", recall " << pct(m.recall)
    << ", fpr " << pct(m.fpr) << " (TP " << m.counts.tp << ", FP " << m.counts.fp << ", TN " << m.counts.tn << ", FN "
    << m.counts.fn << ")";
  return s.str();
}

inline void write_correlation_csv(std::ostream& out, const CorrelationMatrix& c) {
  out << "feature";
  for (std::size_t j = 0; j < c.size; ++j) out << ",f" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < c.size; ++i) {
    out << 'f' << (i + 1);
    for (std::size_t j = 0; j < c.size; ++j) out << ',' << (c.is_defined(i, j) ? detail::fixed(c.at(i, j)) : "n/a");
    out << '\n';
  }
}

namespace detail {

// Blue at -1 through white at 0 to yellow at +1.
inline std::string heat_color(double r) {
  const double t = std::clamp(r, -1.0, 1.0);
  int red = 0, green = 0, blue = 0;
  if (t < 0) {
    const double a = -t;
    red = static_cast<int>(std::lround(255 * (1 - a) + 33 * a));
    green = static_cast<int>(std::lround(255 * (1 - a) + 102 * a));
    blue = static_cast<int>(std::lround(255 * (1 - a) + 172 * a));
  } else {
    red = static_cast<int>(std::lround(255 * (1 - t) + 240 * t));
    green = static_cast<int>(std::lround(255 * (1 - t) + 200 * t));
    blue = static_cast<int>(std::lround(255 * (1 - t) + 20 * t));
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", red, green, blue);
  return buf;
}

}  // namespace detail

// One <rect class="cell"> per matrix entry; undefined entries are gray.
inline void write_heatmap_svg(std::ostream& out, const CorrelationMatrix& c, const SignalCatalog* catalog = nullptr) {
  const int cell = 28, margin = 130;
  const int side = margin + cell * static_cast<int>(c.size) + 20;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << side << "\" height=\"" << side
      << "\" font-family=\"monospace\" font-size=\"9\">\n";
  auto label = [&](std::size_t i) {
    if (catalog && i < catalog->size()) return catalog->specs()[i].signal_name;
    return "f" + std::to_string(i + 1);
  };
  for (std::size_t i = 0; i < c.size; ++i) {
    const int y = margin + cell * static_cast<int>(i);
    out << "<text x=\"" << margin - 4 << "\" y=\"" << y + cell / 2 + 3 << "\" text-anchor=\"end\">" << label(i)
        << "</text>\n";
    out << "<text transform=\"translate(" << y + cell / 2 + 3 << ',' << margin - 4
        << ") rotate(-90)\" text-anchor=\"start\">" << label(i) << "</text>\n";
  }
  for (std::size_t i = 0; i < c.size; ++i)
    for (std::size_t j = 0; j < c.size; ++j) {
      const bool ok = c.is_defined(i, j);
      out << "<rect class=\"cell\" x=\"" << margin + cell * static_cast<int>(j) << "\" y=\""
          << margin + cell * static_cast<int>(i) << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
          << (ok ? detail::heat_color(c.at(i, j)) : std::string("#bbbbbb")) << "\"><title>" << label(i) << " / "
          << label(j) << ": " << (ok ? detail::fixed(c.at(i, j), 3) : std::string("n/a")) << "</title></rect>\n";
    }
  out << "</svg>\n";
}

}  // namespace canids
