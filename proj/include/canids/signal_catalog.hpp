#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "canids/can_codec.hpp"
#include "canids/error.hpp"

namespace canids {

struct MessageInfo {
  std::string name;
  std::uint32_t id = 0;
};

// Ordered, densely numbered signal list plus the messages that carry it.
class SignalCatalog {
public:
  SignalCatalog() = default;

  explicit SignalCatalog(std::vector<SignalSpec> specs) : specs_(std::move(specs)) {
    std::sort(specs_.begin(), specs_.end(),
              [](const SignalSpec& a, const SignalSpec& b) { return a.feature_no < b.feature_no; });
    validate();
    for (const auto& s : specs_) {
      auto it = std::find_if(messages_.begin(), messages_.end(),
                             [&](const MessageInfo& m) { return m.id == s.message_id; });
      if (it == messages_.end()) {
        messages_.push_back({s.message_name, s.message_id});
      } else if (it->name != s.message_name) {
        throw ConfigError("message id " + std::to_string(s.message_id) + " has two names: " +
                          it->name + " and " + s.message_name);
      }
    }
  }

  std::size_t size() const { return specs_.size(); }
  const std::vector<SignalSpec>& specs() const { return specs_; }
  const std::vector<MessageInfo>& monitored_messages() const { return messages_; }

  // 1-based feature number.
  const SignalSpec& feature(int feature_no) const {
    if (feature_no < 1 || static_cast<std::size_t>(feature_no) > specs_.size()) {
      throw ConfigError("no feature " + std::to_string(feature_no));
    }
    return specs_[static_cast<std::size_t>(feature_no - 1)];
  }

  const SignalSpec& find(std::string_view message_name, std::string_view signal_name) const {
    for (const auto& s : specs_)
      if (s.message_name == message_name && s.signal_name == signal_name) return s;
    throw ConfigError("unknown signal " + std::string(message_name) + "." + std::string(signal_name));
  }

  // Matches by signal name alone; ambiguous names (TQI) need the message.
  const SignalSpec& find(std::string_view signal_name) const {
    const SignalSpec* hit = nullptr;
    for (const auto& s : specs_) {
      if (s.signal_name != signal_name) continue;
      if (hit) throw ConfigError("signal name " + std::string(signal_name) + " is ambiguous; qualify it as MESSAGE.SIGNAL");
      hit = &s;
    }
    if (!hit) throw ConfigError("unknown signal " + std::string(signal_name));
    return *hit;
  }

  bool is_monitored(std::uint32_t can_id) const {
    return std::any_of(messages_.begin(), messages_.end(), [&](const MessageInfo& m) { return m.id == can_id; });
  }

  std::size_t message_index(std::uint32_t can_id) const {
    for (std::size_t i = 0; i < messages_.size(); ++i)
      if (messages_[i].id == can_id) return i;
    throw ConfigError("message id " + std::to_string(can_id) + " is not monitored");
  }

  const MessageInfo& message(std::string_view name) const {
    for (const auto& m : messages_)
      if (m.name == name) return m;
    throw ConfigError("unknown message " + std::string(name));
  }

  // 0-based indices into specs() of every signal carried by `can_id`.
  std::vector<std::size_t> signals_of(std::uint32_t can_id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < specs_.size(); ++i)
      if (specs_[i].message_id == can_id) out.push_back(i);
    return out;
  }

private:
  void validate() const {
    if (specs_.empty()) throw ConfigError("catalog is empty");
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const auto& s = specs_[i];
      if (s.feature_no != static_cast<int>(i + 1)) {
        throw ConfigError("feature numbers must be dense from 1; found " + std::to_string(s.feature_no) +
                          " at position " + std::to_string(i + 1));
      }
      if (s.bit_length < 1 || s.bit_length > 16) throw ConfigError(s.signal_name + ": bit length must be 1-16");
      if (s.start_bit + s.bit_length > 8 * kMaxDlc) throw ConfigError(s.signal_name + ": field exceeds 64 bits");
      if (!(s.scale > 0.0)) throw ConfigError(s.signal_name + ": scale must be positive");
      if (!(s.min_value <= s.max_value)) throw ConfigError(s.signal_name + ": min exceeds max");
      if (s.message_id > kMaxStandardId) throw ConfigError(s.signal_name + ": message id exceeds 11 bits");
      for (int c : s.correlated_with) {
        if (c < 1 || static_cast<std::size_t>(c) > specs_.size() || c == s.feature_no) {
          throw ConfigError(s.signal_name + ": bad correlation index " + std::to_string(c));
        }
      }
    }
  }

  std::vector<SignalSpec> specs_;
  std::vector<MessageInfo> messages_;
};

// The twenty monitored signals of the KIA Soul capture. Scales are the exact
// rationals behind the two-decimal figures (100/256 prints as 0.39), so the
// all-ones raw field lands on the top of each value range.
inline SignalCatalog default_catalog() {
  constexpr double kTorque = 100.0 / 256.0;
  const double tps_scale = 100.0 / 213.0;
  const double tps_offset = -32.0 * tps_scale;
  const double pct_top = 255 * kTorque;
  const std::string E11 = "EMS11", E12 = "EMS12", E14 = "EMS14", E16 = "EMS16", S11 = "SAS11";
  std::vector<SignalSpec> s = {
      {1, E11, 790, "TQI_COR_STAT", 4, 2, 1.0, 0.0, 0.0, 3.0, {2, 4, 10, 11, 14, 15}, 0.38},
      {2, E11, 790, "TQI_ACOR", 8, 8, kTorque, 0.0, 0.0, pct_top, {1, 4, 10, 11, 13, 14, 15}, 0.13},
      {3, E11, 790, "N", 16, 16, 0.25, 0.0, 0.0, 16383.75, {5, 6, 10, 11, 16}, 0.06},
      {4, E11, 790, "TQI", 32, 8, kTorque, 0.0, 0.0, pct_top, {1, 2, 10, 11, 13, 14, 15}, 0.13},
      {5, E11, 790, "TQFR", 40, 8, kTorque, 0.0, 0.0, pct_top, {3, 6, 16}, 0.06},
      {6, E11, 790, "VS", 48, 8, 1.0, 0.0, 0.0, 254.0, {3, 5, 16}, 0.30},
      {7, E12, 809, "MUL_CODE", 6, 2, 1.0, 0.0, 0.0, 3.0, {}, 0.54},
      {8, E12, 809, "TEMP_ENG", 8, 8, 0.75, -48.0, -48.0, 143.25, {}, 0.03},
      {9, E12, 809, "BRAKE_ACT", 32, 2, 1.0, 0.0, 0.0, 3.0, {}, 0.37},
      {10, E12, 809, "TPS", 40, 8, tps_scale, tps_offset, 0.0, tps_offset + 255 * tps_scale, {1, 2, 3, 4, 11, 14, 15}, 0.10},
      {11, E12, 809, "PV_AV_CAN", 48, 8, kTorque, 0.0, 0.0, pct_top, {1, 2, 3, 4, 10, 14, 15}, 0.06},
      {12, E14, 1349, "VB", 24, 8, 0.1, 0.0, 0.0, 25.5, {}, 0.03},
      {13, E16, 608, "TQI_MIN", 0, 8, kTorque, 0.0, 0.0, pct_top, {2, 4, 14, 15}, 0.11},
      {14, E16, 608, "TQI", 8, 8, kTorque, 0.0, 0.0, pct_top, {1, 2, 4, 10, 11, 13, 15}, 0.13},
      {15, E16, 608, "TQI_TARGET", 16, 8, kTorque, 0.0, 0.0, pct_top, {1, 2, 4, 10, 11, 13, 14}, 0.13},
      {16, E16, 608, "TQI_MAX", 40, 8, kTorque, 0.0, 0.0, pct_top, {3, 5, 6}, 0.07},
      {17, S11, 688, "SAS_ANGLE", 0, 16, 0.1, 0.0, 0.0, 6553.5, {}, 0.02},
      {18, S11, 688, "SAS_SPEED", 16, 8, 4.0, 0.0, 0.0, 1016.0, {}, 0.74},
      {19, S11, 688, "MSGCOUNT", 32, 4, 1.0, 0.0, 0.0, 15.0, {20}, 0.45},
      {20, S11, 688, "CHECKSUM", 36, 4, 1.0, 0.0, 0.0, 15.0, {19}, 0.45},
  };
  return SignalCatalog(std::move(s));
}

// ---------------------------------------------------------------------------
// CSV form: feature_no,message_name,message_id,signal_name,start_bit,bit_length,
//           scale,offset,min,max,correlated_with,max_deviation[,bit_order]

inline constexpr std::string_view kCatalogHeader =
    "feature_no,message_name,message_id,signal_name,start_bit,bit_length,scale,offset,min,max,"
    "correlated_with,max_deviation";

namespace detail {

inline std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace detail

inline SignalCatalog load_catalog_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool has_order = false;
  bool header_seen = false;
  std::vector<SignalSpec> specs;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!header_seen) {
      if (t != kCatalogHeader && t != std::string(kCatalogHeader) + ",bit_order") {
        throw ParseError(line_no, "unexpected catalog header");
      }
      has_order = t.size() > kCatalogHeader.size();
      header_seen = true;
      continue;
    }
    const auto c = detail::split(t, ',');
    if (c.size() != (has_order ? 13u : 12u)) throw ParseError(line_no, "expected 12 or 13 catalog columns");
    SignalSpec s;
    auto num = [&](const std::string& tok, auto& out, const char* what) {
      if (!detail::parse_number(detail::trim(tok), out)) throw ParseError(line_no, std::string("malformed ") + what);
    };
    num(c[0], s.feature_no, "feature_no");
    s.message_name = detail::trim(c[1]);
    num(c[2], s.message_id, "message_id");
    s.signal_name = detail::trim(c[3]);
    num(c[4], s.start_bit, "start_bit");
    num(c[5], s.bit_length, "bit_length");
    num(c[6], s.scale, "scale");
    num(c[7], s.offset, "offset");
    num(c[8], s.min_value, "min");
    num(c[9], s.max_value, "max");
    const std::string corr = detail::trim(c[10]);
    if (!corr.empty() && corr != "None") {
      for (const auto& part : detail::split(corr, ';')) {
        int idx = 0;
        num(part, idx, "correlated_with");
        s.correlated_with.push_back(idx);
      }
    }
    num(c[11], s.max_deviation, "max_deviation");
    if (has_order) {
      const std::string order = detail::trim(c[12]);
      if (order == "msb_first") s.bit_order = BitOrder::msb_first;
      else if (order == "lsb_first") s.bit_order = BitOrder::lsb_first;
      else throw ParseError(line_no, "bit_order must be msb_first or lsb_first");
    }
    specs.push_back(std::move(s));
  }
  return SignalCatalog(std::move(specs));
}

inline void write_catalog_csv(std::ostream& out, const SignalCatalog& catalog) {
  const bool any_lsb = std::any_of(catalog.specs().begin(), catalog.specs().end(),
                                   [](const SignalSpec& s) { return s.bit_order == BitOrder::lsb_first; });
  out << kCatalogHeader << (any_lsb ? ",bit_order" : "") << '\n';
  for (const auto& s : catalog.specs()) {
    using detail::shortest;
    out << s.feature_no << ',' << s.message_name << ',' << s.message_id << ',' << s.signal_name << ','
        << s.start_bit << ',' << s.bit_length << ',' << shortest(s.scale) << ',' << shortest(s.offset) << ','
        << shortest(s.min_value) << ',' << shortest(s.max_value) << ',';
    for (std::size_t i = 0; i < s.correlated_with.size(); ++i) out << (i ? ";" : "") << s.correlated_with[i];
    out << ',' << shortest(s.max_deviation);
    if (any_lsb) out << ',' << (s.bit_order == BitOrder::lsb_first ? "lsb_first" : "msb_first");
    out << '\n';
  }
}

}  // namespace canids
