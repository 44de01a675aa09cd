#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "canids/error.hpp"

namespace canids {

inline constexpr std::size_t kMaxDlc = 8;
inline constexpr std::uint32_t kMaxStandardId = 0x7FF;

// One logged CAN frame. Bytes past `dlc` are kept zero so that two frames
// with the same significant payload compare equal.
struct RawFrame {
  std::uint32_t can_id = 0;
  std::uint8_t dlc = 0;
  std::array<std::uint8_t, kMaxDlc> data{};
  double timestamp = 0.0;

  std::span<const std::uint8_t> payload() const { return {data.data(), dlc}; }

  friend bool operator==(const RawFrame& a, const RawFrame& b) {
    if (a.can_id != b.can_id || a.dlc != b.dlc || a.timestamp != b.timestamp) return false;
    for (std::size_t i = 0; i < a.dlc; ++i)
      if (a.data[i] != b.data[i]) return false;
    return true;
  }
};

using Trace = std::vector<RawFrame>;

enum class BitOrder {
  // Bit b sits in byte b/8 at in-byte position 7 - b%8; the lowest bit index
  // of a field is its most significant bit (big-endian across bytes).
  msb_first,
  // Bit b sits in byte b/8 at in-byte position b%8; the lowest bit index of a
  // field is its least significant bit (little-endian across bytes).
  lsb_first,
};

struct SignalSpec {
  int feature_no = 0;
  std::string message_name;
  std::uint32_t message_id = 0;
  std::string signal_name;
  unsigned start_bit = 0;
  unsigned bit_length = 1;
  double scale = 1.0;
  double offset = 0.0;
  double min_value = 0.0;
  double max_value = 0.0;
  std::vector<int> correlated_with;
  double max_deviation = 0.0;
  BitOrder bit_order = BitOrder::msb_first;

  std::uint64_t max_raw() const { return (std::uint64_t{1} << bit_length) - 1; }

  // Byte positions (0-based) touched by the field.
  std::vector<unsigned> byte_positions() const {
    std::vector<unsigned> out;
    for (unsigned b = start_bit / 8; b <= (start_bit + bit_length - 1) / 8; ++b) out.push_back(b);
    return out;
  }
};

namespace detail {

inline void check_field(const RawFrame& frame, const SignalSpec& spec) {
  if (frame.can_id != spec.message_id) {
    throw SignalError(spec.signal_name + ": frame id " + std::to_string(frame.can_id) +
                      " does not carry message " + std::to_string(spec.message_id));
  }
  if (spec.start_bit + spec.bit_length > 8u * frame.dlc) {
    throw SignalError(spec.signal_name + ": bits " + std::to_string(spec.start_bit) + "-" +
                      std::to_string(spec.start_bit + spec.bit_length - 1) +
                      " exceed a payload of " + std::to_string(frame.dlc) + " bytes");
  }
}

// Physical (byte, in-byte position) of the k-th most significant bit of the field.
inline std::pair<unsigned, unsigned> bit_location(const SignalSpec& spec, unsigned k) {
  if (spec.bit_order == BitOrder::msb_first) {
    const unsigned b = spec.start_bit + k;
    return {b / 8, 7 - b % 8};
  }
  const unsigned b = spec.start_bit + (spec.bit_length - 1 - k);
  return {b / 8, b % 8};
}

}  // namespace detail

inline std::uint64_t extract_raw(const RawFrame& frame, const SignalSpec& spec) {
  detail::check_field(frame, spec);
  std::uint64_t value = 0;
  for (unsigned k = 0; k < spec.bit_length; ++k) {
    const auto [byte, pos] = detail::bit_location(spec, k);
    value = (value << 1) | ((frame.data[byte] >> pos) & 1u);
  }
  return value;
}

inline RawFrame patch_bytes(const RawFrame& frame, const SignalSpec& spec, std::uint64_t raw) {
  detail::check_field(frame, spec);
  if (raw > spec.max_raw()) {
    throw RangeError(spec.signal_name + ": raw value " + std::to_string(raw) + " exceeds " +
                     std::to_string(spec.bit_length) + " bits");
  }
  RawFrame out = frame;
  for (unsigned k = 0; k < spec.bit_length; ++k) {
    const auto [byte, pos] = detail::bit_location(spec, k);
    const unsigned bit = (raw >> (spec.bit_length - 1 - k)) & 1u;
    out.data[byte] = static_cast<std::uint8_t>((out.data[byte] & ~(1u << pos)) | (bit << pos));
  }
  return out;
}

inline double scale_signal(std::uint64_t raw, const SignalSpec& spec) {
  return spec.offset + spec.scale * static_cast<double>(raw);
}

inline std::uint64_t encode_signal(double scaled, const SignalSpec& spec) {
  if (!(scaled >= spec.min_value && scaled <= spec.max_value)) {
    throw RangeError(spec.signal_name + ": value " + std::to_string(scaled) + " outside [" +
                     std::to_string(spec.min_value) + ", " + std::to_string(spec.max_value) + "]");
  }
  const double r = std::round((scaled - spec.offset) / spec.scale);
  if (r <= 0.0) return 0;
  const double top = static_cast<double>(spec.max_raw());
  if (r >= top) return spec.max_raw();
  return static_cast<std::uint64_t>(r);
}

inline double decode_signal(const RawFrame& frame, const SignalSpec& spec) {
  return scale_signal(extract_raw(frame, spec), spec);
}

// ---------------------------------------------------------------------------
// Log file format: `ID DLC D0 .. D7 TIMESTAMP`, hex id and bytes.

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view token, T& out, int base = 10) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  std::from_chars_result res;
  if constexpr (std::is_floating_point_v<T>) {
    res = std::from_chars(first, last, out);
  } else {
    res = std::from_chars(first, last, out, base);
  }
  return res.ec == std::errc{} && res.ptr == last;
}

}  // namespace detail

inline RawFrame parse_log_line(std::string_view line, std::size_t line_no) {
  const auto tok = detail::split_ws(line);
  if (tok.size() != 3 + kMaxDlc) {
    throw ParseError(line_no, "expected 11 columns, found " + std::to_string(tok.size()));
  }
  RawFrame f;
  if (!detail::parse_number(tok[0], f.can_id, 16)) throw ParseError(line_no, "malformed id '" + std::string(tok[0]) + "'");
  if (f.can_id > kMaxStandardId) throw ParseError(line_no, "id exceeds 11 bits");
  unsigned dlc = 0;
  if (!detail::parse_number(tok[1], dlc)) throw ParseError(line_no, "malformed dlc '" + std::string(tok[1]) + "'");
  if (dlc > kMaxDlc) throw ParseError(line_no, "dlc " + std::to_string(dlc) + " exceeds 8");
  f.dlc = static_cast<std::uint8_t>(dlc);
  for (std::size_t i = 0; i < kMaxDlc; ++i) {
    unsigned byte = 0;
    const auto t = tok[2 + i];
    if (t.size() > 2 || !detail::parse_number(t, byte, 16)) {
      throw ParseError(line_no, "malformed data byte '" + std::string(t) + "'");
    }
    if (i < f.dlc) f.data[i] = static_cast<std::uint8_t>(byte);
  }
  if (!detail::parse_number(tok[10], f.timestamp) || !std::isfinite(f.timestamp) || f.timestamp < 0.0) {
    throw ParseError(line_no, "malformed timestamp '" + std::string(tok[10]) + "'");
  }
  return f;
}

// Blank lines and a leading `ID DLC DATA Timestamp` header are skipped.
inline Trace parse_log(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (trace.empty() && (tok[0] == "ID" || tok[0] == "id")) continue;
    RawFrame f = parse_log_line(line, line_no);
    if (!trace.empty() && f.timestamp < trace.back().timestamp) {
      throw ParseError(line_no, "timestamp goes backwards");
    }
    trace.push_back(f);
  }
  return trace;
}

inline Trace parse_log(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_log(in);
}

inline std::string format_log_line(const RawFrame& f) {
  char buf[96];
  int n = std::snprintf(buf, sizeof buf, "%04x %u", static_cast<unsigned>(f.can_id), static_cast<unsigned>(f.dlc));
  for (std::size_t i = 0; i < kMaxDlc; ++i) {
    n += std::snprintf(buf + n, sizeof buf - n, " %02x", i < f.dlc ? f.data[i] : 0u);
  }
  std::snprintf(buf + n, sizeof buf - n, " %.6f", f.timestamp);
  return buf;
}

inline void write_log(std::ostream& out, const Trace& trace) {
  for (const auto& f : trace) out << format_log_line(f) << '\n';
}

inline std::string write_log(const Trace& trace) {
  std::ostringstream out;
  write_log(out, trace);
  return out.str();
}

}  // namespace canids
