#include <gtest/gtest.h>

#include <random>

#include "canids/can_codec.hpp"
#include "canids/signal_catalog.hpp"

using namespace canids;

namespace {

SignalSpec field(unsigned start, unsigned len, double scale = 1.0, double offset = 0.0) {
  SignalSpec s;
  s.message_name = "T";
  s.message_id = 0x100;
  s.signal_name = "X";
  s.start_bit = start;
  s.bit_length = len;
  s.scale = scale;
  s.offset = offset;
  s.min_value = offset;
  s.max_value = offset + scale * static_cast<double>((1u << len) - 1);
  return s;
}

RawFrame frame_of(std::initializer_list<std::uint8_t> bytes, std::uint32_t id = 0x100) {
  RawFrame f;
  f.can_id = id;
  f.dlc = static_cast<std::uint8_t>(bytes.size());
  std::copy(bytes.begin(), bytes.end(), f.data.begin());
  return f;
}

// Independent reference: walk the payload as a bit string, MSB of byte 0 first.
std::uint64_t bitstring_extract(const RawFrame& f, unsigned start, unsigned len) {
  std::string bits;
  for (unsigned i = 0; i < f.dlc; ++i)
    for (int p = 7; p >= 0; --p) bits.push_back(((f.data[i] >> p) & 1) ? '1' : '0');
  return std::stoull(bits.substr(start, len), nullptr, 2);
}

}  // namespace

TEST(ParseLog, FirstSampleRow) {
  const auto f = parse_log_line("05f0 2 00 00 0e 00 00 00 00 00 2.084334", 1);
  EXPECT_EQ(f.can_id, 0x05f0u);
  EXPECT_EQ(f.dlc, 2);
  ASSERT_EQ(f.payload().size(), 2u);
  EXPECT_EQ(f.payload()[0], 0);
  EXPECT_EQ(f.payload()[1], 0);
  EXPECT_DOUBLE_EQ(f.timestamp, 2.084334);
  // Bytes past the DLC are not kept.
  EXPECT_EQ(f.data[2], 0);
}

TEST(ParseLog, FullPayloadRow) {
  const auto f = parse_log_line("0130 8 00 00 40 ff 00 00 41 3d 2.156946", 1);
  EXPECT_EQ(f.can_id, 0x0130u);
  EXPECT_EQ(f.dlc, 8);
  const std::array<std::uint8_t, 8> want{0x00, 0x00, 0x40, 0xff, 0x00, 0x00, 0x41, 0x3d};
  EXPECT_EQ(f.data, want);
  EXPECT_DOUBLE_EQ(f.timestamp, 2.156946);
}

TEST(ParseLog, EmptyInput) { EXPECT_TRUE(parse_log(std::string_view{}).empty()); }

TEST(ParseLog, KeepsUnmonitoredIdsInFileOrder) {
  const auto t = parse_log("05f0 2 00 00 00 00 00 00 00 00 1.0\n0316 8 01 02 03 04 05 06 07 08 1.5\n");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].can_id, 0x5f0u);
  EXPECT_EQ(t[1].can_id, 790u);
}

TEST(ParseLog, ErrorsNameTheLine) {
  const std::string bad_hex = "0130 8 00 00 40 ff 00 00 41 3d 1.0\n0130 8 00 zz 40 ff 00 00 41 3d 2.0\n";
  try {
    parse_log(bad_hex);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_log_line("0130 9 00 00 40 ff 00 00 41 3d 1.0", 1), ParseError);
  EXPECT_THROW(parse_log_line("0130 8 00 00 40 ff 00 00 41 1.0", 1), ParseError);
  EXPECT_THROW(parse_log_line("0800 8 00 00 40 ff 00 00 41 3d 1.0", 1), ParseError);
  try {
    parse_log("0130 8 00 00 40 ff 00 00 41 3d 2.0\n0130 8 00 00 40 ff 00 00 41 3d 1.0\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ParseLog, WriteThenParseIsExact) {
  std::mt19937_64 gen(7);
  Trace t;
  double ts = 0.0;
  for (int i = 0; i < 500; ++i) {
    RawFrame f;
    f.can_id = static_cast<std::uint32_t>(gen() % 2048);
    f.dlc = static_cast<std::uint8_t>(gen() % 9);
    for (unsigned b = 0; b < f.dlc; ++b) f.data[b] = static_cast<std::uint8_t>(gen());
    ts += static_cast<double>(gen() % 5000) / 1e6;
    // Timestamps on the microsecond grid, as written by the log format.
    f.timestamp = std::round(ts * 1e6) / 1e6;
    t.push_back(f);
  }
  EXPECT_EQ(parse_log(write_log(t)), t);
}

TEST(ParseLog, WriteFormat) {
  const auto f = frame_of({0xab, 0x01}, 0x316);
  RawFrame g = f;
  g.timestamp = 1.5;
  EXPECT_EQ(format_log_line(g), "0316 2 ab 01 00 00 00 00 00 00 1.500000");
}

TEST(ExtractRaw, FullByte) { EXPECT_EQ(extract_raw(frame_of({0xff, 0, 0, 0, 0, 0, 0, 0}), field(0, 8)), 255u); }

TEST(ExtractRaw, SixteenBitBigEndian) {
  EXPECT_EQ(extract_raw(frame_of({0x00, 0x00, 0x12, 0x34, 0, 0, 0, 0}), field(16, 16)), 4660u);
}

TEST(ExtractRaw, TwoBitsInsideAByte) {
  EXPECT_EQ(extract_raw(frame_of({0b0011'0000, 0, 0, 0, 0, 0, 0, 0}), field(2, 2)), 3u);
}

TEST(ExtractRaw, LsbFirstOrder) {
  auto s = field(0, 4);
  s.bit_order = BitOrder::lsb_first;
  EXPECT_EQ(extract_raw(frame_of({0b0000'1010, 0, 0, 0, 0, 0, 0, 0}), s), 0b1010u);
  auto wide = field(0, 16);
  wide.bit_order = BitOrder::lsb_first;
  EXPECT_EQ(extract_raw(frame_of({0x34, 0x12, 0, 0, 0, 0, 0, 0}), wide), 0x1234u);
}

TEST(ExtractRaw, Errors) {
  EXPECT_THROW(extract_raw(frame_of({0, 0}, 0x101), field(0, 8)), SignalError);
  EXPECT_THROW(extract_raw(frame_of({0, 0}), field(8, 16)), SignalError);
}

TEST(ExtractRaw, MatchesBitStringOracle) {
  std::mt19937_64 gen(11);
  for (int iter = 0; iter < 2000; ++iter) {
    RawFrame f;
    f.can_id = 0x100;
    f.dlc = 8;
    for (auto& b : f.data) b = static_cast<std::uint8_t>(gen());
    const unsigned len = 1 + static_cast<unsigned>(gen() % 16);
    const unsigned start = static_cast<unsigned>(gen() % (65 - len));
    ASSERT_EQ(extract_raw(f, field(start, len)), bitstring_extract(f, start, len)) << start << "+" << len;
  }
}

TEST(ScaleSignal, Examples) {
  const auto cat = default_catalog();
  const auto& temp = cat.find("TEMP_ENG");
  EXPECT_DOUBLE_EQ(scale_signal(0, temp), -48.0);
  EXPECT_DOUBLE_EQ(scale_signal(64, temp), 0.0);
  const auto& tqi = cat.find("EMS11", "TQI");
  EXPECT_DOUBLE_EQ(scale_signal(255, tqi), 99.609375);
  EXPECT_NEAR(scale_signal(255, tqi), 99.61, 0.005);
}

TEST(EncodeSignal, Examples) {
  const auto cat = default_catalog();
  const auto& temp = cat.find("TEMP_ENG");
  EXPECT_EQ(encode_signal(-48.0, temp), 0u);
  const auto& tqi = cat.find("EMS11", "TQI");
  EXPECT_EQ(encode_signal(99.609375, tqi), 255u);
  EXPECT_EQ(encode_signal(50.0, tqi), 128u);
  EXPECT_DOUBLE_EQ(scale_signal(128, tqi), 50.0);
  EXPECT_THROW(encode_signal(100.0, tqi), RangeError);
  EXPECT_THROW(encode_signal(-0.1, tqi), RangeError);
}

TEST(EncodeSignal, QuantizationWithinHalfStep) {
  const auto cat = default_catalog();
  std::mt19937_64 gen(3);
  for (const auto& s : cat.specs()) {
    std::uniform_real_distribution<double> u(s.min_value, s.max_value);
    for (int i = 0; i < 500; ++i) {
      const double x = u(gen);
      EXPECT_LE(std::abs(scale_signal(encode_signal(x, s), s) - x), s.scale / 2 + 1e-9) << s.signal_name;
    }
  }
}

TEST(PatchBytes, Examples) {
  const auto f = frame_of({1, 2, 3, 4, 5, 6, 7, 8});
  const auto s = field(40, 8);
  const auto g = patch_bytes(f, s, 0xaa);
  EXPECT_EQ(extract_raw(g, s), 0xaau);
  for (unsigned b : {0u, 1u, 2u, 3u, 4u, 6u, 7u}) EXPECT_EQ(g.data[b], f.data[b]) << b;
  EXPECT_EQ(patch_bytes(f, s, extract_raw(f, s)), f);
  EXPECT_THROW(patch_bytes(f, field(0, 4), 16), RangeError);
}

TEST(PatchBytes, NibbleLeavesNeighbourBitsAlone) {
  const auto f = frame_of({0, 0, 0, 0, 0xff, 0, 0, 0});
  const auto g = patch_bytes(f, field(36, 4), 0);
  EXPECT_EQ(g.data[4], 0xf0);
}

// Every catalog signal, exhaustive up to 8 bits, 4096 draws for wider fields.
TEST(CatalogRoundtrip, AllSignals) {
  const auto cat = default_catalog();
  std::mt19937_64 gen(5);
  for (const auto& s : cat.specs()) {
    RawFrame base;
    base.can_id = s.message_id;
    base.dlc = 8;
    for (auto& b : base.data) b = static_cast<std::uint8_t>(gen());
    std::vector<std::uint64_t> values;
    if (s.bit_length <= 8) {
      for (std::uint64_t v = 0; v <= s.max_raw(); ++v) values.push_back(v);
    } else {
      for (int i = 0; i < 4096; ++i) values.push_back(gen() % (s.max_raw() + 1));
    }
    for (auto v : values) {
      const auto g = patch_bytes(base, s, v);
      ASSERT_EQ(extract_raw(g, s), v) << s.signal_name;
      const double x = scale_signal(v, s);
      // TPS has raw codes below its physical floor; those cannot be encoded.
      if (x >= s.min_value && x <= s.max_value) {
        ASSERT_EQ(encode_signal(x, s), v) << s.signal_name;
      } else {
        ASSERT_THROW(encode_signal(x, s), RangeError) << s.signal_name;
      }
      for (unsigned bit = 0; bit < 64; ++bit) {
        const bool inside = bit >= s.start_bit && bit < s.start_bit + s.bit_length;
        const unsigned byte = bit / 8, pos = 7 - bit % 8;
        if (!inside) {
          ASSERT_EQ((g.data[byte] >> pos) & 1, (base.data[byte] >> pos) & 1) << s.signal_name;
        }
      }
    }
  }
}
