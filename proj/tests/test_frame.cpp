#include <doctest.h>

#include <algorithm>
#include <random>
#include <stdexcept>

#include "cansim/frame.hpp"
#include "support/oracles.hpp"

using namespace cansim;

namespace {

std::string to_string(const Levels& bits) {
  std::string s;
  for (auto b : bits) s.push_back(b == Level::Recessive ? '1' : '0');
  return s;
}

Levels from_string(const std::string& s) {
  Levels out;
  for (char c : s) out.push_back(c == '1' ? Level::Recessive : Level::Dominant);
  return out;
}

std::size_t stuffed_end(const BitStream& s) {
  return static_cast<std::size_t>(std::find(s.wire_fields.begin(), s.wire_fields.end(), Field::CrcDelimiter) -
                                  s.wire_fields.begin());
}

}  // namespace

TEST_CASE("frame ids are range checked") {
  CHECK_NOTHROW(FrameId::standard(0x7FF));
  CHECK_THROWS_AS(FrameId::standard(0x800), std::invalid_argument);
  CHECK_NOTHROW(FrameId::extended(0x1FFFFFFF));
  CHECK_THROWS_AS(FrameId::extended(0x20000000), std::invalid_argument);
  CHECK(FrameId::parse("0x3A0") == FrameId::standard(0x3A0));
  CHECK(FrameId::parse("18FEF100") == FrameId::extended(0x18FEF100));
  CHECK_THROWS(FrameId::parse("12345"));
  CHECK(FrameId::standard(0x1A).to_string() == "01A");
}

TEST_CASE("frame invariants") {
  CHECK_THROWS_AS(DataFrame::data(FrameId::standard(1), std::vector<std::uint8_t>(9)), std::invalid_argument);
  DataFrame bad;
  bad.id = FrameId::standard(1);
  bad.dlc = 2;
  bad.payload = {1};
  CHECK_THROWS(bad.validate());
  CHECK_THROWS(encode_frame(bad));

  auto remote = DataFrame::remote(FrameId::standard(0x100), 4);
  CHECK(remote.payload.empty());
  CHECK(remote.dlc == 4);

  auto checked = DataFrame::with_checksum(FrameId::standard(0x10), {0x01, 0x02, 0x00});
  CHECK(checked.payload.back() == 0x03);
  checked.payload[0] = 0x05;
  CHECK_THROWS(checked.validate());
}

TEST_CASE("app checksum is a mod-256 sum") {
  CHECK(app_checksum({}) == 0x00);
  const std::vector<std::uint8_t> a{0x01, 0x02};
  CHECK(app_checksum(a) == 0x03);
  const std::vector<std::uint8_t> b{0xFF, 0x01};
  CHECK(app_checksum(b) == 0x00);
}

TEST_CASE("bit stuffing examples") {
  CHECK(to_string(stuff_bits(from_string("11111111"))) == "111110111");
  CHECK(to_string(stuff_bits(from_string("10101010"))) == "10101010");
  // Hand-traced: five zeros, stuff 1, which starts the run the next four ones complete.
  CHECK(to_string(stuff_bits(from_string("0000011111"))) == "000001111101");
  CHECK(oracle::stuff_string("0000011111") == "000001111101");

  auto bad = unstuff_bits(from_string("1111110"));
  REQUIRE(std::holds_alternative<DecodeError>(bad));
  CHECK(std::get<DecodeError>(bad).kind == DecodeErrorKind::Stuff);
  CHECK(std::get<DecodeError>(bad).bit_index == 5);
}

TEST_CASE("stuffing matches the run-length oracle and round-trips") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string raw;
    const auto len = rng() % 64;
    // Biased toward long runs.
    for (std::size_t i = 0; i < len; ++i) raw.push_back((rng() % 8) == 0 ? (raw.empty() || raw.back() == '0' ? '1' : '0')
                                                                           : (raw.empty() ? '0' : raw.back()));
    const auto stuffed = stuff_bits(from_string(raw));
    REQUIRE(to_string(stuffed) == oracle::stuff_string(raw));
    CHECK_FALSE(oracle::has_six_run(stuffed, 0, stuffed.size()));
    auto back = unstuff_bits(stuffed);
    REQUIRE(std::holds_alternative<Levels>(back));
    CHECK(to_string(std::get<Levels>(back)) == raw);
  }
}

TEST_CASE("crc15 matches frozen long-division values") {
  CHECK(compute_crc15(Levels(20, Level::Dominant)) == 0x0000);
  CHECK(compute_crc15({}) == 0x0000);

  auto f1 = DataFrame::data(FrameId::standard(0x123), {0xAB, 0xCD});
  CHECK(compute_crc15(oracle::to_levels(oracle::crc_input_bits(f1))) == 0x7F3C);
  auto f2 = DataFrame::data(FrameId::standard(0x123), {0x00});
  CHECK(compute_crc15(oracle::to_levels(oracle::crc_input_bits(f2))) == 0x6067);

  // The encoder places the same value in the CRC field.
  auto s = encode_frame(f1);
  auto un = std::get<Levels>(unstuff_bits(std::span(s.bits).first(stuffed_end(s))));
  const auto& crc = s.offsets(Field::Crc);
  std::uint16_t v = 0;
  for (auto i = crc.begin; i < crc.end; ++i) v = static_cast<std::uint16_t>((v << 1) | static_cast<int>(un[i]));
  CHECK(v == 0x7F3C);
}

TEST_CASE("every single-bit change of the crc input changes the crc") {
  auto f = DataFrame::data(FrameId::standard(0x123), {0x00});
  const auto bits = oracle::crc_input_bits(f);
  const auto base = compute_crc15(oracle::to_levels(bits));
  for (std::size_t i = 0; i < bits.size(); ++i) {
    auto flipped = bits;
    flipped[i] ^= 1;
    CHECK(compute_crc15(oracle::to_levels(flipped)) != base);
    CHECK(compute_crc15(oracle::to_levels(flipped)) == oracle::crc15_long_division(flipped));
  }
}

TEST_CASE("encode_frame layout") {
  SUBCASE("all-zero standard id") {
    auto s = encode_frame(DataFrame::data(FrameId::standard(0x000), {}));
    CHECK(s.bits[0] == Level::Dominant);
    // SOF plus the first four id bits make a five-run, so a stuff bit follows.
    CHECK(s.wire_fields[0] == Field::Sof);
    for (std::size_t i = 1; i <= 4; ++i) CHECK(s.bits[i] == Level::Dominant);
    CHECK(s.stuff[5]);
    const auto& id = s.offsets(Field::IdA);
    CHECK(id.size() == 11);
    auto un = std::get<Levels>(unstuff_bits(std::span(s.bits).first(stuffed_end(s))));
    for (auto i = id.begin; i < id.end; ++i) CHECK(un[i] == Level::Dominant);
  }
  SUBCASE("all-ones standard id gets a stuff bit after five recessive bits") {
    auto s = encode_frame(DataFrame::data(FrameId::standard(0x7FF), {}));
    CHECK(to_string(Levels(s.bits.begin(), s.bits.begin() + 8)) == "01111101");
    CHECK(s.stuff[6]);
    CHECK(s.wire_fields[6] == Field::IdA);
  }
  SUBCASE("trailer is recessive and unstuffed") {
    auto s = encode_frame(DataFrame::data(FrameId::standard(0x123), {0xAB, 0xCD}));
    const auto end = stuffed_end(s);
    REQUIRE(s.size() == end + 10);
    for (auto i = end; i < s.size(); ++i) CHECK(s.bits[i] == Level::Recessive);
    CHECK(s.wire_fields[end + 1] == Field::AckSlot);
    CHECK(s.offsets(Field::Eof).size() == 7);
    CHECK(s.offsets(Field::Dlc).size() == 4);
    CHECK(s.offsets(Field::Data).size() == 16);
    CHECK(s.offsets(Field::IdB).size() == 0);
  }
  SUBCASE("extended layout") {
    auto s = encode_frame(DataFrame::data(FrameId::extended(0x18FEF100), {1, 2, 3}));
    CHECK(s.offsets(Field::IdB).size() == 18);
    CHECK(s.offsets(Field::Srr).begin == 12);
    CHECK(s.offsets(Field::Ide).begin == 13);
    CHECK(s.offsets(Field::Dlc).begin == 35);
  }
}

TEST_CASE("decode_frame classifies corruption") {
  auto f = DataFrame::data(FrameId::standard(0x123), {0xAB, 0xCD});
  auto s = encode_frame(f);

  SUBCASE("round trip") {
    auto d = decode_frame(s);
    REQUIRE(std::holds_alternative<DataFrame>(d));
    CHECK(std::get<DataFrame>(d) == f);
  }
  SUBCASE("dominant crc delimiter is a form error") {
    const auto pos = s.offsets(Field::CrcDelimiter).begin;  // unstuffed index
    auto wire = s.bits;
    auto it = std::find(s.wire_fields.begin(), s.wire_fields.end(), Field::CrcDelimiter);
    wire[static_cast<std::size_t>(it - s.wire_fields.begin())] = Level::Dominant;
    (void)pos;
    auto d = decode_frame(wire);
    REQUIRE(std::holds_alternative<DecodeError>(d));
    CHECK(std::get<DecodeError>(d).kind == DecodeErrorKind::Form);
  }
  SUBCASE("flipped payload bit is a crc error") {
    auto wire = s.bits;
    std::size_t target = 0;
    for (std::size_t i = 0; i < wire.size(); ++i) {
      if (s.wire_fields[i] == Field::Data && !s.stuff[i]) {
        target = i;
        break;
      }
    }
    wire[target] = opposite(wire[target]);
    // The flip must not create a six-run for this frame; confirm via the oracle.
    REQUIRE_FALSE(oracle::has_six_run(wire, 0, stuffed_end(s)));
    auto d = decode_frame(wire);
    REQUIRE(std::holds_alternative<DecodeError>(d));
    CHECK(std::get<DecodeError>(d).kind == DecodeErrorKind::Crc);
  }
  SUBCASE("dominant eof bit is a form error") {
    auto wire = s.bits;
    wire[wire.size() - 2] = Level::Dominant;
    auto d = decode_frame(wire);
    REQUIRE(std::holds_alternative<DecodeError>(d));
    CHECK(std::get<DecodeError>(d).kind == DecodeErrorKind::Form);
  }
  SUBCASE("six dominant bits are a stuff error") {
    auto wire = s.bits;
    const auto start = s.offsets(Field::Dlc).begin + 2;
    for (std::size_t i = start; i < start + 6; ++i) wire[i] = Level::Dominant;
    auto d = decode_frame(wire);
    REQUIRE(std::holds_alternative<DecodeError>(d));
    CHECK(std::get<DecodeError>(d).kind == DecodeErrorKind::Stuff);
  }
  SUBCASE("truncated stream is malformed") {
    auto wire = Levels(s.bits.begin(), s.bits.begin() + 20);
    CHECK(std::holds_alternative<DecodeError>(decode_frame(wire)));
  }
}

TEST_CASE("remote frames round trip without payload") {
  auto f = DataFrame::remote(FrameId::standard(0x321), 6);
  auto d = decode_frame(encode_frame(f));
  REQUIRE(std::holds_alternative<DataFrame>(d));
  CHECK(std::get<DataFrame>(d) == f);
  CHECK(std::get<DataFrame>(d).payload.empty());
}

TEST_CASE("property: random frames round trip, stay six-run free, and detect single flips") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const auto f = oracle::random_frame(rng);
    const auto s = encode_frame(f);
    const auto end = stuffed_end(s);
    REQUIRE_FALSE(oracle::has_six_run(s.bits, 0, end));
    auto d = decode_frame(s);
    REQUIRE(std::holds_alternative<DataFrame>(d));
    REQUIRE(std::get<DataFrame>(d) == f);
    // Flip one bit of the stuffed region (SOF excluded: a recessive SOF is no frame at all).
    const auto i = 1 + rng() % (end - 1);
    auto wire = s.bits;
    wire[i] = opposite(wire[i]);
    CHECK(std::holds_alternative<DecodeError>(decode_frame(wire)));
  }
}

TEST_CASE("wired-and of two streams lets dominant win") {
  auto a = encode_frame(DataFrame::data(FrameId::standard(0x100), {0x55}));
  auto b = encode_frame(DataFrame::data(FrameId::standard(0x200), {0xAA}));
  const auto n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto bus = wired_and(a.bits[i], b.bits[i]);
    const bool any_dominant = a.bits[i] == Level::Dominant || b.bits[i] == Level::Dominant;
    CHECK((bus == Level::Dominant) == any_dominant);
  }
}

TEST_CASE("arbitration key orders like the wire") {
  auto data = DataFrame::data(FrameId::standard(0x100), {});
  auto remote = DataFrame::remote(FrameId::standard(0x100), 0);
  auto ext = DataFrame::data(FrameId::extended(0x100u << 18), {});
  CHECK(arbitration_key(data) < arbitration_key(remote));
  CHECK(arbitration_key(remote) < arbitration_key(ext));
  CHECK(arbitration_key(DataFrame::data(FrameId::standard(0x0FF), {})) < arbitration_key(data));
}
