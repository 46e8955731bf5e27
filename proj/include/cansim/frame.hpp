#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace cansim {

/// Bus level of one bit time. Logical 0 is dominant, logical 1 is recessive.
enum class Level : std::uint8_t { Dominant = 0, Recessive = 1 };

constexpr Level wired_and(Level a, Level b) noexcept {
  return (a == Level::Dominant || b == Level::Dominant) ? Level::Dominant : Level::Recessive;
}

constexpr Level opposite(Level l) noexcept {
  return l == Level::Dominant ? Level::Recessive : Level::Dominant;
}

constexpr Level to_level(bool bit) noexcept { return bit ? Level::Recessive : Level::Dominant; }

using Levels = std::vector<Level>;

/// 11-bit standard or 29-bit extended identifier.
class FrameId {
 public:
  static constexpr std::uint32_t kMaxStandard = 0x7FF;
  static constexpr std::uint32_t kMaxExtended = 0x1FFFFFFF;

  constexpr FrameId() = default;

  /// Throws std::invalid_argument when the value does not fit the format.
  static FrameId standard(std::uint32_t value);
  static FrameId extended(std::uint32_t value);

  /// Parses candump-style hex: up to 3 digits is standard, exactly 8 digits is extended.
  /// An optional "0x" prefix is accepted.
  static FrameId parse(std::string_view text);

  constexpr std::uint32_t value() const noexcept { return value_; }
  constexpr bool is_extended() const noexcept { return extended_; }

  /// 3 or 8 upper-case hex digits, as candump prints them.
  std::string to_string() const;

  friend constexpr auto operator<=>(const FrameId&, const FrameId&) = default;

 private:
  constexpr FrameId(std::uint32_t v, bool ext) : value_(v), extended_(ext) {}
  std::uint32_t value_ = 0;
  bool extended_ = false;
};

/// Logical data (or remote) frame before bit-level encoding.
struct DataFrame {
  FrameId id;
  bool rtr = false;
  std::uint8_t dlc = 0;
  std::vector<std::uint8_t> payload;
  /// Application-level annotation: the last payload byte is app_checksum() of
  /// the others. Not carried on the wire.
  bool has_app_checksum = false;

  /// Builds a data frame with dlc = payload.size(). Throws on invalid input.
  static DataFrame data(FrameId id, std::vector<std::uint8_t> payload);
  /// Builds a frame whose last byte is overwritten with the checksum of the preceding bytes.
  static DataFrame with_checksum(FrameId id, std::vector<std::uint8_t> payload);
  static DataFrame remote(FrameId id, std::uint8_t dlc);

  /// Throws std::invalid_argument if any frame invariant is violated.
  void validate() const;

  /// Wire equality: id, rtr, dlc and payload.
  friend bool operator==(const DataFrame& a, const DataFrame& b) {
    return a.id == b.id && a.rtr == b.rtr && a.dlc == b.dlc && a.payload == b.payload;
  }
};

/// Sort key equivalent to the arbitration order on the wire: lower key wins.
std::uint64_t arbitration_key(const DataFrame& frame);

/// Sum of bytes mod 256; the conventional last-byte checksum.
std::uint8_t app_checksum(std::span<const std::uint8_t> bytes);

enum class Field : std::uint8_t {
  Sof,
  IdA,
  Srr,
  Ide,
  IdB,
  Rtr,
  R1,
  R0,
  Dlc,
  Data,
  Crc,
  CrcDelimiter,
  AckSlot,
  AckDelimiter,
  Eof,
};

const char* to_string(Field f);

struct BitRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - begin; }
};

/// Encoded frame as driven on the wire, SOF through the last EOF bit.
struct BitStream {
  /// Wire bits, stuffed from SOF through the CRC sequence.
  Levels bits;
  /// Field of every wire bit; stuff bits carry the field they were inserted into.
  std::vector<Field> wire_fields;
  /// Set for every inserted stuff bit.
  std::vector<bool> stuff;
  /// Field positions in the unstuffed stream. Absent fields (e.g. IdB for
  /// standard frames) have an empty range.
  std::array<BitRange, 15> field_offsets{};

  const BitRange& offsets(Field f) const { return field_offsets[static_cast<std::size_t>(f)]; }
  std::size_t size() const { return bits.size(); }
};

/// Number of unstuffed bits in the stuffed region (SOF through CRC) of a frame.
std::size_t stuffed_region_length(const DataFrame& frame);

/// Encodes SOF through EOF. The ACK slot is recessive, as transmitted.
/// Throws std::invalid_argument when frame invariants do not hold.
BitStream encode_frame(const DataFrame& frame);

/// Inserts an opposite-level bit after every run of five equal bits.
Levels stuff_bits(std::span<const Level> bits);

enum class DecodeErrorKind : std::uint8_t { Stuff, Form, Crc };

const char* to_string(DecodeErrorKind k);

struct DecodeError {
  DecodeErrorKind kind;
  /// Wire bit index at which the error was detected.
  std::size_t bit_index = 0;
  friend bool operator==(const DecodeError&, const DecodeError&) = default;
};

/// Removes stuff bits. Reports a stuff error at the sixth bit of a run.
std::variant<Levels, DecodeError> unstuff_bits(std::span<const Level> bits);

/// CAN CRC-15 (generator 0x4599, initial value 0) over unstuffed bits.
std::uint16_t compute_crc15(std::span<const Level> bits);

/// Incremental receiver-side decoder: destuffing, field tracking, form,
/// stuff and CRC checks. Fed one observed bus level per bit time, starting
/// with the SOF bit.
class FrameDecoder {
 public:
  enum class Status : std::uint8_t { InProgress, Complete, Error };

  struct Step {
    Status status = Status::InProgress;
    DecodeErrorKind error = DecodeErrorKind::Form;
  };

  FrameDecoder() { reset(); }

  void reset();
  Step feed(Level level);

  /// True once the CRC sequence matched; receivers acknowledge only then.
  bool crc_ok() const { return crc_checked_ && !crc_failed_; }
  bool in_ack_slot() const { return phase_ == Phase::AckSlot; }
  std::size_t wire_bits() const { return wire_count_; }

  /// The decoded frame. Valid after Complete, or once the CRC has been checked.
  DataFrame frame() const;

 private:
  enum class Phase : std::uint8_t { Stuffed, CrcDelimiter, AckSlot, AckDelimiter, Eof, Done };

  void on_payload_bit(Level level);
  std::size_t header_length() const;
  std::optional<std::size_t> expected_stuffed_length() const;

  Phase phase_ = Phase::Stuffed;
  Levels unstuffed_;
  Level run_level_ = Level::Recessive;
  int run_length_ = 0;
  std::size_t wire_count_ = 0;
  int eof_count_ = 0;
  bool crc_checked_ = false;
  bool crc_failed_ = false;
  bool pending_stuff_ = false;
};

/// Decodes a complete wire stream. The ACK slot level is not checked.
std::variant<DataFrame, DecodeError> decode_frame(std::span<const Level> wire);
inline std::variant<DataFrame, DecodeError> decode_frame(const BitStream& stream) {
  return decode_frame(stream.bits);
}

}  // namespace cansim
