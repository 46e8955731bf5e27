#include "cansim/frame.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <stdexcept>
#include <string_view>

namespace cansim {

namespace {

constexpr std::uint16_t kCrcPolynomial = 0x4599;
constexpr std::size_t kStandardHeaderBits = 19;  // SOF..DLC
constexpr std::size_t kExtendedHeaderBits = 39;
constexpr std::size_t kIdeIndex = 13;
constexpr std::size_t kCrcBits = 15;
constexpr int kEofBits = 7;

void append_bits(Levels& out, std::uint32_t value, int width) {
  for (int i = width - 1; i >= 0; --i) out.push_back(to_level(((value >> i) & 1U) != 0));
}

std::uint32_t read_bits(std::span<const Level> bits, std::size_t begin, std::size_t width) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v = (v << 1) | static_cast<std::uint32_t>(bits[begin + i]);
  return v;
}

std::size_t payload_length(bool rtr, std::uint8_t dlc) {
  return rtr ? 0 : std::min<std::size_t>(dlc, 8);
}

}  // namespace

FrameId FrameId::standard(std::uint32_t value) {
  if (value > kMaxStandard) throw std::invalid_argument("standard identifier exceeds 11 bits");
  return FrameId(value, false);
}

FrameId FrameId::extended(std::uint32_t value) {
  if (value > kMaxExtended) throw std::invalid_argument("extended identifier exceeds 29 bits");
  return FrameId(value, true);
}

FrameId FrameId::parse(std::string_view text) {
  if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) text.remove_prefix(2);
  if (text.empty() || text.size() > 8 || (text.size() > 3 && text.size() != 8)) {
    throw std::invalid_argument("identifier must have 1-3 (standard) or 8 (extended) hex digits");
  }
  std::uint32_t v = 0;
  for (char c : text) {
    if (std::isxdigit(static_cast<unsigned char>(c)) == 0) {
      throw std::invalid_argument("identifier is not hexadecimal");
    }
    const int digit = std::isdigit(static_cast<unsigned char>(c)) != 0
                          ? c - '0'
                          : std::toupper(static_cast<unsigned char>(c)) - 'A' + 10;
    v = (v << 4) | static_cast<std::uint32_t>(digit);
  }
  return text.size() == 8 ? extended(v) : standard(v);
}

std::string FrameId::to_string() const {
  char buf[12];
  std::snprintf(buf, sizeof buf, extended_ ? "%08X" : "%03X", value_);
  return buf;
}

DataFrame DataFrame::data(FrameId id, std::vector<std::uint8_t> payload) {
  DataFrame f;
  f.id = id;
  f.dlc = static_cast<std::uint8_t>(std::min<std::size_t>(payload.size(), 255));
  f.payload = std::move(payload);
  f.validate();
  return f;
}

DataFrame DataFrame::with_checksum(FrameId id, std::vector<std::uint8_t> payload) {
  if (payload.empty()) throw std::invalid_argument("checksummed frame needs at least one byte");
  payload.back() = app_checksum(std::span(payload).first(payload.size() - 1));
  DataFrame f = data(id, std::move(payload));
  f.has_app_checksum = true;
  return f;
}

DataFrame DataFrame::remote(FrameId id, std::uint8_t dlc) {
  DataFrame f;
  f.id = id;
  f.rtr = true;
  f.dlc = dlc;
  f.validate();
  return f;
}

void DataFrame::validate() const {
  if (id.is_extended() ? id.value() > FrameId::kMaxExtended : id.value() > FrameId::kMaxStandard) {
    throw std::invalid_argument("identifier out of range");
  }
  if (dlc > 8) throw std::invalid_argument("dlc exceeds 8");
  if (rtr) {
    if (!payload.empty()) throw std::invalid_argument("remote frame carries no payload");
    return;
  }
  if (payload.size() != dlc) throw std::invalid_argument("payload length differs from dlc");
  if (has_app_checksum && dlc >= 1 &&
      payload.back() != app_checksum(std::span(payload).first(dlc - 1))) {
    throw std::invalid_argument("last payload byte does not match app checksum");
  }
}

std::uint64_t arbitration_key(const DataFrame& frame) {
  const std::uint64_t rtr = frame.rtr ? 1 : 0;
  if (!frame.id.is_extended()) return (std::uint64_t{frame.id.value()} << 21) | (rtr << 20);
  const std::uint64_t base = frame.id.value() >> 18;
  const std::uint64_t ext = frame.id.value() & 0x3FFFF;
  return (base << 21) | (1ULL << 20) | (1ULL << 19) | (ext << 1) | rtr;
}

std::uint8_t app_checksum(std::span<const std::uint8_t> bytes) {
  unsigned sum = 0;
  for (auto b : bytes) sum += b;
  return static_cast<std::uint8_t>(sum & 0xFF);
}

const char* to_string(Field f) {
  switch (f) {
    case Field::Sof: return "SOF";
    case Field::IdA: return "ID";
    case Field::Srr: return "SRR";
    case Field::Ide: return "IDE";
    case Field::IdB: return "ID2";
    case Field::Rtr: return "RTR";
    case Field::R1: return "R1";
    case Field::R0: return "R0";
    case Field::Dlc: return "DLC";
    case Field::Data: return "DATA";
    case Field::Crc: return "CRC";
    case Field::CrcDelimiter: return "CRC_DEL";
    case Field::AckSlot: return "ACK";
    case Field::AckDelimiter: return "ACK_DEL";
    case Field::Eof: return "EOF";
  }
  return "?";
}

const char* to_string(DecodeErrorKind k) {
  switch (k) {
    case DecodeErrorKind::Stuff: return "StuffError";
    case DecodeErrorKind::Form: return "FormError";
    case DecodeErrorKind::Crc: return "CrcError";
  }
  return "?";
}

std::size_t stuffed_region_length(const DataFrame& frame) {
  const std::size_t header = frame.id.is_extended() ? kExtendedHeaderBits : kStandardHeaderBits;
  return header + 8 * payload_length(frame.rtr, frame.dlc) + kCrcBits;
}

std::uint16_t compute_crc15(std::span<const Level> bits) {
  std::uint16_t crc = 0;
  for (Level b : bits) {
    const bool next = (b == Level::Recessive) != ((crc >> 14) & 1U);
    crc = static_cast<std::uint16_t>((crc << 1) & 0x7FFF);
    if (next) crc ^= kCrcPolynomial;
  }
  return crc;
}

Levels stuff_bits(std::span<const Level> bits) {
  Levels out;
  out.reserve(bits.size() + bits.size() / 4 + 1);
  Level run_level = Level::Recessive;
  int run = 0;
  for (Level b : bits) {
    out.push_back(b);
    if (run > 0 && b == run_level) {
      ++run;
    } else {
      run_level = b;
      run = 1;
    }
    if (run == 5) {
      run_level = opposite(b);
      out.push_back(run_level);
      run = 1;
    }
  }
  return out;
}

std::variant<Levels, DecodeError> unstuff_bits(std::span<const Level> bits) {
  Levels out;
  Level run_level = Level::Recessive;
  int run = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const Level b = bits[i];
    if (run == 5) {
      if (b == run_level) return DecodeError{DecodeErrorKind::Stuff, i};
      run_level = b;
      run = 1;
      continue;
    }
    out.push_back(b);
    if (run > 0 && b == run_level) {
      ++run;
    } else {
      run_level = b;
      run = 1;
    }
  }
  return out;
}

BitStream encode_frame(const DataFrame& frame) {
  frame.validate();

  BitStream s;
  Levels raw;
  std::vector<Field> raw_fields;
  auto put = [&](Field f, std::uint32_t value, int width) {
    auto& range = s.field_offsets[static_cast<std::size_t>(f)];
    range.begin = raw.size();
    append_bits(raw, value, width);
    raw_fields.insert(raw_fields.end(), static_cast<std::size_t>(width), f);
    range.end = raw.size();
  };

  const std::uint32_t rtr = frame.rtr ? 1 : 0;
  put(Field::Sof, 0, 1);
  if (frame.id.is_extended()) {
    put(Field::IdA, frame.id.value() >> 18, 11);
    put(Field::Srr, 1, 1);
    put(Field::Ide, 1, 1);
    put(Field::IdB, frame.id.value() & 0x3FFFF, 18);
    put(Field::Rtr, rtr, 1);
    put(Field::R1, 0, 1);
    put(Field::R0, 0, 1);
  } else {
    put(Field::IdA, frame.id.value(), 11);
    put(Field::Rtr, rtr, 1);
    put(Field::Ide, 0, 1);
    put(Field::R0, 0, 1);
  }
  put(Field::Dlc, frame.dlc, 4);
  {
    auto& range = s.field_offsets[static_cast<std::size_t>(Field::Data)];
    range.begin = raw.size();
    for (std::size_t i = 0; i < payload_length(frame.rtr, frame.dlc); ++i) {
      append_bits(raw, frame.payload[i], 8);
      raw_fields.insert(raw_fields.end(), 8, Field::Data);
    }
    range.end = raw.size();
  }
  put(Field::Crc, compute_crc15(raw), 15);

  // Stuff SOF..CRC, carrying field tags along.
  Level run_level = Level::Recessive;
  int run = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Level b = raw[i];
    s.bits.push_back(b);
    s.wire_fields.push_back(raw_fields[i]);
    s.stuff.push_back(false);
    if (run > 0 && b == run_level) {
      ++run;
    } else {
      run_level = b;
      run = 1;
    }
    if (run == 5) {
      run_level = opposite(b);
      s.bits.push_back(run_level);
      s.wire_fields.push_back(raw_fields[i]);
      s.stuff.push_back(true);
      run = 1;
    }
  }

  auto trailer = [&](Field f, int width) {
    auto& range = s.field_offsets[static_cast<std::size_t>(f)];
    range.begin = raw.size();
    for (int i = 0; i < width; ++i) {
      raw.push_back(Level::Recessive);
      s.bits.push_back(Level::Recessive);
      s.wire_fields.push_back(f);
      s.stuff.push_back(false);
    }
    range.end = raw.size();
  };
  trailer(Field::CrcDelimiter, 1);
  trailer(Field::AckSlot, 1);
  trailer(Field::AckDelimiter, 1);
  trailer(Field::Eof, kEofBits);
  return s;
}

void FrameDecoder::reset() {
  phase_ = Phase::Stuffed;
  unstuffed_.clear();
  run_level_ = Level::Recessive;
  run_length_ = 0;
  wire_count_ = 0;
  eof_count_ = 0;
  crc_checked_ = false;
  crc_failed_ = false;
  pending_stuff_ = false;
}

std::size_t FrameDecoder::header_length() const {
  return unstuffed_[kIdeIndex] == Level::Recessive ? kExtendedHeaderBits : kStandardHeaderBits;
}

std::optional<std::size_t> FrameDecoder::expected_stuffed_length() const {
  if (unstuffed_.size() <= kIdeIndex) return std::nullopt;
  const std::size_t header = header_length();
  if (unstuffed_.size() < header) return std::nullopt;
  const bool rtr = unstuffed_[header == kExtendedHeaderBits ? 32 : 12] == Level::Recessive;
  const auto dlc = static_cast<std::uint8_t>(read_bits(unstuffed_, header - 4, 4));
  return header + 8 * payload_length(rtr, dlc) + kCrcBits;
}

FrameDecoder::Step FrameDecoder::feed(Level level) {
  ++wire_count_;
  switch (phase_) {
    case Phase::Stuffed: {
      if (pending_stuff_) {
        if (level == run_level_) return {Status::Error, DecodeErrorKind::Stuff};
        pending_stuff_ = false;
        run_level_ = level;
        run_length_ = 1;
        if (crc_checked_) phase_ = Phase::CrcDelimiter;
        return {};
      }
      if (run_length_ > 0 && level == run_level_) {
        ++run_length_;
      } else {
        run_level_ = level;
        run_length_ = 1;
      }
      unstuffed_.push_back(level);
      if (unstuffed_.size() == 1 && level != Level::Dominant) return {Status::Error, DecodeErrorKind::Form};
      if (run_length_ == 5) pending_stuff_ = true;

      const std::size_t n = unstuffed_.size();
      if (n > kIdeIndex && n == header_length()) {
        // DLC values above 8 are rejected; frames here never exceed 8 bytes.
        if (read_bits(unstuffed_, n - 4, 4) > 8) return {Status::Error, DecodeErrorKind::Form};
      }
      const auto total = expected_stuffed_length();
      if (total && n == *total) {
        const auto crc_begin = n - kCrcBits;
        const auto received = read_bits(unstuffed_, crc_begin, kCrcBits);
        const auto computed = compute_crc15(std::span(unstuffed_).first(crc_begin));
        crc_checked_ = true;
        crc_failed_ = received != computed;
        if (!pending_stuff_) phase_ = Phase::CrcDelimiter;
      }
      return {};
    }
    case Phase::CrcDelimiter:
      if (level != Level::Recessive) return {Status::Error, DecodeErrorKind::Form};
      phase_ = Phase::AckSlot;
      return {};
    case Phase::AckSlot:
      phase_ = Phase::AckDelimiter;
      return {};
    case Phase::AckDelimiter:
      if (level != Level::Recessive) return {Status::Error, DecodeErrorKind::Form};
      if (crc_failed_) return {Status::Error, DecodeErrorKind::Crc};
      phase_ = Phase::Eof;
      return {};
    case Phase::Eof:
      if (level != Level::Recessive) return {Status::Error, DecodeErrorKind::Form};
      if (++eof_count_ == kEofBits) {
        phase_ = Phase::Done;
        return {Status::Complete, {}};
      }
      return {};
    case Phase::Done:
      return {Status::Complete, {}};
  }
  return {};
}

DataFrame FrameDecoder::frame() const {
  DataFrame f;
  const std::size_t header = header_length();
  const bool ext = header == kExtendedHeaderBits;
  if (ext) {
    const auto base = read_bits(unstuffed_, 1, 11);
    const auto low = read_bits(unstuffed_, 14, 18);
    f.id = FrameId::extended((base << 18) | low);
    f.rtr = unstuffed_[32] == Level::Recessive;
  } else {
    f.id = FrameId::standard(read_bits(unstuffed_, 1, 11));
    f.rtr = unstuffed_[12] == Level::Recessive;
  }
  f.dlc = static_cast<std::uint8_t>(read_bits(unstuffed_, header - 4, 4));
  const std::size_t len = payload_length(f.rtr, f.dlc);
  for (std::size_t i = 0; i < len; ++i) {
    f.payload.push_back(static_cast<std::uint8_t>(read_bits(unstuffed_, header + 8 * i, 8)));
  }
  return f;
}

std::variant<DataFrame, DecodeError> decode_frame(std::span<const Level> wire) {
  FrameDecoder dec;
  for (std::size_t i = 0; i < wire.size(); ++i) {
    const auto step = dec.feed(wire[i]);
    if (step.status == FrameDecoder::Status::Error) return DecodeError{step.error, i};
    if (step.status == FrameDecoder::Status::Complete) return dec.frame();
  }
  // Truncated streams are malformed.
  return DecodeError{DecodeErrorKind::Form, wire.size()};
}

}  // namespace cansim
