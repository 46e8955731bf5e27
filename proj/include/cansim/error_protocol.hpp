#pragma once

#include <cstdint>
#include <optional>

#include "cansim/frame.hpp"

namespace cansim {

enum class ErrorKind : std::uint8_t { BitError, StuffError, FormError, AckError, CrcError };

const char* to_string(ErrorKind k);
ErrorKind to_error_kind(DecodeErrorKind k);

enum class ErrorMode : std::uint8_t { ErrorActive, ErrorPassive, BusOff };

const char* to_string(ErrorMode m);

/// Transmit/receive error counters and the confinement mode derived from them.
struct NodeErrorState {
  static constexpr int kPassiveThreshold = 127;  // counters above this are passive
  static constexpr int kBusOffThreshold = 255;   // counters above this are bus-off

  int tec = 0;
  int rec = 0;
  /// Set once a counter passes 255; only an explicit reset clears it.
  bool bus_off_latched = false;

  ErrorMode mode() const noexcept {
    if (bus_off_latched) return ErrorMode::BusOff;
    if (tec > kPassiveThreshold || rec > kPassiveThreshold) return ErrorMode::ErrorPassive;
    return ErrorMode::ErrorActive;
  }

  friend bool operator==(const NodeErrorState&, const NodeErrorState&) = default;
};

enum class Role : std::uint8_t { Transmitter, Receiver };

/// Which part of the frame the transmitter is driving when it compares levels.
enum class TransmitPhase : std::uint8_t { Arbitration, AckSlot, Other };

/// Bit monitoring. Losing arbitration and being acknowledged are not errors.
std::optional<ErrorKind> detect_transmit_error(Level sent, Level observed, TransmitPhase phase);

/// Transmitter check at the ACK slot: nobody drove it dominant.
std::optional<ErrorKind> detect_ack_error(Level ack_slot_observed);

/// TEC += 8. Throws std::logic_error when called on a bus-off node.
NodeErrorState on_transmit_error(NodeErrorState state);
/// REC += 1. Throws std::logic_error when called on a bus-off node.
NodeErrorState on_receive_error(NodeErrorState state);
/// The role's counter decreases by 1, floored at 0.
NodeErrorState on_success(NodeErrorState state, Role role);
/// Clears both counters and the bus-off latch.
NodeErrorState reset_node(NodeErrorState state);

struct ErrorFlag {
  enum class Style : std::uint8_t { Active, Passive };
  static constexpr int kLength = 6;

  Style style = Style::Active;
  /// CRC errors are flagged only after the ACK delimiter.
  bool delay_to_ack_delimiter = false;

  Level level() const noexcept { return style == Style::Active ? Level::Dominant : Level::Recessive; }
};

/// Flag a node in `state` drives after detecting `trigger`; nothing when bus-off.
std::optional<ErrorFlag> emit_error_flag(const NodeErrorState& state, ErrorKind trigger);

}  // namespace cansim
