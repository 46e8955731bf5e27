#include "cansim/error_protocol.hpp"

#include <algorithm>
#include <stdexcept>

namespace cansim {

const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::BitError: return "BitError";
    case ErrorKind::StuffError: return "StuffError";
    case ErrorKind::FormError: return "FormError";
    case ErrorKind::AckError: return "AckError";
    case ErrorKind::CrcError: return "CrcError";
  }
  return "?";
}

ErrorKind to_error_kind(DecodeErrorKind k) {
  switch (k) {
    case DecodeErrorKind::Stuff: return ErrorKind::StuffError;
    case DecodeErrorKind::Form: return ErrorKind::FormError;
    case DecodeErrorKind::Crc: return ErrorKind::CrcError;
  }
  return ErrorKind::FormError;
}

const char* to_string(ErrorMode m) {
  switch (m) {
    case ErrorMode::ErrorActive: return "ErrorActive";
    case ErrorMode::ErrorPassive: return "ErrorPassive";
    case ErrorMode::BusOff: return "BusOff";
  }
  return "?";
}

std::optional<ErrorKind> detect_transmit_error(Level sent, Level observed, TransmitPhase phase) {
  if (sent == observed) return std::nullopt;
  if (sent == Level::Recessive && phase == TransmitPhase::Arbitration) return std::nullopt;
  if (sent == Level::Recessive && phase == TransmitPhase::AckSlot) return std::nullopt;
  return ErrorKind::BitError;
}

std::optional<ErrorKind> detect_ack_error(Level ack_slot_observed) {
  if (ack_slot_observed == Level::Recessive) return ErrorKind::AckError;
  return std::nullopt;
}

namespace {

void latch(NodeErrorState& s) {
  if (s.tec > NodeErrorState::kBusOffThreshold || s.rec > NodeErrorState::kBusOffThreshold) {
    s.bus_off_latched = true;
  }
}

void require_on_bus(const NodeErrorState& s) {
  if (s.mode() == ErrorMode::BusOff) throw std::logic_error("error counter update on a bus-off node");
}

}  // namespace

NodeErrorState on_transmit_error(NodeErrorState state) {
  require_on_bus(state);
  state.tec += 8;
  latch(state);
  return state;
}

NodeErrorState on_receive_error(NodeErrorState state) {
  require_on_bus(state);
  state.rec += 1;
  latch(state);
  return state;
}

NodeErrorState on_success(NodeErrorState state, Role role) {
  require_on_bus(state);
  int& counter = role == Role::Transmitter ? state.tec : state.rec;
  counter = std::max(0, counter - 1);
  return state;
}

NodeErrorState reset_node(NodeErrorState) { return NodeErrorState{}; }

std::optional<ErrorFlag> emit_error_flag(const NodeErrorState& state, ErrorKind trigger) {
  ErrorFlag flag;
  switch (state.mode()) {
    case ErrorMode::BusOff: return std::nullopt;
    case ErrorMode::ErrorActive: flag.style = ErrorFlag::Style::Active; break;
    case ErrorMode::ErrorPassive: flag.style = ErrorFlag::Style::Passive; break;
  }
  flag.delay_to_ack_delimiter = trigger == ErrorKind::CrcError;
  return flag;
}

}  // namespace cansim
