#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cansim/bus.hpp"
#include "cansim/ecu.hpp"

namespace cansim {

enum class AttackKind : std::uint8_t { Spoof, DosFlood, BusOff, DisplaySpoof };

const char* to_string(AttackKind k);
std::optional<AttackKind> attack_kind_from_string(std::string_view s);

struct AttackSpec {
  AttackKind kind = AttackKind::Spoof;
  std::string attacker;
  Micros start{0};
  /// Exclusive end of the active window; open-ended when absent.
  std::optional<Micros> stop;

  /// Spoof: the foreign id to mimic. DosFlood: the flood id.
  FrameId target_id = FrameId::standard(0);
  std::vector<std::uint8_t> payload;
  /// Overwrite the last payload byte with the application checksum.
  bool app_checksum = false;
  /// Spoof: zero disables the attack. DosFlood: zero floods at saturation.
  Micros period{10'000};

  /// BusOff: victim node and, optionally, the only victim id to attack.
  std::string victim;
  std::optional<FrameId> victim_id;
  std::optional<std::uint32_t> max_errors;

  /// DisplaySpoof: the message rewritten and either an absolute reading or an
  /// offset added to the honest one.
  std::string message = "display_speed";
  std::optional<double> false_value;
  double offset = 0.0;

  bool active(Micros now) const { return now >= start && (!stop || now < *stop); }
};

/// Throws std::invalid_argument unless the attacker is compromised and not
/// safety-critical, and the kind-specific parameters are usable.
void validate_attack(const AttackSpec& spec, const EcuSpec& attacker);

/// Periodic injection of frames bearing a foreign id.
class SpoofAgent : public Agent {
 public:
  SpoofAgent(NodeHandle attacker, AttackSpec spec, std::uint32_t bitrate);

  std::uint64_t next_wakeup() const override;
  void on_tick(Bus& bus) override;

  /// Offers the bus accepted or an icewall refused.
  std::uint64_t offered() const { return offered_; }

 private:
  NodeHandle node_;
  AttackSpec spec_;
  DataFrame frame_;
  std::uint32_t bitrate_;
  Micros next_;
  std::uint64_t offered_ = 0;
};

/// High-priority flood. At saturation a new frame is offered as soon as the
/// previous flood frame is delivered; a blocked offer waits one frame time.
class DosFloodAgent : public Agent {
 public:
  DosFloodAgent(NodeHandle attacker, AttackSpec spec, std::uint32_t bitrate);

  std::uint64_t next_wakeup() const override { return next_tick_; }
  void on_tick(Bus& bus) override;
  void on_delivered(Bus& bus, const DataFrame& frame, NodeHandle transmitter) override;

  /// Offers the bus accepted or an icewall refused.
  std::uint64_t offered() const { return offered_; }

 private:
  NodeHandle node_;
  AttackSpec spec_;
  DataFrame frame_;
  std::uint32_t bitrate_;
  std::uint64_t frame_ticks_;
  std::uint64_t next_tick_;
  std::uint64_t offered_ = 0;
  bool pending_ = false;
};

/// Error-handling attack: overwrites one recessive bit of each victim
/// transmission with a dominant one so the victim sees a bit error.
class BusOffAgent : public Agent {
 public:
  BusOffAgent(NodeHandle attacker, NodeHandle victim, AttackSpec spec);

  std::uint64_t next_wakeup() const override;
  void on_tick(Bus& bus) override;
  void on_transmit_start(Bus& bus, NodeHandle transmitter) override;

  std::uint32_t induced_errors() const { return induced_; }
  /// Planned strikes abandoned because the victim frame was gone.
  std::uint32_t sync_losses() const { return sync_losses_; }

 private:
  struct Strike {
    std::uint64_t sof_tick;
    std::uint64_t attempt;
    std::size_t position;
  };

  NodeHandle node_;
  NodeHandle victim_;
  AttackSpec spec_;
  std::optional<Strike> strike_;
  std::uint32_t induced_ = 0;
  std::uint32_t sync_losses_ = 0;
};

/// Wire position of the bit the bus-off attack overwrites: the first
/// recessive non-stuff Data bit, else the same in the CRC, else in the DLC.
std::optional<std::size_t> busoff_strike_position(const BitStream& stream);

/// Rewrites the compromised display ECU's own frames with a false reading.
/// Frames are emitted in place of the honest ones, on the same schedule.
void install_display_spoof(EcuModel& display_ecu, const AttackSpec& spec, const SignalDictionary& dictionary);

/// Delivered frames whose id is owned by a node other than the transmitter.
/// `owners` maps each legitimate id to its producing node.
std::uint64_t spoof_success(const std::vector<TraceRecord>& records, const std::map<FrameId, NodeHandle>& owners);

}  // namespace cansim
