#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cansim/bus.hpp"
#include "cansim/datasets.hpp"
#include "cansim/frame.hpp"
#include "cansim/icewall.hpp"

namespace cansim {

struct VehiclePlantConfig {
  double gain_kmh_per_pct = 1.0;
  double time_constant_s = 4.0;
  double initial_speed_kmh = 80.0;
  double initial_pedal_pct = 80.0;
  double idle_rpm = 800.0;
  double rpm_per_kmh = 30.0;
};

/// First-order lag from pedal position to vehicle speed, solved in closed form
/// between pedal changes: v' = (gain * pedal - v) / tau.
class VehiclePlant {
 public:
  explicit VehiclePlant(VehiclePlantConfig config = {});

  void set_pedal(double pct, Micros now);
  double speed(Micros now) const;
  double pedal() const { return pedal_; }

  /// "vehicle_speed" (km/h), "engine_speed" (rpm) or "throttle_position" (%).
  double signal(std::string_view name, Micros now) const;
  static bool known_signal(std::string_view name);

 private:
  VehiclePlantConfig config_;
  Micros t0_{0};
  double v0_;
  double pedal_;
};

enum class GeneratorKind : std::uint8_t { Constant, Counter, Ramp, Noise, Signal, Relay };

const char* to_string(GeneratorKind k);

struct PayloadGenerator {
  GeneratorKind kind = GeneratorKind::Constant;
  /// Payload template; generated values are written over it.
  std::vector<std::uint8_t> bytes;
  /// Target signal field; empty selects the message's first field.
  std::string field;
  double start = 0.0;
  double step = 0.0;
  double center = 0.0;
  double amplitude = 0.0;
  std::string signal;
  std::string relay_from;
};

struct ScheduleEntry {
  FrameId id;
  /// Signal-dictionary message name; empty for raw ids.
  std::string message;
  std::uint8_t dlc = 8;
  Micros period{100'000};
  Micros phase{0};
  /// Each emission is delayed by a uniform draw from [0, jitter].
  Micros jitter{0};
  PayloadGenerator generator;
  bool app_checksum = false;
};

struct MessageSchedule {
  std::vector<ScheduleEntry> entries;

  /// Throws std::invalid_argument for non-positive periods or duplicate ids.
  void validate() const;
};

struct Consumption {
  std::string message;
  std::string source;
  /// The consumed value sets the vehicle plant's pedal position.
  bool actuates_pedal = false;
};

struct EcuSpec {
  std::string name;
  bool compromised = false;
  bool safety_critical = false;
  std::vector<Consumption> consumes;
};

struct EmittedFrame {
  DataFrame frame;
  /// Id of the received message whose content this frame carries.
  std::optional<FrameId> cause;
  /// The tamper hook changed the frame; offered with FrameOrigin::Attack.
  bool tampered = false;
};

/// Periodic producer/consumer. Deterministic given its seed.
class EcuModel {
 public:
  /// Rewrites a generated frame just before it is offered.
  using Tamper = std::function<void(DataFrame&, const ScheduleEntry&, Micros now)>;

  EcuModel(EcuSpec spec, MessageSchedule schedule, const SignalDictionary* dictionary, VehiclePlant* plant,
           std::uint64_t seed);

  /// Frames whose emission time is at or before `now`, lowest id first.
  std::vector<EmittedFrame> tick(Micros now);
  Micros next_due() const;
  /// Records a frame another node delivered.
  void consume(const DataFrame& frame, Micros now);

  void set_tamper(Tamper tamper) { tamper_ = std::move(tamper); }
  void clear_tamper() { tamper_ = nullptr; }

  const EcuSpec& spec() const { return spec_; }
  const MessageSchedule& schedule() const { return schedule_; }
  std::optional<double> last_value(const std::string& message) const;

 private:
  struct EntryState {
    Micros nominal{0};
    Micros emit_at{0};
    std::uint64_t count = 0;
  };

  std::optional<EmittedFrame> generate(std::size_t index, Micros now);
  const SignalField* target_field(const ScheduleEntry& e, const PayloadGenerator& g) const;
  Micros draw_jitter(const ScheduleEntry& e);

  EcuSpec spec_;
  MessageSchedule schedule_;
  const SignalDictionary* dictionary_;
  VehiclePlant* plant_;
  std::mt19937_64 rng_;
  std::vector<EntryState> state_;
  std::map<std::string, double> consumed_;
  Tamper tamper_;
};

struct DriverModel {
  Micros reaction_delay{300'000};
  double target_speed = 80.0;
  double gain = 0.5;
  double cruise_pedal = 80.0;
  double pedal_min = 0.0;
  double pedal_max = 100.0;
  Micros period{50'000};
  std::string display_message = "display_speed";
  std::string pedal_message = "accel_pedal";

  /// Throws std::invalid_argument on negative delay or gain, or pedal_min > pedal_max.
  void validate() const;
};

/// Human driver as a virtual node: reads the speed display and presses the pedal.
class Driver {
 public:
  Driver(DriverModel model, const SignalDictionary& dictionary);

  /// A display frame reaches the driver's eyes; it is acted on after the reaction delay.
  void observe(const DataFrame& display, Micros now);
  /// Pedal command frame if one is due.
  std::vector<EmittedFrame> tick(Micros now);
  Micros next_due() const { return next_; }
  std::optional<double> perceived() const { return perceived_; }
  const DriverModel& model() const { return model_; }

 private:
  DriverModel model_;
  const MessageDef* display_;
  const MessageDef* pedal_;
  std::deque<std::pair<Micros, double>> pending_;
  std::optional<double> perceived_;
  Micros next_{0};
};

/// Attaches an EcuModel to a bus node.
class EcuAgent : public Agent {
 public:
  EcuAgent(NodeHandle node, EcuModel model, std::uint32_t bitrate);

  std::uint64_t next_wakeup() const override;
  void on_tick(Bus& bus) override;
  void on_delivered(Bus& bus, const DataFrame& frame, NodeHandle transmitter) override;

  NodeHandle node() const { return node_; }
  EcuModel& model() { return model_; }

 private:
  NodeHandle node_;
  EcuModel model_;
  std::uint32_t bitrate_;
};

class DriverAgent : public Agent {
 public:
  DriverAgent(NodeHandle node, Driver driver, FrameId display_id, std::uint32_t bitrate);

  std::uint64_t next_wakeup() const override;
  void on_tick(Bus& bus) override;
  void on_delivered(Bus& bus, const DataFrame& frame, NodeHandle transmitter) override;

  const Driver& driver() const { return driver_; }

 private:
  NodeHandle node_;
  Driver driver_;
  FrameId display_id_;
  std::uint32_t bitrate_;
};

}  // namespace cansim
