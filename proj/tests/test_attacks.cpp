#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "cansim/attacks.hpp"
#include "support/vehicle.hpp"

using namespace cansim;
using namespace cansim::testing;

namespace {

EcuSpec ecu(std::string name, bool compromised = false, bool critical = false) {
  return EcuSpec{std::move(name), compromised, critical, {}};
}

NodeHandle periodic(Bus& bus, const std::string& name, std::uint32_t id, Micros period, Micros phase = 0us) {
  const auto n = bus.attach(name);
  MessageSchedule s;
  s.entries.push_back(constant(id, period, phase));
  bus.add_agent(std::make_unique<EcuAgent>(n, EcuModel(ecu(name), s, nullptr, nullptr, id), bus.bitrate()));
  return n;
}

AttackSpec spoof_acc() {
  AttackSpec a;
  a.kind = AttackKind::Spoof;
  a.attacker = "TCM";
  a.target_id = FrameId::standard(0x224);
  a.payload = {0x13, 0x88, 0x00, 0x00};
  a.app_checksum = true;
  a.period = 10ms;
  return a;
}

std::size_t delivered_by(const std::vector<TraceRecord>& records, NodeHandle n, std::uint64_t from_us = 0,
                         std::uint64_t to_us = ~0ULL) {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const TraceRecord& r) {
    return r.kind == TraceKind::Delivered && r.node == n && r.timestamp_us >= from_us && r.timestamp_us < to_us;
  }));
}

}  // namespace

TEST_CASE("attackers must be compromised and not safety-critical") {
  const auto a = spoof_acc();
  CHECK_THROWS_AS(validate_attack(a, ecu("TCM")), std::invalid_argument);
  CHECK_THROWS_AS(validate_attack(a, ecu("ECM", true, true)), std::invalid_argument);
  CHECK_NOTHROW(validate_attack(a, ecu("TCM", true)));

  auto busoff = a;
  busoff.kind = AttackKind::BusOff;
  CHECK_THROWS_AS(validate_attack(busoff, ecu("TCM", true)), std::invalid_argument);
  busoff.victim = "TCM";
  CHECK_THROWS_AS(validate_attack(busoff, ecu("TCM", true)), std::invalid_argument);

  auto late = a;
  late.start = 2s;
  late.stop = 1s;
  CHECK_THROWS_AS(validate_attack(late, ecu("TCM", true)), std::invalid_argument);
  CHECK(attack_kind_from_string("dos_flood") == AttackKind::DosFlood);
  CHECK_FALSE(attack_kind_from_string("fuzz").has_value());
}

TEST_CASE("spoofed deceleration requests reach the bus at 100 Hz") {
  Bus bus;
  const auto accm = periodic(bus, "ACCM", 0x224, 20ms, 1ms);
  const auto tcm = bus.attach("TCM");
  auto& agent = static_cast<SpoofAgent&>(bus.add_agent(std::make_unique<SpoofAgent>(tcm, spoof_acc(), bus.bitrate())));
  const auto records = bus.step(bus.ticks_at(1'000'000));

  CHECK(agent.offered() == 100);
  CHECK(delivered_by(records, tcm) == 100);
  CHECK(spoof_success(records, {{FrameId::standard(0x224), accm}}) == 100);
  for (const auto& r : records) {
    if (r.kind == TraceKind::Delivered && r.node == tcm) {
      CHECK(r.origin == FrameOrigin::Attack);
      CHECK(r.frame->payload.back() == app_checksum(std::span(r.frame->payload).first(3)));
    }
  }
}

TEST_CASE("spoof at rate zero emits nothing") {
  Bus bus;
  periodic(bus, "ACCM", 0x224, 20ms);
  const auto tcm = bus.attach("TCM");
  auto spec = spoof_acc();
  spec.period = 0us;
  bus.add_agent(std::make_unique<SpoofAgent>(tcm, spec, bus.bitrate()));
  const auto records = bus.step(bus.ticks_at(500'000));
  CHECK(delivered_by(records, tcm) == 0);
  CHECK(bus.counters(tcm).offered == 0);
}

TEST_CASE("spoof window bounds the injections") {
  Bus bus;
  periodic(bus, "ACCM", 0x224, 20ms, 1ms);
  const auto tcm = bus.attach("TCM");
  auto spec = spoof_acc();
  spec.start = 100ms;
  spec.stop = 200ms;
  bus.add_agent(std::make_unique<SpoofAgent>(tcm, spec, bus.bitrate()));
  const auto records = bus.step(bus.ticks_at(500'000));
  CHECK(delivered_by(records, tcm) == 10);
  CHECK(delivered_by(records, tcm, 0, 100'000) == 0);
  CHECK(delivered_by(records, tcm, 201'000) == 0);
}

TEST_CASE("spoofing the attacker's own id is indistinguishable by id") {
  auto run = [](bool attack) {
    Bus bus;
    periodic(bus, "ECM", 0x1C4, 20ms);
    const auto tcm = periodic(bus, "TCM", 0x3A0, 10ms);
    if (attack) {
      auto spec = spoof_acc();
      spec.target_id = FrameId::standard(0x3A0);
      spec.app_checksum = false;
      spec.payload = {0xAB, 0xCD};
      spec.period = 10ms;
      spec.start = 5ms;
      bus.add_agent(std::make_unique<SpoofAgent>(tcm, spec, bus.bitrate()));
    }
    return std::pair{bus.step(bus.ticks_at(200'000)), tcm};
  };
  const auto [records, tcm] = run(true);
  CHECK(spoof_success(records, {{FrameId::standard(0x3A0), tcm}}) == 0);
  std::set<std::string> lines;
  for (const auto& r : records) {
    if (r.kind == TraceKind::Delivered && r.frame->id.value() == 0x3A0) {
      lines.insert(format_trace_line(r, {"ECM", "TCM"}).substr(20));
    }
  }
  CHECK(lines.size() == 1);
}

TEST_CASE("saturation flood starves every other node") {
  Bus bus;
  const auto ebcm = periodic(bus, "EBCM", 0x0B4, 20ms, 1ms);
  const auto ecm = periodic(bus, "ECM", 0x1C4, 10ms, 2ms);
  const auto tcm = bus.attach("TCM");
  AttackSpec flood;
  flood.kind = AttackKind::DosFlood;
  flood.target_id = FrameId::standard(0);
  flood.payload = std::vector<std::uint8_t>(8, 0xFF);
  flood.period = 0us;
  flood.start = 200ms;
  flood.stop = 1200ms;
  bus.add_agent(std::make_unique<DosFloodAgent>(tcm, flood, bus.bitrate()));
  const auto records = bus.step(bus.ticks_at(1'500'000));

  // A frame already on the wire at the start finishes within one frame time.
  const std::uint64_t settled = 200'000 + 300;
  CHECK(delivered_by(records, ebcm, settled, 1'200'000) == 0);
  CHECK(delivered_by(records, ecm, settled, 1'200'000) == 0);
  CHECK(delivered_by(records, tcm, settled, 1'200'000) > 3000);
  CHECK(delivered_by(records, ebcm, 0, 200'000) == 10);
  CHECK(delivered_by(records, ecm, 1'200'000) > 0);
  for (auto n : {ebcm, ecm, tcm}) {
    const auto c = bus.counters(n);
    CHECK(c.offered == c.delivered + c.blocked + c.queued + c.abandoned);
  }
}

TEST_CASE("flood at 10% duty delays but delivers") {
  Bus bus;
  const auto ecm = periodic(bus, "ECM", 0x1C4, 10ms, 2ms);
  const auto tcm = bus.attach("TCM");
  AttackSpec flood;
  flood.kind = AttackKind::DosFlood;
  flood.payload = std::vector<std::uint8_t>(8, 0xFF);
  const auto frame_us = bus.micros(encode_frame(DataFrame::data(FrameId::standard(0), flood.payload)).size());
  flood.period = Micros(static_cast<Micros::rep>(frame_us * 10));
  bus.add_agent(std::make_unique<DosFloodAgent>(tcm, flood, bus.bitrate()));
  const auto records = bus.step(bus.ticks_at(1'000'000));

  CHECK(delivered_by(records, ecm) == 100);
  std::uint64_t max_latency = 0;
  for (const auto& r : records) {
    if (r.kind == TraceKind::Delivered && r.node == ecm) max_latency = std::max(max_latency, r.latency_us);
  }
  CHECK(max_latency > 0);
  CHECK(max_latency <= frame_us + bus.micros(3));
}

TEST_CASE("flood from a bus-off attacker has no effect") {
  Bus bus;
  const auto tcm = bus.attach("TCM");
  bus.offer(tcm, DataFrame::data(FrameId::standard(0x3A0), {1}));
  // Alone on the bus every attempt fails its ACK.
  bus.step(bus.ticks_at(100'000));
  REQUIRE(bus.error_state(tcm).mode() == ErrorMode::BusOff);

  const auto ecm = periodic(bus, "ECM", 0x1C4, 10ms, 102ms);
  bus.attach("EBCM");
  AttackSpec flood;
  flood.kind = AttackKind::DosFlood;
  flood.period = 0us;
  auto& agent =
      static_cast<DosFloodAgent&>(bus.add_agent(std::make_unique<DosFloodAgent>(tcm, flood, bus.bitrate())));
  const auto records = bus.step(bus.ticks_at(1'100'000));
  CHECK(agent.offered() == 0);
  CHECK(delivered_by(records, tcm) == 0);
  CHECK(delivered_by(records, ecm) == 100);
}

TEST_CASE("strike lands on the first recessive data bit") {
  const auto s = encode_frame(DataFrame::data(FrameId::standard(0x1C4), {0x00, 0x40}));
  const auto pos = busoff_strike_position(s).value();
  CHECK(s.wire_fields[pos] == Field::Data);
  CHECK(s.bits[pos] == Level::Recessive);
  CHECK_FALSE(s.stuff[pos]);
  for (std::size_t i = 0; i < pos; ++i) {
    CHECK_FALSE((s.wire_fields[i] == Field::Data && !s.stuff[i] && s.bits[i] == Level::Recessive));
  }

  // No data field: falls back to the CRC.
  const auto empty = encode_frame(DataFrame::data(FrameId::standard(0x1C4), {}));
  CHECK(empty.wire_fields[busoff_strike_position(empty).value()] == Field::Crc);
}

TEST_CASE("bus-off attack silences the victim after 32 induced errors") {
  Bus bus;
  const auto ecm = periodic(bus, "ECM", 0x1C4, 10ms, 1ms);
  periodic(bus, "EBCM", 0x0B4, 20ms, 3ms);
  const auto tcm = bus.attach("TCM");
  AttackSpec spec;
  spec.kind = AttackKind::BusOff;
  spec.victim = "ECM";
  spec.victim_id = FrameId::standard(0x1C4);
  spec.start = 100ms;
  auto& agent =
      static_cast<BusOffAgent&>(bus.add_agent(std::make_unique<BusOffAgent>(tcm, ecm, spec)));
  const auto records = bus.step(bus.ticks_at(1'000'000));

  CHECK(agent.induced_errors() == 32);
  CHECK(bus.error_state(ecm).mode() == ErrorMode::BusOff);

  std::vector<std::uint32_t> tec;
  std::uint64_t last_error_us = 0;
  for (const auto& r : records) {
    if (r.kind == TraceKind::ErrorFrame && r.node == ecm) {
      tec.push_back(r.error_state.tec);
      last_error_us = r.timestamp_us;
    }
  }
  REQUIRE(tec.size() == 32);
  for (std::size_t i = 0; i < tec.size(); ++i) CHECK(tec[i] == 8 * (i + 1));
  CHECK(delivered_by(records, ecm, 0, 100'000) == 10);
  CHECK(delivered_by(records, ecm, 100'000) == 0);
  CHECK(delivered_by(records, ecm, last_error_us) == 0);
  CHECK(bus.error_state(tcm).tec == 0);
  const auto c = bus.counters(ecm);
  CHECK(c.offered == c.delivered + c.blocked + c.queued + c.abandoned);
}

TEST_CASE("victim recovers one count per success once the attack stops") {
  Bus bus;
  const auto ecm = periodic(bus, "ECM", 0x1C4, 10ms, 1ms);
  periodic(bus, "EBCM", 0x0B4, 20ms, 3ms);
  const auto tcm = bus.attach("TCM");
  AttackSpec spec;
  spec.kind = AttackKind::BusOff;
  spec.victim = "ECM";
  spec.max_errors = 16;
  auto& agent = static_cast<BusOffAgent&>(bus.add_agent(std::make_unique<BusOffAgent>(tcm, ecm, spec)));

  std::uint64_t successes = 0;
  for (int ms = 10; ms <= 500; ms += 10) {
    const auto records = bus.step(bus.ticks_at(static_cast<std::uint64_t>(ms) * 1000));
    if (agent.induced_errors() == 16) successes += delivered_by(records, ecm);
  }
  const auto& traj = bus.trajectory(ecm);
  const bool passive_seen = std::any_of(traj.begin(), traj.end(), [](const StateSample& s) {
    return s.state.mode() == ErrorMode::ErrorPassive;
  });
  CHECK(agent.induced_errors() == 16);
  CHECK(passive_seen);
  CHECK(successes >= 49);
  CHECK(bus.error_state(ecm).tec == 128 - successes);
  CHECK(bus.error_state(ecm).mode() == ErrorMode::ErrorActive);
}

TEST_CASE("bus-off attack idles when the victim frame is absent") {
  Bus bus;
  const auto ecm = periodic(bus, "ECM", 0x1C4, 10ms);
  periodic(bus, "EBCM", 0x0B4, 20ms, 3ms);
  const auto tcm = bus.attach("TCM");
  AttackSpec spec;
  spec.kind = AttackKind::BusOff;
  spec.victim = "ECM";
  spec.victim_id = FrameId::standard(0x1C5);
  auto& agent = static_cast<BusOffAgent&>(bus.add_agent(std::make_unique<BusOffAgent>(tcm, ecm, spec)));
  const auto records = bus.step(bus.ticks_at(200'000));
  CHECK(agent.induced_errors() == 0);
  CHECK(bus.error_state(ecm).tec == 0);
  CHECK(delivered_by(records, ecm) == 20);
}

TEST_CASE("bus-off strike lost to arbitration is dropped") {
  Bus bus;
  const auto ecm = bus.attach("ECM");
  const auto ebcm = bus.attach("EBCM");
  const auto tcm = bus.attach("TCM");
  AttackSpec spec;
  spec.kind = AttackKind::BusOff;
  spec.victim = "ECM";
  spec.max_errors = 1;
  auto& agent = static_cast<BusOffAgent&>(bus.add_agent(std::make_unique<BusOffAgent>(tcm, ecm, spec)));
  bus.offer(ecm, DataFrame::data(FrameId::standard(0x1C4), {0x55}));
  bus.offer(ebcm, DataFrame::data(FrameId::standard(0x0B4), {0x55}));
  bus.step(bus.ticks_at(2'000));
  CHECK(agent.sync_losses() == 1);
  CHECK(agent.induced_errors() == 1);
  CHECK(bus.error_state(ebcm).tec == 0);
  CHECK(bus.counters(ebcm).delivered == 1);
}

TEST_CASE("display spoof with the honest reading changes nothing") {
  auto run = [](std::optional<double> offset) {
    Loop loop(true, {1.0, 4.0, 70.0, 80.0});
    if (offset) {
      AttackSpec spec;
      spec.kind = AttackKind::DisplaySpoof;
      spec.attacker = "CMA";
      spec.offset = *offset;
      install_display_spoof(loop.cma_agent->model(), spec, dictionary());
    }
    return format_trace(loop.run(10s), loop.bus.names());
  };
  CHECK(run(std::nullopt) == run(0.0));
}

TEST_CASE("display spoof 20 under pushes the real speed past target") {
  Loop loop(true);
  AttackSpec spec;
  spec.kind = AttackKind::DisplaySpoof;
  spec.attacker = "CMA";
  spec.offset = -20;
  spec.start = 1s;
  install_display_spoof(loop.cma_agent->model(), spec, dictionary());
  loop.run(1s);
  CHECK(loop.plant.speed(1s) == doctest::Approx(80.0));
  loop.run(30s);
  CHECK(loop.plant.speed(30s) > 85.0);
}

TEST_CASE("display spoof without a driver leaves the throttle alone") {
  auto run = [](bool attack) {
    Loop loop(false);
    if (attack) {
      AttackSpec spec;
      spec.kind = AttackKind::DisplaySpoof;
      spec.false_value = 40;
      install_display_spoof(loop.cma_agent->model(), spec, dictionary());
    }
    const auto records = loop.run(10s);
    std::vector<DataFrame> pedal;
    for (const auto& r : records) {
      if (r.kind == TraceKind::Delivered && r.frame->id.value() == 0x0A0) pedal.push_back(*r.frame);
    }
    return std::pair{pedal, loop.plant.speed(10s)};
  };
  const auto [clean_pedal, clean_speed] = run(false);
  const auto [attacked_pedal, attacked_speed] = run(true);
  CHECK(clean_pedal == attacked_pedal);
  CHECK(clean_speed == attacked_speed);
}

TEST_CASE("display spoof keeps per-id frame counts") {
  auto counts = [](bool attack) {
    Loop loop(true);
    if (attack) {
      AttackSpec spec;
      spec.kind = AttackKind::DisplaySpoof;
      spec.offset = -20;
      install_display_spoof(loop.cma_agent->model(), spec, dictionary());
    }
    std::map<std::uint32_t, int> n;
    for (const auto& r : loop.run(5s)) {
      if (r.kind == TraceKind::Delivered) ++n[r.frame->id.value()];
    }
    return n;
  };
  CHECK(counts(false) == counts(true));
}
