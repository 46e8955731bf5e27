#include "cansim/runner.hpp"

#include <algorithm>
#include <memory>

#include "cansim/attacks.hpp"

namespace cansim {

namespace {

constexpr Micros kSampleStep{100'000};

struct AttackHandle {
  const AttackSpec* spec = nullptr;
  NodeHandle attacker{};
  const SpoofAgent* spoof = nullptr;
  const DosFloodAgent* flood = nullptr;
  const BusOffAgent* busoff = nullptr;
  std::optional<FrameId> id;
};

std::map<FrameId, NodeHandle> owners_of(const Scenario& s, const Bus& bus) {
  std::map<FrameId, NodeHandle> owners;
  for (const auto& n : s.nodes) {
    const auto h = *bus.find(n.spec.name);
    for (const auto& e : n.schedule.entries) owners.emplace(e.id, h);
    if (n.driver) owners.emplace(s.signals.by_name(n.driver->pedal_message)->id, h);
  }
  return owners;
}

void run_detectors(const Scenario& s, const std::vector<TraceRecord>& trace, MetricsReport& report) {
  const auto& d = *s.detectors;
  const auto end = static_cast<std::uint64_t>(s.duration.count());
  const auto train_end = static_cast<std::uint64_t>(d.train.count());
  const auto obs = observations(trace);
  if (d.frequency) {
    const auto baseline = freq_train(obs, {0, train_end}, *d.frequency);
    const auto alerts = freq_detect(obs, {train_end, end}, baseline);
    report.alerts.insert(report.alerts.end(), alerts.begin(), alerts.end());
  }
  if (d.transition) {
    const auto matrix = tm_train(within(obs, {0, train_end}));
    const auto alerts = tm_detect(within(obs, {train_end, end}), matrix);
    report.alerts.insert(report.alerts.end(), alerts.begin(), alerts.end());
  }
  std::stable_sort(report.alerts.begin(), report.alerts.end(),
                   [](const Alert& a, const Alert& b) { return a.timestamp_us < b.timestamp_us; });
}

AttackMetrics attack_metrics(const AttackHandle& h, const std::vector<TraceRecord>& trace) {
  AttackMetrics m{to_string(h.spec->kind), h.spec->attacker, 0, 0, 0};
  for (const auto& r : trace) {
    if (r.origin != FrameOrigin::Attack || r.node != h.attacker || !r.frame) continue;
    if (h.id && r.frame->id != *h.id) continue;
    if (r.kind == TraceKind::Delivered) ++m.delivered;
    if (r.kind == TraceKind::IcewallBlocked) ++m.blocked;
  }
  if (h.spoof) {
    m.injected = h.spoof->offered();
  } else if (h.flood) {
    m.injected = h.flood->offered();
  } else if (h.busoff) {
    m.injected = h.busoff->induced_errors();
  } else {
    m.injected = m.delivered + m.blocked;
  }
  return m;
}

}  // namespace

RunResult run_scenario(const Scenario& s) {
  Bus bus(s.bus);
  VehiclePlant plant(s.plant);
  VehiclePlant* plant_ptr = s.uses_plant() ? &plant : nullptr;

  std::vector<NodeHandle> handles;
  for (const auto& n : s.nodes) handles.push_back(bus.attach(n.spec.name));
  for (const auto& w : s.icewalls) {
    bus.set_icewall(*bus.find(w.node),
                    w.rules ? Icewall::manual(*w.rules) : Icewall::learning(w.learning, w.budget));
  }

  std::map<std::string, EcuAgent*> ecus;
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    const auto& n = s.nodes[i];
    const auto seed = node_seed(s.seed, n.spec.name);
    if (n.driver) {
      bus.add_agent(std::make_unique<DriverAgent>(handles[i], Driver(*n.driver, s.signals),
                                                  s.signals.by_name(n.driver->display_message)->id, bus.bitrate()));
    } else {
      auto& a = bus.add_agent(std::make_unique<EcuAgent>(
          handles[i], EcuModel(n.spec, n.schedule, &s.signals, plant_ptr, seed), bus.bitrate()));
      ecus[n.spec.name] = static_cast<EcuAgent*>(&a);
    }
  }

  std::vector<AttackHandle> attacks;
  for (const auto& spec : s.attacks) {
    AttackHandle h;
    h.spec = &spec;
    h.attacker = *bus.find(spec.attacker);
    switch (spec.kind) {
      case AttackKind::Spoof:
        h.spoof = &static_cast<SpoofAgent&>(bus.add_agent(std::make_unique<SpoofAgent>(h.attacker, spec, bus.bitrate())));
        h.id = spec.target_id;
        break;
      case AttackKind::DosFlood:
        h.flood =
            &static_cast<DosFloodAgent&>(bus.add_agent(std::make_unique<DosFloodAgent>(h.attacker, spec, bus.bitrate())));
        h.id = spec.target_id;
        break;
      case AttackKind::BusOff:
        h.busoff = &static_cast<BusOffAgent&>(
            bus.add_agent(std::make_unique<BusOffAgent>(h.attacker, *bus.find(spec.victim), spec)));
        break;
      case AttackKind::DisplaySpoof:
        install_display_spoof(ecus.at(spec.attacker)->model(), spec, s.signals);
        h.id = s.signals.by_name(spec.message)->id;
        break;
    }
    attacks.push_back(h);
  }

  RunResult out;
  auto& report = out.metrics;
  report.name = s.name;
  report.family = s.family;
  report.seed = s.seed;
  report.duration_us = static_cast<std::uint64_t>(s.duration.count());

  std::optional<VehicleMetrics> vehicle;
  auto sample = [&](Micros t) {
    if (!plant_ptr) return;
    const double v = plant.speed(t);
    if (!vehicle) vehicle = VehicleMetrics{v, v, v};
    vehicle->final_speed_kmh = v;
    vehicle->min_speed_kmh = std::min(vehicle->min_speed_kmh, v);
    vehicle->max_speed_kmh = std::max(vehicle->max_speed_kmh, v);
  };

  sample(Micros{0});
  for (Micros t{0}; t < s.duration;) {
    t = std::min(t + kSampleStep, s.duration);
    auto chunk = bus.step(bus.ticks_at(static_cast<std::uint64_t>(t.count())));
    std::move(chunk.begin(), chunk.end(), std::back_inserter(out.trace));
    sample(t);
  }
  report.vehicle = vehicle;
  out.names = bus.names();

  collect_bus_metrics(report, bus, out.trace, owners_of(s, bus));
  for (const auto& h : attacks) report.attacks.push_back(attack_metrics(h, out.trace));
  for (const auto& w : s.icewalls) {
    const auto node = *bus.find(w.node);
    const auto* wall = bus.icewall(node);
    const auto& ids = wall->rules().allowed_ids;
    report.icewalls.push_back(
        {w.node, to_string(wall->mode()), {ids.begin(), ids.end()}, bus.counters(node).blocked});
  }

  if (s.detectors) {
    run_detectors(s, out.trace, report);
    std::vector<TraceRecord> alerts;
    for (const auto& a : report.alerts) alerts.push_back(alert_record(a, bus.bitrate()));
    std::vector<TraceRecord> merged;
    merged.reserve(out.trace.size() + alerts.size());
    std::merge(out.trace.begin(), out.trace.end(), alerts.begin(), alerts.end(), std::back_inserter(merged),
               [](const TraceRecord& a, const TraceRecord& b) { return a.timestamp_us < b.timestamp_us; });
    out.trace = std::move(merged);
  }
  for (std::size_t i = 0; i < out.trace.size(); ++i) out.trace[i].seq = i;
  return out;
}

}  // namespace cansim
