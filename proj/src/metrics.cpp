#include "cansim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cansim/attacks.hpp"
#include "json_util.hpp"

namespace cansim {

using namespace detail;
using ojson = nlohmann::ordered_json;

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string lpad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

std::uint64_t total_blocked(const MetricsReport& r) {
  std::uint64_t n = 0;
  for (const auto& [_, count] : r.block_reasons) n += count;
  return n;
}

}  // namespace

const NodeMetrics* MetricsReport::node(std::string_view n) const {
  auto it = std::find_if(nodes.begin(), nodes.end(), [&](const NodeMetrics& m) { return m.name == n; });
  return it == nodes.end() ? nullptr : &*it;
}

const LatencyStats* MetricsReport::latency_of(FrameId id) const {
  auto it = std::find_if(latency.begin(), latency.end(), [&](const LatencyStats& l) { return l.id == id; });
  return it == latency.end() ? nullptr : &*it;
}

std::uint64_t percentile(std::vector<std::uint64_t> samples, double p) {
  if (samples.empty()) return 0;
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(samples.size())));
  return samples[std::clamp<std::size_t>(rank, 1, samples.size()) - 1];
}

void collect_bus_metrics(MetricsReport& report, const Bus& bus, const std::vector<TraceRecord>& trace,
                         const std::map<FrameId, NodeHandle>& owners) {
  report.bitrate = bus.bitrate();
  std::vector<std::uint64_t> delivered(bus.node_count(), 0), blocked(bus.node_count(), 0),
      errors(bus.node_count(), 0);
  std::map<FrameId, std::vector<std::uint64_t>> latencies;

  for (const auto& r : trace) {
    switch (r.kind) {
      case TraceKind::Delivered:
        ++delivered.at(r.node->index);
        latencies[r.frame->id].push_back(r.latency_us);
        break;
      case TraceKind::IcewallBlocked:
        ++report.block_reasons[to_string(r.block_reason)];
        if (r.block_reason == BlockReason::ErrorFloodSuppressed) break;
        ++blocked.at(r.node->index);
        if (r.origin == FrameOrigin::Ecu) {
          ++report.false_blocks;
        } else {
          ++report.attack_frames_blocked;
        }
        break;
      case TraceKind::ErrorFrame:
        ++errors.at(r.node->index);
        break;
      default:
        break;
    }
  }
  report.spoof_success = spoof_success(trace, owners);

  for (std::uint32_t i = 0; i < bus.node_count(); ++i) {
    const NodeHandle h{i};
    const auto c = bus.counters(h);
    const auto& err = bus.error_state(h);
    const auto& name = bus.name(h);
    if (c.offered != c.delivered + c.blocked + c.queued + c.abandoned) {
      throw InvariantViolation("frame conservation broken for " + name);
    }
    if (c.delivered != delivered[i] || c.blocked != blocked[i]) {
      throw InvariantViolation("counters of " + name + " disagree with the trace");
    }
    report.nodes.push_back({name, c, errors[i], static_cast<std::uint32_t>(err.tec), static_cast<std::uint32_t>(err.rec),
                            to_string(err.mode())});

    const auto& samples = bus.trajectory(h);
    const bool moved = std::any_of(samples.begin(), samples.end(),
                                   [](const StateSample& s) { return s.state.tec > 0 || s.state.rec > 0; });
    if (moved) {
      auto& out = report.trajectories[name];
      for (const auto& s : samples) {
        out.push_back({bus.micros(s.tick), static_cast<std::uint32_t>(s.state.tec),
                       static_cast<std::uint32_t>(s.state.rec), to_string(s.state.mode())});
      }
    }
  }

  for (auto& [id, v] : latencies) {
    const auto max = *std::max_element(v.begin(), v.end());
    report.latency.push_back({id, v.size(), percentile(v, 50), percentile(v, 99), max});
  }
}

std::string to_jsonl(const MetricsReport& r) {
  std::ostringstream out;
  auto line = [&](const ojson& j) { out << j.dump() << '\n'; };

  line({{"record", "run"}, {"schema", r.schema}, {"name", r.name}, {"family", r.family}, {"seed", r.seed},
        {"duration_us", r.duration_us}, {"bitrate", r.bitrate}});
  line({{"record", "summary"}, {"spoof_success", r.spoof_success}, {"false_blocks", r.false_blocks},
        {"attack_frames_blocked", r.attack_frames_blocked}, {"alerts", r.alerts.size()}});
  for (const auto& n : r.nodes) {
    line({{"record", "node"},
          {"name", n.name},
          {"offered", n.counters.offered},
          {"delivered", n.counters.delivered},
          {"blocked", n.counters.blocked},
          {"queued", n.counters.queued},
          {"abandoned", n.counters.abandoned},
          {"received", n.counters.received},
          {"attempts", n.counters.attempts},
          {"errors", n.errors},
          {"tec", n.tec},
          {"rec", n.rec},
          {"state", n.state}});
  }
  for (const auto& l : r.latency) {
    line({{"record", "latency"}, {"id", l.id.to_string()}, {"count", l.count}, {"p50_us", l.p50_us},
          {"p99_us", l.p99_us}, {"max_us", l.max_us}});
  }
  for (const auto& [node, points] : r.trajectories) {
    ojson samples = ojson::array();
    for (const auto& p : points) samples.push_back({p.t_us, p.tec, p.rec, p.state});
    line({{"record", "trajectory"}, {"node", node}, {"samples", samples}});
  }
  for (const auto& a : r.alerts) {
    line({{"record", "alert"}, {"t_us", a.timestamp_us}, {"detector", a.detector}, {"detail", a.detail}});
  }
  ojson reasons = ojson::object();
  for (const auto& [k, v] : r.block_reasons) reasons[k] = v;
  line({{"record", "blocks"}, {"reasons", reasons}});
  for (const auto& a : r.attacks) {
    line({{"record", "attack"}, {"kind", a.kind}, {"attacker", a.attacker}, {"injected", a.injected},
          {"delivered", a.delivered}, {"blocked", a.blocked}});
  }
  for (const auto& w : r.icewalls) {
    ojson ids = ojson::array();
    for (const auto& id : w.allowed_ids) ids.push_back(id.to_string());
    line({{"record", "icewall"}, {"node", w.node}, {"mode", w.mode}, {"allowed_ids", ids}, {"blocked", w.blocked}});
  }
  if (r.vehicle) {
    line({{"record", "vehicle"}, {"final_speed_kmh", r.vehicle->final_speed_kmh},
          {"min_speed_kmh", r.vehicle->min_speed_kmh}, {"max_speed_kmh", r.vehicle->max_speed_kmh}});
  }
  return out.str();
}

MetricsReport from_jsonl(std::string_view text, const std::string& origin) {
  MetricsReport r;
  r.schema.clear();
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (raw.empty()) continue;
    const auto where = origin + ":" + std::to_string(lineno);
    const auto j = parse_json(raw, where);
    const auto kind = get<std::string>(j, "record", where);
    try {
      if (kind == "run") {
        r.schema = j.at("schema").get<std::string>();
        r.name = j.at("name").get<std::string>();
        r.family = j.at("family").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.duration_us = j.at("duration_us").get<std::uint64_t>();
        r.bitrate = j.at("bitrate").get<std::uint32_t>();
      } else if (kind == "summary") {
        r.spoof_success = j.at("spoof_success").get<std::uint64_t>();
        r.false_blocks = j.at("false_blocks").get<std::uint64_t>();
        r.attack_frames_blocked = j.at("attack_frames_blocked").get<std::uint64_t>();
      } else if (kind == "node") {
        NodeMetrics n;
        n.name = j.at("name").get<std::string>();
        n.counters.offered = j.at("offered").get<std::uint64_t>();
        n.counters.delivered = j.at("delivered").get<std::uint64_t>();
        n.counters.blocked = j.at("blocked").get<std::uint64_t>();
        n.counters.queued = j.at("queued").get<std::uint64_t>();
        n.counters.abandoned = j.at("abandoned").get<std::uint64_t>();
        n.counters.received = j.at("received").get<std::uint64_t>();
        n.counters.attempts = j.at("attempts").get<std::uint64_t>();
        n.errors = j.at("errors").get<std::uint64_t>();
        n.tec = j.at("tec").get<std::uint32_t>();
        n.rec = j.at("rec").get<std::uint32_t>();
        n.state = j.at("state").get<std::string>();
        r.nodes.push_back(std::move(n));
      } else if (kind == "latency") {
        r.latency.push_back({FrameId::parse(j.at("id").get<std::string>()), j.at("count").get<std::uint64_t>(),
                             j.at("p50_us").get<std::uint64_t>(), j.at("p99_us").get<std::uint64_t>(),
                             j.at("max_us").get<std::uint64_t>()});
      } else if (kind == "trajectory") {
        auto& points = r.trajectories[j.at("node").get<std::string>()];
        for (const auto& s : j.at("samples")) {
          points.push_back({s.at(0).get<std::uint64_t>(), s.at(1).get<std::uint32_t>(), s.at(2).get<std::uint32_t>(),
                            s.at(3).get<std::string>()});
        }
      } else if (kind == "alert") {
        r.alerts.push_back({j.at("t_us").get<std::uint64_t>(), j.at("detector").get<std::string>(),
                            j.at("detail").get<std::string>()});
      } else if (kind == "blocks") {
        for (const auto& [k, v] : j.at("reasons").items()) r.block_reasons[k] = v.get<std::uint64_t>();
      } else if (kind == "attack") {
        r.attacks.push_back({j.at("kind").get<std::string>(), j.at("attacker").get<std::string>(),
                             j.at("injected").get<std::uint64_t>(), j.at("delivered").get<std::uint64_t>(),
                             j.at("blocked").get<std::uint64_t>()});
      } else if (kind == "icewall") {
        IcewallMetrics w{j.at("node").get<std::string>(), j.at("mode").get<std::string>(), {},
                         j.at("blocked").get<std::uint64_t>()};
        for (const auto& id : j.at("allowed_ids")) w.allowed_ids.push_back(FrameId::parse(id.get<std::string>()));
        r.icewalls.push_back(std::move(w));
      } else if (kind == "vehicle") {
        r.vehicle = VehicleMetrics{j.at("final_speed_kmh").get<double>(), j.at("min_speed_kmh").get<double>(),
                                   j.at("max_speed_kmh").get<double>()};
      } else {
        throw ConfigError(where + ".record", "unknown record " + kind);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where, std::string("malformed ") + kind + " record: " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where, e.what());
    }
  }
  if (r.schema.empty()) throw ConfigError(origin, "no run record");
  return r;
}

MetricsReport load_metrics(const std::filesystem::path& path) { return from_jsonl(read_file(path), path.string()); }

std::string summary_table(const MetricsReport& r) {
  std::ostringstream out;
  out << "scenario " << r.name << " (family " << r.family << ", seed " << r.seed << ", "
      << fixed(static_cast<double>(r.duration_us) / 1e6, 3) << " s at " << r.bitrate << " bit/s)\n\n";
  out << pad("node", 10) << lpad("offered", 9) << lpad("delivered", 11) << lpad("blocked", 9) << lpad("queued", 8)
      << lpad("abandoned", 11) << lpad("errors", 8) << lpad("tec", 6) << lpad("rec", 6) << "  state\n";
  for (const auto& n : r.nodes) {
    out << pad(n.name, 10) << lpad(std::to_string(n.counters.offered), 9)
        << lpad(std::to_string(n.counters.delivered), 11) << lpad(std::to_string(n.counters.blocked), 9)
        << lpad(std::to_string(n.counters.queued), 8) << lpad(std::to_string(n.counters.abandoned), 11)
        << lpad(std::to_string(n.errors), 8) << lpad(std::to_string(n.tec), 6) << lpad(std::to_string(n.rec), 6)
        << "  " << n.state << '\n';
  }
  out << "\nspoof success " << r.spoof_success << ", false blocks " << r.false_blocks << ", attack frames blocked "
      << r.attack_frames_blocked << ", detector alerts " << r.alerts.size() << '\n';
  if (!r.block_reasons.empty()) {
    out << "blocks:";
    for (const auto& [k, v] : r.block_reasons) out << ' ' << k << '=' << v;
    out << '\n';
  }
  out << '\n' << pad("id", 10) << lpad("frames", 8) << lpad("p50 us", 9) << lpad("p99 us", 9) << lpad("max us", 9)
      << '\n';
  for (const auto& l : r.latency) {
    out << pad(l.id.to_string(), 10) << lpad(std::to_string(l.count), 8) << lpad(std::to_string(l.p50_us), 9)
        << lpad(std::to_string(l.p99_us), 9) << lpad(std::to_string(l.max_us), 9) << '\n';
  }
  for (const auto& a : r.attacks) {
    out << "\nattack " << a.kind << " from " << a.attacker << ": injected " << a.injected << ", delivered "
        << a.delivered << ", blocked " << a.blocked;
  }
  if (!r.attacks.empty()) out << '\n';
  for (const auto& w : r.icewalls) {
    out << "icewall on " << w.node << " (" << w.mode << "): allows";
    for (const auto& id : w.allowed_ids) out << ' ' << id.to_string();
    out << ", blocked " << w.blocked << '\n';
  }
  constexpr std::size_t kShownAlerts = 10;
  for (std::size_t i = 0; i < r.alerts.size() && i < kShownAlerts; ++i) {
    const auto& a = r.alerts[i];
    out << "alert " << a.detector << " at " << a.timestamp_us << " us: " << a.detail << '\n';
  }
  if (r.alerts.size() > kShownAlerts) out << "... " << r.alerts.size() - kShownAlerts << " more alerts\n";
  if (r.vehicle) {
    out << "vehicle speed final " << fixed(r.vehicle->final_speed_kmh) << " km/h, range "
        << fixed(r.vehicle->min_speed_kmh) << ".." << fixed(r.vehicle->max_speed_kmh) << '\n';
  }
  return out.str();
}

bool Comparison::all_zero() const {
  return std::all_of(deltas.begin(), deltas.end(), [](const MetricDelta& d) { return d.delta() == 0; });
}

Comparison compare(const MetricsReport& a, const MetricsReport& b) {
  if (a.schema != b.schema) throw ConfigError("compare", "schema mismatch: " + a.schema + " vs " + b.schema);
  if (a.family != b.family) throw ConfigError("compare", "scenario family mismatch: " + a.family + " vs " + b.family);

  Comparison c;
  auto add = [&](std::string metric, double x, double y) { c.deltas.push_back({std::move(metric), x, y}); };
  add("spoof_success", static_cast<double>(a.spoof_success), static_cast<double>(b.spoof_success));
  add("false_blocks", static_cast<double>(a.false_blocks), static_cast<double>(b.false_blocks));
  add("attack_frames_blocked", static_cast<double>(a.attack_frames_blocked),
      static_cast<double>(b.attack_frames_blocked));
  add("blocked_total", static_cast<double>(total_blocked(a)), static_cast<double>(total_blocked(b)));
  add("alerts", static_cast<double>(a.alerts.size()), static_cast<double>(b.alerts.size()));

  std::set<FrameId> ids;
  for (const auto& l : a.latency) ids.insert(l.id);
  for (const auto& l : b.latency) ids.insert(l.id);
  for (const auto& id : ids) {
    const auto* la = a.latency_of(id);
    const auto* lb = b.latency_of(id);
    const auto key = "latency[" + id.to_string() + "]";
    add(key + ".frames", la ? static_cast<double>(la->count) : 0, lb ? static_cast<double>(lb->count) : 0);
    add(key + ".p99_us", la ? static_cast<double>(la->p99_us) : 0, lb ? static_cast<double>(lb->p99_us) : 0);
    add(key + ".max_us", la ? static_cast<double>(la->max_us) : 0, lb ? static_cast<double>(lb->max_us) : 0);
  }

  std::set<std::string> names;
  for (const auto& n : a.nodes) names.insert(n.name);
  for (const auto& n : b.nodes) names.insert(n.name);
  for (const auto& name : names) {
    const auto* na = a.node(name);
    const auto* nb = b.node(name);
    const auto key = "node[" + name + "]";
    add(key + ".delivered", na ? static_cast<double>(na->counters.delivered) : 0,
        nb ? static_cast<double>(nb->counters.delivered) : 0);
    add(key + ".blocked", na ? static_cast<double>(na->counters.blocked) : 0,
        nb ? static_cast<double>(nb->counters.blocked) : 0);
    add(key + ".tec", na ? na->tec : 0, nb ? nb->tec : 0);
  }
  if (a.vehicle || b.vehicle) {
    add("vehicle.max_speed_kmh", a.vehicle ? a.vehicle->max_speed_kmh : 0, b.vehicle ? b.vehicle->max_speed_kmh : 0);
  }
  return c;
}

std::string format_comparison(const Comparison& c, const std::string& label_a, const std::string& label_b) {
  std::size_t width = 6;
  for (const auto& d : c.deltas) width = std::max(width, d.metric.size());
  const std::size_t col = std::max<std::size_t>({12, label_a.size() + 2, label_b.size() + 2});
  std::ostringstream out;
  out << pad("metric", width + 2) << lpad(label_a, col) << lpad(label_b, col) << lpad("delta", col) << '\n';
  for (const auto& d : c.deltas) {
    const bool integral = d.a == std::floor(d.a) && d.b == std::floor(d.b);
    const int digits = integral ? 0 : 2;
    out << pad(d.metric, width + 2) << lpad(fixed(d.a, digits), col) << lpad(fixed(d.b, digits), col)
        << lpad((d.delta() > 0 ? "+" : "") + fixed(d.delta(), digits), col) << '\n';
  }
  return out.str();
}

}  // namespace cansim
