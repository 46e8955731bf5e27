#include "cansim/scenario.hpp"

#include <algorithm>
#include <set>

#include "json_util.hpp"

namespace cansim {

using namespace detail;

namespace {

constexpr const char* kRulesSchema = "cansim-rules/1";

std::optional<GeneratorKind> generator_kind(std::string_view s) {
  for (auto k : {GeneratorKind::Constant, GeneratorKind::Counter, GeneratorKind::Ramp, GeneratorKind::Noise,
                 GeneratorKind::Signal, GeneratorKind::Relay}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

PayloadGenerator parse_generator(const json& g, const std::string& path) {
  PayloadGenerator out;
  const auto kind = get_or<std::string>(g, "kind", "constant", path);
  const auto k = generator_kind(kind);
  if (!k) throw ConfigError(path + ".kind", "unknown generator " + kind);
  out.kind = *k;
  out.bytes = hex_payload(g, "bytes", path);
  out.field = get_or<std::string>(g, "field", "", path);
  out.start = get_or<double>(g, "start", 0.0, path);
  out.step = get_or<double>(g, "step", 0.0, path);
  out.center = get_or<double>(g, "center", 0.0, path);
  out.amplitude = get_or<double>(g, "amplitude", 0.0, path);
  out.signal = get_or<std::string>(g, "signal", "", path);
  out.relay_from = get_or<std::string>(g, "from", "", path);
  if (out.kind == GeneratorKind::Signal && !VehiclePlant::known_signal(out.signal)) {
    throw ConfigError(path + ".signal", "unknown plant signal \"" + out.signal + "\"");
  }
  if (out.kind == GeneratorKind::Relay && out.relay_from.empty()) throw ConfigError(path + ".from", "missing");
  if (out.amplitude < 0) throw ConfigError(path + ".amplitude", "must be non-negative");
  return out;
}

ScheduleEntry parse_entry(const json& p, const SignalDictionary& dict, const std::string& path) {
  ScheduleEntry e;
  const MessageDef* def = nullptr;
  if (p.contains("message")) {
    e.message = get<std::string>(p, "message", path);
    def = dict.by_name(e.message);
    if (def == nullptr) throw ConfigError(path + ".message", "unknown message " + e.message);
    e.id = def->id;
    e.dlc = def->dlc;
    e.period = Micros(static_cast<Micros::rep>(def->period_ms) * 1000);
    e.app_checksum = def->app_checksum;
  } else {
    e.id = frame_id(p, "id", path);
    e.dlc = 8;
  }
  const auto dlc = get_or<int>(p, "dlc", e.dlc, path);
  if (dlc < 0 || dlc > 8) throw ConfigError(path + ".dlc", "must be 0..8");
  if (def != nullptr && dlc != def->dlc) throw ConfigError(path + ".dlc", "differs from the signal dictionary");
  e.dlc = static_cast<std::uint8_t>(dlc);
  e.period = millis(p, "period_ms", static_cast<double>(e.period.count()) / 1000.0, path);
  if (e.period.count() == 0) throw ConfigError(path + ".period_ms", "must be positive");
  e.phase = millis(p, "phase_ms", 0.0, path);
  e.jitter = millis(p, "jitter_ms", 0.0, path);
  e.app_checksum = get_or<bool>(p, "app_checksum", e.app_checksum, path);
  if (p.contains("generator")) e.generator = parse_generator(p["generator"], path + ".generator");
  if (e.generator.bytes.size() > e.dlc) throw ConfigError(path + ".generator.bytes", "longer than dlc");
  const bool needs_field = e.generator.kind != GeneratorKind::Constant && e.generator.kind != GeneratorKind::Counter;
  if (needs_field && !e.generator.field.empty() && (def == nullptr || def->field(e.generator.field) == nullptr)) {
    throw ConfigError(path + ".generator.field", "unknown field " + e.generator.field);
  }
  return e;
}

DriverModel parse_driver(const json& d, const std::string& path) {
  DriverModel m;
  m.reaction_delay = millis(d, "reaction_delay_ms", 300.0, path);
  m.target_speed = get_or<double>(d, "target_speed", m.target_speed, path);
  m.gain = get_or<double>(d, "gain", m.gain, path);
  m.cruise_pedal = get_or<double>(d, "cruise_pedal", m.cruise_pedal, path);
  m.pedal_min = get_or<double>(d, "pedal_min", m.pedal_min, path);
  m.pedal_max = get_or<double>(d, "pedal_max", m.pedal_max, path);
  m.period = millis(d, "period_ms", 50.0, path);
  m.display_message = get_or<std::string>(d, "display_message", m.display_message, path);
  m.pedal_message = get_or<std::string>(d, "pedal_message", m.pedal_message, path);
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return m;
}

NodeConfig parse_node(const json& n, const Scenario& s, const std::string& path) {
  NodeConfig node;
  node.spec.name = get<std::string>(n, "name", path);
  if (node.spec.name.empty()) throw ConfigError(path + ".name", "must not be empty");
  node.spec.compromised = get_or<bool>(n, "compromised", false, path);
  node.spec.safety_critical =
      get_or<bool>(n, "safety_critical", s.adjacency.is_safety_critical(node.spec.name), path);
  if (s.adjacency.is_safety_critical(node.spec.name) && !node.spec.safety_critical) {
    throw ConfigError(path + ".safety_critical", node.spec.name + " is safety-critical in the adjacency dataset");
  }

  const auto& produces = array_at(n, "produces", path);
  for (std::size_t i = 0; i < produces.size(); ++i) {
    const auto ppath = index_path(path, "produces", i);
    auto entry = parse_entry(produces[i], s.signals, ppath);
    if (!entry.message.empty()) {
      const auto& producer = s.signals.by_name(entry.message)->producer;
      if (producer != node.spec.name) {
        throw ConfigError(ppath + ".message", entry.message + " is produced by " + producer + ", not " + node.spec.name);
      }
    }
    node.schedule.entries.push_back(std::move(entry));
  }
  try {
    node.schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ".produces", e.what());
  }

  const auto& consumes = array_at(n, "consumes", path);
  for (std::size_t i = 0; i < consumes.size(); ++i) {
    const auto cpath = index_path(path, "consumes", i);
    Consumption c{get<std::string>(consumes[i], "message", cpath), get<std::string>(consumes[i], "source", cpath),
                  get_or<bool>(consumes[i], "actuates_pedal", false, cpath)};
    if (s.signals.by_name(c.message) == nullptr) throw ConfigError(cpath + ".message", "unknown message " + c.message);
    if (!s.adjacency.has_edge(c.source, node.spec.name, c.message, true)) {
      throw ConfigError(cpath, "no adjacency edge " + c.source + " -> " + node.spec.name + " for " + c.message);
    }
    node.spec.consumes.push_back(std::move(c));
  }

  for (const auto& e : node.schedule.entries) {
    if (e.generator.kind != GeneratorKind::Relay) continue;
    const bool consumed = std::any_of(node.spec.consumes.begin(), node.spec.consumes.end(),
                                      [&](const Consumption& c) { return c.message == e.generator.relay_from; });
    if (!consumed) throw ConfigError(path + ".produces", "relay source " + e.generator.relay_from + " is not consumed");
  }

  if (n.contains("driver")) {
    node.driver = parse_driver(n["driver"], path + ".driver");
    if (!node.schedule.entries.empty()) throw ConfigError(path + ".produces", "a driver node has no schedule");
    for (const auto* msg : {&node.driver->display_message, &node.driver->pedal_message}) {
      const auto* def = s.signals.by_name(*msg);
      if (def == nullptr || def->fields.empty()) throw ConfigError(path + ".driver", "unknown message " + *msg);
    }
  }
  return node;
}

AttackSpec parse_attack(const json& a, const Scenario& s, const std::string& path) {
  AttackSpec spec;
  const auto kind = get<std::string>(a, "kind", path);
  const auto k = attack_kind_from_string(kind);
  if (!k) throw ConfigError(path + ".kind", "unknown attack kind " + kind);
  spec.kind = *k;
  spec.attacker = get<std::string>(a, "attacker", path);
  const auto* attacker = s.node(spec.attacker);
  if (attacker == nullptr) throw ConfigError(path + ".attacker", "undefined node " + spec.attacker);

  spec.start = millis(a, "start_ms", 0.0, path);
  if (a.contains("stop_ms")) spec.stop = millis(a, "stop_ms", 0.0, path);
  if (spec.start > s.duration) throw ConfigError(path + ".start_ms", "after the end of the run");
  if (spec.stop && *spec.stop > s.duration) throw ConfigError(path + ".stop_ms", "after the end of the run");

  if (a.contains("target_id")) spec.target_id = frame_id(a, "target_id", path);
  spec.payload = hex_payload(a, "payload", path);
  spec.app_checksum = get_or<bool>(a, "app_checksum", false, path);
  spec.period = millis(a, "period_ms", 10.0, path);
  spec.victim = get_or<std::string>(a, "victim", "", path);
  if (a.contains("victim_id")) spec.victim_id = frame_id(a, "victim_id", path);
  if (a.contains("max_errors")) spec.max_errors = get<std::uint32_t>(a, "max_errors", path);
  spec.message = get_or<std::string>(a, "message", spec.message, path);
  if (a.contains("false_value")) spec.false_value = get<double>(a, "false_value", path);
  spec.offset = get_or<double>(a, "offset", 0.0, path);

  if (spec.kind == AttackKind::Spoof && !a.contains("target_id")) throw ConfigError(path + ".target_id", "missing");
  if (spec.kind == AttackKind::BusOff && s.node(spec.victim) == nullptr) {
    throw ConfigError(path + ".victim", "undefined node " + spec.victim);
  }
  if (spec.kind == AttackKind::DisplaySpoof) {
    const auto& entries = attacker->schedule.entries;
    if (std::none_of(entries.begin(), entries.end(), [&](const ScheduleEntry& e) { return e.message == spec.message; })) {
      throw ConfigError(path + ".message", spec.attacker + " does not produce " + spec.message);
    }
  }
  try {
    validate_attack(spec, attacker->spec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
  return spec;
}

IcewallConfig parse_icewall(const json& w, const Scenario& s, const std::filesystem::path& base,
                            const std::string& path) {
  IcewallConfig cfg;
  cfg.node = get<std::string>(w, "node", path);
  if (s.node(cfg.node) == nullptr) throw ConfigError(path + ".node", "undefined node " + cfg.node);
  const bool has_rules = w.contains("rules");
  const bool has_learning = w.contains("learning");
  if (has_rules == has_learning) throw ConfigError(path, "exactly one of rules or learning is required");
  if (has_rules) {
    const auto file = get<std::string>(w, "rules", path);
    cfg.rules = load_rules(base / file, s.signals);
  } else {
    const auto& l = w["learning"];
    const auto lpath = path + ".learning";
    cfg.learning.window_frames = get_or<std::size_t>(l, "window_frames", cfg.learning.window_frames, lpath);
    cfg.learning.window_time = millis(l, "window_ms", 2000.0, lpath);
    cfg.learning.slack = get_or<double>(l, "slack", cfg.learning.slack, lpath);
    if (cfg.learning.window_frames == 0) throw ConfigError(lpath + ".window_frames", "must be positive");
    if (!(cfg.learning.slack >= 0)) throw ConfigError(lpath + ".slack", "must be non-negative");
    if (w.contains("error_flag_budget")) {
      const auto& b = w["error_flag_budget"];
      cfg.budget.max_flags = get_or<std::size_t>(b, "max_flags", cfg.budget.max_flags, path + ".error_flag_budget");
      cfg.budget.window = millis(b, "window_ms", 1000.0, path + ".error_flag_budget");
    }
  }
  return cfg;
}

DetectorConfig parse_detectors(const json& d, const Scenario& s, const std::string& path) {
  DetectorConfig cfg;
  cfg.train = millis(d, "train_ms", 2000.0, path);
  if (cfg.train >= s.duration) throw ConfigError(path + ".train_ms", "must be shorter than the run");
  if (d.contains("frequency")) {
    const auto& f = d["frequency"];
    const auto fpath = path + ".frequency";
    FrequencyConfig fc;
    fc.window = millis(f, "window_ms", 100.0, fpath);
    fc.tolerance = get_or<double>(f, "tolerance", fc.tolerance, fpath);
    fc.consecutive = get_or<std::uint32_t>(f, "consecutive", fc.consecutive, fpath);
    try {
      fc.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fpath, e.what());
    }
    if (cfg.train < 3 * fc.window) throw ConfigError(path + ".train_ms", "must cover at least three windows");
    cfg.frequency = fc;
  }
  cfg.transition = d.contains("transition");
  return cfg;
}

}  // namespace

const NodeConfig* Scenario::node(std::string_view n) const {
  auto it = std::find_if(nodes.begin(), nodes.end(), [&](const NodeConfig& c) { return c.spec.name == n; });
  return it == nodes.end() ? nullptr : &*it;
}

bool Scenario::uses_plant() const {
  for (const auto& n : nodes) {
    for (const auto& e : n.schedule.entries) {
      if (e.generator.kind == GeneratorKind::Signal) return true;
    }
    for (const auto& c : n.spec.consumes) {
      if (c.actuates_pedal) return true;
    }
  }
  return false;
}

std::uint64_t node_seed(std::uint64_t scenario_seed, std::string_view node_name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : node_name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = scenario_seed ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_file(path), path.parent_path(), path.string());
}

Scenario parse_scenario(std::string_view text, const std::filesystem::path& base, const std::string& origin) {
  const auto doc = parse_json(text, origin);
  require_schema(doc, Scenario::kSchema, origin);
  const std::string& path = origin;

  Scenario s;
  s.name = get<std::string>(doc, "name", path);
  s.family = get_or<std::string>(doc, "family", s.name, path);
  s.seed = get<std::uint64_t>(doc, "seed", path);
  s.duration = millis(doc, "duration_ms", 1000.0, path);
  if (s.duration.count() == 0) throw ConfigError(path + ".duration_ms", "must be positive");
  s.bus.bitrate = get_or<std::uint32_t>(doc, "bitrate", s.bus.bitrate, path);
  if (s.bus.bitrate == 0 || s.bus.bitrate > BusConfig::kMaxBitrate) {
    throw ConfigError(path + ".bitrate", "must be 1..1000000");
  }
  s.signals = SignalDictionary::load(base / get_or<std::string>(doc, "signals", "../data/signals.json", path));
  s.adjacency = AdjacencyGraph::load(base / get_or<std::string>(doc, "adjacency", "../data/adjacency.json", path));

  if (doc.contains("plant")) {
    const auto& p = doc["plant"];
    const auto ppath = path + ".plant";
    s.plant.gain_kmh_per_pct = get_or<double>(p, "gain", s.plant.gain_kmh_per_pct, ppath);
    s.plant.time_constant_s = get_or<double>(p, "time_constant_s", s.plant.time_constant_s, ppath);
    s.plant.initial_speed_kmh = get_or<double>(p, "initial_speed_kmh", s.plant.initial_speed_kmh, ppath);
    s.plant.initial_pedal_pct = get_or<double>(p, "initial_pedal_pct", s.plant.initial_pedal_pct, ppath);
    if (!(s.plant.time_constant_s > 0)) throw ConfigError(ppath + ".time_constant_s", "must be positive");
  }

  const auto& nodes = array_at(doc, "nodes", path);
  if (nodes.empty()) throw ConfigError(path + ".nodes", "at least one node is required");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto node = parse_node(nodes[i], s, index_path(path, "nodes", i));
    if (s.node(node.spec.name) != nullptr) {
      throw ConfigError(index_path(path, "nodes", i) + ".name", "duplicate node " + node.spec.name);
    }
    s.nodes.push_back(std::move(node));
  }
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    for (std::size_t j = 0; j < s.nodes[i].spec.consumes.size(); ++j) {
      const auto& c = s.nodes[i].spec.consumes[j];
      const auto where = index_path(index_path(path, "nodes", i), "consumes", j);
      const auto* src = s.node(c.source);
      if (src == nullptr) throw ConfigError(where + ".source", "undefined node " + c.source);
      const auto& entries = src->schedule.entries;
      const bool produced = std::any_of(entries.begin(), entries.end(),
                                        [&](const ScheduleEntry& e) { return e.message == c.message; }) ||
                            (src->driver && src->driver->pedal_message == c.message);
      if (!produced) throw ConfigError(where, c.source + " does not produce " + c.message);
    }
  }

  const auto& attacks = array_at(doc, "attacks", path);
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    s.attacks.push_back(parse_attack(attacks[i], s, index_path(path, "attacks", i)));
  }

  const auto& walls = array_at(doc, "icewalls", path);
  std::set<std::string> walled;
  for (std::size_t i = 0; i < walls.size(); ++i) {
    auto cfg = parse_icewall(walls[i], s, base, index_path(path, "icewalls", i));
    if (!walled.insert(cfg.node).second) {
      throw ConfigError(index_path(path, "icewalls", i) + ".node", "second icewall on " + cfg.node);
    }
    s.icewalls.push_back(std::move(cfg));
  }

  if (doc.contains("detectors")) s.detectors = parse_detectors(doc["detectors"], s, path + ".detectors");
  return s;
}

FilterRuleSet load_rules(const std::filesystem::path& path, const SignalDictionary& dictionary) {
  return parse_rules(read_file(path), dictionary, path.string());
}

FilterRuleSet parse_rules(std::string_view text, const SignalDictionary& dictionary, const std::string& origin) {
  const auto doc = parse_json(text, origin);
  require_schema(doc, kRulesSchema, origin);
  FilterRuleSet rules;
  const auto& ids = array_at(doc, "allowed_ids", origin);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto where = index_path(origin, "allowed_ids", i);
    if (!ids[i].is_string()) throw ConfigError(where, "expected a hex id string");
    try {
      rules.allowed_ids.insert(FrameId::parse(ids[i].get<std::string>()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where, e.what());
    }
  }
  if (doc.contains("min_gap_ms")) {
    const auto& gaps = doc["min_gap_ms"];
    if (!gaps.is_object()) throw ConfigError(origin + ".min_gap_ms", "expected an object");
    for (const auto& [key, value] : gaps.items()) {
      const auto where = origin + ".min_gap_ms." + key;
      FrameId id;
      try {
        id = FrameId::parse(key);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(where, e.what());
      }
      json holder = {{"gap", value}};
      rules.min_gap[id] = millis(holder, "gap", 0.0, where);
    }
  }
  const auto& preds = array_at(doc, "predicates", origin);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto where = index_path(origin, "predicates", i);
    const auto id = frame_id(preds[i], "id", where);
    const auto* def = dictionary.by_id(id);
    if (def == nullptr) throw ConfigError(where + ".id", "id " + id.to_string() + " not in the signal dictionary");
    const auto field_name = get_or<std::string>(preds[i], "field", def->fields.empty() ? "" : def->fields[0].name, where);
    const auto* field = def->field(field_name);
    if (field == nullptr) throw ConfigError(where + ".field", "unknown field " + field_name);
    PayloadPredicate p{field->name, field->byte_offset, field->width, field->scale,
                       get<double>(preds[i], "min", where), get<double>(preds[i], "max", where), std::nullopt};
    if (preds[i].contains("max_abs_delta_per_second")) {
      p.max_abs_delta_per_second = get<double>(preds[i], "max_abs_delta_per_second", where);
    }
    rules.predicates[id].push_back(std::move(p));
  }
  if (doc.contains("error_flag_budget")) {
    const auto& b = doc["error_flag_budget"];
    rules.error_flag_budget.max_flags =
        get_or<std::size_t>(b, "max_flags", rules.error_flag_budget.max_flags, origin + ".error_flag_budget");
    rules.error_flag_budget.window = millis(b, "window_ms", 1000.0, origin + ".error_flag_budget");
  }
  try {
    rules.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin, e.what());
  }
  return rules;
}

}  // namespace cansim
