#include "cansim/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "json_util.hpp"

namespace cansim {

using namespace detail;

void SignalField::write(std::vector<std::uint8_t>& payload, double physical) const {
  if (byte_offset + width > payload.size()) throw std::out_of_range("field " + name + " exceeds payload");
  const double raw_f = std::round(physical / scale);
  const std::uint64_t raw =
      raw_f <= 0 ? 0 : (raw_f >= static_cast<double>(max_raw()) ? max_raw() : static_cast<std::uint64_t>(raw_f));
  for (std::size_t i = 0; i < width; ++i) {
    payload[byte_offset + i] = static_cast<std::uint8_t>(raw >> (8 * (width - 1 - i)));
  }
}

std::optional<double> SignalField::read(std::span<const std::uint8_t> payload) const {
  if (byte_offset + width > payload.size()) return std::nullopt;
  std::uint64_t raw = 0;
  for (std::size_t i = 0; i < width; ++i) raw = (raw << 8) | payload[byte_offset + i];
  return static_cast<double>(raw) * scale;
}

const SignalField* MessageDef::field(std::string_view n) const {
  for (const auto& f : fields) {
    if (f.name == n) return &f;
  }
  return nullptr;
}

SignalDictionary SignalDictionary::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

SignalDictionary SignalDictionary::parse(std::string_view text, const std::string& origin) {
  const auto doc = parse_json(text, origin);
  require_schema(doc, kSchema, origin);
  if (!doc.contains("messages") || !doc["messages"].is_array()) throw ConfigError(origin + ".messages", "missing");

  SignalDictionary dict;
  std::set<std::string> names;
  std::set<FrameId> ids;
  for (std::size_t i = 0; i < doc["messages"].size(); ++i) {
    const auto& m = doc["messages"][i];
    const auto path = origin + ".messages[" + std::to_string(i) + "]";
    MessageDef def;
    def.name = get<std::string>(m, "name", path);
    try {
      def.id = FrameId::parse(get<std::string>(m, "id", path));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path + ".id", e.what());
    }
    def.producer = get<std::string>(m, "producer", path);
    def.dlc = static_cast<std::uint8_t>(get_or<int>(m, "dlc", 8, path));
    def.period_ms = get_or<std::uint32_t>(m, "period_ms", 100, path);
    def.app_checksum = get_or<bool>(m, "app_checksum", false, path);
    if (def.dlc > 8) throw ConfigError(path + ".dlc", "must be 0..8");
    if (def.period_ms == 0) throw ConfigError(path + ".period_ms", "must be positive");
    const std::size_t usable = def.app_checksum && def.dlc > 0 ? def.dlc - 1U : def.dlc;
    if (m.contains("fields")) {
      for (std::size_t j = 0; j < m["fields"].size(); ++j) {
        const auto& f = m["fields"][j];
        const auto fpath = path + ".fields[" + std::to_string(j) + "]";
        SignalField field;
        field.name = get<std::string>(f, "name", fpath);
        field.byte_offset = get<std::size_t>(f, "offset", fpath);
        field.width = get_or<std::size_t>(f, "width", 2, fpath);
        field.scale = get_or<double>(f, "scale", 1.0, fpath);
        field.unit = get_or<std::string>(f, "unit", "", fpath);
        if (field.width == 0 || field.width > 8 || field.byte_offset + field.width > usable) {
          throw ConfigError(fpath, "field does not fit in the payload");
        }
        if (!(field.scale > 0)) throw ConfigError(fpath + ".scale", "must be positive");
        def.fields.push_back(std::move(field));
      }
    }
    if (!names.insert(def.name).second) throw ConfigError(path + ".name", "duplicate message " + def.name);
    if (!ids.insert(def.id).second) throw ConfigError(path + ".id", "duplicate id " + def.id.to_string());
    dict.messages_.push_back(std::move(def));
  }
  return dict;
}

const MessageDef* SignalDictionary::by_name(std::string_view name) const {
  auto it = std::find_if(messages_.begin(), messages_.end(), [&](const MessageDef& m) { return m.name == name; });
  return it == messages_.end() ? nullptr : &*it;
}

const MessageDef* SignalDictionary::by_id(FrameId id) const {
  auto it = std::find_if(messages_.begin(), messages_.end(), [&](const MessageDef& m) { return m.id == id; });
  return it == messages_.end() ? nullptr : &*it;
}

AdjacencyGraph AdjacencyGraph::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

AdjacencyGraph AdjacencyGraph::parse(std::string_view text, const std::string& origin) {
  const auto doc = parse_json(text, origin);
  require_schema(doc, kSchema, origin);
  AdjacencyGraph g;
  if (!doc.contains("ecus")) throw ConfigError(origin + ".ecus", "missing");
  for (std::size_t i = 0; i < doc["ecus"].size(); ++i) {
    const auto& e = doc["ecus"][i];
    const auto path = origin + ".ecus[" + std::to_string(i) + "]";
    Ecu ecu{get<std::string>(e, "name", path), get_or<bool>(e, "safety_critical", false, path),
            get_or<bool>(e, "virtual", false, path)};
    if (g.ecu(ecu.name)) throw ConfigError(path + ".name", "duplicate ECU " + ecu.name);
    g.ecus_.push_back(std::move(ecu));
  }
  auto read_edges = [&](const char* key, std::vector<AdjacencyEdge>& out) {
    if (!doc.contains(key)) return;
    for (std::size_t i = 0; i < doc[key].size(); ++i) {
      const auto& e = doc[key][i];
      const auto path = origin + "." + key + "[" + std::to_string(i) + "]";
      AdjacencyEdge edge{get<std::string>(e, "from", path), get<std::string>(e, "to", path),
                         get<std::string>(e, "data", path)};
      if (!g.ecu(edge.from)) throw ConfigError(path + ".from", "unknown ECU " + edge.from);
      if (!g.ecu(edge.to)) throw ConfigError(path + ".to", "unknown ECU " + edge.to);
      out.push_back(std::move(edge));
    }
  };
  read_edges("edges", g.edges_);
  read_edges("virtual_edges", g.virtual_edges_);
  return g;
}

const AdjacencyGraph::Ecu* AdjacencyGraph::ecu(std::string_view name) const {
  auto it = std::find_if(ecus_.begin(), ecus_.end(), [&](const Ecu& e) { return e.name == name; });
  return it == ecus_.end() ? nullptr : &*it;
}

bool AdjacencyGraph::is_safety_critical(std::string_view name) const {
  const auto* e = ecu(name);
  return e != nullptr && e->safety_critical;
}

bool AdjacencyGraph::has_edge(std::string_view from, std::string_view to, std::string_view data,
                              bool include_virtual) const {
  auto match = [&](const AdjacencyEdge& e) { return e.from == from && e.to == to && e.data == data; };
  if (std::any_of(edges_.begin(), edges_.end(), match)) return true;
  return include_virtual && std::any_of(virtual_edges_.begin(), virtual_edges_.end(), match);
}

bool AdjacencyGraph::has_path(std::string_view from, std::string_view to, bool include_virtual) const {
  std::set<std::string> seen{std::string(from)};
  std::deque<std::string> frontier{std::string(from)};
  while (!frontier.empty()) {
    const auto at = frontier.front();
    frontier.pop_front();
    auto visit = [&](const std::vector<AdjacencyEdge>& edges) {
      for (const auto& e : edges) {
        if (e.from == at && seen.insert(e.to).second) frontier.push_back(e.to);
      }
    };
    visit(edges_);
    if (include_virtual) visit(virtual_edges_);
  }
  return seen.contains(std::string(to)) && from != to;
}

}  // namespace cansim
