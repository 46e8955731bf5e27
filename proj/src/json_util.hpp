#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cansim/datasets.hpp"
#include "cansim/icewall.hpp"

namespace cansim::detail {

using nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Parses JSON, rejecting duplicate object keys. Syntax errors name the line.
inline json parse_json(std::string_view text, const std::string& origin) {
  std::vector<std::set<std::string>> keys;
  auto callback = [&](int, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::object_start) {
      keys.emplace_back();
    } else if (event == json::parse_event_t::object_end) {
      keys.pop_back();
    } else if (event == json::parse_event_t::key) {
      const auto key = parsed.get<std::string>();
      if (!keys.back().insert(key).second) throw ConfigError(origin + "." + key, "duplicate key");
    }
    return true;
  };
  try {
    return json::parse(text.begin(), text.end(), callback);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError(origin + ":" + std::to_string(line), std::string("invalid JSON: ") + e.what());
  }
}

inline void require_schema(const json& doc, const char* schema, const std::string& origin) {
  if (!doc.is_object()) throw ConfigError(origin, "top level must be an object");
  if (!doc.contains("schema") || doc["schema"] != schema) {
    throw ConfigError(origin + ".schema", std::string("expected \"") + schema + "\"");
  }
}

template <typename T>
T get(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  if (!obj.contains(key)) throw ConfigError(path + "." + key, "missing");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key, "wrong type");
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& path) {
  return obj.contains(key) ? get<T>(obj, key, path) : fallback;
}

inline const json& array_at(const json& obj, const char* key, const std::string& path) {
  static const json empty = json::array();
  if (!obj.contains(key)) return empty;
  if (!obj.at(key).is_array()) throw ConfigError(path + "." + key, "expected an array");
  return obj.at(key);
}

/// Milliseconds (fractional allowed) to whole microseconds.
inline Micros millis(const json& obj, const char* key, double fallback, const std::string& path) {
  const double ms = get_or<double>(obj, key, fallback, path);
  if (!std::isfinite(ms) || ms < 0) throw ConfigError(path + "." + key, "must be a non-negative number");
  return Micros(static_cast<Micros::rep>(std::llround(ms * 1000.0)));
}

inline FrameId frame_id(const json& obj, const char* key, const std::string& path) {
  try {
    return FrameId::parse(get<std::string>(obj, key, path));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + "." + key, e.what());
  }
}

inline std::vector<std::uint8_t> hex_payload(const json& obj, const char* key, const std::string& path) {
  const auto text = get_or<std::string>(obj, key, "", path);
  if (text.size() % 2 != 0 || text.size() > 16) throw ConfigError(path + "." + key, "expected up to 8 hex bytes");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < text.size(); i += 2) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(text.substr(i, 2), &used, 16);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != 2) throw ConfigError(path + "." + key, "invalid hex byte");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

inline std::string index_path(const std::string& path, const char* key, std::size_t i) {
  return path + "." + key + "[" + std::to_string(i) + "]";
}

}  // namespace cansim::detail
