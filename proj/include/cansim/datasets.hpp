#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cansim/frame.hpp"

namespace cansim {

/// Malformed dataset or scenario input. `where` is a field path or file name.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string where, const std::string& what)
      : std::runtime_error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

/// Unsigned big-endian integer field inside a payload; physical = raw * scale.
struct SignalField {
  std::string name;
  std::size_t byte_offset = 0;
  std::size_t width = 2;
  double scale = 1.0;
  std::string unit;

  std::uint64_t max_raw() const { return width >= 8 ? ~0ULL : (1ULL << (8 * width)) - 1; }
  /// Rounds to the nearest raw value and clamps to the field range.
  void write(std::vector<std::uint8_t>& payload, double physical) const;
  std::optional<double> read(std::span<const std::uint8_t> payload) const;
};

struct MessageDef {
  std::string name;
  FrameId id;
  std::string producer;
  std::uint8_t dlc = 8;
  std::uint32_t period_ms = 100;
  bool app_checksum = false;
  std::vector<SignalField> fields;

  const SignalField* field(std::string_view name) const;
};

class SignalDictionary {
 public:
  static constexpr const char* kSchema = "cansim-signals/1";

  static SignalDictionary load(const std::filesystem::path& path);
  static SignalDictionary parse(std::string_view json_text, const std::string& origin = "signals");

  const MessageDef* by_name(std::string_view name) const;
  const MessageDef* by_id(FrameId id) const;
  const std::vector<MessageDef>& messages() const { return messages_; }

 private:
  std::vector<MessageDef> messages_;
};

struct AdjacencyEdge {
  std::string from;
  std::string to;
  std::string data;
};

/// ECU data-flow graph plus the virtual edges through the human driver.
class AdjacencyGraph {
 public:
  static constexpr const char* kSchema = "cansim-adjacency/1";

  struct Ecu {
    std::string name;
    bool safety_critical = false;
    bool is_virtual = false;
  };

  static AdjacencyGraph load(const std::filesystem::path& path);
  static AdjacencyGraph parse(std::string_view json_text, const std::string& origin = "adjacency");

  const std::vector<Ecu>& ecus() const { return ecus_; }
  const std::vector<AdjacencyEdge>& edges() const { return edges_; }
  const std::vector<AdjacencyEdge>& virtual_edges() const { return virtual_edges_; }

  const Ecu* ecu(std::string_view name) const;
  bool is_safety_critical(std::string_view name) const;
  bool has_edge(std::string_view from, std::string_view to, std::string_view data, bool include_virtual) const;
  bool has_path(std::string_view from, std::string_view to, bool include_virtual) const;

 private:
  std::vector<Ecu> ecus_;
  std::vector<AdjacencyEdge> edges_;
  std::vector<AdjacencyEdge> virtual_edges_;
};

}  // namespace cansim
