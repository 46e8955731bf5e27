#include "cansim/trace.hpp"

#include <cstdio>

namespace cansim {

const char* to_string(TraceKind k) {
  switch (k) {
    case TraceKind::Delivered: return "Delivered";
    case TraceKind::ArbitrationLost: return "ArbitrationLost";
    case TraceKind::ErrorFrame: return "ErrorFrame";
    case TraceKind::IcewallBlocked: return "IcewallBlocked";
    case TraceKind::DetectorAlert: return "DetectorAlert";
  }
  return "?";
}

std::string hex_bytes(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

namespace {

std::string frame_text(const DataFrame& f) {
  std::string s = f.id.to_string() + "#";
  if (f.rtr) {
    s += 'R';
    if (f.dlc > 0) s += static_cast<char>('0' + f.dlc);
  } else {
    s += hex_bytes(f.payload);
  }
  return s;
}

std::string node_name(const std::optional<NodeHandle>& h, const std::vector<std::string>& names) {
  if (!h) return "-";
  return h->index < names.size() ? names[h->index] : "node" + std::to_string(h->index);
}

}  // namespace

std::string format_trace_line(const TraceRecord& r, const std::vector<std::string>& names,
                              const std::string& interface) {
  char stamp[40];
  std::snprintf(stamp, sizeof stamp, "(%010llu.%06llu)", static_cast<unsigned long long>(r.timestamp_us / 1000000),
                static_cast<unsigned long long>(r.timestamp_us % 1000000));
  std::string line = std::string(stamp) + " " + interface + " ";
  line += r.frame ? frame_text(*r.frame) : std::string("-");

  switch (r.kind) {
    case TraceKind::Delivered:
      break;
    case TraceKind::ArbitrationLost:
      line += " !ARBLOST tx=" + node_name(r.node, names);
      break;
    case TraceKind::ErrorFrame:
      line += std::string(" !ERROR kind=") + to_string(r.error) + " reporter=" + node_name(r.node, names) +
              " tec=" + std::to_string(r.error_state.tec) + " rec=" + std::to_string(r.error_state.rec) +
              " mode=" + to_string(r.error_state.mode());
      break;
    case TraceKind::IcewallBlocked:
      line += std::string(" !BLOCKED reason=") + to_string(r.block_reason) + " node=" + node_name(r.node, names);
      break;
    case TraceKind::DetectorAlert:
      line += " !ALERT detector=" + r.detector + " detail=" + r.detail;
      break;
  }
  return line;
}

std::string format_trace(const std::vector<TraceRecord>& records, const std::vector<std::string>& names) {
  std::string out;
  for (const auto& r : records) {
    out += format_trace_line(r, names);
    out += '\n';
  }
  return out;
}

}  // namespace cansim
