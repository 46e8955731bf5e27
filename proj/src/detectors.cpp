#include "cansim/detectors.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "cansim/bus.hpp"

namespace cansim {

namespace {

std::uint64_t window_us(const FrequencyConfig& c) { return static_cast<std::uint64_t>(c.window.count()); }

/// First aligned window start at or after `t`.
std::uint64_t align_up(std::uint64_t t, std::uint64_t w) { return (t + w - 1) / w * w; }

std::map<std::uint64_t, std::map<FrameId, std::uint64_t>> bucket(const std::vector<Observation>& trace,
                                                                  std::uint64_t first, std::uint64_t last,
                                                                  std::uint64_t w) {
  std::map<std::uint64_t, std::map<FrameId, std::uint64_t>> counts;
  for (const auto& o : trace) {
    if (o.timestamp_us < first || o.timestamp_us >= last) continue;
    ++counts[o.timestamp_us / w][o.id];
  }
  return counts;
}

std::string format_rate(FrameId id, std::uint64_t count, double limit) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "id=%s,count=%llu,limit=%.2f", id.to_string().c_str(),
                static_cast<unsigned long long>(count), limit);
  return buf;
}

}  // namespace

std::vector<Observation> observations(const std::vector<TraceRecord>& records) {
  std::vector<Observation> out;
  for (const auto& r : records) {
    if (r.kind == TraceKind::Delivered && r.frame) out.push_back({r.timestamp_us, r.frame->id});
  }
  return out;
}

std::vector<Observation> within(const std::vector<Observation>& trace, TimeSpan span) {
  std::vector<Observation> out;
  std::copy_if(trace.begin(), trace.end(), std::back_inserter(out), [&](const Observation& o) {
    return o.timestamp_us >= span.begin_us && o.timestamp_us < span.end_us;
  });
  return out;
}

void FrequencyConfig::validate() const {
  if (window.count() <= 0) throw std::invalid_argument("detector window must be positive");
  if (!(tolerance >= 1.0)) throw std::invalid_argument("detector tolerance must be at least 1");
  if (consecutive == 0) throw std::invalid_argument("consecutive anomalies must be at least 1");
}

FrequencyBaseline freq_train(const std::vector<Observation>& trace, TimeSpan span, FrequencyConfig config) {
  config.validate();
  const auto w = window_us(config);
  const auto first = align_up(span.begin_us, w);
  const auto last = span.end_us / w * w;
  const auto windows = last > first ? (last - first) / w : 0;
  if (windows < 3) throw std::invalid_argument("frequency training needs at least three windows");

  const auto counts = bucket(trace, first, last, w);
  if (counts.empty()) throw std::invalid_argument("frequency training trace is empty");

  FrequencyBaseline b{config, {}, windows};
  std::map<FrameId, std::uint64_t> totals;
  for (const auto& [_, per_id] : counts) {
    for (const auto& [id, n] : per_id) totals[id] += n;
  }
  for (const auto& [id, n] : totals) b.expected[id] = static_cast<double>(n) / static_cast<double>(windows);
  return b;
}

std::vector<Alert> freq_detect(const std::vector<Observation>& trace, TimeSpan span, const FrequencyBaseline& baseline) {
  const auto& config = baseline.config;
  const auto w = window_us(config);
  const auto first = align_up(span.begin_us, w);
  const auto last = span.end_us / w * w;
  const auto counts = bucket(trace, first, last, w);

  std::vector<Alert> alerts;
  std::uint32_t run = 0;
  for (auto start = first; start < last; start += w) {
    std::string reason;
    if (auto it = counts.find(start / w); it != counts.end()) {
      for (const auto& [id, n] : it->second) {
        auto e = baseline.expected.find(id);
        if (e == baseline.expected.end()) {
          reason = format_rate(id, n, 0.0) + ",unknown";
          break;
        }
        const double limit = e->second * config.tolerance;
        if (static_cast<double>(n) > limit) {
          reason = format_rate(id, n, limit);
          break;
        }
      }
    }
    if (reason.empty()) {
      run = 0;
      continue;
    }
    if (++run == config.consecutive) alerts.push_back({start + w, "frequency", reason});
  }
  return alerts;
}

TransitionMatrix tm_train(const std::vector<Observation>& trace) {
  if (trace.empty()) throw std::invalid_argument("transition training trace is empty");
  TransitionMatrix m;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    m.ids_.insert(trace[i].id);
    if (i > 0) m.pairs_.insert({trace[i - 1].id, trace[i].id});
  }
  return m;
}

std::vector<Alert> tm_detect(const std::vector<Observation>& trace, const TransitionMatrix& matrix) {
  std::vector<Alert> alerts;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const auto& a = trace[i - 1];
    const auto& b = trace[i];
    if (!matrix.contains(a.id, b.id)) {
      alerts.push_back({b.timestamp_us, "transition", a.id.to_string() + "->" + b.id.to_string()});
    }
  }
  return alerts;
}

TraceRecord alert_record(const Alert& alert, std::uint32_t bitrate) {
  TraceRecord r;
  r.kind = TraceKind::DetectorAlert;
  r.timestamp_us = alert.timestamp_us;
  r.tick = ticks_at(alert.timestamp_us, bitrate);
  r.detector = alert.detector;
  r.detail = alert.detail;
  return r;
}

}  // namespace cansim
