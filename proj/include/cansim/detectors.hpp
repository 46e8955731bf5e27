#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cansim/frame.hpp"
#include "cansim/icewall.hpp"
#include "cansim/trace.hpp"

namespace cansim {

/// What a bus-wide detector sees: arrival time and id of each delivered frame.
struct Observation {
  std::uint64_t timestamp_us = 0;
  FrameId id;
};

/// Delivered frames of a trace, in trace order.
std::vector<Observation> observations(const std::vector<TraceRecord>& records);

struct Alert {
  std::uint64_t timestamp_us = 0;
  std::string detector;
  std::string detail;

  friend bool operator==(const Alert&, const Alert&) = default;
};

/// Half-open time span in microseconds.
struct TimeSpan {
  std::uint64_t begin_us = 0;
  std::uint64_t end_us = 0;
};

struct FrequencyConfig {
  Micros window{100'000};
  double tolerance = 2.0;
  /// Anomalous windows in a row needed before an alert.
  std::uint32_t consecutive = 3;

  /// Throws std::invalid_argument for a non-positive window, tolerance < 1 or consecutive == 0.
  void validate() const;
};

struct FrequencyBaseline {
  FrequencyConfig config;
  /// Mean frames per window over the training windows.
  std::map<FrameId, double> expected;
  std::uint64_t windows = 0;
};

/// Windows are tumbling and aligned to multiples of the window length; only
/// windows lying wholly inside `span` count. Throws std::invalid_argument when
/// the span holds no frames or fewer than three windows.
FrequencyBaseline freq_train(const std::vector<Observation>& trace, TimeSpan span, FrequencyConfig config = {});

/// A window is anomalous when some id exceeds expected * tolerance or an id
/// unseen in training appears. One alert per run of anomalous windows, at the
/// end of the window completing `consecutive`.
std::vector<Alert> freq_detect(const std::vector<Observation>& trace, TimeSpan span, const FrequencyBaseline& baseline);

/// Which id has been seen directly after which during training.
class TransitionMatrix {
 public:
  bool contains(FrameId from, FrameId to) const { return pairs_.contains({from, to}); }
  const std::set<FrameId>& ids() const { return ids_; }
  std::size_t transitions() const { return pairs_.size(); }

 private:
  friend TransitionMatrix tm_train(const std::vector<Observation>& trace);
  std::set<FrameId> ids_;
  std::set<std::pair<FrameId, FrameId>> pairs_;
};

/// Throws std::invalid_argument on an empty trace.
TransitionMatrix tm_train(const std::vector<Observation>& trace);

/// One alert per consecutive pair absent from the matrix, at the time of the second frame.
std::vector<Alert> tm_detect(const std::vector<Observation>& trace, const TransitionMatrix& matrix);

/// Frames of `trace` inside `span`.
std::vector<Observation> within(const std::vector<Observation>& trace, TimeSpan span);

/// DetectorAlert trace record for an alert.
TraceRecord alert_record(const Alert& alert, std::uint32_t bitrate);

}  // namespace cansim
