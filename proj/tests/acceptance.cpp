// Runs acceptance criteria 1-10 and prints one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "cansim/runner.hpp"
#include "support/oracles.hpp"

using namespace cansim;
using namespace std::chrono_literals;

namespace {

const std::filesystem::path kRoot(CANSIM_SOURCE_DIR);

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  void fail(const std::string& why) {
    if (ok) detail.str("");
    ok = false;
    detail << why << "; ";
  }
  template <class T>
  Outcome& note(const T& v) {
    if (ok) detail << v;
    return *this;
  }
};

Scenario scenario(const std::string& name) { return load_scenario(kRoot / "scenarios" / (name + ".json")); }

std::size_t stuffed_end(const BitStream& s) {
  return static_cast<std::size_t>(std::find(s.wire_fields.begin(), s.wire_fields.end(), Field::CrcDelimiter) -
                                  s.wire_fields.begin());
}

bool delivered_by(const TraceRecord& r, const std::vector<std::string>& names, const std::string& node) {
  return r.kind == TraceKind::Delivered && r.node && names.at(r.node->index) == node;
}

void codec_roundtrip(Outcome& o) {
  std::mt19937_64 rng(1);
  int failures = 0, runs = 0;
  for (int i = 0; i < 10'000; ++i) {
    const auto f = oracle::random_frame(rng);
    const auto s = encode_frame(f);
    const auto d = decode_frame(s);
    if (!std::holds_alternative<DataFrame>(d) || std::get<DataFrame>(d) != f) ++failures;
    if (oracle::has_six_run(s.bits, 0, stuffed_end(s))) ++runs;
  }
  if (failures) o.fail(std::to_string(failures) + " frames did not round trip");
  if (runs) o.fail(std::to_string(runs) + " stuffed regions contain a six-run");
  o.note("10000 random frames, 0 failures, 0 six-runs");
}

void crc_oracle(Outcome& o) {
  std::mt19937_64 rng(2);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<int> bits(1 + rng() % 100);
    for (auto& b : bits) b = static_cast<int>(rng() & 1);
    if (compute_crc15(oracle::to_levels(bits)) != oracle::crc15_long_division(bits)) ++mismatches;
  }
  if (mismatches) o.fail(std::to_string(mismatches) + " of 1000 random inputs disagree with long division");

  const auto f = DataFrame::data(FrameId::standard(0x2A5), {0xDE, 0xAD, 0xBE, 0xEF});
  const auto input = oracle::crc_input_bits(f);
  const auto base = compute_crc15(oracle::to_levels(input));
  int undetected = 0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    auto flipped = input;
    flipped[i] ^= 1;
    const auto crc = compute_crc15(oracle::to_levels(flipped));
    if (crc == base || crc != oracle::crc15_long_division(flipped)) ++undetected;
  }
  const auto wire = encode_frame(f);
  const auto end = stuffed_end(wire);
  for (std::size_t i = 0; i < end; ++i) {
    auto bits = wire.bits;
    bits[i] = opposite(bits[i]);
    if (!std::holds_alternative<DecodeError>(decode_frame(bits))) ++undetected;
  }
  if (undetected) o.fail(std::to_string(undetected) + " single-bit flips went undetected");
  o.note("1000 random inputs match; ").note(input.size()).note(" crc-input flips and ").note(end).note(
      " wire flips all detected");
}

void arbitration_oracle(Outcome& o) {
  std::mt19937_64 rng(3);
  int wrong = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 1 + rng() % 8;
    std::vector<DataFrame> frames;
    while (frames.size() < n) {
      auto f = oracle::random_frame(rng);
      const auto bits = oracle::arbitration_bits(f);
      if (std::none_of(frames.begin(), frames.end(),
                       [&](const DataFrame& g) { return oracle::arbitration_bits(g) == bits; })) {
        frames.push_back(std::move(f));
      }
    }
    Bus bus;
    for (std::size_t i = 0; i < frames.size(); ++i) bus.offer(bus.attach("n" + std::to_string(i)), frames[i]);
    bus.attach("listener");
    const auto records = bus.step(4'000);
    const auto first = std::find_if(records.begin(), records.end(),
                                    [](const TraceRecord& r) { return r.kind == TraceKind::Delivered; });
    if (first == records.end() || *first->frame != frames[oracle::arbitration_winner(frames)]) ++wrong;
  }
  if (wrong) o.fail(std::to_string(wrong) + " of 1000 contender sets picked the wrong winner");

  Bus bus;
  const auto remote = bus.attach("remote");
  const auto data = bus.attach("data");
  bus.offer(remote, DataFrame::remote(FrameId::standard(0x123), 2));
  bus.offer(data, DataFrame::data(FrameId::standard(0x123), {1, 2}));
  const auto records = bus.step(1'000);
  const auto first = std::find_if(records.begin(), records.end(),
                                  [](const TraceRecord& r) { return r.kind == TraceKind::Delivered; });
  if (first == records.end() || first->node != data) o.fail("remote frame beat the data frame");
  o.note("1000 contender sets match the oracle; data frame beats remote frame");
}

void confinement(Outcome& o) {
  NodeErrorState s;
  for (int i = 1; i <= 32; ++i) {
    s = on_transmit_error(s);
    const auto want = i < 16 ? ErrorMode::ErrorActive : i < 32 ? ErrorMode::ErrorPassive : ErrorMode::BusOff;
    if (s.mode() != want) o.fail("after " + std::to_string(i) + " errors mode is " + to_string(s.mode()));
  }

  Bus bus;
  const auto tx = bus.attach("alone");
  bus.offer(tx, DataFrame::data(FrameId::standard(0x321), {0x11}));
  auto records = bus.step(200'000);
  const auto errors = std::count_if(records.begin(), records.end(),
                                    [](const TraceRecord& r) { return r.kind == TraceKind::ErrorFrame; });
  if (errors != 32) o.fail("lone node reported " + std::to_string(errors) + " errors before bus-off");
  if (bus.error_state(tx).mode() != ErrorMode::BusOff) o.fail("lone node is not bus-off");
  const auto attempts = bus.counters(tx).attempts;
  const bool accepted = bus.offer(tx, DataFrame::data(FrameId::standard(0x321), {0x11}));
  records = bus.step(bus.now() + 100'000);
  if (accepted || !records.empty() || bus.counters(tx).attempts != attempts) {
    o.fail("bus-off node transmitted again");
  }
  o.note("16 errors -> ErrorPassive, 32 -> BusOff; lone node silent after 32 ack errors");
}

void busoff_attack(Outcome& o) {
  const auto run = run_scenario(scenario("busoff"));
  const auto& m = run.metrics;
  const auto induced = m.attacks.at(0).injected;
  if (induced != 32) o.fail(std::to_string(induced) + " induced errors");
  const auto it = m.trajectories.find("EBCM");
  if (it == m.trajectories.end()) {
    o.fail("no victim trajectory");
    return;
  }
  const auto& points = it->second;
  std::uint32_t prev = 0, steps = 0;
  std::uint64_t busoff_at = 0;
  for (const auto& p : points) {
    if (p.tec == prev) continue;
    if (p.tec != prev + 8) o.fail("victim TEC moved " + std::to_string(prev) + "->" + std::to_string(p.tec));
    prev = p.tec;
    ++steps;
    if (p.state == "BusOff" && busoff_at == 0) busoff_at = p.t_us;
  }
  if (prev != 256 || steps != 32 || busoff_at == 0) {
    o.fail("victim ended at TEC " + std::to_string(prev) + " after " + std::to_string(steps) + " steps");
  }

  const auto& names = run.names;
  std::size_t before = 0, after = 0;
  for (const auto& r : run.trace) {
    if (!delivered_by(r, names, "EBCM")) continue;
    (r.timestamp_us < busoff_at ? before : after)++;
  }
  if (before == 0) o.fail("victim never transmitted");
  if (after != 0) o.fail(std::to_string(after) + " victim frames after bus-off");
  o.note("TEC 0 -> 256 in 32 induced errors, bus-off at ")
      .note(busoff_at)
      .note(" us; ")
      .note(before)
      .note(" victim frames before, 0 after over ")
      .note((m.duration_us - busoff_at) / 1000)
      .note(" ms");
}

void spoof_defense(Outcome& o) {
  const auto open = run_scenario(scenario("spoof-acc")).metrics;
  const auto walled = run_scenario(scenario("spoof-acc-icewall")).metrics;
  if (open.spoof_success == 0) o.fail("spoof never succeeded without the icewall");
  if (walled.spoof_success != 0) o.fail(std::to_string(walled.spoof_success) + " spoofs passed the icewall");
  if (walled.false_blocks != 0) o.fail(std::to_string(walled.false_blocks) + " false blocks");
  o.note("spoof success ").note(open.spoof_success).note(" without icewall, 0 with it, 0 false blocks");
}

void learning(Outcome& o) {
  auto clean = scenario("learning-clean");
  clean.attacks.clear();
  const auto c = run_scenario(clean);
  std::size_t tcm_frames = 0;
  std::uint64_t window_end = 0;
  for (const auto& r : c.trace) {
    if (delivered_by(r, c.names, "TCM") && ++tcm_frames == 200) window_end = r.timestamp_us;
  }
  if (window_end == 0 || c.metrics.duration_us - window_end < 10'000'000) o.fail("no 10 s after the learning window");
  if (c.metrics.icewalls.at(0).mode != "Enforcing") o.fail("icewall still learning");
  if (c.metrics.false_blocks != 0) o.fail(std::to_string(c.metrics.false_blocks) + " false blocks on clean traffic");

  const auto attacked = run_scenario(scenario("learning-clean")).metrics;
  const auto& a = attacked.attacks.at(0);
  if (a.injected == 0 || a.blocked != a.injected || a.delivered != 0) {
    o.fail("spoof frames blocked " + std::to_string(a.blocked) + " of " + std::to_string(a.injected));
  }
  if (attacked.false_blocks != 0) o.fail("false blocks under attack");

  const auto poisoned = run_scenario(scenario("learning-poisoning")).metrics;
  const auto& ids = poisoned.icewalls.at(0).allowed_ids;
  const bool admitted = std::find(ids.begin(), ids.end(), FrameId::standard(0x224)) != ids.end();
  if (!admitted || poisoned.spoof_success == 0) o.fail("poisoned window did not admit the foreign id");
  o.note("0 false blocks over ")
      .note((c.metrics.duration_us - window_end) / 1000)
      .note(" ms after learning; ")
      .note(a.blocked)
      .note("/")
      .note(a.injected)
      .note(" foreign frames blocked; poisoning admits 224 (")
      .note(poisoned.spoof_success)
      .note(" spoofs delivered)");
}

void dos(Outcome& o) {
  const auto s = scenario("dos");
  const auto& attack = s.attacks.at(0);
  const auto start = static_cast<std::uint64_t>(attack.start.count());
  const auto stop = static_cast<std::uint64_t>(attack.stop->count());
  const auto victim = FrameId::standard(0x0B4);

  const auto open = run_scenario(s);
  std::size_t in_window = 0;
  for (const auto& r : open.trace) {
    if (r.kind == TraceKind::Delivered && r.frame->id == victim && r.timestamp_us >= start && r.timestamp_us < stop) {
      ++in_window;
    }
  }
  if (in_window != 0) o.fail(std::to_string(in_window) + " victim deliveries during the flood");

  const auto walled = run_scenario(scenario("dos-icewall"));
  std::size_t longest = 0;
  for (const auto& r : walled.trace) {
    if (r.kind == TraceKind::Delivered && r.frame->id == victim) longest = std::max(longest, encode_frame(*r.frame).size());
  }
  const auto bit_us = 1'000'000 / s.bus.bitrate;
  const auto bound = 2 * (longest + 3) * bit_us;
  const auto* l = walled.metrics.latency_of(victim);
  if (l == nullptr || l->max_us > bound) {
    o.fail("defended victim max latency " + std::to_string(l ? l->max_us : 0) + " us > " + std::to_string(bound));
  }
  o.note("0 victim deliveries in the flood window undefended; defended max latency ")
      .note(l ? l->max_us : 0)
      .note(" us <= ")
      .note(bound)
      .note(" us");
}

void detectors(Outcome& o) {
  auto clean = scenario("spoof-acc");
  clean.attacks.clear();
  const auto c = run_scenario(clean);
  if (!c.metrics.alerts.empty()) o.fail(std::to_string(c.metrics.alerts.size()) + " alerts on clean traffic");
  const auto obs = observations(c.trace);
  const auto train = within(obs, {0, 1'000'000});
  if (!tm_detect(train, tm_train(train)).empty()) o.fail("transition matrix alerts on its training trace");

  auto flood = clean;
  flood.detectors->transition = false;
  AttackSpec ten_x;
  ten_x.attacker = "TCM";
  ten_x.target_id = FrameId::standard(0x224);
  ten_x.payload = {0x0F, 0xA0, 0x00, 0x00};
  ten_x.period = 2ms;
  ten_x.start = 2s;
  ten_x.stop = 4s;
  flood.attacks = {ten_x};
  const auto f = run_scenario(flood).metrics;
  if (f.alerts.size() != 1 || f.alerts[0].timestamp_us != 2'300'000) {
    o.fail("10x injection raised " + std::to_string(f.alerts.size()) + " frequency alerts");
  }

  auto foreign = clean;
  foreign.detectors->frequency.reset();
  AttackSpec odd = ten_x;
  odd.target_id = FrameId::standard(0x283);
  odd.period = 100ms;
  foreign.attacks = {odd};
  const auto fr = run_scenario(foreign);
  const auto first = std::find_if(fr.trace.begin(), fr.trace.end(), [](const TraceRecord& r) {
    return r.kind == TraceKind::Delivered && r.frame->id == FrameId::standard(0x283);
  });
  const auto& alerts = fr.metrics.alerts;
  if (first == fr.trace.end() || alerts.empty() || alerts[0].timestamp_us != first->timestamp_us ||
      !alerts[0].detail.ends_with("->283")) {
    o.fail("foreign id not flagged at its first occurrence");
  }

  const auto display = run_scenario(scenario("display-spoof")).metrics;
  const auto defended = run_scenario(scenario("display-spoof-icewall")).metrics;
  if (!display.alerts.empty()) o.fail(std::to_string(display.alerts.size()) + " alerts on the display spoof");
  const auto& d = defended.attacks.at(0);
  if (d.injected == 0 || d.blocked != d.injected || defended.false_blocks != 0) {
    o.fail("icewall blocked " + std::to_string(d.blocked) + " of " + std::to_string(d.injected) + " display spoofs");
  }
  o.note("clean 0 alerts; 10x injection 1 alert at 2300000 us; foreign id flagged at ")
      .note(alerts.empty() ? 0 : alerts[0].timestamp_us)
      .note(" us; display spoof 0 alerts, icewall blocks ")
      .note(d.blocked)
      .note("/")
      .note(d.injected);
}

void determinism(Outcome& o) {
  const auto dir = std::filesystem::temp_directory_path() / "cansim-acceptance";
  std::filesystem::create_directories(dir);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  std::size_t checked = 0;
  for (const auto& entry : std::filesystem::directory_iterator(kRoot / "scenarios")) {
    const auto s = load_scenario(entry.path());
    std::string trace[2], metrics[2];
    for (int i = 0; i < 2; ++i) {
      const auto r = run_scenario(s);
      const auto t = dir / (s.name + "." + std::to_string(i) + ".log");
      const auto m = dir / (s.name + "." + std::to_string(i) + ".jsonl");
      std::ofstream(t, std::ios::binary) << format_trace(r.trace, r.names);
      std::ofstream(m, std::ios::binary) << to_jsonl(r.metrics);
      trace[i] = slurp(t);
      metrics[i] = slurp(m);
    }
    if (trace[0] != trace[1] || metrics[0] != metrics[1]) o.fail(s.name + " differs between runs");
    ++checked;
  }
  std::filesystem::remove_all(dir);
  o.note(checked).note(" scenarios, byte-identical trace and metrics files");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria = {
      {"codec roundtrip", codec_roundtrip},
      {"crc oracle equivalence", crc_oracle},
      {"arbitration oracle", arbitration_oracle},
      {"error confinement thresholds", confinement},
      {"bus-off attack reproduction", busoff_attack},
      {"spoof defense", spoof_defense},
      {"learning mode", learning},
      {"dos mitigation", dos},
      {"detector behavior", detectors},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    if (ms > 60'000) o.fail("took " + std::to_string(ms) + " ms");
    failed += o.ok ? 0 : 1;
    std::printf("%s %2zu %s: %s (%lld ms)\n", o.ok ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.str().c_str(), static_cast<long long>(ms));
  }
  return failed == 0 ? 0 : 1;
}
