#pragma once

// Discrete-event simulator over the machine semantics. Timer windows are
// resolved by sampling (or by a replay script); events that fall on the same
// cycle fire in a fixed priority: timeouts, completions, scheduler/director,
// sources.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sre/machine.hpp"

namespace sre {

enum class RuntimeMode { Uniform, Min, Max };

/// One timer firing, the unit of a replayable trace.
struct Firing {
  Cycles time = 0;
  TimerId timer;
  friend bool operator==(const Firing&, const Firing&) = default;
};

struct SimOptions {
  std::uint64_t seed = 1;
  RuntimeMode runtime = RuntimeMode::Uniform;
  bool drop_on_timeout = true;
  bool check_invariants = true;
  bool keep_trace = true;
  /// Replay these firings in order instead of sampling.
  std::optional<std::vector<Firing>> script;
  /// With a script: keep advancing time to this instant after the last
  /// scripted firing (no further timers fire).
  std::optional<Cycles> run_until;
};

struct InstanceRecord {
  std::uint32_t global_tag = 0;
  int source = 0;
  int instance_index = 0;
  Cycles admit_cc = 0;
  std::optional<Cycles> release_cc;
  std::optional<FaultKind> dropped;  // reason when not released
  std::optional<Cycles> latency() const {
    if (!release_cc) return std::nullopt;
    return *release_cc - admit_cc;
  }
};

struct OccupancySample {
  Cycles time = 0;
  int compute = 0;
  int memory = 0;
  std::int64_t buffer_bytes = 0;
  int in_flight = 0;
  friend bool operator==(const OccupancySample&, const OccupancySample&) = default;
};

struct SimMetrics {
  std::vector<InstanceRecord> instances;  // admission order
  std::vector<OccupancySample> occupancy;
  int max_director_queue = 0;
  int max_ready_queue = 0;
  int max_in_flight = 0;
  int drops = 0;  // rejected at admission or dropped later
  int rejects = 0;
  Cycles end_time = 0;
  std::optional<FaultKind> terminal_fault;
  std::optional<std::string> invariant_violation;
  bool stalled = false;  // live work left but nothing can fire
  bool script_diverged = false;
  std::string script_error;

  Cycles max_latency() const;
  /// Occupancy counters at the end of the run (all stages).
  OccupancySample final_occupancy() const;
};

struct SimResult {
  SimMetrics metrics;
  std::vector<std::string> trace;  // one line per firing/event/message
  std::vector<Firing> firings;
  Machine final_state;
};

SimResult run_simulation(std::shared_ptr<const Model> model, const SimOptions& options);
SimResult run_simulation(const Scenario& scenario, const SimOptions& options);

/// CSV renderers (with header line).
void write_metrics_csv(std::ostream& os, const SimMetrics& m);
void write_occupancy_csv(std::ostream& os, const SimMetrics& m);

/// Extracts the firing script from a trace produced by run_simulation.
std::vector<Firing> parse_trace_firings(const std::vector<std::string>& lines);
std::string render_firing(const Firing& f);
std::optional<TimerKind> timer_kind_from_string(std::string_view s);

}  // namespace sre
