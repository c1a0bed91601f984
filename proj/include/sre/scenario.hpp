#pragma once

// Machine parameters, arrival models and scenario files.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sre/graph.hpp"

namespace sre {

enum class Policy { Fcfs, Edf };

/// When a kernel's memory units return to the pool.
enum class MemoryHold {
  WhileRunning,   // at kernel completion
  UntilConsumed,  // when every consumer of its outputs has completed
};

struct StageConfig {
  int compute_units = 4;
  int memory_units = 13;
  std::int64_t buffer_bytes = std::int64_t{1} << 40;
  int ready_queue_capacity = 32;
  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

/// Deliberate defects used by negative tests. All off in a real machine.
struct FaultInjection {
  bool leak_memory = false;     // completions never return memory units
  bool skip_run_clear = false;  // completions leave the RUN flag set
  int rerun_local_tag = 0;      // this kernel restarts instead of completing
  int lose_completion_tag = 0;  // this kernel's outputs never become available
  friend bool operator==(const FaultInjection&, const FaultInjection&) = default;
  bool any() const { return leak_memory || skip_run_clear || rerun_local_tag || lose_completion_tag; }
};

struct MachineConfig {
  std::vector<StageConfig> stages{StageConfig{}};
  Cycles director_cost_cc = 100;
  Cycles scheduler_cost_cc = 123;
  int director_queue_capacity = 16;
  int max_parallel = 4;  // DFF_MAX_PAR
  Policy policy = Policy::Fcfs;
  /// When set, a kernel may be scheduled once all its producers have started;
  /// it then waits (holding no resources) until its input tokens arrive.
  bool scheduler_overlap = true;
  Cycles dma_latency_cc = 0;
  MemoryHold memory_hold = MemoryHold::WhileRunning;
  bool envelope_admission = true;
  FaultInjection faults;
  friend bool operator==(const MachineConfig&, const MachineConfig&) = default;
};

/// Quasi-periodic source: emission k happens at k*period + phase + j with
/// an independent j in [0, jitter].
struct ArrivalModel {
  Cycles period_cc = 5000;
  Cycles phase_cc = 0;
  Cycles jitter_cc = 0;
  int count = 3;
  friend bool operator==(const ArrivalModel&, const ArrivalModel&) = default;
};

struct SourceConfig {
  std::string name;
  int dff_index = 0;                  // index into Scenario::dffs
  std::optional<int> container_id;    // overrides the DFF's container id
  ArrivalModel arrival;
  friend bool operator==(const SourceConfig&, const SourceConfig&) = default;
};

struct Scenario {
  std::string name;
  std::vector<DffGraph> dffs;
  std::vector<Container> containers;  // empty: derived from each DFF
  std::vector<SourceConfig> sources;
  MachineConfig machine;

  /// Sets every DFF's timeout.
  void set_timeout(Cycles timeout_cc);
  /// Sets compute/memory of every stage.
  void set_pool(int compute_units, int memory_units);
};

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Loads a JSON scenario. DFF paths are relative to the scenario file.
/// Throws ScenarioError (bad content) or FileError (unreadable file).
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario_json(std::string_view json, const std::filesystem::path& base_dir);

/// Structural checks that do not need the graphs to be simulated.
std::vector<std::string> validate_scenario(const Scenario& s);

}  // namespace sre
