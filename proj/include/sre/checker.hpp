#pragma once

// Exhaustive exploration of the machine semantics over every kernel
// runtime and arrival jitter. Two engines share the machine:
//   discrete  integer clocks, explicit states; the brute-force oracle
//   zone      difference-bound matrices over the active clocks
// One exploration answers every built-in query at once.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sre/machine.hpp"
#include "sre/sim.hpp"

namespace sre {

enum class Engine { Discrete, Zone };

enum class QueryKind {
  Deadlock,          // Q1: pending work, nothing can ever fire
  QueueOverflow,     // Q2: director/ready queue overflow or max-parallel rejection
  DoubleAssign,      // Q3: a running kernel (or a set token) is assigned again
  DeadlineMiss,      // Q4: some lifetime exceeds the timeout
  MaxInFlight,       // Q5: supremum of live instances
  Livelock,          // Q6: an instance stays live along a cycle
  WorstCaseLatency,  // supremum of admission -> release
  BestCaseLatency,   // infimum of admission -> release
};

struct Query {
  QueryKind kind = QueryKind::Deadlock;
  std::string label;
  std::optional<Cycles> timeout;  // DeadlineMiss: overrides the DFF timeouts
  std::optional<int> expect;      // MaxInFlight: fail unless the supremum equals this
};

const char* query_name(QueryKind k);
std::vector<Query> builtin_queries();

/// One query per line: `<name> [key=value ...]`, '#' comments. Names:
/// deadlock, overflow, double_assign, deadline_miss [timeout=N],
/// max_in_flight [expect=N], livelock, wcl, bcl (or q1..q6).
std::vector<Query> parse_query_list(std::string_view text);

struct QueryParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Budget {
  std::uint64_t max_states = 50'000'000;
  std::chrono::milliseconds max_time{std::chrono::minutes(10)};
};

struct CheckOptions {
  Engine engine = Engine::Zone;
  Budget budget;
  bool witnesses = true;
};

struct Witness {
  std::vector<Firing> firings;
  Cycles end_time = 0;
  int instance = -1;  // the instance the predicate is about, if any
  std::size_t loop_start = 0;  // livelock: firings from here on form the cycle
  std::string summary;
};

enum class Status { Pass, Fail, BudgetExceeded };
const char* to_string(Status s);

struct Verdict {
  Query query;
  Status status = Status::Pass;
  std::optional<Cycles> value;  // supremum / infimum / count
  bool unbounded = false;       // latency supremum is infinite
  std::optional<Witness> witness;
  std::uint64_t states = 0;
  double seconds = 0;
  std::string detail;
};

struct ExploreStats {
  std::uint64_t states = 0;
  std::uint64_t transitions = 0;
  double seconds = 0;
  bool budget_exceeded = false;
  std::string budget_reason;
};

/// Everything a single exploration learns; queries are evaluated on it.
struct Exploration {
  struct Step {
    TimerId timer;
    Cycles delay = 0;            // discrete engine: time elapsed before the firing
    std::vector<bool> decisions; // zone engine: resolved deadline comparisons
    bool is_delay = false;       // discrete engine: pure time step
  };
  std::shared_ptr<const Model> model;
  Engine engine = Engine::Zone;
  ExploreStats stats;
  std::vector<std::int64_t> parent;  // per state; -1 for the initial state
  std::vector<Step> step;            // transition from parent

  int max_in_flight = 0;
  std::int64_t max_in_flight_state = -1;

  // largest lifetime a live instance of each DFF can reach (kInfinite when
  // unbounded), with the state and instance index that reach it
  static constexpr Cycles kInfinite = INT64_MAX;
  std::vector<Cycles> sup_life;
  std::vector<std::int64_t> sup_life_state;
  std::vector<int> sup_life_instance;

  std::optional<Cycles> best_release;   // smallest latency at a release
  std::optional<Cycles> worst_release;  // largest latency at a release
  std::int64_t best_release_state = -1;
  std::int64_t worst_release_state = -1;

  struct FaultHit {
    FaultKind kind;
    std::int64_t state;  // state reached by the faulting transition
  };
  std::vector<FaultHit> faults;  // first hit per kind
  std::int64_t deadlock_state = -1;

  bool graph_kept = false;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<std::uint64_t> live_mask;  // per state

  std::vector<Step> edge_step;  // parallel to edges

  std::vector<std::int64_t> path_to(std::int64_t state) const;
  std::vector<Step> steps_to(std::int64_t state) const;
};

Exploration explore(std::shared_ptr<const Model> model, const CheckOptions& options, bool keep_graph);

/// Concrete, replayable firing times for a sequence of transitions from the
/// initial state. With `life_at_least`, the end time is the first instant at
/// which instance `instance` has lived that long.
Witness concretize(const Exploration& ex, const std::vector<Exploration::Step>& steps, int instance = -1,
                   std::optional<Cycles> life_at_least = std::nullopt);

std::vector<Verdict> check(const Exploration& ex, const std::vector<Query>& queries, const CheckOptions& options);
std::vector<Verdict> check(const Scenario& scenario, const std::vector<Query>& queries, const CheckOptions& options);

struct LatencyBounds {
  Cycles best = 0;
  Cycles worst = 0;
  bool unbounded = false;
  ExploreStats stats;
};
LatencyBounds latency_bounds(const Scenario& scenario, const CheckOptions& options);

enum class PoolResource { Compute, Memory };

struct ResourceSearch {
  std::optional<int> threshold;  // smallest passing size in [low, high]
  bool infeasible = false;       // fails even at `high`
  bool budget_exceeded = false;
  std::optional<Verdict> at_threshold;    // Q4 at the threshold (pass)
  std::optional<Verdict> below_threshold; // Q4 one unit below (fail)
  std::vector<std::pair<int, Cycles>> probes;  // size -> worst-case latency
};

/// Binary search for the smallest pool size (every stage) whose worst-case
/// latency does not exceed `timeout`.
ResourceSearch min_resource_search(const Scenario& scenario, PoolResource resource, Cycles timeout, int low,
                                   int high, const CheckOptions& options);

/// Replays a witness in the simulator (no timeout drops) and tells whether
/// the end state shows the violation the query describes.
struct ReplayOutcome {
  bool reproduced = false;
  std::string detail;
  SimMetrics metrics;
};
ReplayOutcome replay_witness(std::shared_ptr<const Model> model, const Verdict& verdict);

void write_verdicts_csv(std::ostream& os, const std::vector<Verdict>& verdicts);
std::string summarize(const std::vector<Verdict>& verdicts);

}  // namespace sre
