#pragma once

// Untimed core of one SRE: Director, per-stage dependency resolver,
// scheduler and pool manager. Every timed aspect is expressed as a timer on a
// clock slot; the host (simulator or checker engine) owns the clock values
// and decides when timers fire. Everything a timer firing sets in motion is
// processed to quiescence in zero time, so the discrete state alone decides
// what happens next.

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sre/graph.hpp"
#include "sre/messages.hpp"
#include "sre/scenario.hpp"

namespace sre {

// ---------------------------------------------------------------------------
// Compiled, immutable scenario

struct KernelInfo {
  int local_tag = 0;
  std::string name;
  int stage = 0;
  Cycles rt_min = 0;
  Cycles rt_max = 0;
  int compute_units = 0;
  int memory_units = 0;
  Cycles deadline = 0;
  std::vector<int> in_arcs;     // token arcs consumed
  std::vector<int> out_arcs;    // token arcs produced
  std::vector<int> producers;   // kernel indices
  std::vector<int> consumers;   // kernel indices
};

struct ArcInfo {
  int producer = -1;  // kernel index, -1 = DFF input
  int consumer = -1;  // kernel index, -1 = DFF output
  std::int64_t bytes = 0;
  int stage = 0;      // stage whose buffer holds the token
};

struct DffInfo {
  const DffGraph* graph = nullptr;
  int container_id = 0;
  std::vector<KernelInfo> kernels;  // index = local_tag - 1
  std::vector<ArcInfo> arcs;
  Cycles timeout = 0;
};

/// Fixed clock-slot layout (slot 0 is the reference clock used by zones).
struct ClockLayout {
  int sources = 0;
  int stages = 0;
  int max_parallel = 0;
  int max_kernels = 0;

  int source(int s) const { return 1 + s; }
  int director() const { return 1 + sources; }
  int scheduler(int stage) const { return 2 + sources + stage; }
  int life(int inst) const { return 2 + sources + stages + inst; }
  int kernel(int inst, int k) const { return 2 + sources + stages + max_parallel + inst * max_kernels + k; }
  int size() const { return 2 + sources + stages + max_parallel * (1 + max_kernels); }
};

class Model {
 public:
  explicit Model(Scenario scenario);

  const Scenario& scenario() const { return scenario_; }
  const MachineConfig& config() const { return scenario_.machine; }
  const std::vector<DffInfo>& dffs() const { return dffs_; }
  const ClockLayout& clocks() const { return layout_; }
  /// Containers known to the Director (the DCT).
  const std::vector<Container>& dct() const { return dct_; }
  const Container* find_container(int container_id) const;
  int container_of_source(int source) const;
  /// Largest value a clock slot is ever compared against by a timer.
  Cycles timer_ceiling(int slot) const;
  /// Upper bound on any instance lifetime in a run that does not stall.
  Cycles latency_bound() const { return latency_bound_; }

 private:
  Scenario scenario_;
  std::vector<DffInfo> dffs_;
  std::vector<Container> dct_;
  ClockLayout layout_;
  std::vector<Cycles> ceilings_;
  Cycles latency_bound_ = 0;
};

// ---------------------------------------------------------------------------
// Timers and events

enum class TimerKind : std::uint8_t {
  SourceTick,    // a = source; nominal emission instant reached
  SourceEmit,    // a = source; control packet arrives (jitter window)
  DirectorDone,  // accumulated Director processing drained
  SchedDone,     // a = stage
  KernelDone,    // a = instance, b = kernel
  TransferDone,  // a = instance, b = kernel; outputs landed after DMA hop
};

const char* to_string(TimerKind k);

struct TimerId {
  TimerKind kind = TimerKind::SourceTick;
  int a = 0;
  int b = 0;
  friend bool operator==(const TimerId&, const TimerId&) = default;
};

/// A pending timed event: fires when clock `slot` lies in [lo, hi]; it
/// must fire (or be disabled) before the clock passes hi.
struct Timer {
  TimerId id;
  int slot = 0;
  Cycles lo = 0;
  Cycles hi = 0;
};

enum class FaultKind : std::uint8_t {
  DctUnsupported,
  MaxParallel,
  DirectorOverflow,
  NoMapping,
  ReadyQueueOverflow,
  Infeasible,
  DoubleAssign,
  WriteBeforeRead,
  Timeout,  // raised by hosts, never by the machine itself
};

const char* to_string(FaultKind k);
ErrorCode error_code(FaultKind k);
/// Faults after which the machine halts (no further timers).
bool is_terminal(FaultKind k);

enum class EventKind : std::uint8_t {
  Tick,
  Arrive,
  Admit,
  Reject,
  DirectorDone,
  Dispatch,
  Ready,
  Schedule,
  Scheduled,
  Arm,
  Alloc,
  Wait,
  Complete,
  Transfer,
  ControlMessage,
  Release,
  Drop,
  Fault,
};

const char* to_string(EventKind k);

struct Event {
  EventKind kind = EventKind::Tick;
  int source = -1;
  int instance = -1;
  int kernel = -1;  // kernel index (local tag - 1)
  int stage = -1;
  int other = -1;   // target stage for control messages
  std::uint32_t global_tag = 0;
  FaultKind fault = FaultKind::DctUnsupported;
};

/// Host callbacks: clock control, clock-dependent decisions, event sink.
class MachineHost {
 public:
  virtual ~MachineHost() = default;
  virtual void reset_clock(int slot) = 0;
  virtual void release_clock(int slot) = 0;
  /// True iff instance a's absolute deadline (admission + da) is strictly
  /// earlier than instance b's (admission + db).
  virtual bool earlier_deadline(int inst_a, Cycles da, int inst_b, Cycles db) = 0;
  virtual void on_event(const Event& e) = 0;
};

// ---------------------------------------------------------------------------
// Discrete state

enum class KernelPhase : std::uint8_t { Idle, Queued, Scheduling, Armed, PoolWait, Running, Draining, Done };

const char* to_string(KernelPhase p);

struct KernelState {
  KernelPhase phase = KernelPhase::Idle;
  bool rdy = false;
  bool sched = false;
  bool run = false;
  bool holds_memory = false;
  friend bool operator==(const KernelState&, const KernelState&) = default;
};

struct InstanceState {
  bool live = false;
  bool dispatched = false;
  std::uint8_t dff = 0;
  std::uint8_t source = 0;
  std::uint8_t feature_vector = 0;
  std::uint8_t kernels_done = 0;
  std::uint64_t tokens = 0;    // availability bit per arc (token table)
  std::uint64_t reserved = 0;  // buffer reservation bit per arc
  std::vector<KernelState> kernels;
  friend bool operator==(const InstanceState&, const InstanceState&) = default;
};

struct KernelRef {
  std::uint8_t inst = 0;
  std::uint8_t k = 0;
  friend bool operator==(const KernelRef&, const KernelRef&) = default;
};

struct StageState {
  std::deque<KernelRef> ready;
  std::optional<KernelRef> scheduling;
  std::deque<KernelRef> alloc;
  int compute_used = 0;
  int memory_used = 0;
  std::int64_t buffer_used = 0;
  // envelopes committed by dispatched instances (feature-vector admission)
  int compute_committed = 0;
  int memory_committed = 0;
  std::int64_t buffer_committed = 0;
  friend bool operator==(const StageState&, const StageState&) = default;
};

enum class SourcePhase : std::uint8_t { Pre, AwaitEmit, Emitted, Finished };

struct SourceState {
  SourcePhase phase = SourcePhase::Pre;
  std::uint16_t emitted = 0;
  friend bool operator==(const SourceState&, const SourceState&) = default;
};

struct DirectorState {
  std::vector<std::uint8_t> queue;  // admitted, awaiting behavioural dispatch
  Cycles accumulated = 0;           // processing owed in the current busy period
  friend bool operator==(const DirectorState&, const DirectorState&) = default;
};

class Machine {
 public:
  explicit Machine(std::shared_ptr<const Model> model);

  const Model& model() const { return *model_; }
  std::shared_ptr<const Model> model_ptr() const { return model_; }

  /// Starts every source clock and settles. Call once before firing timers.
  void start(MachineHost& host);

  std::vector<Timer> timers() const;
  /// Fires a pending timer and settles the machine.
  void fire(const TimerId& id, MachineHost& host);
  /// Aborts a live instance, returning every resource it holds.
  void drop_instance(int inst, FaultKind reason, MachineHost& host);

  /// Appends a canonical encoding of the discrete state (global tags excluded).
  void encode(std::vector<std::int32_t>& out) const;
  /// Clock slots whose value matters in the current state.
  std::vector<int> active_clocks() const;

  bool finished() const;  // nothing pending anywhere
  bool halted() const { return halted_.has_value(); }
  std::optional<FaultKind> halt_reason() const { return halted_; }
  int live_count() const;
  std::uint32_t global_tag(int inst) const { return global_tags_[static_cast<std::size_t>(inst)]; }
  std::uint32_t next_global_tag() const { return next_tag_; }

  const std::vector<InstanceState>& instances() const { return instances_; }
  const std::vector<StageState>& stages() const { return stages_; }
  const std::vector<SourceState>& sources() const { return sources_; }
  const DirectorState& director() const { return director_; }

  /// Internal-consistency checks (conservation, flag ordering, tag
  /// uniqueness). Returns a description of the first violation, if any.
  std::optional<std::string> check_invariants() const;

  friend bool operator==(const Machine& a, const Machine& b) {
    return a.sources_ == b.sources_ && a.director_ == b.director_ && a.instances_ == b.instances_ &&
           a.stages_ == b.stages_ && a.halted_ == b.halted_;
  }

 private:
  void emit(int source, MachineHost& host);
  void dispatch(int inst, MachineHost& host);
  void evaluate_readiness(int inst, int k, MachineHost& host);
  bool inputs_available(int inst, int k) const;
  bool producers_started(int inst, int k) const;
  void complete_kernel(int inst, int k, MachineHost& host);
  void land_outputs(int inst, int k, MachineHost& host);
  void release_instance(int inst, MachineHost& host);
  void clear_instance(int inst, MachineHost& host);
  void settle(MachineHost& host);
  bool try_allocate(int stage, MachineHost& host);
  bool try_schedule(int stage, MachineHost& host);
  void finish_scheduling(int stage, MachineHost& host);
  void free_kernel_memory(int inst, int k);
  void reserve_arc(int inst, int arc);
  void unreserve_arc(int inst, int arc);
  void fault(FaultKind kind, int inst, int k, MachineHost& host);
  const KernelInfo& kinfo(int inst, int k) const;
  Event event(EventKind kind, int inst = -1, int k = -1) const;

  std::shared_ptr<const Model> model_;
  std::vector<SourceState> sources_;
  DirectorState director_;
  std::vector<InstanceState> instances_;
  std::vector<StageState> stages_;
  std::vector<std::uint32_t> global_tags_;
  std::uint32_t next_tag_ = 0;
  std::optional<FaultKind> halted_;
};

}  // namespace sre
