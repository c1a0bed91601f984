#include "sre/machine.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace sre {

// ---------------------------------------------------------------------------
// Model

Model::Model(Scenario scenario) : scenario_(std::move(scenario)) {
  const auto& cfg = scenario_.machine;
  int max_kernels = 1;
  for (const auto& g : scenario_.dffs) {
    DffInfo d;
    d.graph = &g;
    d.container_id = g.container_id;
    d.timeout = g.timeout_cc;
    const int n = static_cast<int>(g.microflows.size());
    max_kernels = std::max(max_kernels, n);
    d.kernels.resize(static_cast<std::size_t>(n));
    for (const auto& mf : g.microflows) {
      auto& k = d.kernels[static_cast<std::size_t>(mf.local_tag - 1)];
      k.local_tag = mf.local_tag;
      k.name = mf.kernel_name;
      k.stage = mf.stage_id;
      k.rt_min = mf.runtime.min_cc;
      k.rt_max = mf.runtime.max_cc;
      k.compute_units = mf.compute_units;
      k.memory_units = mf.memory_units;
      k.deadline = g.deadline_of(mf);
    }
    // one arc per consumer input port, then one per DFF output
    std::map<std::pair<int, int>, int> arc_of_output;  // (producer tag, port) -> arc
    for (int t = 1; t <= n; ++t) {
      const auto* mf = g.find(t);
      for (const auto& in : mf->inputs) {
        ArcInfo a;
        a.consumer = t - 1;
        a.bytes = in.token_bytes;
        a.stage = mf->stage_id;
        if (in.source.owner_local_tag != 0) a.producer = in.source.owner_local_tag - 1;
        const int id = static_cast<int>(d.arcs.size());
        d.arcs.push_back(a);
        d.kernels[static_cast<std::size_t>(t - 1)].in_arcs.push_back(id);
        if (a.producer >= 0) arc_of_output[{in.source.owner_local_tag, in.source.port_index}] = id;
      }
    }
    for (int t = 1; t <= n; ++t) {
      const auto* mf = g.find(t);
      auto& k = d.kernels[static_cast<std::size_t>(t - 1)];
      for (std::size_t port = 0; port < mf->outputs.size(); ++port) {
        const auto& out = mf->outputs[port];
        if (out.sink.owner_local_tag == 0) {
          ArcInfo a;
          a.producer = t - 1;
          a.bytes = out.token_bytes;
          a.stage = mf->stage_id;
          k.out_arcs.push_back(static_cast<int>(d.arcs.size()));
          d.arcs.push_back(a);
        } else if (auto it = arc_of_output.find({t, static_cast<int>(port)}); it != arc_of_output.end()) {
          k.out_arcs.push_back(it->second);
        }
      }
    }
    for (const auto& a : d.arcs) {
      if (a.producer < 0 || a.consumer < 0) continue;
      auto& p = d.kernels[static_cast<std::size_t>(a.producer)].consumers;
      auto& c = d.kernels[static_cast<std::size_t>(a.consumer)].producers;
      if (std::find(p.begin(), p.end(), a.consumer) == p.end()) p.push_back(a.consumer);
      if (std::find(c.begin(), c.end(), a.producer) == c.end()) c.push_back(a.producer);
    }
    for (auto& k : d.kernels) {
      std::sort(k.producers.begin(), k.producers.end());
      std::sort(k.consumers.begin(), k.consumers.end());
    }
    dffs_.push_back(std::move(d));
  }

  if (scenario_.containers.empty()) {
    for (const auto& g : scenario_.dffs) {
      bool known = std::any_of(dct_.begin(), dct_.end(),
                               [&](const Container& c) { return c.container_id == g.container_id; });
      if (!known) dct_.push_back(envelope_of(g));
    }
  } else {
    dct_ = scenario_.containers;
  }

  layout_.sources = static_cast<int>(scenario_.sources.size());
  layout_.stages = static_cast<int>(cfg.stages.size());
  layout_.max_parallel = cfg.max_parallel;
  layout_.max_kernels = max_kernels;

  // Crude upper bound on any lifetime: every emission's work done serially.
  Cycles work = 0;
  Cycles last_arrival = 0;
  Cycles max_timeout = 0;
  for (const auto& src : scenario_.sources) {
    const auto& d = dffs_[static_cast<std::size_t>(src.dff_index)];
    Cycles per = cfg.director_cost_cc;
    for (const auto& k : d.kernels) per += cfg.scheduler_cost_cc + k.rt_max + cfg.dma_latency_cc;
    work += per * src.arrival.count;
    if (src.arrival.count > 0)
      last_arrival = std::max(last_arrival, src.arrival.phase_cc + src.arrival.jitter_cc +
                                                (src.arrival.count - 1) * src.arrival.period_cc);
  }
  for (const auto& d : dffs_) max_timeout = std::max(max_timeout, d.timeout);
  latency_bound_ = work + last_arrival + 1;

  ceilings_.assign(static_cast<std::size_t>(layout_.size()), 0);
  for (int s = 0; s < layout_.sources; ++s) {
    const auto& a = scenario_.sources[static_cast<std::size_t>(s)].arrival;
    ceilings_[static_cast<std::size_t>(layout_.source(s))] =
        std::max({a.phase_cc, a.period_cc, a.jitter_cc});
  }
  ceilings_[static_cast<std::size_t>(layout_.director())] =
      cfg.director_cost_cc * (cfg.director_queue_capacity + cfg.max_parallel);
  for (int st = 0; st < layout_.stages; ++st)
    ceilings_[static_cast<std::size_t>(layout_.scheduler(st))] = cfg.scheduler_cost_cc;
  Cycles rt = cfg.dma_latency_cc;
  for (const auto& d : dffs_)
    for (const auto& k : d.kernels) rt = std::max(rt, k.rt_max);
  for (int i = 0; i < layout_.max_parallel; ++i) {
    ceilings_[static_cast<std::size_t>(layout_.life(i))] = std::max(max_timeout + 1, latency_bound_);
    for (int k = 0; k < layout_.max_kernels; ++k) ceilings_[static_cast<std::size_t>(layout_.kernel(i, k))] = rt;
  }
}

const Container* Model::find_container(int container_id) const {
  for (const auto& c : dct_)
    if (c.container_id == container_id) return &c;
  return nullptr;
}

int Model::container_of_source(int source) const {
  const auto& src = scenario_.sources[static_cast<std::size_t>(source)];
  return src.container_id.value_or(dffs_[static_cast<std::size_t>(src.dff_index)].container_id);
}

Cycles Model::timer_ceiling(int slot) const { return ceilings_[static_cast<std::size_t>(slot)]; }

// ---------------------------------------------------------------------------
// Names

const char* to_string(TimerKind k) {
  switch (k) {
    case TimerKind::SourceTick: return "source_tick";
    case TimerKind::SourceEmit: return "source_emit";
    case TimerKind::DirectorDone: return "director_done";
    case TimerKind::SchedDone: return "sched_done";
    case TimerKind::KernelDone: return "kernel_done";
    case TimerKind::TransferDone: return "transfer_done";
  }
  return "?";
}

const char* to_string(FaultKind k) {
  switch (k) {
    case FaultKind::DctUnsupported: return "dct_unsupported";
    case FaultKind::MaxParallel: return "max_parallel";
    case FaultKind::DirectorOverflow: return "director_overflow";
    case FaultKind::NoMapping: return "no_mapping";
    case FaultKind::ReadyQueueOverflow: return "ready_queue_overflow";
    case FaultKind::Infeasible: return "infeasible";
    case FaultKind::DoubleAssign: return "double_assign";
    case FaultKind::WriteBeforeRead: return "write_before_read";
    case FaultKind::Timeout: return "timeout";
  }
  return "?";
}

ErrorCode error_code(FaultKind k) {
  switch (k) {
    case FaultKind::DctUnsupported: return ErrorCode::DctUnsupported;
    case FaultKind::MaxParallel: return ErrorCode::MaxParallelExceeded;
    case FaultKind::DirectorOverflow:
    case FaultKind::ReadyQueueOverflow: return ErrorCode::QueueOverflow;
    case FaultKind::NoMapping:
    case FaultKind::Infeasible:
    case FaultKind::DoubleAssign: return ErrorCode::ResourceInfeasible;
    case FaultKind::WriteBeforeRead: return ErrorCode::WriteBeforeRead;
    case FaultKind::Timeout: return ErrorCode::Timeout;
  }
  return ErrorCode::Ok;
}

bool is_terminal(FaultKind k) {
  return k == FaultKind::ReadyQueueOverflow || k == FaultKind::DoubleAssign || k == FaultKind::WriteBeforeRead;
}

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Tick: return "tick";
    case EventKind::Arrive: return "arrive";
    case EventKind::Admit: return "admit";
    case EventKind::Reject: return "reject";
    case EventKind::DirectorDone: return "director_done";
    case EventKind::Dispatch: return "dispatch";
    case EventKind::Ready: return "ready";
    case EventKind::Schedule: return "schedule";
    case EventKind::Scheduled: return "scheduled";
    case EventKind::Arm: return "arm";
    case EventKind::Alloc: return "alloc";
    case EventKind::Wait: return "wait";
    case EventKind::Complete: return "complete";
    case EventKind::Transfer: return "transfer";
    case EventKind::ControlMessage: return "control_message";
    case EventKind::Release: return "release";
    case EventKind::Drop: return "drop";
    case EventKind::Fault: return "fault";
  }
  return "?";
}

const char* to_string(KernelPhase p) {
  switch (p) {
    case KernelPhase::Idle: return "idle";
    case KernelPhase::Queued: return "queued";
    case KernelPhase::Scheduling: return "scheduling";
    case KernelPhase::Armed: return "armed";
    case KernelPhase::PoolWait: return "pool_wait";
    case KernelPhase::Running: return "running";
    case KernelPhase::Draining: return "draining";
    case KernelPhase::Done: return "done";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Machine

namespace {

bool started(KernelPhase p) {
  return p == KernelPhase::Running || p == KernelPhase::Draining || p == KernelPhase::Done;
}

bool completed(KernelPhase p) { return p == KernelPhase::Draining || p == KernelPhase::Done; }

template <typename Q>
void erase_refs(Q& q, int inst) {
  q.erase(std::remove_if(q.begin(), q.end(), [&](const KernelRef& r) { return r.inst == inst; }), q.end());
}

}  // namespace

Machine::Machine(std::shared_ptr<const Model> model) : model_(std::move(model)) {
  const auto& m = *model_;
  sources_.resize(m.scenario().sources.size());
  instances_.resize(static_cast<std::size_t>(m.config().max_parallel));
  for (auto& inst : instances_) inst.kernels.resize(static_cast<std::size_t>(m.clocks().max_kernels));
  stages_.resize(m.config().stages.size());
  global_tags_.assign(instances_.size(), 0);
}

const KernelInfo& Machine::kinfo(int inst, int k) const {
  const auto& is = instances_[static_cast<std::size_t>(inst)];
  return model_->dffs()[is.dff].kernels[static_cast<std::size_t>(k)];
}

Event Machine::event(EventKind kind, int inst, int k) const {
  Event e;
  e.kind = kind;
  e.instance = inst;
  e.kernel = k;
  if (inst >= 0) {
    e.global_tag = global_tags_[static_cast<std::size_t>(inst)];
    e.source = instances_[static_cast<std::size_t>(inst)].source;
    if (k >= 0) e.stage = kinfo(inst, k).stage;
  }
  return e;
}

void Machine::start(MachineHost& host) {
  for (std::size_t s = 0; s < sources_.size(); ++s) {
    const auto& a = model_->scenario().sources[s].arrival;
    if (a.count == 0) {
      sources_[s].phase = SourcePhase::Finished;
      continue;
    }
    host.reset_clock(model_->clocks().source(static_cast<int>(s)));
  }
}

std::vector<Timer> Machine::timers() const {
  std::vector<Timer> out;
  if (halted_) return out;
  const auto& m = *model_;
  const auto& L = m.clocks();
  const auto& cfg = m.config();
  for (std::size_t s = 0; s < sources_.size(); ++s) {
    const auto& a = m.scenario().sources[s].arrival;
    const int slot = L.source(static_cast<int>(s));
    const int si = static_cast<int>(s);
    switch (sources_[s].phase) {
      case SourcePhase::Pre: out.push_back({{TimerKind::SourceTick, si, 0}, slot, a.phase_cc, a.phase_cc}); break;
      case SourcePhase::AwaitEmit: out.push_back({{TimerKind::SourceEmit, si, 0}, slot, 0, a.jitter_cc}); break;
      case SourcePhase::Emitted:
        out.push_back({{TimerKind::SourceTick, si, 0}, slot, a.period_cc, a.period_cc});
        break;
      case SourcePhase::Finished: break;
    }
  }
  if (!director_.queue.empty())
    out.push_back({{TimerKind::DirectorDone, 0, 0}, L.director(), director_.accumulated, director_.accumulated});
  for (std::size_t st = 0; st < stages_.size(); ++st)
    if (stages_[st].scheduling)
      out.push_back({{TimerKind::SchedDone, static_cast<int>(st), 0},
                     L.scheduler(static_cast<int>(st)),
                     cfg.scheduler_cost_cc,
                     cfg.scheduler_cost_cc});
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    const auto& is = instances_[i];
    if (!is.live || !is.dispatched) continue;
    const auto& d = m.dffs()[is.dff];
    for (std::size_t k = 0; k < d.kernels.size(); ++k) {
      const int slot = L.kernel(static_cast<int>(i), static_cast<int>(k));
      if (is.kernels[k].phase == KernelPhase::Running)
        out.push_back({{TimerKind::KernelDone, static_cast<int>(i), static_cast<int>(k)},
                       slot,
                       d.kernels[k].rt_min,
                       d.kernels[k].rt_max});
      else if (is.kernels[k].phase == KernelPhase::Draining)
        out.push_back({{TimerKind::TransferDone, static_cast<int>(i), static_cast<int>(k)},
                       slot,
                       cfg.dma_latency_cc,
                       cfg.dma_latency_cc});
    }
  }
  return out;
}

void Machine::fault(FaultKind kind, int inst, int k, MachineHost& host) {
  Event e = event(EventKind::Fault, inst, k);
  e.fault = kind;
  host.on_event(e);
  if (is_terminal(kind)) halted_ = kind;
}

void Machine::fire(const TimerId& id, MachineHost& host) {
  if (halted_) return;
  const auto& m = *model_;
  const auto& L = m.clocks();
  switch (id.kind) {
    case TimerKind::SourceTick: {
      auto& src = sources_[static_cast<std::size_t>(id.a)];
      const auto& a = m.scenario().sources[static_cast<std::size_t>(id.a)].arrival;
      host.reset_clock(L.source(id.a));
      Event e;
      e.kind = EventKind::Tick;
      e.source = id.a;
      host.on_event(e);
      if (a.jitter_cc > 0) {
        src.phase = SourcePhase::AwaitEmit;
      } else {
        emit(id.a, host);
      }
      break;
    }
    case TimerKind::SourceEmit: emit(id.a, host); break;
    case TimerKind::DirectorDone: {
      host.on_event(event(EventKind::DirectorDone));
      auto queue = std::move(director_.queue);
      director_.queue.clear();
      director_.accumulated = 0;
      host.release_clock(L.director());
      for (auto inst : queue) dispatch(inst, host);
      break;
    }
    case TimerKind::SchedDone: finish_scheduling(id.a, host); break;
    case TimerKind::KernelDone: complete_kernel(id.a, id.b, host); break;
    case TimerKind::TransferDone: {
      host.on_event(event(EventKind::Transfer, id.a, id.b));
      host.release_clock(L.kernel(id.a, id.b));
      land_outputs(id.a, id.b, host);
      break;
    }
  }
  settle(host);
}

void Machine::emit(int source, MachineHost& host) {
  const auto& m = *model_;
  const auto& cfg = m.config();
  const auto& L = m.clocks();
  auto& src = sources_[static_cast<std::size_t>(source)];
  const auto& sc = m.scenario().sources[static_cast<std::size_t>(source)];
  ++src.emitted;
  if (src.emitted >= sc.arrival.count) {
    src.phase = SourcePhase::Finished;
    host.release_clock(L.source(source));
  } else {
    src.phase = SourcePhase::Emitted;
  }

  Event arrive;
  arrive.kind = EventKind::Arrive;
  arrive.source = source;
  host.on_event(arrive);

  auto reject = [&](FaultKind why) {
    Event e;
    e.kind = EventKind::Reject;
    e.source = source;
    e.fault = why;
    host.on_event(e);
    e.kind = EventKind::Fault;
    host.on_event(e);
    if (is_terminal(why)) halted_ = why;
  };

  if (!m.find_container(m.container_of_source(source))) return reject(FaultKind::DctUnsupported);
  if (live_count() >= cfg.max_parallel) return reject(FaultKind::MaxParallel);
  if (static_cast<int>(director_.queue.size()) >= cfg.director_queue_capacity)
    return reject(FaultKind::DirectorOverflow);

  int inst = 0;
  while (instances_[static_cast<std::size_t>(inst)].live) ++inst;
  auto& is = instances_[static_cast<std::size_t>(inst)];
  is.live = true;
  is.dispatched = false;
  is.dff = static_cast<std::uint8_t>(sc.dff_index);
  is.source = static_cast<std::uint8_t>(source);
  is.feature_vector = 0;
  is.kernels_done = 0;
  is.tokens = 0;
  is.reserved = 0;
  global_tags_[static_cast<std::size_t>(inst)] = next_tag_++;
  host.reset_clock(L.life(inst));
  host.on_event(event(EventKind::Admit, inst));

  if (director_.queue.empty()) host.reset_clock(L.director());
  director_.queue.push_back(static_cast<std::uint8_t>(inst));
  director_.accumulated += cfg.director_cost_cc;
  if (cfg.director_cost_cc == 0 && director_.accumulated == 0) {
    // zero-cost director: dispatch in the same instant
    host.on_event(event(EventKind::DirectorDone));
    auto queue = std::move(director_.queue);
    director_.queue.clear();
    host.release_clock(L.director());
    for (auto i : queue) dispatch(i, host);
  }
}

void Machine::dispatch(int inst, MachineHost& host) {
  const auto& m = *model_;
  const auto& cfg = m.config();
  auto& is = instances_[static_cast<std::size_t>(inst)];
  const auto& d = m.dffs()[is.dff];
  const Container* c = m.find_container(m.container_of_source(is.source));

  // Tetris: first feature vector whose envelope fits the uncommitted pool.
  int chosen = -1;
  if (!container_fit(*d.graph, *c)) {
    chosen = -1;
  } else if (!cfg.envelope_admission) {
    chosen = 0;
  } else {
    for (std::size_t f = 0; f < c->feature_vectors.size() && chosen < 0; ++f) {
      bool ok = true;
      for (const auto& env : c->feature_vectors[f].stages) {
        if (env.stage_id < 0 || env.stage_id >= static_cast<int>(stages_.size())) {
          ok = false;
          break;
        }
        const auto& st = stages_[static_cast<std::size_t>(env.stage_id)];
        const auto& sc = cfg.stages[static_cast<std::size_t>(env.stage_id)];
        if (st.compute_committed + env.compute_units > sc.compute_units ||
            st.memory_committed + env.memory_units > sc.memory_units ||
            st.buffer_committed + env.buffer_bytes > sc.buffer_bytes)
          ok = false;
      }
      if (ok) chosen = static_cast<int>(f);
    }
  }
  if (chosen < 0) {
    drop_instance(inst, FaultKind::NoMapping, host);
    return;
  }
  is.feature_vector = static_cast<std::uint8_t>(chosen);
  if (cfg.envelope_admission)
    for (const auto& env : c->feature_vectors[static_cast<std::size_t>(chosen)].stages) {
      auto& st = stages_[static_cast<std::size_t>(env.stage_id)];
      st.compute_committed += env.compute_units;
      st.memory_committed += env.memory_units;
      st.buffer_committed += env.buffer_bytes;
    }
  is.dispatched = true;
  host.on_event(event(EventKind::Dispatch, inst));

  // data is assumed present when the DFF is triggered
  for (std::size_t a = 0; a < d.arcs.size(); ++a)
    if (d.arcs[a].producer < 0) {
      is.tokens |= std::uint64_t{1} << a;
      reserve_arc(inst, static_cast<int>(a));
    }
  for (std::size_t k = 0; k < d.kernels.size(); ++k) {
    auto& ks = is.kernels[k];
    ks.phase = KernelPhase::Idle;
    ks.rdy = ks.sched = false;
    ks.holds_memory = false;
    // ks.run is deliberately left alone: a correct machine cleared it.
  }
  for (std::size_t k = 0; k < d.kernels.size() && !halted_; ++k) evaluate_readiness(inst, static_cast<int>(k), host);
}

bool Machine::inputs_available(int inst, int k) const {
  const auto& is = instances_[static_cast<std::size_t>(inst)];
  for (int a : kinfo(inst, k).in_arcs)
    if (!(is.tokens >> a & 1U)) return false;
  return true;
}

bool Machine::producers_started(int inst, int k) const {
  const auto& is = instances_[static_cast<std::size_t>(inst)];
  for (int p : kinfo(inst, k).producers)
    if (!started(is.kernels[static_cast<std::size_t>(p)].phase)) return false;
  return true;
}

void Machine::evaluate_readiness(int inst, int k, MachineHost& host) {
  auto& is = instances_[static_cast<std::size_t>(inst)];
  auto& ks = is.kernels[static_cast<std::size_t>(k)];
  if (ks.phase != KernelPhase::Idle) return;
  const bool ready = model_->config().scheduler_overlap ? producers_started(inst, k) : inputs_available(inst, k);
  if (!ready) return;
  const int stage = kinfo(inst, k).stage;
  auto& st = stages_[static_cast<std::size_t>(stage)];
  if (static_cast<int>(st.ready.size()) >= model_->config().stages[static_cast<std::size_t>(stage)].ready_queue_capacity) {
    fault(FaultKind::ReadyQueueOverflow, inst, k, host);
    return;
  }
  ks.rdy = true;
  ks.phase = KernelPhase::Queued;
  st.ready.push_back({static_cast<std::uint8_t>(inst), static_cast<std::uint8_t>(k)});
  host.on_event(event(EventKind::Ready, inst, k));
}

bool Machine::try_schedule(int stage, MachineHost& host) {
  auto& st = stages_[static_cast<std::size_t>(stage)];
  if (halted_ || st.scheduling || st.ready.empty()) return false;
  const auto& cfg = model_->config();
  std::size_t best = 0;
  if (cfg.policy == Policy::Edf) {
    for (std::size_t i = 1; i < st.ready.size(); ++i) {
      const auto& c = st.ready[i];
      const auto& b = st.ready[best];
      if (host.earlier_deadline(c.inst, kinfo(c.inst, c.k).deadline, b.inst, kinfo(b.inst, b.k).deadline)) best = i;
    }
  }
  KernelRef ref = st.ready[best];
  st.ready.erase(st.ready.begin() + static_cast<std::ptrdiff_t>(best));
  auto& ks = instances_[ref.inst].kernels[ref.k];
  ks.sched = true;
  ks.phase = KernelPhase::Scheduling;
  st.scheduling = ref;
  host.on_event(event(EventKind::Schedule, ref.inst, ref.k));
  if (cfg.scheduler_cost_cc == 0) {
    finish_scheduling(stage, host);
  } else {
    host.reset_clock(model_->clocks().scheduler(stage));
  }
  return true;
}

void Machine::finish_scheduling(int stage, MachineHost& host) {
  auto& st = stages_[static_cast<std::size_t>(stage)];
  KernelRef ref = *st.scheduling;
  st.scheduling.reset();
  host.release_clock(model_->clocks().scheduler(stage));
  auto& ks = instances_[ref.inst].kernels[ref.k];
  host.on_event(event(EventKind::Scheduled, ref.inst, ref.k));
  if (inputs_available(ref.inst, ref.k)) {
    ks.phase = KernelPhase::PoolWait;
    st.alloc.push_back(ref);
  } else {
    ks.phase = KernelPhase::Armed;
    host.on_event(event(EventKind::Arm, ref.inst, ref.k));
  }
}

bool Machine::try_allocate(int stage, MachineHost& host) {
  auto& st = stages_[static_cast<std::size_t>(stage)];
  const auto& sc = model_->config().stages[static_cast<std::size_t>(stage)];
  bool progressed = false;
  while (!halted_ && !st.alloc.empty()) {
    KernelRef ref = st.alloc.front();
    const auto& ki = kinfo(ref.inst, ref.k);
    if (ki.compute_units > sc.compute_units || ki.memory_units > sc.memory_units) {
      fault(FaultKind::Infeasible, ref.inst, ref.k, host);
      drop_instance(ref.inst, FaultKind::Infeasible, host);
      progressed = true;
      continue;
    }
    if (st.compute_used + ki.compute_units > sc.compute_units || st.memory_used + ki.memory_units > sc.memory_units)
      break;  // head-of-line blocking until a completion frees resources
    st.alloc.pop_front();
    auto& is = instances_[ref.inst];
    auto& ks = is.kernels[ref.k];
    if (ks.run) {
      fault(FaultKind::DoubleAssign, ref.inst, ref.k, host);
      return true;
    }
    st.compute_used += ki.compute_units;
    st.memory_used += ki.memory_units;
    ks.run = true;
    ks.holds_memory = true;
    ks.phase = KernelPhase::Running;
    for (int a : ki.out_arcs) reserve_arc(ref.inst, a);
    host.reset_clock(model_->clocks().kernel(ref.inst, ref.k));
    host.on_event(event(EventKind::Alloc, ref.inst, ref.k));
    progressed = true;
    if (model_->config().scheduler_overlap)
      for (int c : ki.consumers) evaluate_readiness(ref.inst, c, host);
  }
  return progressed;
}

void Machine::free_kernel_memory(int inst, int k) {
  auto& ks = instances_[static_cast<std::size_t>(inst)].kernels[static_cast<std::size_t>(k)];
  if (!ks.holds_memory) return;
  ks.holds_memory = false;
  if (model_->config().faults.leak_memory) return;
  stages_[static_cast<std::size_t>(kinfo(inst, k).stage)].memory_used -= kinfo(inst, k).memory_units;
}

void Machine::reserve_arc(int inst, int arc) {
  auto& is = instances_[static_cast<std::size_t>(inst)];
  const auto bit = std::uint64_t{1} << arc;
  if (is.reserved & bit) return;
  is.reserved |= bit;
  const auto& a = model_->dffs()[is.dff].arcs[static_cast<std::size_t>(arc)];
  stages_[static_cast<std::size_t>(a.stage)].buffer_used += a.bytes;
}

void Machine::unreserve_arc(int inst, int arc) {
  auto& is = instances_[static_cast<std::size_t>(inst)];
  const auto bit = std::uint64_t{1} << arc;
  if (!(is.reserved & bit)) return;
  is.reserved &= ~bit;
  const auto& a = model_->dffs()[is.dff].arcs[static_cast<std::size_t>(arc)];
  stages_[static_cast<std::size_t>(a.stage)].buffer_used -= a.bytes;
}

void Machine::complete_kernel(int inst, int k, MachineHost& host) {
  const auto& cfg = model_->config();
  const auto& L = model_->clocks();
  auto& is = instances_[static_cast<std::size_t>(inst)];
  auto& ks = is.kernels[static_cast<std::size_t>(k)];
  const auto& ki = kinfo(inst, k);

  if (cfg.faults.rerun_local_tag == ki.local_tag) {
    // defective completion: the kernel starts over, keeping its resources
    host.reset_clock(L.kernel(inst, k));
    host.on_event(event(EventKind::Alloc, inst, k));
    return;
  }

  auto& st = stages_[static_cast<std::size_t>(ki.stage)];
  st.compute_used -= ki.compute_units;
  if (cfg.memory_hold == MemoryHold::WhileRunning || ki.consumers.empty()) free_kernel_memory(inst, k);
  ks.rdy = ks.sched = false;
  if (!cfg.faults.skip_run_clear) ks.run = false;
  ++is.kernels_done;
  host.on_event(event(EventKind::Complete, inst, k));

  // inputs are consumed: release their buffers and token-table entries
  for (int a : ki.in_arcs) {
    unreserve_arc(inst, a);
    is.tokens &= ~(std::uint64_t{1} << a);
  }
  if (cfg.memory_hold == MemoryHold::UntilConsumed) {
    for (int p : ki.producers) {
      const auto& pi = kinfo(inst, p);
      bool all = true;
      for (int c : pi.consumers)
        if (c != k && !completed(is.kernels[static_cast<std::size_t>(c)].phase)) all = false;
      if (all) free_kernel_memory(inst, p);
    }
  }

  if (cfg.faults.lose_completion_tag == ki.local_tag) {
    ks.phase = KernelPhase::Done;
    host.release_clock(L.kernel(inst, k));
    return;  // outputs never become visible
  }
  if (cfg.dma_latency_cc > 0) {
    ks.phase = KernelPhase::Draining;
    host.reset_clock(L.kernel(inst, k));
    return;
  }
  host.release_clock(L.kernel(inst, k));
  land_outputs(inst, k, host);
}

void Machine::land_outputs(int inst, int k, MachineHost& host) {
  auto& is = instances_[static_cast<std::size_t>(inst)];
  const auto& d = model_->dffs()[is.dff];
  const auto& ki = kinfo(inst, k);
  is.kernels[static_cast<std::size_t>(k)].phase = KernelPhase::Done;
  for (int a : ki.out_arcs) {
    const auto bit = std::uint64_t{1} << a;
    if (is.tokens & bit) {
      fault(FaultKind::WriteBeforeRead, inst, k, host);
      return;
    }
    is.tokens |= bit;
    const auto& arc = d.arcs[static_cast<std::size_t>(a)];
    if (arc.consumer >= 0 && d.kernels[static_cast<std::size_t>(arc.consumer)].stage != ki.stage) {
      Event e = event(EventKind::ControlMessage, inst, k);
      e.other = d.kernels[static_cast<std::size_t>(arc.consumer)].stage;
      host.on_event(e);
    }
  }
  for (int c : ki.consumers) {
    auto& cs = is.kernels[static_cast<std::size_t>(c)];
    if (cs.phase == KernelPhase::Armed && inputs_available(inst, c)) {
      cs.phase = KernelPhase::PoolWait;
      stages_[static_cast<std::size_t>(d.kernels[static_cast<std::size_t>(c)].stage)].alloc.push_back(
          {static_cast<std::uint8_t>(inst), static_cast<std::uint8_t>(c)});
    } else {
      evaluate_readiness(inst, c, host);
    }
    if (halted_) return;
  }
  if (is.kernels_done == d.kernels.size() &&
      std::all_of(is.kernels.begin(), is.kernels.begin() + static_cast<std::ptrdiff_t>(d.kernels.size()),
                  [](const KernelState& s) { return s.phase == KernelPhase::Done; }))
    release_instance(inst, host);
}

void Machine::release_instance(int inst, MachineHost& host) {
  host.on_event(event(EventKind::Release, inst));
  clear_instance(inst, host);
}

void Machine::clear_instance(int inst, MachineHost& host) {
  const auto& m = *model_;
  const auto& cfg = m.config();
  const auto& L = m.clocks();
  auto& is = instances_[static_cast<std::size_t>(inst)];
  const auto& d = m.dffs()[is.dff];
  if (is.dispatched && cfg.envelope_admission) {
    const Container* c = m.find_container(m.container_of_source(is.source));
    for (const auto& env : c->feature_vectors[is.feature_vector].stages) {
      auto& st = stages_[static_cast<std::size_t>(env.stage_id)];
      st.compute_committed -= env.compute_units;
      st.memory_committed -= env.memory_units;
      st.buffer_committed -= env.buffer_bytes;
    }
  }
  for (std::size_t k = 0; k < d.kernels.size(); ++k) {
    auto& ks = is.kernels[k];
    if (ks.phase == KernelPhase::Running) {
      stages_[static_cast<std::size_t>(d.kernels[k].stage)].compute_used -= d.kernels[k].compute_units;
    }
    free_kernel_memory(inst, static_cast<int>(k));
    if (ks.phase == KernelPhase::Running || ks.phase == KernelPhase::Draining)
      host.release_clock(L.kernel(inst, static_cast<int>(k)));
    const bool keep_run = cfg.faults.skip_run_clear && ks.run;
    ks = KernelState{};
    ks.run = keep_run;
  }
  for (std::size_t a = 0; a < d.arcs.size(); ++a) unreserve_arc(inst, static_cast<int>(a));
  is.tokens = 0;
  is.reserved = 0;
  is.live = false;
  is.dispatched = false;
  is.kernels_done = 0;
  is.feature_vector = 0;
  host.release_clock(L.life(inst));
}

void Machine::drop_instance(int inst, FaultKind reason, MachineHost& host) {
  auto& is = instances_[static_cast<std::size_t>(inst)];
  if (!is.live) return;
  const auto& L = model_->clocks();
  if (!is.dispatched) {
    auto& q = director_.queue;
    q.erase(std::remove(q.begin(), q.end(), static_cast<std::uint8_t>(inst)), q.end());
  }
  for (std::size_t st = 0; st < stages_.size(); ++st) {
    auto& s = stages_[st];
    erase_refs(s.ready, inst);
    erase_refs(s.alloc, inst);
    if (s.scheduling && s.scheduling->inst == inst) {
      s.scheduling.reset();
      host.release_clock(L.scheduler(static_cast<int>(st)));
    }
  }
  Event e = event(EventKind::Drop, inst);
  e.fault = reason;
  host.on_event(e);
  clear_instance(inst, host);
  // the director keeps its accumulated work; only the queue entry goes away
  if (director_.queue.empty() && director_.accumulated > 0) {
    director_.accumulated = 0;
    host.release_clock(L.director());
  }
  settle(host);
}

void Machine::settle(MachineHost& host) {
  bool changed = true;
  while (changed && !halted_) {
    changed = false;
    for (int st = 0; st < static_cast<int>(stages_.size()) && !halted_; ++st) {
      changed |= try_allocate(st, host);
      changed |= try_schedule(st, host);
    }
  }
}

// ---------------------------------------------------------------------------
// Queries on the discrete state

int Machine::live_count() const {
  return static_cast<int>(std::count_if(instances_.begin(), instances_.end(), [](const auto& i) { return i.live; }));
}

bool Machine::finished() const {
  for (const auto& s : sources_)
    if (s.phase != SourcePhase::Finished) return false;
  return live_count() == 0;
}

std::vector<int> Machine::active_clocks() const {
  const auto& L = model_->clocks();
  std::vector<int> out{0};
  for (std::size_t s = 0; s < sources_.size(); ++s)
    if (sources_[s].phase != SourcePhase::Finished) out.push_back(L.source(static_cast<int>(s)));
  if (!director_.queue.empty()) out.push_back(L.director());
  for (std::size_t st = 0; st < stages_.size(); ++st)
    if (stages_[st].scheduling) out.push_back(L.scheduler(static_cast<int>(st)));
  for (std::size_t i = 0; i < instances_.size(); ++i)
    if (instances_[i].live) out.push_back(L.life(static_cast<int>(i)));
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    const auto& is = instances_[i];
    if (!is.live) continue;
    for (std::size_t k = 0; k < is.kernels.size(); ++k)
      if (is.kernels[k].phase == KernelPhase::Running || is.kernels[k].phase == KernelPhase::Draining)
        out.push_back(L.kernel(static_cast<int>(i), static_cast<int>(k)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Machine::encode(std::vector<std::int32_t>& out) const {
  out.push_back(halted_ ? 1 + static_cast<int>(*halted_) : 0);
  for (const auto& s : sources_) out.push_back(static_cast<int>(s.phase) | s.emitted << 4);
  out.push_back(static_cast<std::int32_t>(director_.accumulated));
  out.push_back(static_cast<std::int32_t>(director_.queue.size()));
  for (auto q : director_.queue) out.push_back(q);
  for (const auto& is : instances_) {
    if (!is.live) {
      // a stale run flag (fault injection) survives release, so keep it visible
      std::int32_t stale = 0;
      for (std::size_t k = 0; k < is.kernels.size(); ++k)
        if (is.kernels[k].run) stale |= 1 << k;
      out.push_back(stale << 1);
      continue;
    }
    out.push_back(1 | is.dispatched << 1 | is.dff << 2 | is.source << 10 | is.feature_vector << 18);
    out.push_back(static_cast<std::int32_t>(is.tokens & 0xffffffffU));
    out.push_back(static_cast<std::int32_t>(is.tokens >> 32));
    out.push_back(static_cast<std::int32_t>(is.reserved & 0xffffffffU));
    out.push_back(static_cast<std::int32_t>(is.reserved >> 32));
    for (const auto& ks : is.kernels)
      out.push_back(static_cast<int>(ks.phase) | ks.rdy << 4 | ks.sched << 5 | ks.run << 6 | ks.holds_memory << 7);
  }
  for (const auto& st : stages_) {
    out.push_back(static_cast<std::int32_t>(st.ready.size()));
    for (const auto& r : st.ready) out.push_back(r.inst << 8 | r.k);
    out.push_back(st.scheduling ? (st.scheduling->inst << 8 | st.scheduling->k) : -1);
    out.push_back(static_cast<std::int32_t>(st.alloc.size()));
    for (const auto& r : st.alloc) out.push_back(r.inst << 8 | r.k);
    out.push_back(st.compute_used);
    out.push_back(st.memory_used);
  }
}

std::optional<std::string> Machine::check_invariants() const {
  const auto& m = *model_;
  const auto& cfg = m.config();
  std::ostringstream os;
  if (live_count() > cfg.max_parallel) return "more live instances than max_parallel";
  std::set<std::uint32_t> tags;
  for (std::size_t i = 0; i < instances_.size(); ++i)
    if (instances_[i].live && !tags.insert(global_tags_[i]).second) return "duplicate global tag among live instances";

  for (std::size_t st = 0; st < stages_.size(); ++st) {
    const auto& s = stages_[st];
    const auto& sc = cfg.stages[st];
    int cu = 0;
    int mu = 0;
    std::int64_t buf = 0;
    for (std::size_t i = 0; i < instances_.size(); ++i) {
      const auto& is = instances_[i];
      if (!is.live) continue;
      const auto& d = m.dffs()[is.dff];
      for (std::size_t k = 0; k < d.kernels.size(); ++k) {
        if (d.kernels[k].stage != static_cast<int>(st)) continue;
        const auto& ks = is.kernels[k];
        if (ks.phase == KernelPhase::Running) cu += d.kernels[k].compute_units;
        if (ks.holds_memory) mu += d.kernels[k].memory_units;
        if (!cfg.faults.skip_run_clear && ((ks.run && !ks.sched) || (ks.sched && !ks.rdy)))
          return "flag order violated for instance " + std::to_string(i) + " kernel " + std::to_string(k + 1);
      }
      for (std::size_t a = 0; a < d.arcs.size(); ++a)
        if ((is.reserved >> a & 1U) && d.arcs[a].stage == static_cast<int>(st)) buf += d.arcs[a].bytes;
    }
    if (cu != s.compute_used) {
      os << "stage " << st << ": compute in use " << s.compute_used << " but running kernels hold " << cu;
      return os.str();
    }
    if (!cfg.faults.leak_memory && mu != s.memory_used) {
      os << "stage " << st << ": memory in use " << s.memory_used << " but kernels hold " << mu;
      return os.str();
    }
    if (buf != s.buffer_used) {
      os << "stage " << st << ": buffer bytes " << s.buffer_used << " but reservations total " << buf;
      return os.str();
    }
    if (s.compute_used < 0 || s.compute_used > sc.compute_units || s.memory_used < 0 ||
        (!cfg.faults.leak_memory && s.memory_used > sc.memory_units))
      return "stage " + std::to_string(st) + ": pool occupancy out of range";
    for (const auto& r : s.ready)
      if (instances_[r.inst].kernels[r.k].phase != KernelPhase::Queued) return "ready queue holds a non-queued kernel";
    for (const auto& r : s.alloc)
      if (instances_[r.inst].kernels[r.k].phase != KernelPhase::PoolWait) return "alloc queue holds a non-waiting kernel";
  }
  return std::nullopt;
}

}  // namespace sre
