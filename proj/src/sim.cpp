#include "sre/sim.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace sre {

Cycles SimMetrics::max_latency() const {
  Cycles best = 0;
  for (const auto& r : instances)
    if (auto l = r.latency()) best = std::max(best, *l);
  return best;
}

OccupancySample SimMetrics::final_occupancy() const {
  if (occupancy.empty()) return {};
  return occupancy.back();
}

std::string render_firing(const Firing& f) {
  std::ostringstream os;
  os << f.time << " fire " << to_string(f.timer.kind) << ' ' << f.timer.a << ' ' << f.timer.b;
  return os.str();
}

std::optional<TimerKind> timer_kind_from_string(std::string_view s) {
  for (auto k : {TimerKind::SourceTick, TimerKind::SourceEmit, TimerKind::DirectorDone, TimerKind::SchedDone,
                 TimerKind::KernelDone, TimerKind::TransferDone})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

std::vector<Firing> parse_trace_firings(const std::vector<std::string>& lines) {
  std::vector<Firing> out;
  for (const auto& line : lines) {
    std::istringstream is(line);
    Firing f;
    std::string word;
    std::string kind;
    if (!(is >> f.time >> word) || word != "fire") continue;
    if (!(is >> kind >> f.timer.a >> f.timer.b)) continue;
    auto k = timer_kind_from_string(kind);
    if (!k) continue;
    f.timer.kind = *k;
    out.push_back(f);
  }
  return out;
}

namespace {

int priority(TimerKind k) {
  switch (k) {
    case TimerKind::KernelDone:
    case TimerKind::TransferDone: return 1;
    case TimerKind::SchedDone:
    case TimerKind::DirectorDone: return 2;
    case TimerKind::SourceTick:
    case TimerKind::SourceEmit: return 3;
  }
  return 4;
}

struct Scheduled {
  TimerId id;
  std::uint64_t generation = 0;
  Cycles lo = 0;
  Cycles hi = 0;
  Cycles fire_at = 0;
};

class SimHost final : public MachineHost {
 public:
  SimHost(const Model& model, const SimOptions& opts, SimMetrics& metrics, std::vector<std::string>& trace)
      : model_(model),
        opts_(opts),
        metrics_(metrics),
        trace_(trace),
        reset_at_(static_cast<std::size_t>(model.clocks().size()), 0),
        generation_(reset_at_.size(), 0),
        record_of_(static_cast<std::size_t>(model.config().max_parallel), -1) {}

  Cycles now = 0;
  const Machine* machine = nullptr;

  void reset_clock(int slot) override {
    reset_at_[static_cast<std::size_t>(slot)] = now;
    ++generation_[static_cast<std::size_t>(slot)];
  }
  void release_clock(int slot) override { ++generation_[static_cast<std::size_t>(slot)]; }
  bool earlier_deadline(int a, Cycles da, int b, Cycles db) override {
    const Cycles abs_a = reset_at_[static_cast<std::size_t>(model_.clocks().life(a))] + da;
    const Cycles abs_b = reset_at_[static_cast<std::size_t>(model_.clocks().life(b))] + db;
    return abs_a < abs_b;
  }

  void on_event(const Event& e) override {
    switch (e.kind) {
      case EventKind::Admit: {
        InstanceRecord r;
        r.global_tag = e.global_tag;
        r.source = e.source;
        r.instance_index = e.instance;
        r.admit_cc = now;
        record_of_[static_cast<std::size_t>(e.instance)] = static_cast<int>(metrics_.instances.size());
        metrics_.instances.push_back(r);
        break;
      }
      case EventKind::Release:
        metrics_.instances[static_cast<std::size_t>(record_of_[static_cast<std::size_t>(e.instance)])].release_cc = now;
        break;
      case EventKind::Drop:
        metrics_.instances[static_cast<std::size_t>(record_of_[static_cast<std::size_t>(e.instance)])].dropped = e.fault;
        ++metrics_.drops;
        break;
      case EventKind::Reject:
        ++metrics_.rejects;
        ++metrics_.drops;
        break;
      default: break;
    }
    if (!opts_.keep_trace) return;
    std::ostringstream os;
    os << now << " event " << to_string(e.kind);
    if (e.instance >= 0) os << " g=" << e.global_tag << " inst=" << e.instance;
    if (e.source >= 0) os << " src=" << e.source;
    if (e.kernel >= 0) os << " l=" << e.kernel + 1 << " stage=" << e.stage;
    if (e.other >= 0) os << " to=" << e.other;
    if (e.kind == EventKind::Fault || e.kind == EventKind::Drop || e.kind == EventKind::Reject)
      os << " fault=" << to_string(e.fault);
    trace_.push_back(os.str());
    if (auto m = message_for(e)) trace_.push_back(std::to_string(now) + " msg " + to_text(*m));
  }

  Cycles clock(int slot) const { return now - reset_at_[static_cast<std::size_t>(slot)]; }
  Cycles reset_at(int slot) const { return reset_at_[static_cast<std::size_t>(slot)]; }
  std::uint64_t generation(int slot) const { return generation_[static_cast<std::size_t>(slot)]; }

 private:
  std::optional<Message> message_for(const Event& e) const {
    const auto& sc = model_.scenario();
    switch (e.kind) {
      case EventKind::Arrive: {
        ControlPacket p;
        p.global_tag = machine ? machine->next_global_tag() : 0;
        p.container_id = static_cast<std::uint16_t>(model_.container_of_source(e.source));
        p.source_id = static_cast<std::uint16_t>(e.source);
        p.arrival_time_cc = static_cast<std::uint64_t>(now);
        return p;
      }
      case EventKind::Dispatch: {
        DffDescriptor d;
        d.global_tag = e.global_tag;
        d.container_id = static_cast<std::uint16_t>(model_.container_of_source(e.source));
        d.instance_index = static_cast<std::uint8_t>(e.instance);
        const int dff = sc.sources[static_cast<std::size_t>(e.source)].dff_index;
        d.microflow_count = static_cast<std::uint8_t>(model_.dffs()[static_cast<std::size_t>(dff)].kernels.size());
        return d;
      }
      case EventKind::Release: return DffRelease{e.global_tag};
      case EventKind::Reject:
      case EventKind::Drop: {
        ErrorPacket p;
        p.record.code = error_code(e.fault);
        p.record.global_tag = e.kind == EventKind::Reject ? 0xFFFFFFFFU : e.global_tag;
        p.record.timestamp_cc = static_cast<std::uint64_t>(now);
        return p;
      }
      default: return std::nullopt;
    }
  }

  const Model& model_;
  const SimOptions& opts_;
  SimMetrics& metrics_;
  std::vector<std::string>& trace_;
  std::vector<Cycles> reset_at_;
  std::vector<std::uint64_t> generation_;
  std::vector<int> record_of_;
};

OccupancySample sample_of(const Machine& m, Cycles t) {
  OccupancySample s;
  s.time = t;
  for (const auto& st : m.stages()) {
    s.compute += st.compute_used;
    s.memory += st.memory_used;
    s.buffer_bytes += st.buffer_used;
  }
  s.in_flight = m.live_count();
  return s;
}

}  // namespace

SimResult run_simulation(const Scenario& scenario, const SimOptions& options) {
  return run_simulation(std::make_shared<const Model>(scenario), options);
}

SimResult run_simulation(std::shared_ptr<const Model> model, const SimOptions& options) {
  SimResult res{{}, {}, {}, Machine(model)};
  auto& metrics = res.metrics;
  Machine& m = res.final_state;
  SimHost host(*model, options, metrics, res.trace);
  host.machine = &m;
  std::mt19937_64 rng(options.seed);
  const auto& L = model->clocks();
  const Cycles time_limit = 4 * model->latency_bound() + 1;

  auto record_sample = [&] {
    auto s = sample_of(m, host.now);
    if (metrics.occupancy.empty() || metrics.occupancy.back().compute != s.compute ||
        metrics.occupancy.back().memory != s.memory || metrics.occupancy.back().buffer_bytes != s.buffer_bytes ||
        metrics.occupancy.back().in_flight != s.in_flight) {
      if (!metrics.occupancy.empty() && metrics.occupancy.back().time == s.time)
        metrics.occupancy.back() = s;
      else
        metrics.occupancy.push_back(s);
    }
    metrics.max_in_flight = std::max(metrics.max_in_flight, s.in_flight);
    metrics.max_director_queue = std::max(metrics.max_director_queue, static_cast<int>(m.director().queue.size()));
    for (const auto& st : m.stages())
      metrics.max_ready_queue = std::max(metrics.max_ready_queue, static_cast<int>(st.ready.size()));
  };

  metrics.occupancy.push_back(sample_of(m, 0));
  m.start(host);
  record_sample();

  std::vector<Scheduled> pending;
  std::size_t script_pos = 0;

  auto check = [&]() -> bool {
    if (options.check_invariants)
      if (auto v = m.check_invariants()) {
        metrics.invariant_violation = *v;
        return false;
      }
    return true;
  };

  while (true) {
    if (m.halted()) {
      metrics.terminal_fault = m.halt_reason();
      break;
    }
    // refresh the timer schedule
    auto timers = m.timers();
    std::vector<Scheduled> next;
    for (const auto& t : timers) {
      auto it = std::find_if(pending.begin(), pending.end(), [&](const Scheduled& s) { return s.id == t.id; });
      if (it != pending.end() && it->generation == host.generation(t.slot) && it->lo == t.lo && it->hi == t.hi) {
        next.push_back(*it);
        continue;
      }
      Scheduled s{t.id, host.generation(t.slot), t.lo, t.hi, 0};
      Cycles offset = t.lo;
      if (t.hi > t.lo && !options.script) {
        switch (options.runtime) {
          case RuntimeMode::Min: offset = t.lo; break;
          case RuntimeMode::Max: offset = t.hi; break;
          case RuntimeMode::Uniform: offset = std::uniform_int_distribution<Cycles>(t.lo, t.hi)(rng); break;
        }
        // arrival jitter is always sampled; the runtime mode only governs kernels
        if (t.id.kind == TimerKind::SourceEmit && options.runtime != RuntimeMode::Uniform)
          offset = std::uniform_int_distribution<Cycles>(t.lo, t.hi)(rng);
      }
      s.fire_at = host.reset_at(t.slot) + offset;
      next.push_back(s);
    }
    pending = std::move(next);

    // timeouts of live instances
    std::optional<std::pair<Cycles, int>> timeout;
    if (options.drop_on_timeout) {
      for (int i = 0; i < static_cast<int>(m.instances().size()); ++i) {
        const auto& is = m.instances()[static_cast<std::size_t>(i)];
        if (!is.live) continue;
        const Cycles at = host.reset_at(L.life(i)) + model->dffs()[is.dff].timeout + 1;
        if (!timeout || at < timeout->first) timeout = std::make_pair(at, i);
      }
    }

    if (options.script) {
      if (script_pos >= options.script->size()) {
        if (options.run_until) {
          for (const auto& t : timers)
            if (host.reset_at(t.slot) + t.hi < *options.run_until) {
              metrics.script_diverged = true;
              metrics.script_error = "timer " + std::string(to_string(t.id.kind)) + " must fire before the end time";
            }
          host.now = std::max(host.now, *options.run_until);
        }
        break;
      }
      const Firing f = (*options.script)[script_pos++];
      auto it = std::find_if(timers.begin(), timers.end(), [&](const Timer& t) { return t.id == f.timer; });
      std::string err;
      if (it == timers.end()) {
        err = "timer not enabled";
      } else if (f.time < host.now) {
        err = "time goes backwards";
      } else {
        const Cycles v = f.time - host.reset_at(it->slot);
        if (v < it->lo || v > it->hi) err = "clock outside the timer window";
        for (const auto& t : timers)
          if (host.reset_at(t.slot) + t.hi < f.time) err = "another timer expired first";
      }
      if (!err.empty()) {
        metrics.script_diverged = true;
        metrics.script_error = "step " + std::to_string(script_pos - 1) + ": " + err;
        break;
      }
      host.now = f.time;
      if (options.keep_trace) res.trace.push_back(render_firing(f));
      res.firings.push_back(f);
      m.fire(f.timer, host);
      record_sample();
      if (!check()) break;
      continue;
    }

    if (pending.empty() && !timeout) {
      metrics.stalled = !m.finished() && !m.halted();
      break;
    }
    // earliest by (time, priority, list order)
    const Scheduled* best = nullptr;
    for (const auto& p : pending)
      if (!best || p.fire_at < best->fire_at ||
          (p.fire_at == best->fire_at && priority(p.id.kind) < priority(best->id.kind)))
        best = &p;
    if (timeout && (!best || timeout->first <= best->fire_at)) {
      host.now = timeout->first;
      if (host.now > time_limit) {
        metrics.stalled = true;
        break;
      }
      m.drop_instance(timeout->second, FaultKind::Timeout, host);
      record_sample();
      if (!check()) break;
      continue;
    }
    host.now = best->fire_at;
    if (host.now > time_limit) {
      metrics.stalled = true;
      break;
    }
    const Firing f{best->fire_at, best->id};
    if (options.keep_trace) res.trace.push_back(render_firing(f));
    res.firings.push_back(f);
    m.fire(f.timer, host);
    record_sample();
    if (!check()) break;
  }
  metrics.end_time = host.now;
  return res;
}

void write_metrics_csv(std::ostream& os, const SimMetrics& m) {
  os << "global_tag,admit_cc,release_cc,latency_cc\n";
  for (const auto& r : m.instances) {
    os << r.global_tag << ',' << r.admit_cc << ',';
    if (r.release_cc)
      os << *r.release_cc << ',' << *r.latency();
    else
      os << ',';
    os << '\n';
  }
}

void write_occupancy_csv(std::ostream& os, const SimMetrics& m) {
  os << "time_cc,compute_units,memory_units,buffer_bytes,in_flight\n";
  for (const auto& s : m.occupancy)
    os << s.time << ',' << s.compute << ',' << s.memory << ',' << s.buffer_bytes << ',' << s.in_flight << '\n';
}

}  // namespace sre
