#include "sre/checker.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "sre/dbm.hpp"

namespace sre {

namespace {

using Key = std::vector<std::int32_t>;

struct KeyHash {
  std::size_t operator()(const Key& k) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ k.size();
    for (auto v : k) {
      h ^= static_cast<std::uint32_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h *= 0xff51afd7ed558ccdULL;
    }
    return static_cast<std::size_t>(h ^ (h >> 33));
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// What one transition did, as seen by the engine.
struct Outcome {
  std::vector<FaultKind> faults;
  std::vector<FaultKind> drops;
  struct Release {
    int dff;
    Cycles lo;
    Cycles hi;
  };
  std::vector<Release> releases;
};

// --------------------------------------------------------------------------
// Integer clocks

class DiscreteHost final : public MachineHost {
 public:
  DiscreteHost(const Model& model, std::vector<Cycles>& clocks, Outcome* out, const Machine* m)
      : model_(model), clocks_(clocks), out_(out), machine_(m) {}
  void reset_clock(int slot) override { clocks_[static_cast<std::size_t>(slot)] = 0; }
  void release_clock(int slot) override { clocks_[static_cast<std::size_t>(slot)] = 0; }
  bool earlier_deadline(int a, Cycles da, int b, Cycles db) override {
    const auto& L = model_.clocks();
    // absolute deadline = now - life + relative deadline
    return da - clocks_[static_cast<std::size_t>(L.life(a))] < db - clocks_[static_cast<std::size_t>(L.life(b))];
  }
  void on_event(const Event& e) override {
    if (!out_) return;
    if (e.kind == EventKind::Fault) out_->faults.push_back(e.fault);
    if (e.kind == EventKind::Drop) out_->drops.push_back(e.fault);
    if (e.kind == EventKind::Release) {
      const Cycles v = clocks_[static_cast<std::size_t>(model_.clocks().life(e.instance))];
      out_->releases.push_back({machine_->instances()[static_cast<std::size_t>(e.instance)].dff, v, v});
    }
  }

 private:
  const Model& model_;
  std::vector<Cycles>& clocks_;
  Outcome* out_;
  const Machine* machine_;
};

// --------------------------------------------------------------------------
// Zones

struct NeedBranch {};

class ZoneHost final : public MachineHost {
 public:
  ZoneHost(const Model& model, Dbm& zone, const std::vector<bool>* script, Outcome* out, const Machine* m)
      : model_(model), zone_(zone), script_(script), out_(out), machine_(m) {}

  std::vector<bool> decisions;

  void reset_clock(int slot) override { zone_.reset(slot); }
  void release_clock(int slot) override { zone_.free(slot); }
  bool earlier_deadline(int a, Cycles da, int b, Cycles db) override {
    const auto& L = model_.clocks();
    const int la = L.life(a);
    const int lb = L.life(b);
    // a strictly earlier  <=>  life_b - life_a <= db - da - 1
    const auto c = static_cast<Dbm::Bound>(db - da - 1);
    bool answer;
    if (decisions.size() < (script_ ? script_->size() : 0)) {
      answer = (*script_)[decisions.size()];
    } else if (zone_.satisfies(lb, la, c)) {
      answer = true;
    } else if (!zone_.intersects(lb, la, c)) {
      answer = false;
    } else {
      throw NeedBranch{};
    }
    if (answer)
      zone_.constrain(lb, la, c);
    else
      zone_.constrain(la, lb, -c - 1);
    decisions.push_back(answer);
    return answer;
  }
  void on_event(const Event& e) override {
    if (!out_) return;
    if (e.kind == EventKind::Fault) out_->faults.push_back(e.fault);
    if (e.kind == EventKind::Drop) out_->drops.push_back(e.fault);
    if (e.kind == EventKind::Release) {
      const int slot = model_.clocks().life(e.instance);
      const Cycles hi = zone_.upper(slot) >= Dbm::kInf ? Exploration::kInfinite : zone_.upper(slot);
      out_->releases.push_back({machine_->instances()[static_cast<std::size_t>(e.instance)].dff, zone_.lower(slot), hi});
    }
  }

 private:
  const Model& model_;
  Dbm& zone_;
  const std::vector<bool>* script_;
  Outcome* out_;
  const Machine* machine_;
};

std::vector<Dbm::Bound> zone_ceilings(const Model& model, const Machine& m) {
  const int n = model.clocks().size();
  std::vector<Dbm::Bound> c(static_cast<std::size_t>(n), -1);
  c[0] = 0;
  for (int slot : m.active_clocks())
    if (slot != 0)
      c[static_cast<std::size_t>(slot)] =
          static_cast<Dbm::Bound>(std::min<Cycles>(model.timer_ceiling(slot), Dbm::kInf / 2));
  return c;
}

/// Delay closure under the urgency invariants, then abstraction.
void finish_zone(const Model& model, const Machine& m, Dbm& z, bool extrapolate) {
  const auto active = m.active_clocks();
  std::vector<bool> is_active(static_cast<std::size_t>(model.clocks().size()), false);
  for (int s : active) is_active[static_cast<std::size_t>(s)] = true;
  for (int s = 1; s < model.clocks().size(); ++s)
    if (!is_active[static_cast<std::size_t>(s)]) z.free(s);
  z.up();
  for (const auto& t : m.timers()) z.constrain(t.slot, 0, static_cast<Dbm::Bound>(t.hi));
  if (extrapolate) z.extrapolate(zone_ceilings(model, m));
}

void append_zone_key(const Machine& m, const Dbm& z, Key& key) {
  const auto active = m.active_clocks();
  for (int a : active)
    for (int b : active)
      if (a != b) key.push_back(z.at(a, b));
}

// --------------------------------------------------------------------------
// Shared bookkeeping for both engines

class Recorder {
 public:
  Recorder(Exploration& ex, const Model& model, bool keep_graph) : ex_(ex), model_(model), keep_graph_(keep_graph) {
    const auto n = model.dffs().size();
    ex_.sup_life.assign(n, 0);
    ex_.sup_life_state.assign(n, -1);
    ex_.sup_life_instance.assign(n, -1);
    ex_.graph_kept = keep_graph;
  }

  /// Returns (id, fresh).
  std::pair<std::uint32_t, bool> intern(Key&& key, std::int64_t parent, const Exploration::Step& step) {
    auto [it, fresh] = visited_.try_emplace(std::move(key), static_cast<std::uint32_t>(ex_.parent.size()));
    if (fresh) {
      ex_.parent.push_back(parent);
      ex_.step.push_back(step);
    }
    if (parent >= 0 && keep_graph_) {
      ex_.edges.emplace_back(static_cast<std::uint32_t>(parent), it->second);
      ex_.edge_step.push_back(step);
    }
    return {it->second, fresh};
  }

  void transition(const Outcome& o, std::uint32_t target) {
    ++ex_.stats.transitions;
    for (auto f : o.faults) note_fault(f, target);
    for (auto f : o.drops) note_fault(f, target);
    for (const auto& r : o.releases) {
      if (!ex_.best_release || r.lo < *ex_.best_release) {
        ex_.best_release = r.lo;
        ex_.best_release_state = target;
      }
      if (!ex_.worst_release || r.hi > *ex_.worst_release) {
        ex_.worst_release = r.hi;
        ex_.worst_release_state = target;
      }
    }
  }

  /// Per-state facts; `life_sup(i)` gives the largest lifetime instance i
  /// can reach before the next firing.
  template <typename LifeSup>
  void state(std::uint32_t id, const Machine& m, bool no_timers, LifeSup life_sup) {
    const int live = m.live_count();
    if (live > ex_.max_in_flight) {
      ex_.max_in_flight = live;
      ex_.max_in_flight_state = id;
    }
    std::uint64_t mask = 0;
    for (int i = 0; i < static_cast<int>(m.instances().size()); ++i) {
      const auto& is = m.instances()[static_cast<std::size_t>(i)];
      if (!is.live) continue;
      mask |= std::uint64_t{1} << i;
      const Cycles v = life_sup(i);
      auto& best = ex_.sup_life[is.dff];
      if (ex_.sup_life_state[is.dff] < 0 || v > best) {
        best = v;
        ex_.sup_life_state[is.dff] = id;
        ex_.sup_life_instance[is.dff] = i;
      }
    }
    if (keep_graph_) {
      if (ex_.live_mask.size() <= id) ex_.live_mask.resize(id + 1, 0);
      ex_.live_mask[id] = m.halted() ? 0 : mask;
    }
    if (no_timers && !m.halted() && !m.finished() && ex_.deadlock_state < 0) ex_.deadlock_state = id;
  }

 private:
  void note_fault(FaultKind f, std::uint32_t target) {
    for (const auto& h : ex_.faults)
      if (h.kind == f) return;
    ex_.faults.push_back({f, target});
  }

  Exploration& ex_;
  const Model& model_;
  bool keep_graph_;
  std::unordered_map<Key, std::uint32_t, KeyHash> visited_;
};

bool over_budget(Exploration& ex, const Budget& b, Clock::time_point t0) {
  if (ex.parent.size() > b.max_states) {
    ex.stats.budget_exceeded = true;
    ex.stats.budget_reason = "state budget of " + std::to_string(b.max_states) + " states exceeded";
    return true;
  }
  if ((ex.parent.size() & 1023U) == 0 && Clock::now() - t0 > b.max_time) {
    ex.stats.budget_exceeded = true;
    ex.stats.budget_reason = "time budget of " + std::to_string(b.max_time.count()) + " ms exceeded after " +
                             std::to_string(ex.parent.size()) + " states";
    return true;
  }
  return false;
}

void explore_discrete(Exploration& ex, const CheckOptions& options, bool keep_graph) {
  const Model& model = *ex.model;
  const int nclocks = model.clocks().size();
  std::vector<Cycles> cap(static_cast<std::size_t>(nclocks));
  for (int s = 0; s < nclocks; ++s) cap[static_cast<std::size_t>(s)] = model.timer_ceiling(s) + 1;

  struct Node {
    Machine m;
    std::vector<Cycles> clocks;
    std::uint32_t id;
  };
  auto make_key = [&](const Machine& m, const std::vector<Cycles>& clocks) {
    Key k;
    m.encode(k);
    for (int s : m.active_clocks())
      if (s != 0) k.push_back(static_cast<std::int32_t>(clocks[static_cast<std::size_t>(s)]));
    return k;
  };
  auto clamp = [&](const Machine& m, std::vector<Cycles>& clocks) {
    for (int s : m.active_clocks())
      clocks[static_cast<std::size_t>(s)] = std::min(clocks[static_cast<std::size_t>(s)], cap[static_cast<std::size_t>(s)]);
  };

  Recorder rec(ex, model, keep_graph);
  const auto t0 = Clock::now();
  std::deque<Node> queue;
  {
    Machine m(ex.model);
    std::vector<Cycles> clocks(static_cast<std::size_t>(nclocks), 0);
    DiscreteHost h(model, clocks, nullptr, &m);
    m.start(h);
    auto [id, fresh] = rec.intern(make_key(m, clocks), -1, {});
    queue.push_back({std::move(m), std::move(clocks), id});
  }
  while (!queue.empty()) {
    if (over_budget(ex, options.budget, t0)) break;
    Node n = std::move(queue.front());
    queue.pop_front();
    const auto timers = n.m.timers();
    Cycles max_delay = Exploration::kInfinite;
    for (const auto& t : timers) max_delay = std::min(max_delay, t.hi - n.clocks[static_cast<std::size_t>(t.slot)]);
    rec.state(n.id, n.m, timers.empty(), [&](int i) {
      if (max_delay == Exploration::kInfinite) return Exploration::kInfinite;
      const Cycles v = n.clocks[static_cast<std::size_t>(model.clocks().life(i))];
      return v >= cap[static_cast<std::size_t>(model.clocks().life(i))] ? Exploration::kInfinite : v + max_delay;
    });

    auto push = [&](Machine&& m, std::vector<Cycles>&& clocks, const Exploration::Step& step, const Outcome& o) {
      clamp(m, clocks);
      auto [id, fresh] = rec.intern(make_key(m, clocks), n.id, step);
      rec.transition(o, id);
      if (fresh) queue.push_back({std::move(m), std::move(clocks), id});
    };

    bool in_window = false;
    for (const auto& t : timers) {
      const Cycles v = n.clocks[static_cast<std::size_t>(t.slot)];
      if (v < t.lo || v > t.hi) continue;
      in_window = true;
      Machine m = n.m;
      auto clocks = n.clocks;
      Outcome o;
      DiscreteHost h(model, clocks, &o, &m);
      m.fire(t.id, h);
      Exploration::Step st;
      st.timer = t.id;
      push(std::move(m), std::move(clocks), st, o);
    }
    if (timers.empty()) continue;
    Cycles d = 1;
    if (!in_window) {
      d = Exploration::kInfinite;
      for (const auto& t : timers) d = std::min(d, t.lo - n.clocks[static_cast<std::size_t>(t.slot)]);
    }
    if (d > max_delay) continue;
    Machine m = n.m;
    auto clocks = n.clocks;
    for (int s : m.active_clocks())
      if (s != 0) clocks[static_cast<std::size_t>(s)] += d;
    Exploration::Step st;
    st.is_delay = true;
    st.delay = d;
    push(std::move(m), std::move(clocks), st, Outcome{});
  }
  ex.stats.states = ex.parent.size();
  ex.stats.seconds = seconds_since(t0);
}

void explore_zone(Exploration& ex, const CheckOptions& options, bool keep_graph) {
  const Model& model = *ex.model;
  const int nclocks = model.clocks().size();
  struct Node {
    Machine m;
    Dbm z;
    std::uint32_t id;
  };
  auto make_key = [&](const Machine& m, const Dbm& z) {
    Key k;
    m.encode(k);
    append_zone_key(m, z, k);
    return k;
  };

  Recorder rec(ex, model, keep_graph);
  const auto t0 = Clock::now();
  std::deque<Node> queue;
  {
    Machine m(ex.model);
    Dbm z(nclocks);
    ZoneHost h(model, z, nullptr, nullptr, &m);
    m.start(h);
    finish_zone(model, m, z, true);
    auto [id, fresh] = rec.intern(make_key(m, z), -1, {});
    queue.push_back({std::move(m), std::move(z), id});
  }
  while (!queue.empty()) {
    if (over_budget(ex, options.budget, t0)) break;
    Node n = std::move(queue.front());
    queue.pop_front();
    const auto timers = n.m.timers();
    rec.state(n.id, n.m, timers.empty(), [&](int i) {
      const auto u = n.z.upper(model.clocks().life(i));
      return u >= Dbm::kInf ? Exploration::kInfinite : static_cast<Cycles>(u);
    });
    for (const auto& t : timers) {
      Dbm guarded = n.z;
      if (!guarded.constrain(0, t.slot, static_cast<Dbm::Bound>(-t.lo))) continue;
      std::vector<std::vector<bool>> scripts{{}};
      while (!scripts.empty()) {
        auto script = std::move(scripts.back());
        scripts.pop_back();
        Machine m = n.m;
        Dbm z = guarded;
        Outcome o;
        ZoneHost h(model, z, &script, &o, &m);
        try {
          m.fire(t.id, h);
        } catch (const NeedBranch&) {
          auto yes = h.decisions;
          auto no = h.decisions;
          yes.push_back(true);
          no.push_back(false);
          scripts.push_back(std::move(no));
          scripts.push_back(std::move(yes));
          continue;
        }
        if (z.empty()) continue;
        finish_zone(model, m, z, true);
        if (z.empty()) continue;
        Exploration::Step st;
        st.timer = t.id;
        st.decisions = h.decisions;
        auto [id, fresh] = rec.intern(make_key(m, z), n.id, st);
        rec.transition(o, id);
        if (fresh) queue.push_back({std::move(m), std::move(z), id});
      }
    }
  }
  ex.stats.states = ex.parent.size();
  ex.stats.seconds = seconds_since(t0);
}

}  // namespace

// --------------------------------------------------------------------------

std::vector<std::int64_t> Exploration::path_to(std::int64_t state) const {
  std::vector<std::int64_t> out;
  for (auto s = state; s >= 0; s = parent[static_cast<std::size_t>(s)]) out.push_back(s);
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<Exploration::Step> Exploration::steps_to(std::int64_t state) const {
  std::vector<Step> out;
  for (auto s : path_to(state))
    if (parent[static_cast<std::size_t>(s)] >= 0) out.push_back(step[static_cast<std::size_t>(s)]);
  return out;
}

Exploration explore(std::shared_ptr<const Model> model, const CheckOptions& options, bool keep_graph) {
  Exploration ex;
  ex.model = std::move(model);
  ex.engine = options.engine;
  if (options.engine == Engine::Discrete)
    explore_discrete(ex, options, keep_graph);
  else
    explore_zone(ex, options, keep_graph);
  return ex;
}

Witness concretize(const Exploration& ex, const std::vector<Exploration::Step>& steps, int instance,
                   std::optional<Cycles> life_at_least) {
  const Model& model = *ex.model;
  const auto& L = model.clocks();
  Witness w;
  w.instance = instance;

  if (ex.engine == Engine::Discrete) {
    Machine m(ex.model);
    std::vector<Cycles> clocks(static_cast<std::size_t>(L.size()), 0);
    DiscreteHost h(model, clocks, nullptr, &m);
    m.start(h);
    Cycles now = 0;
    for (const auto& s : steps) {
      if (s.is_delay) {
        now += s.delay;
        for (int c : m.active_clocks())
          if (c != 0) clocks[static_cast<std::size_t>(c)] += s.delay;
        continue;
      }
      w.firings.push_back({now, s.timer});
      m.fire(s.timer, h);
    }
    w.end_time = now;
    if (life_at_least && instance >= 0) {
      const Cycles v = clocks[static_cast<std::size_t>(L.life(instance))];
      if (v < *life_at_least) w.end_time = now + (*life_at_least - v);
    }
    return w;
  }

  // Zone path: one extra clock g that is never reset, and one clock per
  // firing reset at that firing, so g - h_j is the time of firing j.
  const int base = L.size();
  const int g = base;
  Dbm z(base + 1 + static_cast<int>(steps.size()));
  Machine m(ex.model);
  {
    ZoneHost h(model, z, nullptr, nullptr, &m);
    m.start(h);
  }
  auto settle_zone = [&] {
    const auto active = m.active_clocks();
    std::vector<bool> on(static_cast<std::size_t>(base), false);
    for (int s : active) on[static_cast<std::size_t>(s)] = true;
    for (int s = 1; s < base; ++s)
      if (!on[static_cast<std::size_t>(s)]) z.free(s);
    z.up();
    for (const auto& t : m.timers()) z.constrain(t.slot, 0, static_cast<Dbm::Bound>(t.hi));
  };
  settle_zone();
  for (std::size_t j = 0; j < steps.size(); ++j) {
    const auto& s = steps[j];
    const auto timers = m.timers();
    auto it = std::find_if(timers.begin(), timers.end(), [&](const Timer& t) { return t.id == s.timer; });
    if (it == timers.end() || !z.constrain(0, it->slot, static_cast<Dbm::Bound>(-it->lo))) {
      w.summary = "path is not realizable at step " + std::to_string(j);
      return w;
    }
    ZoneHost h(model, z, &s.decisions, nullptr, &m);
    m.fire(s.timer, h);
    z.reset(base + 1 + static_cast<int>(j));
    settle_zone();
    if (z.empty()) {
      w.summary = "path is not realizable after step " + std::to_string(j);
      return w;
    }
  }
  if (life_at_least && instance >= 0) z.constrain(0, L.life(instance), static_cast<Dbm::Bound>(-*life_at_least));
  if (z.empty()) {
    w.summary = "end condition is not realizable";
    return w;
  }
  for (std::size_t j = 0; j < steps.size(); ++j) {
    const int hj = base + 1 + static_cast<int>(j);
    const Cycles t = -static_cast<Cycles>(z.at(hj, g));  // earliest g - h_j
    z.constrain(g, hj, static_cast<Dbm::Bound>(t));
    w.firings.push_back({t, steps[j].timer});
  }
  w.end_time = z.lower(g);
  return w;
}

// --------------------------------------------------------------------------
// Queries

const char* query_name(QueryKind k) {
  switch (k) {
    case QueryKind::Deadlock: return "deadlock";
    case QueryKind::QueueOverflow: return "overflow";
    case QueryKind::DoubleAssign: return "double_assign";
    case QueryKind::DeadlineMiss: return "deadline_miss";
    case QueryKind::MaxInFlight: return "max_in_flight";
    case QueryKind::Livelock: return "livelock";
    case QueryKind::WorstCaseLatency: return "wcl";
    case QueryKind::BestCaseLatency: return "bcl";
  }
  return "?";
}

const char* to_string(Status s) {
  switch (s) {
    case Status::Pass: return "pass";
    case Status::Fail: return "fail";
    case Status::BudgetExceeded: return "budget_exceeded";
  }
  return "?";
}

std::vector<Query> builtin_queries() {
  return {{QueryKind::Deadlock, "Q1 deadlock", {}, {}},         {QueryKind::QueueOverflow, "Q2 overflow", {}, {}},
          {QueryKind::DoubleAssign, "Q3 double_assign", {}, {}}, {QueryKind::DeadlineMiss, "Q4 deadline_miss", {}, {}},
          {QueryKind::MaxInFlight, "Q5 max_in_flight", {}, {}},  {QueryKind::Livelock, "Q6 livelock", {}, {}}};
}

std::vector<Query> parse_query_list(std::string_view text) {
  std::vector<Query> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name)) continue;
    Query q;
    static const std::pair<const char*, QueryKind> names[] = {
        {"deadlock", QueryKind::Deadlock},         {"q1", QueryKind::Deadlock},
        {"overflow", QueryKind::QueueOverflow},    {"q2", QueryKind::QueueOverflow},
        {"double_assign", QueryKind::DoubleAssign}, {"q3", QueryKind::DoubleAssign},
        {"deadline_miss", QueryKind::DeadlineMiss}, {"q4", QueryKind::DeadlineMiss},
        {"max_in_flight", QueryKind::MaxInFlight}, {"q5", QueryKind::MaxInFlight},
        {"livelock", QueryKind::Livelock},         {"q6", QueryKind::Livelock},
        {"wcl", QueryKind::WorstCaseLatency},      {"bcl", QueryKind::BestCaseLatency}};
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    bool found = false;
    for (const auto& [n, k] : names)
      if (lower == n) {
        q.kind = k;
        found = true;
      }
    if (!found) throw QueryParseError("line " + std::to_string(lineno) + ": unknown query '" + name + "'");
    q.label = lower;
    std::string kv;
    while (ls >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw QueryParseError("line " + std::to_string(lineno) + ": expected key=value");
      const auto key = kv.substr(0, eq);
      const auto val = kv.substr(eq + 1);
      long long v = 0;
      try {
        std::size_t used = 0;
        v = std::stoll(val, &used);
        if (used != val.size()) throw std::invalid_argument(val);
      } catch (const std::exception&) {
        throw QueryParseError("line " + std::to_string(lineno) + ": bad number '" + val + "'");
      }
      if (key == "timeout" && q.kind == QueryKind::DeadlineMiss && v > 0)
        q.timeout = v;
      else if (key == "expect" && q.kind == QueryKind::MaxInFlight)
        q.expect = static_cast<int>(v);
      else
        throw QueryParseError("line " + std::to_string(lineno) + ": parameter '" + key + "' not valid here");
      q.label += " " + kv;
    }
    out.push_back(q);
  }
  return out;
}

namespace {

std::int64_t first_fault(const Exploration& ex, std::initializer_list<FaultKind> kinds, FaultKind* which) {
  std::int64_t best = -1;
  for (const auto& h : ex.faults)
    for (auto k : kinds)
      if (h.kind == k && (best < 0 || h.state < best)) {
        best = h.state;
        *which = k;
      }
  return best;
}

struct Scc {
  std::vector<std::uint32_t> nodes;
};

// Non-trivial SCCs of the subgraph induced by states where `bit` is live.
std::optional<Scc> find_live_cycle(const Exploration& ex, int bit, const std::vector<std::uint32_t>& offs,
                                   const std::vector<std::uint32_t>& adj) {
  const auto n = static_cast<std::uint32_t>(ex.parent.size());
  auto live = [&](std::uint32_t s) { return s < ex.live_mask.size() && (ex.live_mask[s] >> bit & 1U); };
  std::vector<std::int64_t> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::uint32_t> stack;
  std::int64_t counter = 0;
  struct Frame {
    std::uint32_t v;
    std::uint32_t next;
  };
  for (std::uint32_t root = 0; root < n; ++root) {
    if (!live(root) || index[root] >= 0) continue;
    std::vector<Frame> call{{root, offs[root]}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      auto& f = call.back();
      if (f.next < offs[f.v + 1]) {
        const auto w = adj[f.next++];
        if (!live(w)) continue;
        if (index[w] < 0) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, offs[w]});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      const auto v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] != index[v]) continue;
      Scc scc;
      while (true) {
        const auto w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        scc.nodes.push_back(w);
        if (w == v) break;
      }
      bool self_loop = false;
      if (scc.nodes.size() == 1)
        for (auto e = offs[v]; e < offs[v + 1]; ++e) self_loop |= adj[e] == v;
      if (scc.nodes.size() > 1 || self_loop) return scc;
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<Verdict> check(const Exploration& ex, const std::vector<Query>& queries, const CheckOptions& options) {
  std::vector<Verdict> out;
  const Model& model = *ex.model;
  const bool incomplete = ex.stats.budget_exceeded;

  // CSR adjacency for cycle queries
  std::vector<std::uint32_t> offs, adj, adj_edge;
  auto build_graph = [&] {
    if (!offs.empty() || !ex.graph_kept) return;
    const auto n = ex.parent.size();
    offs.assign(n + 1, 0);
    for (const auto& [a, b] : ex.edges) ++offs[a + 1];
    std::partial_sum(offs.begin(), offs.end(), offs.begin());
    adj.resize(ex.edges.size());
    adj_edge.resize(ex.edges.size());
    auto pos = offs;
    for (std::size_t e = 0; e < ex.edges.size(); ++e) {
      const auto [a, b] = ex.edges[e];
      adj_edge[pos[a]] = static_cast<std::uint32_t>(e);
      adj[pos[a]++] = b;
    }
  };

  for (const auto& q : queries) {
    Verdict v;
    v.query = q;
    if (v.query.label.empty()) v.query.label = query_name(q.kind);
    v.states = ex.stats.states;
    v.seconds = ex.stats.seconds;
    auto fail_at = [&](std::int64_t state, std::string detail, int inst = -1, std::optional<Cycles> life = {}) {
      v.status = Status::Fail;
      v.detail = std::move(detail);
      if (options.witnesses && state >= 0) {
        v.witness = concretize(ex, ex.steps_to(state), inst, life);
        if (v.witness->summary.empty()) v.witness->summary = v.detail;
      }
    };
    auto pass_or_budget = [&] {
      if (incomplete) {
        v.status = Status::BudgetExceeded;
        v.detail = ex.stats.budget_reason;
      }
    };
    switch (q.kind) {
      case QueryKind::Deadlock:
        if (ex.deadlock_state >= 0)
          fail_at(ex.deadlock_state, "reachable state with pending work and no enabled event");
        else
          pass_or_budget();
        break;
      case QueryKind::QueueOverflow:
      case QueryKind::DoubleAssign: {
        FaultKind which{};
        const auto s = q.kind == QueryKind::QueueOverflow
                           ? first_fault(ex, {FaultKind::DirectorOverflow, FaultKind::ReadyQueueOverflow,
                                              FaultKind::MaxParallel},
                                         &which)
                           : first_fault(ex, {FaultKind::DoubleAssign, FaultKind::WriteBeforeRead}, &which);
        if (s >= 0)
          fail_at(s, std::string("reachable fault: ") + to_string(which));
        else
          pass_or_budget();
        break;
      }
      case QueryKind::DeadlineMiss: {
        // a DFF dropped after admission never completes: its latency is unbounded
        FaultKind which{};
        const auto dropped = first_fault(ex, {FaultKind::NoMapping, FaultKind::Infeasible}, &which);
        std::optional<std::size_t> worst;
        for (std::size_t d = 0; d < ex.sup_life.size(); ++d) {
          const Cycles limit = q.timeout.value_or(model.dffs()[d].timeout);
          if (ex.sup_life_state[d] >= 0 && ex.sup_life[d] > limit) worst = d;
        }
        if (worst) {
          const Cycles limit = q.timeout.value_or(model.dffs()[*worst].timeout);
          std::ostringstream os;
          os << "lifetime of DFF " << model.dffs()[*worst].graph->name << " can exceed " << limit << "cc";
          if (ex.sup_life[*worst] == Exploration::kInfinite)
            os << " (unbounded)";
          else
            os << " (reaches " << ex.sup_life[*worst] << "cc)";
          fail_at(ex.sup_life_state[*worst], os.str(), ex.sup_life_instance[*worst], limit + 1);
        } else if (dropped >= 0) {
          fail_at(dropped, std::string("an admitted DFF can be dropped: ") + to_string(which));
        } else {
          pass_or_budget();
        }
        break;
      }
      case QueryKind::MaxInFlight:
        v.value = ex.max_in_flight;
        if (q.expect && *q.expect != ex.max_in_flight) {
          v.status = Status::Fail;
          v.detail = "expected " + std::to_string(*q.expect);
        } else {
          pass_or_budget();
        }
        break;
      case QueryKind::Livelock: {
        if (!ex.graph_kept) {
          v.status = Status::BudgetExceeded;
          v.detail = "exploration did not keep the state graph";
          break;
        }
        build_graph();
        bool found = false;
        for (int bit = 0; bit < model.config().max_parallel && !found; ++bit) {
          auto scc = find_live_cycle(ex, bit, offs, adj);
          if (!scc) continue;
          found = true;
          v.status = Status::Fail;
          v.detail = "instance index " + std::to_string(bit) + " stays live along a cycle of " +
                     std::to_string(scc->nodes.size()) + " states";
          if (!options.witnesses) break;
          // prefix to the first SCC node, then a loop back to it inside the SCC
          std::vector<bool> in_scc(ex.parent.size(), false);
          for (auto s : scc->nodes) in_scc[s] = true;
          const auto start = *std::min_element(scc->nodes.begin(), scc->nodes.end());
          std::unordered_map<std::uint32_t, std::uint32_t> via;  // node -> edge index
          std::deque<std::uint32_t> bfs{start};
          bool closed = false;
          std::uint32_t closing = 0;
          std::vector<bool> seen(ex.parent.size(), false);
          while (!bfs.empty() && !closed) {
            const auto u = bfs.front();
            bfs.pop_front();
            for (auto e = offs[u]; e < offs[u + 1]; ++e) {
              const auto w = adj[e];
              if (!in_scc[w]) continue;
              if (w == start) {
                closed = true;
                closing = adj_edge[e];
                via[start] = adj_edge[e];
                break;
              }
              if (seen[w]) continue;
              seen[w] = true;
              via[w] = adj_edge[e];
              bfs.push_back(w);
            }
          }
          auto steps = ex.steps_to(start);
          const auto loop_start = steps.size();
          std::vector<Exploration::Step> loop;
          auto cur = ex.edges[closing].first;
          loop.push_back(ex.edge_step[closing]);
          while (cur != start) {
            const auto e = via[cur];
            loop.push_back(ex.edge_step[e]);
            cur = ex.edges[e].first;
          }
          std::reverse(loop.begin(), loop.end());
          steps.insert(steps.end(), loop.begin(), loop.end());
          v.witness = concretize(ex, steps, bit);
          v.witness->loop_start = loop_start;
          if (v.witness->summary.empty()) v.witness->summary = v.detail;
        }
        if (!found) pass_or_budget();
        break;
      }
      case QueryKind::WorstCaseLatency: {
        Cycles worst = 0;
        std::size_t at = 0;
        for (std::size_t d = 0; d < ex.sup_life.size(); ++d)
          if (ex.sup_life_state[d] >= 0 && ex.sup_life[d] >= worst) {
            worst = ex.sup_life[d];
            at = d;
          }
        FaultKind which{};
        if (first_fault(ex, {FaultKind::NoMapping, FaultKind::Infeasible}, &which) >= 0) worst = Exploration::kInfinite;
        if (worst == Exploration::kInfinite) {
          v.unbounded = true;
          v.status = Status::Fail;
          v.detail = "latency is unbounded";
        } else {
          v.value = worst;
          (void)at;
          pass_or_budget();
        }
        break;
      }
      case QueryKind::BestCaseLatency:
        if (ex.best_release) v.value = *ex.best_release;
        else v.detail = "no DFF is ever released";
        pass_or_budget();
        break;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Verdict> check(const Scenario& scenario, const std::vector<Query>& queries, const CheckOptions& options) {
  const bool need_graph =
      std::any_of(queries.begin(), queries.end(), [](const Query& q) { return q.kind == QueryKind::Livelock; });
  auto ex = explore(std::make_shared<const Model>(scenario), options, need_graph);
  return check(ex, queries, options);
}

LatencyBounds latency_bounds(const Scenario& scenario, const CheckOptions& options) {
  CheckOptions o = options;
  o.witnesses = false;
  auto ex = explore(std::make_shared<const Model>(scenario), o, false);
  auto v = check(ex, {{QueryKind::WorstCaseLatency, "wcl", {}, {}}, {QueryKind::BestCaseLatency, "bcl", {}, {}}}, o);
  LatencyBounds b;
  b.unbounded = v[0].unbounded;
  b.worst = v[0].value.value_or(Exploration::kInfinite);
  b.best = v[1].value.value_or(0);
  b.stats = ex.stats;
  return b;
}

ResourceSearch min_resource_search(const Scenario& scenario, PoolResource resource, Cycles timeout, int low, int high,
                                   const CheckOptions& options) {
  ResourceSearch r;
  auto with_size = [&](int size) {
    Scenario s = scenario;
    for (auto& st : s.machine.stages) {
      if (resource == PoolResource::Compute)
        st.compute_units = size;
      else
        st.memory_units = size;
    }
    return s;
  };
  auto passes = [&](int size) -> std::optional<bool> {
    auto b = latency_bounds(with_size(size), options);
    if (b.stats.budget_exceeded) return std::nullopt;
    r.probes.emplace_back(size, b.unbounded ? Exploration::kInfinite : b.worst);
    return !b.unbounded && b.worst <= timeout;
  };
  auto top = passes(high);
  if (!top) {
    r.budget_exceeded = true;
    return r;
  }
  if (!*top) {
    r.infeasible = true;
    return r;
  }
  int lo = low;
  int hi = high;  // hi passes
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    auto p = passes(mid);
    if (!p) {
      r.budget_exceeded = true;
      return r;
    }
    if (*p)
      hi = mid;
    else
      lo = mid + 1;
  }
  r.threshold = hi;
  Query q4{QueryKind::DeadlineMiss, "Q4 deadline_miss timeout=" + std::to_string(timeout), timeout, {}};
  r.at_threshold = check(with_size(hi), {q4}, options).front();
  if (hi > low) r.below_threshold = check(with_size(hi - 1), {q4}, options).front();
  return r;
}

ReplayOutcome replay_witness(std::shared_ptr<const Model> model, const Verdict& verdict) {
  ReplayOutcome out;
  if (!verdict.witness) {
    out.detail = "no witness";
    return out;
  }
  const auto& w = *verdict.witness;
  SimOptions o;
  o.drop_on_timeout = false;
  o.check_invariants = false;
  o.script = w.firings;
  o.run_until = w.end_time;
  auto res = run_simulation(model, o);
  out.metrics = res.metrics;
  const auto& m = res.final_state;
  if (res.metrics.script_diverged) {
    out.detail = "replay diverged: " + res.metrics.script_error;
    return out;
  }
  switch (verdict.query.kind) {
    case QueryKind::Deadlock:
      out.reproduced = m.timers().empty() && !m.finished() && !m.halted();
      out.detail = out.reproduced ? "machine stalls with live work" : "machine did not stall";
      break;
    case QueryKind::QueueOverflow:
    case QueryKind::DoubleAssign: {
      // the fault shows up as a rejected/aborted event in the trace
      for (const auto& line : res.trace)
        if (line.find(" event fault ") != std::string::npos || line.find(" event reject ") != std::string::npos) {
          const bool q2 = line.find("overflow") != std::string::npos || line.find("max_parallel") != std::string::npos;
          const bool q3 = line.find("double_assign") != std::string::npos ||
                          line.find("write_before_read") != std::string::npos;
          if ((verdict.query.kind == QueryKind::QueueOverflow && q2) ||
              (verdict.query.kind == QueryKind::DoubleAssign && q3)) {
            out.reproduced = true;
            out.detail = line;
          }
        }
      if (!out.reproduced) out.detail = "fault not observed";
      break;
    }
    case QueryKind::DeadlineMiss: {
      const Cycles limit = verdict.query.timeout.value_or(
          w.instance >= 0 ? model->dffs()[m.instances()[static_cast<std::size_t>(w.instance)].dff].timeout : 0);
      for (const auto& r : res.metrics.instances) {
        // a halted machine stops the simulator early; time still runs on to
        // the witness end
        const Cycles life =
            r.release_cc ? *r.latency() : std::max(res.metrics.end_time, w.end_time) - r.admit_cc;
        if (life > limit) {
          out.reproduced = true;
          out.detail = "global tag " + std::to_string(r.global_tag) + " lives " + std::to_string(life) + "cc";
        }
      }
      if (!out.reproduced) {
        for (const auto& r : res.metrics.instances)
          if (r.dropped) {
            out.reproduced = true;
            out.detail = "global tag " + std::to_string(r.global_tag) + " dropped";
          }
      }
      if (!out.reproduced) out.detail = "no lifetime above " + std::to_string(limit);
      break;
    }
    case QueryKind::Livelock:
      out.reproduced = w.instance >= 0 && m.instances()[static_cast<std::size_t>(w.instance)].live;
      out.detail = out.reproduced ? "instance still live after one loop iteration" : "instance not live";
      break;
    default: out.detail = "query has no witness semantics"; break;
  }
  return out;
}

void write_verdicts_csv(std::ostream& os, const std::vector<Verdict>& verdicts) {
  os << "query,status,value,states,seconds,detail\n";
  for (const auto& v : verdicts) {
    std::string detail = v.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    os << v.query.label << ',' << to_string(v.status) << ',';
    if (v.unbounded)
      os << "inf";
    else if (v.value)
      os << *v.value;
    os << ',' << v.states << ',' << v.seconds << ',' << detail << '\n';
  }
}

std::string summarize(const std::vector<Verdict>& verdicts) {
  std::ostringstream os;
  for (const auto& v : verdicts) {
    os << v.query.label << ": " << to_string(v.status);
    if (v.unbounded) os << " (unbounded)";
    else if (v.value) os << " value=" << *v.value;
    if (!v.detail.empty()) os << " -- " << v.detail;
    os << " [" << v.states << " states, " << v.seconds << " s]\n";
    if (v.witness) {
      os << "  witness: " << v.witness->firings.size() << " firings, end at " << v.witness->end_time << "cc\n";
    }
  }
  return os.str();
}

}  // namespace sre
