#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "sre/sim.hpp"
#include "support.hpp"

namespace sre {
namespace {

using testing::from_json;
using testing::load;

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) out += c == '\n' ? std::string("\\n") : std::string(1, c);
  return out;
}

/// One DFF given as text, sources at the given phases, machine overrides.
Scenario scenario(const std::string& dff, const std::vector<int>& phases, const std::string& machine = "",
                  const std::string& extra = "") {
  std::ostringstream js;
  js << R"({"dffs":[{"name":"d","text":")" << json_escape(dff) << R"("}],"sources":[)";
  for (std::size_t i = 0; i < phases.size(); ++i)
    js << (i ? "," : "") << R"({"dff":"d","period":5000,"count":1,"phase":)" << phases[i] << "}";
  js << "]";
  if (!machine.empty()) js << R"(,"machine":{)" << machine << "}";
  js << extra << "}";
  return from_json(js.str());
}

SimResult run(const Scenario& sc, RuntimeMode mode = RuntimeMode::Min, std::uint64_t seed = 1) {
  SimOptions o;
  o.runtime = mode;
  o.seed = seed;
  return run_simulation(sc, o);
}

// index of the first trace line containing every fragment, or -1
long find_line(const std::vector<std::string>& trace, std::initializer_list<const char*> parts) {
  for (std::size_t i = 0; i < trace.size(); ++i) {
    bool all = true;
    for (const char* p : parts) all &= trace[i].find(p) != std::string::npos;
    if (all) return static_cast<long>(i);
  }
  return -1;
}

const std::string kTwoIndependent =
    "dff two container=1 timeout=100000\ninput 0 bytes=8\noutput 0 bytes=8\noutput 1 bytes=8\n"
    "1 k1 0 rt=[50,50] cu=1 mu=1 in=0.0:8 out=0.0:8 deadline=900\n"
    "2 k2 0 rt=[50,50] cu=1 mu=1 in=0.0:8 out=0.1:8 deadline=400\n";

TEST(Admit, FirstPacketGetsIndexZero) {
  auto res = run(load("single_fixed.json"));
  ASSERT_EQ(res.metrics.instances.size(), 1u);
  EXPECT_EQ(res.metrics.instances[0].instance_index, 0);
  EXPECT_EQ(res.metrics.instances[0].global_tag, 0u);
  EXPECT_NE(find_line(res.trace, {"event admit g=0 inst=0"}), -1);
}

TEST(Admit, MaxParallelRejects) {
  auto sc = scenario(testing::chain_text(2, 200, 200), {0, 10, 20, 30}, R"("max_parallel":3)");
  auto res = run(sc);
  EXPECT_EQ(res.metrics.rejects, 1);
  EXPECT_NE(find_line(res.trace, {"30 event reject src=3 fault=max_parallel"}), -1);
  // rejected packets get an error packet with the reserved tag
  EXPECT_NE(find_line(res.trace, {"msg error_packet{code=max-parallel-exceeded,global_tag=4294967295"}), -1);
  EXPECT_EQ(res.metrics.max_in_flight, 3);
  // an index is reused lowest-first once freed
  auto later = scenario(testing::chain_text(1, 10, 10), {0, 5, 1000});
  auto r2 = run(later);
  EXPECT_EQ(r2.metrics.instances[2].instance_index, 0);
  EXPECT_EQ(r2.metrics.instances[2].global_tag, 2u);
}

TEST(Admit, UnknownContainer) {
  auto sc = from_json(R"({"dffs":[{"file":"chain2.dff"}],
    "sources":[{"period":5000,"count":1,"container":99}]})");
  auto res = run(sc);
  EXPECT_EQ(res.metrics.rejects, 1);
  EXPECT_TRUE(res.metrics.instances.empty());
  EXPECT_NE(find_line(res.trace, {"event reject src=0 fault=dct_unsupported"}), -1);
}

TEST(Dispatch, ChainTables) {
  Model m(load("single_fixed.json"));
  ASSERT_EQ(m.dffs().size(), 1u);
  EXPECT_EQ(m.dffs()[0].kernels.size(), 2u);
  EXPECT_EQ(m.dffs()[0].arcs.size(), 3u);  // in, mid, out
  Model chest(load("chest.json"));
  EXPECT_EQ(chest.dffs()[0].kernels.size(), 6u);
  std::set<int> stages;
  for (const auto& k : chest.dffs()[0].kernels) stages.insert(k.stage);
  EXPECT_EQ(stages, (std::set<int>{0, 1}));
}

TEST(Dispatch, EnvelopeCommittedRejectsBeforeWritingEntries) {
  auto sc = scenario(testing::chain_text(2, 200, 200), {0, 200}, "", R"(,"pool":{"compute":1,"memory":3})");
  auto res = run(sc);
  ASSERT_EQ(res.metrics.instances.size(), 2u);
  EXPECT_EQ(res.metrics.instances[1].dropped, FaultKind::NoMapping);
  EXPECT_EQ(find_line(res.trace, {"event dispatch g=1"}), -1);
  EXPECT_EQ(find_line(res.trace, {"event ready g=1"}), -1);
  EXPECT_NE(find_line(res.trace, {"msg error_packet{code=resource-infeasible,global_tag=1"}), -1);
  EXPECT_TRUE(res.metrics.instances[0].release_cc.has_value());
}

TEST(Resolve, WaitsForEveryInput) {
  // CHEST4 reads CHEST2 and CHEST3; without scheduler overlap it becomes
  // ready only once both tokens are there
  auto sc = load("chest.json");
  sc.machine.scheduler_overlap = false;
  auto res = run(sc);
  const auto c2 = find_line(res.trace, {"event complete", "l=2 "});
  const auto c3 = find_line(res.trace, {"event complete", "l=3 "});
  const auto r4 = find_line(res.trace, {"event ready", "l=4 "});
  ASSERT_NE(c2, -1);
  ASSERT_NE(c3, -1);
  ASSERT_NE(r4, -1);
  EXPECT_GT(r4, std::max(c2, c3));
  // first kernel reads only DFF data: ready at dispatch
  EXPECT_EQ(find_line(res.trace, {"event ready", "l=1 "}), find_line(res.trace, {"event dispatch"}) + 2);
}

TEST(Resolve, OverlapReadiesOnProducerStart) {
  auto res = run(load("chest.json"));
  const auto a2 = find_line(res.trace, {"event alloc", "l=2 "});
  const auto a3 = find_line(res.trace, {"event alloc", "l=3 "});
  const auto r4 = find_line(res.trace, {"event ready", "l=4 "});
  EXPECT_EQ(r4, std::max(a2, a3) + 1);
}

TEST(Schedule, FcfsAndEdf) {
  auto fcfs = run(scenario(kTwoIndependent, {0}));
  EXPECT_LT(find_line(fcfs.trace, {"event scheduled", "l=1 "}), find_line(fcfs.trace, {"event scheduled", "l=2 "}));
  auto edf = run(scenario(kTwoIndependent, {0}, R"("policy":"edf")"));
  EXPECT_LT(find_line(edf.trace, {"event scheduled", "l=2 "}), find_line(edf.trace, {"event scheduled", "l=1 "}));
  // equal deadlines: EDF keeps arrival order
  std::string same = kTwoIndependent;
  same.replace(same.find("deadline=400"), 12, "deadline=900");
  auto tie = run(scenario(same, {0}, R"("policy":"edf")"));
  EXPECT_LT(find_line(tie.trace, {"event scheduled", "l=1 "}), find_line(tie.trace, {"event scheduled", "l=2 "}));
}

TEST(Schedule, EdfUsesAbsoluteDeadlines) {
  // instance 0's kernel (deadline 900 after admission at 0) against a later
  // instance with deadline 400 after admission at 600: 900 < 1000
  const std::string one = "dff one container=1 timeout=100000\ninput 0 bytes=8\noutput 0 bytes=8\n"
                          "1 k 0 rt=[10,10] cu=1 mu=1 in=0.0:8 out=0.0:8 deadline=900\n";
  const std::string two = "dff two container=2 timeout=100000\ninput 0 bytes=8\noutput 0 bytes=8\n"
                          "1 k 0 rt=[10,10] cu=1 mu=1 in=0.0:8 out=0.0:8 deadline=400\n";
  auto sc = from_json(R"({"dffs":[{"name":"a","text":")" + json_escape(one) + R"("},{"name":"b","text":")" +
                      json_escape(two) + R"("}],
    "sources":[{"dff":"a","period":5000,"count":1,"phase":0},{"dff":"b","period":5000,"count":1,"phase":1}],
    "machine":{"policy":"edf","director_cost":1,"scheduler_cost":1000}})");
  auto res = run(sc);
  ASSERT_TRUE(res.metrics.instances.size() == 2);
  EXPECT_LT(*res.metrics.instances[0].release_cc, *res.metrics.instances[1].release_cc);
}

TEST(Allocate, RunsWaitsOrFails) {
  auto ok = run(load("single_fixed.json"));
  const auto s = find_line(ok.trace, {"event scheduled", "l=1 "});
  EXPECT_EQ(find_line(ok.trace, {"event alloc", "l=1 "}), s + 1);

  // one compute unit: the second independent kernel waits for the first
  std::string slow = kTwoIndependent;
  for (auto p = slow.find("[50,50]"); p != std::string::npos; p = slow.find("[50,50]")) slow.replace(p, 7, "[300,300]");
  auto tight = run(scenario(slow, {0}, "", R"(,"pool":{"compute":1,"memory":13})"));
  EXPECT_LT(find_line(tight.trace, {"event scheduled", "l=2 "}), find_line(tight.trace, {"event complete", "l=1 "}));
  EXPECT_EQ(find_line(tight.trace, {"event alloc", "l=2 "}), find_line(tight.trace, {"event complete", "l=1 "}) + 1);
  ASSERT_TRUE(tight.metrics.instances[0].release_cc);

  // 5 cu on a 4-cu pool never runs; with envelope admission this is caught
  // at dispatch, without it at allocation
  auto big = scenario("dff big container=1 timeout=1000\ninput 0 bytes=8\noutput 0 bytes=8\n"
                      "1 k 0 rt=[5,5] cu=5 mu=1 in=0.0:8 out=0.0:8\n",
                      {0}, R"("envelope_admission":false)", R"(,"containers":[{"id":1,"max_input_bytes":8,"max_output_bytes":8,
                        "feature_vectors":[[{"stage":0,"compute":5,"memory":13,"buffer_bytes":100}]]}],
                        "pool":{"compute":4,"memory":13})");
  auto r = run(big);
  EXPECT_NE(find_line(r.trace, {"fault=infeasible"}), -1);
  EXPECT_FALSE(r.metrics.terminal_fault.has_value());
  EXPECT_EQ(r.metrics.final_occupancy(), (OccupancySample{r.metrics.final_occupancy().time, 0, 0, 0, 0}));
}

TEST(Complete, ReleaseAndCrossStageMessages) {
  auto res = run(load("chest.json"));
  const auto rel = find_line(res.trace, {"event release g=0 inst=0"});
  ASSERT_NE(rel, -1);
  EXPECT_EQ(res.trace[static_cast<std::size_t>(rel) + 1].substr(res.trace[static_cast<std::size_t>(rel) + 1].find(' ')),
            " msg dff_release{global_tag=0}");
  // CHEST1 on stage 0 feeds CHEST3 on stage 1, CHEST5 on stage 1 feeds CHEST6 on stage 0
  EXPECT_NE(find_line(res.trace, {"event control_message", "l=1 stage=0 to=1"}), -1);
  EXPECT_NE(find_line(res.trace, {"event control_message", "l=5 stage=1 to=0"}), -1);
  EXPECT_TRUE(res.final_state.finished());
  EXPECT_EQ(res.final_state.live_count(), 0);
}

TEST(Complete, UnconsumedOutputDroppedAtRelease) {
  // k1's second output feeds nothing inside the DFF; it goes to DFF output 1
  // which nobody reads, and release still leaves no buffer behind
  auto res = run(scenario(kTwoIndependent, {0}));
  EXPECT_EQ(res.metrics.final_occupancy().buffer_bytes, 0);
}

TEST(RunSimulation, InFlightCounts) {
  EXPECT_EQ(run(load("simple.json")).metrics.max_in_flight, 1);
  EXPECT_EQ(run(load("overlap.json")).metrics.max_in_flight, 3);
  auto m = run(load("simple.json")).metrics;
  ASSERT_EQ(m.instances.size(), 9u);
  for (const auto& r : m.instances) EXPECT_EQ(*r.latency(), 623);
}

TEST(RunSimulation, LatencyEndpoints) {
  EXPECT_EQ(run(load("single_range.json"), RuntimeMode::Min).metrics.max_latency(), 623);
  EXPECT_EQ(run(load("single_range.json"), RuntimeMode::Max).metrics.max_latency(), 823);
}

TEST(RunSimulation, OccupancyStartsAndEndsAtZero) {
  for (const char* f : {"simple.json", "overlap.json", "jitter.json", "chest.json"}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      auto res = run(load(f), RuntimeMode::Uniform, seed);
      ASSERT_FALSE(res.metrics.occupancy.empty());
      const auto& first = res.metrics.occupancy.front();
      EXPECT_EQ(first.time, 0);
      EXPECT_EQ(first.compute + first.memory, 0);
      const auto fin = res.metrics.final_occupancy();
      EXPECT_EQ(fin.compute, 0) << f;
      EXPECT_EQ(fin.memory, 0) << f;
      EXPECT_EQ(fin.buffer_bytes, 0) << f;
      EXPECT_EQ(fin.in_flight, 0) << f;
      EXPECT_FALSE(res.metrics.invariant_violation) << *res.metrics.invariant_violation;
    }
  }
}

TEST(RunSimulation, LeakInjectionIsVisible) {
  auto sc = load("jitter.json");
  sc.machine.faults.leak_memory = true;
  auto res = run(sc, RuntimeMode::Uniform, 3);
  // the pool invariant is switched off under injection; only the final
  // occupancy gives the leak away
  EXPECT_GT(res.metrics.final_occupancy().memory, 0);
  EXPECT_EQ(res.metrics.final_occupancy().compute, 0);
  EXPECT_FALSE(res.metrics.invariant_violation.has_value());
}

TEST(RunSimulation, Deterministic) {
  for (const char* f : {"jitter.json", "chest.json"}) {
    auto a = run(load(f), RuntimeMode::Uniform, 42);
    auto b = run(load(f), RuntimeMode::Uniform, 42);
    EXPECT_EQ(a.trace, b.trace);
    std::ostringstream ma, mb, oa, ob;
    write_metrics_csv(ma, a.metrics);
    write_metrics_csv(mb, b.metrics);
    write_occupancy_csv(oa, a.metrics);
    write_occupancy_csv(ob, b.metrics);
    EXPECT_EQ(ma.str(), mb.str());
    EXPECT_EQ(oa.str(), ob.str());
    auto c = run(load(f), RuntimeMode::Uniform, 43);
    EXPECT_NE(a.trace, c.trace);
  }
}

TEST(RunSimulation, CsvHeaders) {
  auto res = run(load("single_fixed.json"));
  std::ostringstream m, o;
  write_metrics_csv(m, res.metrics);
  write_occupancy_csv(o, res.metrics);
  EXPECT_EQ(m.str(), "global_tag,admit_cc,release_cc,latency_cc\n0,0,623,623\n");
  EXPECT_EQ(o.str().substr(0, o.str().find('\n')), "time_cc,compute_units,memory_units,buffer_bytes,in_flight");
}

TEST(RunSimulation, TraceReplays) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto a = run(load("jitter.json"), RuntimeMode::Uniform, seed);
    SimOptions o;
    o.script = parse_trace_firings(a.trace);
    EXPECT_EQ(*o.script, a.firings);
    auto b = run_simulation(load("jitter.json"), o);
    EXPECT_FALSE(b.metrics.script_diverged) << b.metrics.script_error;
    EXPECT_EQ(a.trace, b.trace);
  }
}

TEST(RunSimulation, ReplayRejectsImpossibleScript) {
  auto a = run(load("single_fixed.json"));
  auto script = a.firings;
  script[3].time -= 1;
  SimOptions o;
  o.script = script;
  auto b = run_simulation(load("single_fixed.json"), o);
  EXPECT_TRUE(b.metrics.script_diverged);
}

TEST(RunSimulation, FcfsReleaseOrderMatchesAdmission) {
  auto sc = load("overlap.json");
  auto res = run(sc);
  std::vector<std::uint32_t> admitted, released;
  for (const auto& line : res.trace) {
    if (line.find(" event admit ") != std::string::npos) {
      admitted.push_back(static_cast<std::uint32_t>(std::stoul(line.substr(line.find("g=") + 2))));
    }
    if (line.find(" event release ") != std::string::npos) {
      released.push_back(static_cast<std::uint32_t>(std::stoul(line.substr(line.find("g=") + 2))));
    }
  }
  EXPECT_EQ(admitted.size(), 9u);
  EXPECT_EQ(admitted, released);
}

TEST(RunSimulation, TagPairsUniqueAmongLiveKernels) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    auto res = run(load("jitter.json"), RuntimeMode::Uniform, seed);
    std::set<std::pair<std::string, std::string>> running;
    for (const auto& line : res.trace) {
      auto field = [&](const char* k) {
        auto p = line.find(k);
        return p == std::string::npos ? std::string() : line.substr(p, line.find(' ', p) - p);
      };
      const auto key = std::make_pair(field("g="), field("l="));
      if (line.find(" event alloc ") != std::string::npos) {
        EXPECT_TRUE(running.insert(key).second) << line;
      }
      if (line.find(" event complete ") != std::string::npos) {
        EXPECT_EQ(running.erase(key), 1u) << line;
      }
    }
    EXPECT_TRUE(running.empty());
  }
}

TEST(RunSimulation, TimeoutDropsAndReports) {
  auto sc = load("jitter.json");
  sc.set_timeout(700);
  auto res = run(sc, RuntimeMode::Max);
  int timeouts = 0;
  for (const auto& r : res.metrics.instances) timeouts += r.dropped == FaultKind::Timeout;
  EXPECT_GT(timeouts, 0);
  EXPECT_NE(find_line(res.trace, {"msg error_packet{code=timeout"}), -1);
  EXPECT_EQ(res.metrics.final_occupancy().memory, 0);
}

}  // namespace
}  // namespace sre
