#include <gtest/gtest.h>

#include <map>

#include "sre/checker.hpp"
#include "support.hpp"

namespace sre {
namespace {

using testing::load;

const Verdict& find(const std::vector<Verdict>& vs, QueryKind k) {
  for (const auto& v : vs)
    if (v.query.kind == k) return v;
  throw std::runtime_error("no verdict");
}

std::vector<Query> with_latency() {
  auto q = builtin_queries();
  q.push_back({QueryKind::WorstCaseLatency, "wcl", {}, {}});
  q.push_back({QueryKind::BestCaseLatency, "bcl", {}, {}});
  return q;
}

std::vector<Verdict> check_all(const Scenario& sc, Engine e = Engine::Zone) {
  CheckOptions o;
  o.engine = e;
  return check(sc, with_latency(), o);
}

TEST(QueryList, ParsesNamesAndOptions) {
  auto qs = parse_query_list("# comment\ndeadlock\nq2\ndeadline_miss timeout=700\nmax_in_flight expect=3\n\nwcl\n");
  ASSERT_EQ(qs.size(), 5u);
  EXPECT_EQ(qs[0].kind, QueryKind::Deadlock);
  EXPECT_EQ(qs[1].kind, QueryKind::QueueOverflow);
  EXPECT_EQ(qs[2].kind, QueryKind::DeadlineMiss);
  EXPECT_EQ(qs[2].timeout, 700);
  EXPECT_EQ(qs[3].expect, 3);
  EXPECT_EQ(qs[4].kind, QueryKind::WorstCaseLatency);
  EXPECT_THROW(parse_query_list("nonsense\n"), QueryParseError);
  EXPECT_THROW(parse_query_list("deadline_miss timeout=abc\n"), QueryParseError);
  EXPECT_THROW(parse_query_list("deadlock expect=3\n"), QueryParseError);
  EXPECT_EQ(builtin_queries().size(), 6u);
}

TEST(Check, LatencyOfShippedScenarios) {
  struct Row {
    const char* file;
    Cycles wcl, bcl;
    int in_flight;
  };
  for (const Row& r : {Row{"single_fixed.json", 623, 623, 1}, Row{"single_range.json", 823, 623, 1},
                       Row{"simple.json", 623, 623, 1}, Row{"overlap.json", 715, 623, 3},
                       Row{"jitter.json", 935, 623, 3}}) {
    auto vs = check_all(load(r.file));
    EXPECT_EQ(find(vs, QueryKind::WorstCaseLatency).value, r.wcl) << r.file;
    EXPECT_EQ(find(vs, QueryKind::BestCaseLatency).value, r.bcl) << r.file;
    EXPECT_EQ(find(vs, QueryKind::MaxInFlight).value, r.in_flight) << r.file;
    for (auto k : {QueryKind::Deadlock, QueryKind::QueueOverflow, QueryKind::DoubleAssign, QueryKind::DeadlineMiss,
                   QueryKind::Livelock})
      EXPECT_EQ(find(vs, k).status, Status::Pass) << r.file << ' ' << query_name(k);
  }
}

// Oracle for a lone chain: the latency is director + n * (scheduler +
// runtime) because nothing overlaps when a single packet is in flight.
TEST(Check, LoneChainMatchesClosedForm) {
  for (int n = 1; n <= 3; ++n) {
    for (Cycles lo : {10, 150}) {
      const Cycles hi = lo + 40;
      auto sc = testing::from_json(R"({"dffs":[{"name":"c","text":")" + [&] {
        std::string s;
        for (char c : testing::chain_text(n, lo, hi)) s += c == '\n' ? std::string("\\n") : std::string(1, c);
        return s;
      }() + R"("}],"sources":[{"dff":"c","period":50000,"count":1}],"machine":{"scheduler_overlap":false}})");
      auto vs = check_all(sc);
      EXPECT_EQ(find(vs, QueryKind::BestCaseLatency).value, 100 + n * (123 + lo)) << n << ' ' << lo;
      EXPECT_EQ(find(vs, QueryKind::WorstCaseLatency).value, 100 + n * (123 + hi)) << n << ' ' << lo;
    }
  }
}

TEST(Check, EnginesAgreeOnShippedScenarios) {
  for (const char* f : {"single_fixed.json", "single_range.json", "simple.json", "overlap.json"}) {
    auto z = check_all(load(f), Engine::Zone);
    auto d = check_all(load(f), Engine::Discrete);
    for (std::size_t i = 0; i < z.size(); ++i) {
      EXPECT_EQ(z[i].status, d[i].status) << f << ' ' << z[i].query.label;
      EXPECT_EQ(z[i].value, d[i].value) << f << ' ' << z[i].query.label;
    }
  }
}

TEST(Check, SkippedRunClearIsDoubleAssignment) {
  auto sc = load("simple.json");
  sc.machine.faults.skip_run_clear = true;
  auto vs = check_all(sc);
  const auto& q3 = find(vs, QueryKind::DoubleAssign);
  ASSERT_EQ(q3.status, Status::Fail);
  ASSERT_TRUE(q3.witness);
  auto rep = replay_witness(std::make_shared<Model>(sc), q3);
  EXPECT_TRUE(rep.reproduced) << rep.detail;
}

TEST(Check, LostCompletionDeadlocks) {
  auto sc = load("single_fixed.json");
  sc.machine.faults.lose_completion_tag = 1;
  auto vs = check_all(sc);
  const auto& q1 = find(vs, QueryKind::Deadlock);
  ASSERT_EQ(q1.status, Status::Fail);
  EXPECT_EQ(find(vs, QueryKind::DeadlineMiss).status, Status::Fail);
  EXPECT_TRUE(find(vs, QueryKind::WorstCaseLatency).unbounded);
  EXPECT_EQ(find(vs, QueryKind::Livelock).status, Status::Pass);
  auto rep = replay_witness(std::make_shared<Model>(sc), q1);
  EXPECT_TRUE(rep.reproduced) << rep.detail;
}

TEST(Check, RerunningKernelLivelocks) {
  auto sc = load("single_fixed.json");
  sc.machine.faults.rerun_local_tag = 2;
  auto vs = check_all(sc);
  const auto& q6 = find(vs, QueryKind::Livelock);
  ASSERT_EQ(q6.status, Status::Fail);
  ASSERT_TRUE(q6.witness);
  EXPECT_LT(q6.witness->loop_start, q6.witness->firings.size());
  EXPECT_EQ(find(vs, QueryKind::Deadlock).status, Status::Pass);
  auto rep = replay_witness(std::make_shared<Model>(sc), q6);
  EXPECT_TRUE(rep.reproduced) << rep.detail;
}

TEST(Check, DeadlineMissWitnessReplays) {
  auto sc = load("jitter.json");
  auto qs = parse_query_list("deadline_miss timeout=700\n");
  auto vs = check(sc, qs, CheckOptions{});
  ASSERT_EQ(vs[0].status, Status::Fail);
  auto rep = replay_witness(std::make_shared<Model>(sc), vs[0]);
  EXPECT_TRUE(rep.reproduced) << rep.detail;
  // exactly at the worst case the deadline holds
  auto ok = check(sc, parse_query_list("deadline_miss timeout=935\n"), CheckOptions{});
  EXPECT_EQ(ok[0].status, Status::Pass);
  auto miss = check(sc, parse_query_list("deadline_miss timeout=934\n"), CheckOptions{});
  EXPECT_EQ(miss[0].status, Status::Fail);
}

TEST(Check, MaxInFlightExpectation) {
  auto sc = load("overlap.json");
  EXPECT_EQ(check(sc, parse_query_list("max_in_flight expect=3\n"), CheckOptions{})[0].status, Status::Pass);
  auto wrong = check(sc, parse_query_list("max_in_flight expect=2\n"), CheckOptions{});
  EXPECT_EQ(wrong[0].status, Status::Fail);
  EXPECT_EQ(wrong[0].value, 3);
}

TEST(Check, BudgetExceeded) {
  CheckOptions o;
  o.budget.max_states = 10;
  auto vs = check(load("jitter.json"), with_latency(), o);
  for (const auto& v : vs) EXPECT_EQ(v.status, Status::BudgetExceeded) << v.query.label;
}

// Every failing verdict on random scenarios comes with a witness that the
// simulator reproduces.
TEST(Check, RandomWitnessesReplay) {
  std::mt19937_64 rng(777);
  int failing = 0, compared = 0;
  std::map<QueryKind, int> by_kind;
  for (int i = 0; compared < 150 && i < 2000; ++i) {
    Scenario sc;
    try {
      sc = testing::random_small(rng);
    } catch (const ScenarioError&) {
      continue;
    }
    CheckOptions o;
    o.budget.max_states = 2'000'000;
    auto model = std::make_shared<Model>(sc);
    auto vs = check(sc, builtin_queries(), o);
    if (vs.front().status == Status::BudgetExceeded) continue;
    ++compared;
    for (const auto& v : vs) {
      if (v.status != Status::Fail || v.query.kind == QueryKind::MaxInFlight) continue;
      ++failing;
      ++by_kind[v.query.kind];
      ASSERT_TRUE(v.witness) << "scenario #" << i << ' ' << v.query.label;
      auto rep = replay_witness(model, v);
      EXPECT_TRUE(rep.reproduced) << "scenario #" << i << ' ' << v.query.label << ": " << rep.detail;
    }
  }
  EXPECT_GT(failing, 20);
  EXPECT_GE(by_kind.size(), 3u);
}

// Widening an arrival jitter window or a runtime range only adds behaviours.
TEST(Check, WiderRangesNeverShrinkLatencySpread) {
  std::mt19937_64 rng(31);
  int compared = 0;
  for (int i = 0; compared < 40 && i < 500; ++i) {
    Scenario sc;
    try {
      sc = testing::random_small(rng);
    } catch (const ScenarioError&) {
      continue;
    }
    CheckOptions o;
    o.budget.max_states = 1'000'000;
    auto base = latency_bounds(sc, o);
    auto wide = sc;
    for (auto& s : wide.sources) s.arrival.jitter_cc += 3;
    for (auto& g : wide.dffs)
      for (auto& mf : g.microflows) mf.runtime.max_cc += 2;
    auto w = latency_bounds(wide, o);
    if (base.stats.budget_exceeded || w.stats.budget_exceeded) continue;
    ++compared;
    if (!base.unbounded) {
      EXPECT_TRUE(w.unbounded || w.worst >= base.worst) << "scenario #" << i;
    } else {
      EXPECT_TRUE(w.unbounded) << "scenario #" << i;
    }
    EXPECT_LE(w.best, base.best) << "scenario #" << i;
  }
  EXPECT_GE(compared, 20);
}

TEST(Check, LargerPoolNeverSlowerOnShippedScenarios) {
  for (const char* f : {"overlap.json", "jitter.json"}) {
    std::optional<Cycles> prev;
    for (int mu = 6; mu <= 16; ++mu) {
      auto sc = load(f);
      sc.set_pool(4, mu);
      auto lb = latency_bounds(sc, CheckOptions{});
      ASSERT_FALSE(lb.stats.budget_exceeded);
      if (lb.unbounded) continue;
      if (prev) {
        EXPECT_LE(lb.worst, *prev) << f << " mu=" << mu;
      }
      prev = lb.worst;
    }
  }
}

TEST(ResourceSearch, FindsSmallestMemoryPool) {
  auto sc = load("jitter.json");
  auto rs = min_resource_search(sc, PoolResource::Memory, 935, 3, 20, CheckOptions{});
  ASSERT_TRUE(rs.threshold);
  ASSERT_TRUE(rs.at_threshold);
  EXPECT_EQ(rs.at_threshold->status, Status::Pass);
  if (*rs.threshold > 3) {
    ASSERT_TRUE(rs.below_threshold);
    EXPECT_EQ(rs.below_threshold->status, Status::Fail);
  }
  // oracle: linear scan over the same range
  int first = -1;
  for (int mu = 3; mu <= 20 && first < 0; ++mu) {
    auto s = sc;
    s.set_pool(sc.machine.stages[0].compute_units, mu);
    auto lb = latency_bounds(s, CheckOptions{});
    if (!lb.unbounded && lb.worst <= 935) first = mu;
  }
  EXPECT_EQ(*rs.threshold, first);
}

TEST(ResourceSearch, InfeasibleBelowBestCase) {
  auto rs = min_resource_search(load("simple.json"), PoolResource::Compute, 622, 1, 8, CheckOptions{});
  EXPECT_TRUE(rs.infeasible);
  EXPECT_FALSE(rs.threshold);
}

TEST(Output, VerdictsCsv) {
  auto vs = check_all(load("single_fixed.json"));
  std::ostringstream os;
  write_verdicts_csv(os, vs);
  const auto text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "query,status,value,states,seconds,detail");
  EXPECT_NE(text.find("\nwcl,pass,623,"), std::string::npos) << text;
  EXPECT_NE(summarize(vs).find("wcl"), std::string::npos);
}

}  // namespace
}  // namespace sre
