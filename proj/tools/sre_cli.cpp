// sre: validate | sim | check | export-ta
//
// exit codes: 0 pass, 1 query/check failed, 2 input error, 3 budget exceeded,
// 4 file not found

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sre/checker.hpp"
#include "sre/ingest.hpp"
#include "sre/scenario.hpp"
#include "sre/sim.hpp"

namespace fs = std::filesystem;
using namespace sre;

namespace {

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kInputError = 2;
constexpr int kBudget = 3;
constexpr int kMissing = 4;

struct ExitWith {
  int code;
};

void print_diags(const fs::path& path, const std::vector<Diagnostic>& diags, const char* level) {
  for (const auto& d : diags) {
    std::cerr << path.string();
    if (d.line) std::cerr << ':' << d.line;
    if (d.column) std::cerr << ':' << d.column;
    std::cerr << ": " << level << ": " << d.message << '\n';
  }
}

bool is_scenario(const fs::path& p) { return p.extension() == ".json"; }

void require_file(const fs::path& p) {
  if (!fs::exists(p)) {
    std::cerr << "error: " << p.string() << ": no such file\n";
    throw ExitWith{kMissing};
  }
}

Scenario load_or_exit(const fs::path& p) {
  require_file(p);
  try {
    return load_scenario(p);
  } catch (const FileError& e) {
    std::cerr << "error: " << e.what() << '\n';
    throw ExitWith{kMissing};
  } catch (const ScenarioError& e) {
    std::cerr << p.string() << ": error: " << e.what() << '\n';
    throw ExitWith{kInputError};
  }
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream os(dir / name);
  if (!os) {
    std::cerr << "error: cannot write " << (dir / name).string() << '\n';
    throw ExitWith{kInputError};
  }
  return os;
}

// shared scenario overrides
struct Overrides {
  std::string policy;
  std::optional<Cycles> timeout;
  std::optional<int> compute;
  std::optional<int> memory;
  std::optional<bool> overlap;
  bool inject_leak = false;

  void add(CLI::App* app) {
    app->add_option("--policy", policy, "scheduling policy")->check(CLI::IsMember({"fcfs", "edf"}));
    app->add_option("--timeout", timeout, "override every DFF timeout (cc)");
    app->add_option("--compute", compute, "compute units per stage");
    app->add_option("--memory", memory, "memory units per stage");
    app->add_option("--overlap", overlap, "schedule a kernel once its producers have started (true/false)");
    app->add_flag("--inject-leak", inject_leak, "completions never return memory (negative test)");
  }
  void apply(Scenario& s) const {
    if (policy == "edf") s.machine.policy = Policy::Edf;
    if (policy == "fcfs") s.machine.policy = Policy::Fcfs;
    if (timeout) s.set_timeout(*timeout);
    for (auto& st : s.machine.stages) {
      if (compute) st.compute_units = *compute;
      if (memory) st.memory_units = *memory;
    }
    if (overlap) s.machine.scheduler_overlap = *overlap;
    if (inject_leak) s.machine.faults.leak_memory = true;
  }
};

int cmd_validate(const fs::path& path) {
  require_file(path);
  if (is_scenario(path)) {
    auto s = load_or_exit(path);
    std::cout << path.string() << ": ok (" << s.dffs.size() << " DFFs, " << s.sources.size() << " sources)\n";
    return kPass;
  }
  ParseResult r;
  try {
    r = load_graph_file(path);
  } catch (const FileError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMissing;
  }
  print_diags(path, r.warnings, "warning");
  if (!r.ok()) {
    print_diags(path, r.diagnostics, "error");
    return kInputError;
  }
  std::cout << path.string() << ": ok (" << r.graph->microflows.size() << " kernels)\n";
  return kPass;
}

struct SimArgs {
  fs::path scenario;
  fs::path out = "out";
  std::uint64_t seed = 1;
  std::string runtime = "uniform";
  int repeats = 1;
  bool no_timeout_drop = false;
  Overrides ov;
};

int cmd_sim(const SimArgs& a) {
  auto sc = load_or_exit(a.scenario);
  a.ov.apply(sc);
  auto model = std::make_shared<const Model>(sc);
  SimOptions o;
  o.runtime = a.runtime == "min" ? RuntimeMode::Min : a.runtime == "max" ? RuntimeMode::Max : RuntimeMode::Uniform;
  o.drop_on_timeout = !a.no_timeout_drop;

  auto metrics = open_out(a.out, "metrics.csv");
  metrics << "run,seed,global_tag,admit_cc,release_cc,latency_cc,dropped\n";
  bool bad = false;
  for (int r = 0; r < a.repeats; ++r) {
    o.seed = a.seed + static_cast<std::uint64_t>(r);
    auto res = run_simulation(model, o);
    for (const auto& rec : res.metrics.instances) {
      metrics << r << ',' << o.seed << ',' << rec.global_tag << ',' << rec.admit_cc << ',';
      if (rec.release_cc) metrics << *rec.release_cc << ',' << *rec.latency();
      else metrics << ',';
      metrics << ',' << (rec.dropped ? to_string(*rec.dropped) : "") << '\n';
    }
    const auto fin = res.metrics.final_occupancy();
    const bool leaked = fin.compute || fin.memory || fin.buffer_bytes || fin.in_flight;
    if (r == 0) {
      auto occ = open_out(a.out, "occupancy.csv");
      write_occupancy_csv(occ, res.metrics);
      auto tr = open_out(a.out, "trace.txt");
      for (const auto& line : res.trace) tr << line << '\n';
    }
    std::cout << "run " << r << " seed " << o.seed << ": " << res.metrics.instances.size() << " admitted, "
              << res.metrics.drops << " dropped, max latency ";
    if (res.metrics.instances.empty()) std::cout << '-';
    else std::cout << res.metrics.max_latency();
    std::cout << "cc, max in flight " << res.metrics.max_in_flight << '\n';
    if (res.metrics.terminal_fault) {
      std::cout << "  terminal fault: " << to_string(*res.metrics.terminal_fault) << '\n';
      bad = true;
    }
    if (res.metrics.invariant_violation) {
      std::cout << "  invariant violated: " << *res.metrics.invariant_violation << '\n';
      bad = true;
    }
    if (res.metrics.stalled) {
      std::cout << "  stalled with live work\n";
      bad = true;
    }
    if (leaked) {
      std::cout << "  occupancy at end: compute " << fin.compute << " memory " << fin.memory << " buffer "
                << fin.buffer_bytes << " in flight " << fin.in_flight << '\n';
      bad = true;
    }
  }
  return bad ? kFail : kPass;
}

struct CheckArgs {
  fs::path scenario;
  fs::path queries;
  fs::path out;
  std::string engine = "zone";
  std::uint64_t max_states = Budget{}.max_states;
  double max_seconds = 600;
  bool no_witness = false;
  bool replay = false;
  Overrides ov;
};

std::string file_label(std::string s) {
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  return s;
}

int cmd_check(const CheckArgs& a) {
  auto sc = load_or_exit(a.scenario);
  a.ov.apply(sc);
  std::vector<Query> queries = builtin_queries();
  if (!a.queries.empty()) {
    require_file(a.queries);
    std::ifstream in(a.queries);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      queries = parse_query_list(ss.str());
    } catch (const QueryParseError& e) {
      std::cerr << a.queries.string() << ": error: " << e.what() << '\n';
      return kInputError;
    }
  }
  CheckOptions o;
  o.engine = a.engine == "discrete" ? Engine::Discrete : Engine::Zone;
  o.budget.max_states = a.max_states;
  o.budget.max_time = std::chrono::milliseconds(static_cast<std::int64_t>(a.max_seconds * 1000));
  o.witnesses = !a.no_witness;

  auto model = std::make_shared<const Model>(sc);
  const bool need_graph =
      std::any_of(queries.begin(), queries.end(), [](const Query& q) { return q.kind == QueryKind::Livelock; });
  const auto ex = explore(model, o, need_graph);
  const auto verdicts = check(ex, queries, o);

  std::cout << summarize(verdicts);
  if (ex.stats.budget_exceeded) std::cout << "exploration stopped: " << ex.stats.budget_reason << '\n';
  if (!a.out.empty()) {
    auto csv = open_out(a.out, "verdicts.csv");
    write_verdicts_csv(csv, verdicts);
    auto sum = open_out(a.out, "summary.txt");
    sum << summarize(verdicts);
    for (const auto& v : verdicts) {
      if (!v.witness) continue;
      auto w = open_out(a.out, "witness_" + file_label(v.query.label) + ".trace");
      w << "# " << v.witness->summary << '\n';
      for (std::size_t i = 0; i < v.witness->firings.size(); ++i) {
        if (v.query.kind == QueryKind::Livelock && i == v.witness->loop_start) w << "# loop\n";
        w << render_firing(v.witness->firings[i]) << '\n';
      }
      w << "# end " << v.witness->end_time << '\n';
    }
  }
  if (a.replay)
    for (const auto& v : verdicts)
      if (v.witness) {
        auto r = replay_witness(model, v);
        std::cout << "replay " << v.query.label << ": " << (r.reproduced ? "reproduced" : "NOT reproduced") << " ("
                  << r.detail << ")\n";
      }

  bool fail = false;
  bool budget = false;
  for (const auto& v : verdicts) {
    fail |= v.status == Status::Fail;
    budget |= v.status == Status::BudgetExceeded;
  }
  if (fail) return kFail;
  if (budget) return kBudget;
  return kPass;
}

int cmd_export_ta(const std::vector<fs::path>& inputs, const fs::path& output) {
  std::vector<DffGraph> graphs;
  for (const auto& p : inputs) {
    require_file(p);
    if (is_scenario(p)) {
      auto s = load_or_exit(p);
      graphs.insert(graphs.end(), s.dffs.begin(), s.dffs.end());
      continue;
    }
    ParseResult r;
    try {
      r = load_graph_file(p);
    } catch (const FileError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kMissing;
    }
    print_diags(p, r.warnings, "warning");
    if (!r.ok()) {
      print_diags(p, r.diagnostics, "error");
      return kInputError;
    }
    graphs.push_back(*r.graph);
  }
  const auto doc = export_ta(graphs);
  const auto xml = render_ta_xml(doc);
  if (parse_ta_xml(xml) != doc) {
    std::cerr << "error: exported model does not re-parse to itself\n";
    return kInputError;
  }
  if (output.empty() || output == "-") {
    std::cout << xml;
  } else {
    if (output.has_parent_path()) fs::create_directories(output.parent_path());
    std::ofstream os(output);
    os << xml;
    std::size_t edges = 0;
    for (const auto& t : doc.templates) edges += t.transitions.size();
    std::cout << output.string() << ": " << doc.templates.size() << " templates, " << edges << " edges\n";
  }
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dataflow accelerator simulator and timed model checker"};
  app.require_subcommand(1);

  fs::path validate_path;
  auto* validate = app.add_subcommand("validate", "check a .dff, .pi.xml or scenario .json file");
  validate->add_option("path", validate_path)->required();

  SimArgs sim;
  auto* simc = app.add_subcommand("sim", "simulate a scenario");
  simc->add_option("scenario", sim.scenario)->required();
  simc->add_option("--out", sim.out, "output directory");
  simc->add_option("--seed", sim.seed, "first seed; repeat r uses seed+r");
  simc->add_option("--runtime", sim.runtime, "kernel runtimes")->check(CLI::IsMember({"uniform", "min", "max"}));
  simc->add_option("--repeats", sim.repeats)->check(CLI::PositiveNumber);
  simc->add_flag("--no-timeout-drop", sim.no_timeout_drop, "keep DFFs that outlive their timeout");
  sim.ov.add(simc);

  CheckArgs chk;
  auto* checkc = app.add_subcommand("check", "model-check a scenario");
  checkc->add_option("scenario", chk.scenario)->required();
  checkc->add_option("--queries", chk.queries, "query list file (default: the six built-ins)");
  checkc->add_option("--out", chk.out, "write verdicts.csv, summary.txt and witness traces here");
  checkc->add_option("--engine", chk.engine)->check(CLI::IsMember({"zone", "discrete"}));
  checkc->add_option("--max-states", chk.max_states, "state budget");
  checkc->add_option("--max-seconds", chk.max_seconds, "wall-time budget");
  checkc->add_flag("--no-witness", chk.no_witness);
  checkc->add_flag("--replay", chk.replay, "replay each witness in the simulator");
  chk.ov.add(checkc);

  std::vector<fs::path> ta_inputs;
  fs::path ta_output;
  auto* ta = app.add_subcommand("export-ta", "write the timed-automata model of one or more DFFs");
  ta->add_option("inputs", ta_inputs)->required();
  ta->add_option("-o,--output", ta_output, "output .ta.xml (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPass : kInputError;
  }

  try {
    if (*validate) return cmd_validate(validate_path);
    if (*simc) return cmd_sim(sim);
    if (*checkc) return cmd_check(chk);
    if (*ta) return cmd_export_ta(ta_inputs, ta_output);
  } catch (const ExitWith& e) {
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
