#include "sre/scenario.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "sre/ingest.hpp"

namespace sre {

using nlohmann::json;

void Scenario::set_timeout(Cycles timeout_cc) {
  for (auto& g : dffs) g.timeout_cc = timeout_cc;
}

void Scenario::set_pool(int compute_units, int memory_units) {
  for (auto& st : machine.stages) {
    st.compute_units = compute_units;
    st.memory_units = memory_units;
  }
}

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ScenarioError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw ScenarioError(where + ": unknown key '" + key + "'");
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ScenarioError(where + ": bad value for '" + key + "'");
  }
}

StageConfig parse_stage(const json& j, const std::string& where) {
  check_keys(j, {"compute", "memory", "buffer_bytes", "ready_queue"}, where);
  StageConfig st;
  st.compute_units = get_or(j, "compute", st.compute_units, where);
  st.memory_units = get_or(j, "memory", st.memory_units, where);
  st.buffer_bytes = get_or(j, "buffer_bytes", st.buffer_bytes, where);
  st.ready_queue_capacity = get_or(j, "ready_queue", st.ready_queue_capacity, where);
  return st;
}

MachineConfig parse_machine(const json& j) {
  const std::string where = "machine";
  check_keys(j,
             {"stages", "director_cost", "scheduler_cost", "director_queue", "max_parallel", "policy",
              "scheduler_overlap", "dma_latency", "memory_hold", "envelope_admission", "faults"},
             where);
  MachineConfig m;
  if (j.contains("stages")) {
    if (!j["stages"].is_array() || j["stages"].empty()) throw ScenarioError("machine.stages: expected a non-empty array");
    m.stages.clear();
    for (std::size_t i = 0; i < j["stages"].size(); ++i)
      m.stages.push_back(parse_stage(j["stages"][i], "machine.stages[" + std::to_string(i) + "]"));
  }
  m.director_cost_cc = get_or(j, "director_cost", m.director_cost_cc, where);
  m.scheduler_cost_cc = get_or(j, "scheduler_cost", m.scheduler_cost_cc, where);
  m.director_queue_capacity = get_or(j, "director_queue", m.director_queue_capacity, where);
  m.max_parallel = get_or(j, "max_parallel", m.max_parallel, where);
  auto policy = get_or<std::string>(j, "policy", "fcfs", where);
  if (policy == "fcfs") m.policy = Policy::Fcfs;
  else if (policy == "edf") m.policy = Policy::Edf;
  else throw ScenarioError("machine.policy: expected 'fcfs' or 'edf'");
  m.scheduler_overlap = get_or(j, "scheduler_overlap", m.scheduler_overlap, where);
  m.dma_latency_cc = get_or(j, "dma_latency", m.dma_latency_cc, where);
  auto hold = get_or<std::string>(j, "memory_hold", "running", where);
  if (hold == "running") m.memory_hold = MemoryHold::WhileRunning;
  else if (hold == "consumed") m.memory_hold = MemoryHold::UntilConsumed;
  else throw ScenarioError("machine.memory_hold: expected 'running' or 'consumed'");
  m.envelope_admission = get_or(j, "envelope_admission", m.envelope_admission, where);
  if (j.contains("faults")) {
    const auto& f = j["faults"];
    check_keys(f, {"leak_memory", "skip_run_clear", "rerun_local_tag", "lose_completion_tag"}, "machine.faults");
    m.faults.leak_memory = get_or(f, "leak_memory", false, "machine.faults");
    m.faults.skip_run_clear = get_or(f, "skip_run_clear", false, "machine.faults");
    m.faults.rerun_local_tag = get_or(f, "rerun_local_tag", 0, "machine.faults");
    m.faults.lose_completion_tag = get_or(f, "lose_completion_tag", 0, "machine.faults");
  }
  return m;
}

Container parse_container(const json& j, const std::string& where) {
  check_keys(j, {"id", "max_input_bytes", "max_output_bytes", "feature_vectors"}, where);
  Container c;
  c.container_id = get_or(j, "id", 0, where);
  c.max_input_bytes = get_or<std::int64_t>(j, "max_input_bytes", 0, where);
  c.max_output_bytes = get_or<std::int64_t>(j, "max_output_bytes", 0, where);
  if (j.contains("feature_vectors")) {
    for (const auto& fvj : j["feature_vectors"]) {
      FeatureVector fv;
      for (const auto& e : fvj) {
        check_keys(e, {"stage", "compute", "memory", "buffer_bytes"}, where + ".feature_vectors");
        fv.stages.push_back({get_or(e, "stage", 0, where), get_or(e, "compute", 0, where),
                             get_or(e, "memory", 0, where), get_or<std::int64_t>(e, "buffer_bytes", 0, where)});
      }
      c.feature_vectors.push_back(std::move(fv));
    }
  }
  return c;
}

}  // namespace

Scenario parse_scenario_json(std::string_view text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
  }
  check_keys(j, {"name", "dffs", "containers", "sources", "machine", "timeout", "pool"}, "scenario");

  Scenario s;
  s.name = get_or<std::string>(j, "name", "scenario", "scenario");
  if (j.contains("machine")) s.machine = parse_machine(j["machine"]);

  if (!j.contains("dffs") || !j["dffs"].is_array() || j["dffs"].empty())
    throw ScenarioError("scenario: 'dffs' must be a non-empty array");
  std::vector<std::string> dff_names;
  ParseOptions opts{static_cast<int>(s.machine.stages.size())};
  for (std::size_t i = 0; i < j["dffs"].size(); ++i) {
    const auto& d = j["dffs"][i];
    const std::string where = "dffs[" + std::to_string(i) + "]";
    check_keys(d, {"name", "file", "text"}, where);
    ParseResult pr;
    if (d.contains("file")) {
      pr = load_graph_file(base_dir / d["file"].get<std::string>(), opts);
    } else if (d.contains("text")) {
      pr = parse_dff_text(d["text"].get<std::string>(), opts);
    } else {
      throw ScenarioError(where + ": needs 'file' or 'text'");
    }
    if (!pr.ok()) {
      std::ostringstream os;
      os << where << ": invalid graph";
      for (const auto& diag : pr.diagnostics) os << "\n  line " << diag.line << ": " << diag.message;
      throw ScenarioError(os.str());
    }
    dff_names.push_back(get_or<std::string>(d, "name", pr.graph->name, where));
    s.dffs.push_back(std::move(*pr.graph));
  }

  if (j.contains("containers"))
    for (std::size_t i = 0; i < j["containers"].size(); ++i)
      s.containers.push_back(parse_container(j["containers"][i], "containers[" + std::to_string(i) + "]"));

  if (!j.contains("sources") || !j["sources"].is_array())
    throw ScenarioError("scenario: 'sources' must be an array");
  for (std::size_t i = 0; i < j["sources"].size(); ++i) {
    const auto& sj = j["sources"][i];
    const std::string where = "sources[" + std::to_string(i) + "]";
    check_keys(sj, {"name", "dff", "container", "period", "phase", "jitter", "count"}, where);
    SourceConfig src;
    src.name = get_or<std::string>(sj, "name", "s" + std::to_string(i), where);
    auto dff = get_or<std::string>(sj, "dff", dff_names.front(), where);
    auto it = std::find(dff_names.begin(), dff_names.end(), dff);
    if (it == dff_names.end()) throw ScenarioError(where + ": unknown dff '" + dff + "'");
    src.dff_index = static_cast<int>(it - dff_names.begin());
    if (sj.contains("container")) src.container_id = get_or(sj, "container", 0, where);
    src.arrival.period_cc = get_or(sj, "period", src.arrival.period_cc, where);
    src.arrival.phase_cc = get_or(sj, "phase", src.arrival.phase_cc, where);
    src.arrival.jitter_cc = get_or(sj, "jitter", src.arrival.jitter_cc, where);
    src.arrival.count = get_or(sj, "count", src.arrival.count, where);
    s.sources.push_back(std::move(src));
  }

  if (j.contains("timeout")) s.set_timeout(get_or<Cycles>(j, "timeout", 1, "scenario"));
  if (j.contains("pool")) {
    const auto& p = j["pool"];
    check_keys(p, {"compute", "memory"}, "pool");
    s.set_pool(get_or(p, "compute", 4, "pool"), get_or(p, "memory", 13, "pool"));
  }

  if (auto problems = validate_scenario(s); !problems.empty()) {
    std::string msg = "invalid scenario:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ScenarioError(msg);
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario_json(ss.str(), path.parent_path());
}

std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> out;
  const auto& m = s.machine;
  if (m.stages.empty()) out.push_back("machine needs at least one stage");
  if (m.director_cost_cc < 0 || m.scheduler_cost_cc < 0 || m.dma_latency_cc < 0)
    out.push_back("costs must be non-negative");
  if (m.max_parallel < 1 || m.max_parallel > 64) out.push_back("max_parallel must be in [1, 64]");
  if (m.director_queue_capacity < 1) out.push_back("director queue capacity must be positive");
  for (const auto& st : m.stages) {
    if (st.compute_units < 0 || st.memory_units < 0) out.push_back("pool sizes must be non-negative");
    if (st.ready_queue_capacity < 1) out.push_back("ready queue capacity must be positive");
  }
  for (const auto& g : s.dffs) {
    if (g.microflows.size() > 64) out.push_back("DFF " + g.name + " has more than 64 microflows");
    std::size_t arcs = 0;
    for (const auto& mf : g.microflows) {
      arcs += mf.inputs.size();
      for (const auto& o : mf.outputs) arcs += o.sink.owner_local_tag == 0 ? 1 : 0;
      if (mf.stage_id >= static_cast<int>(m.stages.size()))
        out.push_back("DFF " + g.name + ": microflow " + std::to_string(mf.local_tag) + " uses unknown stage " +
                      std::to_string(mf.stage_id));
    }
    if (arcs > 64) out.push_back("DFF " + g.name + " has more than 64 token arcs");
  }
  for (const auto& src : s.sources) {
    const auto& a = src.arrival;
    if (src.dff_index < 0 || src.dff_index >= static_cast<int>(s.dffs.size()))
      out.push_back("source " + src.name + " references an unknown DFF");
    if (a.period_cc <= 0) out.push_back("source " + src.name + ": period must be positive");
    if (a.phase_cc < 0 || a.jitter_cc < 0) out.push_back("source " + src.name + ": phase/jitter must be >= 0");
    if (a.jitter_cc >= a.period_cc) out.push_back("source " + src.name + ": jitter must be below the period");
    if (a.count < 0) out.push_back("source " + src.name + ": count must be >= 0");
  }
  return out;
}

}  // namespace sre
