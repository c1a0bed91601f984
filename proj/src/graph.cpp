#include "sre/graph.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <sstream>

namespace sre {

const MicroflowSpec* DffGraph::find(int local_tag) const {
  for (const auto& mf : microflows)
    if (mf.local_tag == local_tag) return &mf;
  return nullptr;
}

std::int64_t DffGraph::total_input_bytes() const {
  std::int64_t total = 0;
  for (const auto& p : boundary_inputs) total += p.bytes;
  return total;
}

std::int64_t DffGraph::total_output_bytes() const {
  std::int64_t total = 0;
  for (const auto& p : boundary_outputs) total += p.bytes;
  return total;
}

std::string_view short_kernel_name(std::string_view kernel_name) {
  auto pos = kernel_name.find('_');
  return pos == std::string_view::npos ? kernel_name : kernel_name.substr(0, pos);
}

std::vector<int> producers_of(const MicroflowSpec& mf) {
  std::vector<int> out;
  for (const auto& in : mf.inputs)
    if (in.source.owner_local_tag != 0) out.push_back(in.source.owner_local_tag);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

std::string describe(const PortRef& p) {
  std::ostringstream os;
  os << (p.direction == PortDirection::Input ? "input" : "output") << " port "
     << p.port_index << " on microflow " << p.owner_local_tag;
  return os.str();
}

const BoundaryPort* find_port(const std::vector<BoundaryPort>& ports, int index) {
  for (const auto& p : ports)
    if (p.port_index == index) return &p;
  return nullptr;
}

// Tarjan SCC over the producer relation; returns components that form cycles.
std::vector<std::vector<int>> cyclic_components(const DffGraph& g) {
  std::map<int, std::vector<int>> succ;
  for (const auto& mf : g.microflows) {
    succ[mf.local_tag];
    for (int p : producers_of(mf))
      if (g.find(p)) succ[p].push_back(mf.local_tag);
  }

  std::map<int, int> index, low;
  std::set<int> on_stack;
  std::vector<int> stack;
  std::vector<std::vector<int>> result;
  int counter = 0;

  std::function<void(int)> visit = [&](int v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack.insert(v);
    for (int w : succ[v]) {
      if (!index.count(w)) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack.count(w)) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<int> comp;
      int w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        comp.push_back(w);
      } while (w != v);
      bool self_loop = std::count(succ[v].begin(), succ[v].end(), v) > 0;
      if (comp.size() > 1 || self_loop) {
        std::sort(comp.begin(), comp.end());
        result.push_back(std::move(comp));
      }
    }
  };
  for (const auto& [v, _] : succ)
    if (!index.count(v)) visit(v);
  std::sort(result.begin(), result.end());
  return result;
}

}  // namespace

std::vector<StructuralError> validate_graph(const DffGraph& g) {
  std::vector<StructuralError> errors;
  auto fail = [&](std::string msg, std::vector<int> tags = {}) {
    errors.push_back({std::move(msg), std::move(tags)});
  };

  if (g.microflows.empty()) {
    fail("no microflows");
    return errors;
  }
  if (g.timeout_cc <= 0) fail("timeout must be positive");

  std::set<int> boundary_in, boundary_out;
  for (const auto& p : g.boundary_inputs)
    if (!boundary_in.insert(p.port_index).second)
      fail("duplicate DFF input port " + std::to_string(p.port_index));
  for (const auto& p : g.boundary_outputs)
    if (!boundary_out.insert(p.port_index).second)
      fail("duplicate DFF output port " + std::to_string(p.port_index));

  std::map<int, int> tag_count;
  for (const auto& mf : g.microflows) ++tag_count[mf.local_tag];
  for (const auto& [tag, n] : tag_count) {
    if (tag < 1) fail("local tag " + std::to_string(tag) + " is reserved or negative", {tag});
    if (n > 1) fail("duplicate tag " + std::to_string(tag), {tag});
  }
  const int n = static_cast<int>(g.microflows.size());
  for (int t = 1; t <= n; ++t)
    if (!tag_count.count(t)) fail("local tags are not dense: missing " + std::to_string(t), {t});

  std::map<int, int> producers_per_output;
  for (const auto& mf : g.microflows) {
    const int tag = mf.local_tag;
    const std::string who = "microflow " + std::to_string(tag);
    if (mf.runtime.min_cc < 0 || mf.runtime.min_cc > mf.runtime.max_cc)
      fail(who + ": runtime range is empty or negative", {tag});
    if (mf.compute_units < 0 || mf.memory_units < 0)
      fail(who + ": negative resource demand", {tag});
    if (mf.stage_id < 0) fail(who + ": negative stage id", {tag});

    for (std::size_t i = 0; i < mf.inputs.size(); ++i) {
      const auto& src = mf.inputs[i].source;
      if (src.owner_local_tag == 0) {
        const auto* port = find_port(g.boundary_inputs, src.port_index);
        if (src.direction != PortDirection::Input || !port) {
          fail(who + ": input " + std::to_string(i) + " reads unknown " + describe(src), {tag});
        } else if (port->bytes != mf.inputs[i].token_bytes) {
          fail(who + ": token size disagrees with " + describe(src), {tag});
        }
        continue;
      }
      const auto* prod = g.find(src.owner_local_tag);
      if (!prod || src.direction != PortDirection::Output ||
          src.port_index < 0 || src.port_index >= static_cast<int>(prod->outputs.size())) {
        fail(who + ": input " + std::to_string(i) + " reads unknown " + describe(src), {tag});
        continue;
      }
      const auto& back = prod->outputs[src.port_index];
      PortRef expected{tag, static_cast<int>(i), PortDirection::Input};
      if (back.sink != expected)
        fail(who + ": " + describe(src) + " does not feed this input", {tag, src.owner_local_tag});
      else if (back.token_bytes != mf.inputs[i].token_bytes)
        fail(who + ": token size mismatch on arc from microflow " +
                 std::to_string(src.owner_local_tag), {tag, src.owner_local_tag});
    }

    for (std::size_t j = 0; j < mf.outputs.size(); ++j) {
      const auto& sink = mf.outputs[j].sink;
      if (sink.owner_local_tag == 0) {
        const auto* port = find_port(g.boundary_outputs, sink.port_index);
        if (sink.direction != PortDirection::Output || !port) {
          fail(who + ": output " + std::to_string(j) + " writes unknown " + describe(sink), {tag});
        } else {
          ++producers_per_output[sink.port_index];
          if (port->bytes != mf.outputs[j].token_bytes)
            fail(who + ": token size disagrees with " + describe(sink), {tag});
        }
        continue;
      }
      const auto* cons = g.find(sink.owner_local_tag);
      if (!cons || sink.direction != PortDirection::Input || sink.port_index < 0 ||
          sink.port_index >= static_cast<int>(cons->inputs.size())) {
        fail(who + ": output " + std::to_string(j) + " writes unknown " + describe(sink), {tag});
        continue;
      }
      PortRef expected{tag, static_cast<int>(j), PortDirection::Output};
      if (cons->inputs[sink.port_index].source != expected)
        fail(who + ": " + describe(sink) + " is not fed by this output", {tag, sink.owner_local_tag});
    }
  }

  for (const auto& p : g.boundary_outputs) {
    int count = producers_per_output[p.port_index];
    if (count != 1)
      fail("DFF output port " + std::to_string(p.port_index) + " has " + std::to_string(count) +
           " producers (expected exactly one)");
  }

  for (const auto& comp : cyclic_components(g)) {
    std::string msg = "cycle through tags {";
    for (std::size_t i = 0; i < comp.size(); ++i) msg += (i ? "," : "") + std::to_string(comp[i]);
    msg += "}";
    fail(std::move(msg), comp);
  }
  return errors;
}

DffGraph topo_local_tags(const DffGraph& g) {
  if (auto cycles = cyclic_components(g); !cycles.empty()) {
    std::string msg = "cycle through tags {";
    for (std::size_t i = 0; i < cycles.front().size(); ++i)
      msg += (i ? "," : "") + std::to_string(cycles.front()[i]);
    throw GraphError(msg + "}");
  }

  const std::size_t n = g.microflows.size();
  // Position-based so duplicate tags (not yet validated) cannot confuse us.
  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<int> indegree(n, 0);
  for (std::size_t c = 0; c < n; ++c) {
    for (int p : producers_of(g.microflows[c])) {
      for (std::size_t q = 0; q < n; ++q) {
        if (g.microflows[q].local_tag == p) {
          succ[q].push_back(c);
          ++indegree[c];
        }
      }
    }
  }

  auto key_less = [&](std::size_t a, std::size_t b) {
    const auto& ma = g.microflows[a];
    const auto& mb = g.microflows[b];
    if (ma.local_tag != mb.local_tag) return ma.local_tag < mb.local_tag;
    if (ma.kernel_name != mb.kernel_name) return ma.kernel_name < mb.kernel_name;
    return a < b;
  };
  auto cmp = [&](std::size_t a, std::size_t b) { return key_less(b, a); };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> ready(cmp);
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(i);

  std::vector<std::size_t> order;
  while (!ready.empty()) {
    auto v = ready.top();
    ready.pop();
    order.push_back(v);
    for (auto w : succ[v])
      if (--indegree[w] == 0) ready.push(w);
  }

  std::map<int, int> remap{{0, 0}};
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    remap[g.microflows[order[pos]].local_tag] = static_cast<int>(pos) + 1;
  auto retag = [&](PortRef p) {
    auto it = remap.find(p.owner_local_tag);
    if (it != remap.end()) p.owner_local_tag = it->second;
    return p;
  };

  DffGraph out = g;
  out.microflows.clear();
  for (auto idx : order) {
    MicroflowSpec mf = g.microflows[idx];
    mf.local_tag = remap[mf.local_tag];
    for (auto& in : mf.inputs) in.source = retag(in.source);
    for (auto& o : mf.outputs) o.sink = retag(o.sink);
    out.microflows.push_back(std::move(mf));
  }
  return out;
}

Container envelope_of(const DffGraph& g) {
  Container c;
  c.container_id = g.container_id;
  c.max_input_bytes = g.total_input_bytes();
  c.max_output_bytes = g.total_output_bytes();
  std::map<int, StageEnvelope> per_stage;
  for (const auto& mf : g.microflows) {
    auto& env = per_stage[mf.stage_id];
    env.stage_id = mf.stage_id;
    env.compute_units = std::max(env.compute_units, mf.compute_units);
    env.memory_units = std::max(env.memory_units, mf.memory_units);
    std::int64_t bytes = 0;
    for (const auto& o : mf.outputs) bytes += o.token_bytes;
    env.buffer_bytes = std::max(env.buffer_bytes, bytes);
  }
  FeatureVector fv;
  for (auto& [_, env] : per_stage) fv.stages.push_back(env);
  c.feature_vectors.push_back(std::move(fv));
  return c;
}

bool container_fit(const DffGraph& g, const Container& c) {
  if (g.total_input_bytes() > c.max_input_bytes) return false;
  if (g.total_output_bytes() > c.max_output_bytes) return false;
  const Container need = envelope_of(g);
  for (const auto& fv : c.feature_vectors) {
    for (const auto& req : need.feature_vectors.front().stages) {
      auto it = std::find_if(fv.stages.begin(), fv.stages.end(),
                             [&](const StageEnvelope& e) { return e.stage_id == req.stage_id; });
      if (it == fv.stages.end() || it->compute_units < req.compute_units ||
          it->memory_units < req.memory_units || it->buffer_bytes < req.buffer_bytes)
        return false;
    }
  }
  return true;
}

}  // namespace sre
