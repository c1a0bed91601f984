#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <charconv>
#include <map>
#include <sstream>

#include "sre/ingest.hpp"

namespace sre {

namespace pt = boost::property_tree;

namespace {

template <typename Int>
std::optional<Int> to_int(std::string_view s) {
  Int out{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return out;
}

template <typename Int>
std::optional<Int> attr_int(const pt::ptree& node, const std::string& name) {
  auto v = node.get_optional<std::string>("<xmlattr>." + name);
  if (!v) return std::nullopt;
  return to_int<Int>(*v);
}

std::string attr(const pt::ptree& node, const std::string& name) {
  return node.get<std::string>("<xmlattr>." + name, "");
}

struct ActorPorts {
  std::vector<std::pair<std::string, std::int64_t>> inputs;   // (name, bytes)
  std::vector<std::pair<std::string, std::int64_t>> outputs;
};

int index_of(const std::vector<std::pair<std::string, std::int64_t>>& ports, const std::string& name) {
  for (std::size_t i = 0; i < ports.size(); ++i)
    if (ports[i].first == name) return static_cast<int>(i);
  return -1;
}

}  // namespace

ParseResult parse_pi_xml(std::string_view text, const ParseOptions& opts) {
  ParseResult result;
  auto error = [&](std::string msg) { result.diagnostics.push_back({0, 0, std::move(msg)}); };
  auto warn = [&](std::string msg) { result.warnings.push_back({0, 0, std::move(msg)}); };

  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    result.diagnostics.push_back({static_cast<int>(e.line()), 0, e.message()});
    return result;
  }

  auto graphml = tree.get_child_optional("graphml");
  if (!graphml) {
    error("missing <graphml> root");
    return result;
  }
  auto graph_node = graphml->get_child_optional("graph");
  if (!graph_node) {
    error("missing <graph> element");
    return result;
  }
  for (const auto& [tag, _] : *graphml)
    if (tag != "graph" && tag != "<xmlattr>" && tag != "<xmlcomment>" && tag != "key")
      warn("ignored element <" + tag + ">");

  DffGraph g;
  g.name = "dff";
  g.timeout_cc = 100000;

  // Boundary ports get indices in document order; actors get provisional
  // tags in document order and are retagged topologically at the end.
  std::map<std::string, int> src_index, snk_index, actor_tag;
  std::map<std::string, ActorPorts> ports;
  std::map<std::string, std::int64_t> boundary_bytes;

  for (const auto& [tag, node] : *graph_node) {
    if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
    if (tag == "data") {
      auto key = attr(node, "key");
      auto value = node.get_value<std::string>();
      if (key == "name") {
        g.name = value;
      } else if (key == "container") {
        if (auto v = to_int<int>(value)) g.container_id = *v;
        else error("bad container id '" + value + "'");
      } else if (key == "timeout") {
        if (auto v = to_int<Cycles>(value); v && *v > 0) g.timeout_cc = *v;
        else error("bad timeout '" + value + "'");
      } else {
        warn("ignored graph data key '" + key + "'");
      }
      continue;
    }
    if (tag == "edge") continue;  // second pass
    if (tag != "node") {
      warn("ignored element <" + tag + ">");
      continue;
    }

    const auto id = attr(node, "id");
    const auto kind = attr(node, "kind");
    if (id.empty()) {
      error("node without id");
      continue;
    }
    if (kind == "src" || kind == "snk") {
      std::int64_t bytes = 0;
      for (const auto& [ptag, port] : node)
        if (ptag == "port") bytes = attr_int<std::int64_t>(port, "expr").value_or(0);
      boundary_bytes[id] = bytes;
      if (kind == "src") {
        int idx = static_cast<int>(src_index.size());
        src_index[id] = idx;
        g.boundary_inputs.push_back({idx, bytes});
      } else {
        int idx = static_cast<int>(snk_index.size());
        snk_index[id] = idx;
        g.boundary_outputs.push_back({idx, bytes});
      }
      continue;
    }
    if (kind != "actor") {
      warn("ignored node '" + id + "' of kind '" + kind + "'");
      continue;
    }
    if (actor_tag.count(id)) {
      error("duplicate actor '" + id + "'");
      continue;
    }

    MicroflowSpec mf;
    mf.local_tag = static_cast<int>(actor_tag.size()) + 1;
    mf.kernel_name = id;
    mf.stage_id = attr_int<int>(node, "stage").value_or(0);
    if (opts.stage_count && mf.stage_id >= *opts.stage_count)
      error("actor '" + id + "' references unknown stage " + std::to_string(mf.stage_id));
    mf.compute_units = attr_int<int>(node, "compute").value_or(1);
    mf.memory_units = attr_int<int>(node, "memory").value_or(0);
    if (auto d = attr_int<Cycles>(node, "deadline")) mf.deadline_meta = *d;
    auto rt = attr(node, "runtime");
    if (!rt.empty()) {
      auto comma = rt.find(',');
      auto lo = to_int<Cycles>(std::string_view(rt).substr(0, comma));
      auto hi = comma == std::string::npos ? lo : to_int<Cycles>(std::string_view(rt).substr(comma + 1));
      if (!lo || !hi) error("actor '" + id + "': bad runtime '" + rt + "'");
      else mf.runtime = {*lo, *hi};
    }
    auto& ap = ports[id];
    for (const auto& [ptag, port] : node) {
      if (ptag != "port") continue;
      auto pkind = attr(port, "kind");
      auto pname = attr(port, "name");
      auto bytes = attr_int<std::int64_t>(port, "expr").value_or(0);
      if (pkind == "input") ap.inputs.emplace_back(pname, bytes);
      else if (pkind == "output") ap.outputs.emplace_back(pname, bytes);
      else warn("actor '" + id + "': ignored port '" + pname + "' of kind '" + pkind + "'");
    }
    mf.inputs.resize(ap.inputs.size());
    mf.outputs.resize(ap.outputs.size());
    actor_tag[id] = mf.local_tag;
    g.microflows.push_back(std::move(mf));
  }

  auto microflow = [&](const std::string& id) -> MicroflowSpec& {
    return g.microflows[static_cast<std::size_t>(actor_tag.at(id) - 1)];
  };
  std::map<std::pair<std::string, std::string>, int> output_uses;

  for (const auto& [tag, node] : *graph_node) {
    if (tag != "edge") continue;
    const auto kind = attr(node, "kind");
    if (kind != "fifo") {
      warn("ignored edge of kind '" + kind + "'");
      continue;
    }
    const auto src = attr(node, "source"), dst = attr(node, "target");
    const auto sport = attr(node, "sourceport"), dport = attr(node, "targetport");
    const bool src_actor = actor_tag.count(src) > 0, dst_actor = actor_tag.count(dst) > 0;
    if (!src_actor && !src_index.count(src)) {
      error("unknown actor '" + src + "'");
      continue;
    }
    if (!dst_actor && !snk_index.count(dst)) {
      error("unknown actor '" + dst + "'");
      continue;
    }
    if (!src_actor && !dst_actor) {
      error("fifo from '" + src + "' to '" + dst + "' bypasses every actor");
      continue;
    }

    PortRef source, sink;
    std::int64_t bytes = 0;
    if (src_actor) {
      int j = index_of(ports[src].outputs, sport);
      if (j < 0) {
        error("actor '" + src + "' has no output port '" + sport + "'");
        continue;
      }
      if (++output_uses[{src, sport}] > 1) {
        error("output port '" + sport + "' of actor '" + src + "' feeds more than one fifo");
        continue;
      }
      source = {actor_tag[src], j, PortDirection::Output};
      bytes = ports[src].outputs[static_cast<std::size_t>(j)].second;
    } else {
      source = {0, src_index[src], PortDirection::Input};
      bytes = boundary_bytes[src];
    }
    if (dst_actor) {
      int i = index_of(ports[dst].inputs, dport);
      if (i < 0) {
        error("actor '" + dst + "' has no input port '" + dport + "'");
        continue;
      }
      sink = {actor_tag[dst], i, PortDirection::Input};
      microflow(dst).inputs[static_cast<std::size_t>(i)] = {source, bytes};
    } else {
      sink = {0, snk_index[dst], PortDirection::Output};
    }
    if (src_actor) microflow(src).outputs[static_cast<std::size_t>(source.port_index)] = {sink, bytes};
  }

  if (!result.diagnostics.empty()) return result;
  for (auto& e : validate_graph(g)) result.diagnostics.push_back({0, 0, std::move(e.message)});
  if (result.diagnostics.empty()) result.graph = topo_local_tags(g);
  return result;
}

}  // namespace sre
