#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sre/ingest.hpp"

namespace sre {

namespace {

struct Token {
  std::string text;
  int column = 0;
};

std::vector<Token> split_line(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size() || line[i] == '#') break;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' && line[i] != '#') ++i;
    out.push_back({std::string(line.substr(start, i - start)), static_cast<int>(start) + 1});
  }
  return out;
}

template <typename Int>
bool to_int(std::string_view s, Int& value) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool is_identifier(std::string_view s) {
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

struct PortItem {
  int tag = 0;
  int port = 0;
  std::int64_t bytes = 0;
};

std::optional<std::vector<PortItem>> parse_port_list(std::string_view s) {
  std::vector<PortItem> items;
  if (s == "-") return items;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    auto item = s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    auto dot = item.find('.');
    auto colon = item.find(':');
    if (dot == std::string_view::npos || colon == std::string_view::npos || colon < dot) return std::nullopt;
    PortItem p;
    if (!to_int(item.substr(0, dot), p.tag) || !to_int(item.substr(dot + 1, colon - dot - 1), p.port) ||
        !to_int(item.substr(colon + 1), p.bytes))
      return std::nullopt;
    if (p.tag < 0 || p.port < 0 || p.bytes < 0) return std::nullopt;
    items.push_back(p);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return items;
}

std::string render_ports(const std::vector<PortRef>& refs, const std::vector<std::int64_t>& bytes) {
  if (refs.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(refs[i].owner_local_tag) + "." + std::to_string(refs[i].port_index) + ":" +
           std::to_string(bytes[i]);
  }
  return out;
}

}  // namespace

ParseResult parse_dff_text(std::string_view text, const ParseOptions& opts) {
  ParseResult result;
  auto error = [&](int line, int col, std::string msg) {
    result.diagnostics.push_back({line, col, std::move(msg)});
  };

  DffGraph g;
  bool have_header = false;
  std::map<int, int> tag_line;  // tag -> declaring line
  struct Ref {
    int line, column, tag;
  };
  std::vector<Ref> refs;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

    auto toks = split_line(line);
    if (toks.empty()) continue;
    const auto& head = toks[0].text;

    auto kv = [&](const Token& t, std::string_view key) -> std::optional<std::string_view> {
      std::string_view s = t.text;
      if (s.size() > key.size() && s.substr(0, key.size()) == key && s[key.size()] == '=')
        return s.substr(key.size() + 1);
      return std::nullopt;
    };

    if (head == "dff") {
      if (have_header) error(line_no, toks[0].column, "duplicate dff header");
      have_header = true;
      if (toks.size() < 2 || !is_identifier(toks[1].text)) {
        error(line_no, toks.size() > 1 ? toks[1].column : toks[0].column, "expected DFF name");
        continue;
      }
      g.name = toks[1].text;
      for (std::size_t i = 2; i < toks.size(); ++i) {
        if (auto v = kv(toks[i], "container")) {
          if (!to_int(*v, g.container_id)) error(line_no, toks[i].column, "bad container id");
        } else if (auto v = kv(toks[i], "timeout")) {
          if (!to_int(*v, g.timeout_cc) || g.timeout_cc <= 0) error(line_no, toks[i].column, "bad timeout");
        } else {
          error(line_no, toks[i].column, "unexpected '" + toks[i].text + "'");
        }
      }
      continue;
    }

    if (head == "input" || head == "output") {
      BoundaryPort p;
      std::optional<std::string_view> bytes;
      if (toks.size() != 3 || !to_int(toks[1].text, p.port_index) || p.port_index < 0 ||
          !(bytes = kv(toks[2], "bytes")) || !to_int(*bytes, p.bytes) || p.bytes < 0) {
        error(line_no, toks[0].column, "expected '" + head + " <port> bytes=<n>'");
        continue;
      }
      (head == "input" ? g.boundary_inputs : g.boundary_outputs).push_back(p);
      continue;
    }

    MicroflowSpec mf;
    if (!to_int(head, mf.local_tag)) {
      error(line_no, toks[0].column, "unknown statement '" + head + "'");
      continue;
    }
    if (toks.size() < 3) {
      error(line_no, toks[0].column, "expected '<tag> <kernel> <stage> ...'");
      continue;
    }
    if (!is_identifier(toks[1].text)) error(line_no, toks[1].column, "bad kernel name '" + toks[1].text + "'");
    mf.kernel_name = toks[1].text;
    if (!to_int(toks[2].text, mf.stage_id) || mf.stage_id < 0) {
      error(line_no, toks[2].column, "bad stage id '" + toks[2].text + "'");
    } else if (opts.stage_count && mf.stage_id >= *opts.stage_count) {
      error(line_no, toks[2].column, "unknown stage " + toks[2].text);
    }

    bool have_rt = false;
    std::vector<PortItem> ins, outs;
    for (std::size_t i = 3; i < toks.size(); ++i) {
      const auto& t = toks[i];
      if (auto v = kv(t, "rt")) {
        auto s = *v;
        auto comma = s.find(',');
        if (s.size() < 5 || s.front() != '[' || s.back() != ']' || comma == std::string_view::npos ||
            !to_int(s.substr(1, comma - 1), mf.runtime.min_cc) ||
            !to_int(s.substr(comma + 1, s.size() - comma - 2), mf.runtime.max_cc)) {
          error(line_no, t.column, "expected rt=[min,max]");
        } else if (mf.runtime.min_cc < 0 || mf.runtime.min_cc > mf.runtime.max_cc) {
          error(line_no, t.column, "runtime range is empty");
        }
        have_rt = true;
      } else if (auto v = kv(t, "cu")) {
        if (!to_int(*v, mf.compute_units) || mf.compute_units < 0) error(line_no, t.column, "bad cu");
      } else if (auto v = kv(t, "mu")) {
        if (!to_int(*v, mf.memory_units) || mf.memory_units < 0) error(line_no, t.column, "bad mu");
      } else if (auto v = kv(t, "deadline")) {
        Cycles d = 0;
        if (!to_int(*v, d) || d < 0) error(line_no, t.column, "bad deadline");
        mf.deadline_meta = d;
      } else if (auto v = kv(t, "in")) {
        auto list = parse_port_list(*v);
        if (!list) error(line_no, t.column, "bad port list '" + std::string(*v) + "'");
        else ins = *list;
      } else if (auto v = kv(t, "out")) {
        auto list = parse_port_list(*v);
        if (!list) error(line_no, t.column, "bad port list '" + std::string(*v) + "'");
        else outs = *list;
      } else {
        error(line_no, t.column, "unexpected '" + t.text + "'");
      }
    }
    if (!have_rt) error(line_no, toks[0].column, "missing rt=[min,max]");

    for (const auto& p : ins) {
      PortDirection d = p.tag == 0 ? PortDirection::Input : PortDirection::Output;
      mf.inputs.push_back({PortRef{p.tag, p.port, d}, p.bytes});
      if (p.tag != 0) refs.push_back({line_no, toks[0].column, p.tag});
    }
    for (const auto& p : outs) {
      PortDirection d = p.tag == 0 ? PortDirection::Output : PortDirection::Input;
      mf.outputs.push_back({PortRef{p.tag, p.port, d}, p.bytes});
      if (p.tag != 0) refs.push_back({line_no, toks[0].column, p.tag});
    }

    if (auto [it, inserted] = tag_line.emplace(mf.local_tag, line_no); !inserted) {
      error(line_no, toks[0].column,
            "duplicate tag " + std::to_string(mf.local_tag) + " (first declared on line " +
                std::to_string(it->second) + ")");
    }
    g.microflows.push_back(std::move(mf));
  }

  if (!have_header) error(1, 1, "missing 'dff <name> ...' header");
  for (const auto& r : refs)
    if (!tag_line.count(r.tag))
      error(r.line, r.column, "unknown actor " + std::to_string(r.tag));

  if (result.diagnostics.empty()) {
    for (auto& e : validate_graph(g)) result.diagnostics.push_back({0, 0, std::move(e.message)});
  }
  if (result.diagnostics.empty()) result.graph = std::move(g);
  return result;
}

std::string render_dff_text(const DffGraph& g) {
  std::ostringstream os;
  os << "dff " << g.name << " container=" << g.container_id << " timeout=" << g.timeout_cc << "\n";
  for (const auto& p : g.boundary_inputs) os << "input " << p.port_index << " bytes=" << p.bytes << "\n";
  for (const auto& p : g.boundary_outputs) os << "output " << p.port_index << " bytes=" << p.bytes << "\n";
  for (const auto& mf : g.microflows) {
    std::vector<PortRef> in_refs, out_refs;
    std::vector<std::int64_t> in_bytes, out_bytes;
    for (const auto& a : mf.inputs) {
      in_refs.push_back(a.source);
      in_bytes.push_back(a.token_bytes);
    }
    for (const auto& a : mf.outputs) {
      out_refs.push_back(a.sink);
      out_bytes.push_back(a.token_bytes);
    }
    os << mf.local_tag << " " << mf.kernel_name << " " << mf.stage_id << " rt=[" << mf.runtime.min_cc << ","
       << mf.runtime.max_cc << "] cu=" << mf.compute_units << " mu=" << mf.memory_units
       << " in=" << render_ports(in_refs, in_bytes) << " out=" << render_ports(out_refs, out_bytes);
    if (mf.deadline_meta) os << " deadline=" << *mf.deadline_meta;
    os << "\n";
  }
  return os.str();
}

GraphFormat format_for_path(const std::filesystem::path& path) {
  auto name = path.filename().string();
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return (ends_with(".xml") || ends_with(".pi")) ? GraphFormat::PiXml : GraphFormat::NativeText;
}

ParseResult parse(const GraphDocument& doc, const ParseOptions& opts) {
  return doc.format == GraphFormat::PiXml ? parse_pi_xml(doc.text, opts) : parse_dff_text(doc.text, opts);
}

ParseResult load_graph_file(const std::filesystem::path& path, const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(GraphDocument{format_for_path(path), ss.str()}, opts);
}

}  // namespace sre
