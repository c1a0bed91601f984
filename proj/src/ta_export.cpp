#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "sre/ingest.hpp"

namespace sre {

namespace pt = boost::property_tree;

namespace {

std::string sanitize(std::string_view s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out[0]))) out.insert(out.begin(), '_');
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

TaTemplate behaviour_template(const DffGraph& g) {
  // Kernel identifiers: the short actor name when it is unique, else the
  // sanitized full kernel name.
  std::map<std::string, int> short_uses;
  for (const auto& mf : g.microflows) ++short_uses[std::string(short_kernel_name(mf.kernel_name))];
  std::map<int, std::string> kname;
  for (const auto& mf : g.microflows) {
    std::string s(short_kernel_name(mf.kernel_name));
    kname[mf.local_tag] = sanitize(short_uses[s] == 1 ? s : mf.kernel_name);
  }

  // One token flag per arc: every microflow input, plus arcs into DFF outputs.
  struct Arc {
    int producer;  // 0 = DFF input
    int consumer;  // 0 = DFF output
  };
  std::vector<Arc> arcs;
  std::map<std::pair<int, int>, std::vector<int>> in_arcs_of;   // consumer -> arcs
  std::map<int, std::vector<int>> out_arcs_of;                   // producer -> arcs
  for (const auto& mf : g.microflows) {
    for (const auto& in : mf.inputs) {
      int id = static_cast<int>(arcs.size());
      arcs.push_back({in.source.owner_local_tag, mf.local_tag});
      in_arcs_of[{mf.local_tag, 0}].push_back(id);
      out_arcs_of[in.source.owner_local_tag].push_back(id);
    }
    for (const auto& out : mf.outputs) {
      if (out.sink.owner_local_tag != 0) continue;
      int id = static_cast<int>(arcs.size());
      arcs.push_back({mf.local_tag, 0});
      out_arcs_of[mf.local_tag].push_back(id);
    }
  }
  const int n = static_cast<int>(g.microflows.size());
  const int narcs = static_cast<int>(arcs.size());

  TaTemplate t;
  t.name = sanitize(g.name);
  std::ostringstream decl;
  decl << "// behaviour of DFF " << g.name << " (container " << g.container_id << ")\n";
  for (const auto& mf : g.microflows)
    decl << "const int " << kname[mf.local_tag] << " = " << (mf.local_tag - 1) << ";\n";
  decl << "bool tok[" << std::max(narcs, 1) << "];\n";
  decl << "bool fired[" << n << "];\n";
  decl << "bool ended[" << n << "];\n";
  t.declaration = decl.str();

  t.locations = {{"id0", "Idle", false, false}, {"id1", "Active", false, false}};
  t.init = "id0";

  std::vector<std::string> start;
  for (int a : out_arcs_of[0]) start.push_back("tok[" + std::to_string(a) + "] = true");
  t.transitions.push_back({"id0", "id1", "dff_desc == " + std::to_string(g.container_id), "Receive_DFF?",
                           join(start, ", ")});

  for (const auto& mf : g.microflows) {
    const auto& k = kname[mf.local_tag];
    std::vector<std::string> guard{"!fired[" + k + "]"};
    for (int a : in_arcs_of[{mf.local_tag, 0}]) guard.push_back("tok[" + std::to_string(a) + "]");
    t.transitions.push_back({"id1", "id1", join(guard, " && "), "fire_kernel!",
                             "fired[" + k + "] = true, kernel_desc = " + k});

    std::vector<std::string> done{"ended[" + k + "] = true"};
    for (int a : out_arcs_of[mf.local_tag]) done.push_back("tok[" + std::to_string(a) + "] = true");
    t.transitions.push_back({"id1", "id1", "fired[" + k + "] && !ended[" + k + "] && kernel_done == " + k,
                             "end_kernel?", join(done, ", ")});
  }

  std::vector<std::string> all_ended;
  for (const auto& mf : g.microflows) all_ended.push_back("ended[" + kname[mf.local_tag] + "]");
  t.transitions.push_back({"id1", "id0", join(all_ended, " && "), "Terminate_DFF!",
                           "dff_desc = " + std::to_string(g.container_id) + ", clear()"});
  t.declaration += "void clear() {\n  for (i : int[0," + std::to_string(std::max(narcs, 1) - 1) +
                   "]) tok[i] = false;\n  for (i : int[0," + std::to_string(n - 1) +
                   "]) { fired[i] = false; ended[i] = false; }\n}\n";
  return t;
}

void escape_into(std::string& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
}

}  // namespace

TaModelDoc export_ta(std::span<const DffGraph> graphs) {
  TaModelDoc doc;
  doc.declaration =
      "// SRE behavioural automata, generated\n"
      "chan Receive_DFF, Terminate_DFF;\n"
      "urgent chan fire_kernel, end_kernel;\n"
      "int dff_desc;\n"
      "int kernel_desc;\n"
      "int kernel_done;\n";
  std::vector<std::string> names;
  std::set<std::string> used;
  for (const auto& g : graphs) {
    auto t = behaviour_template(g);
    std::string base = t.name;
    for (int i = 2; used.count(t.name); ++i) t.name = base + "_" + std::to_string(i);
    used.insert(t.name);
    names.push_back(t.name + "_inst");
    doc.system += t.name + "_inst = " + t.name + "();\n";
    doc.templates.push_back(std::move(t));
  }
  doc.system += "system " + (names.empty() ? std::string("") : join(names, ", ")) + ";\n";
  if (names.empty()) doc.system = "";
  return doc;
}

TaModelDoc export_ta(const DffGraph& g) { return export_ta(std::span<const DffGraph>(&g, 1)); }

std::string render_ta_xml(const TaModelDoc& doc) {
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n";
  out += "<!-- sre-ta-export schema " + std::to_string(kTaSchemaVersion) + " -->\n";
  out += "<nta>\n";
  out += "  <declaration>";
  escape_into(out, doc.declaration);
  out += "</declaration>\n";
  for (const auto& t : doc.templates) {
    out += "  <template>\n    <name>";
    escape_into(out, t.name);
    out += "</name>\n    <declaration>";
    escape_into(out, t.declaration);
    out += "</declaration>\n";
    for (const auto& l : t.locations) {
      out += "    <location id=\"";
      escape_into(out, l.id);
      out += "\">\n      <name>";
      escape_into(out, l.name);
      out += "</name>\n";
      if (l.urgent) out += "      <urgent/>\n";
      if (l.committed) out += "      <committed/>\n";
      out += "    </location>\n";
    }
    out += "    <init ref=\"";
    escape_into(out, t.init);
    out += "\"/>\n";
    for (const auto& tr : t.transitions) {
      out += "    <transition>\n      <source ref=\"";
      escape_into(out, tr.source);
      out += "\"/>\n      <target ref=\"";
      escape_into(out, tr.target);
      out += "\"/>\n";
      auto label = [&](const char* kind, const std::string& text) {
        if (text.empty()) return;
        out += "      <label kind=\"";
        out += kind;
        out += "\">";
        escape_into(out, text);
        out += "</label>\n";
      };
      label("guard", tr.guard);
      label("synchronisation", tr.sync);
      label("assignment", tr.assignment);
      out += "    </transition>\n";
    }
    out += "  </template>\n";
  }
  out += "  <system>";
  escape_into(out, doc.system);
  out += "</system>\n</nta>\n";
  return out;
}

TaModelDoc parse_ta_xml(std::string_view xml) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw FileError("malformed TA XML: " + e.message());
  }
  auto nta = tree.get_child_optional("nta");
  if (!nta) throw FileError("malformed TA XML: missing <nta>");

  TaModelDoc doc;
  for (const auto& [tag, node] : *nta) {
    if (tag == "declaration") {
      doc.declaration = node.get_value<std::string>();
    } else if (tag == "system") {
      doc.system = node.get_value<std::string>();
    } else if (tag == "template") {
      TaTemplate t;
      for (const auto& [ttag, tn] : node) {
        if (ttag == "name") {
          t.name = tn.get_value<std::string>();
        } else if (ttag == "declaration") {
          t.declaration = tn.get_value<std::string>();
        } else if (ttag == "location") {
          TaLocation l;
          l.id = tn.get<std::string>("<xmlattr>.id", "");
          l.name = tn.get<std::string>("name", "");
          l.urgent = tn.get_child_optional("urgent").has_value();
          l.committed = tn.get_child_optional("committed").has_value();
          t.locations.push_back(std::move(l));
        } else if (ttag == "init") {
          t.init = tn.get<std::string>("<xmlattr>.ref", "");
        } else if (ttag == "transition") {
          TaTransition tr;
          tr.source = tn.get<std::string>("source.<xmlattr>.ref", "");
          tr.target = tn.get<std::string>("target.<xmlattr>.ref", "");
          for (const auto& [ltag, ln] : tn) {
            if (ltag != "label") continue;
            auto kind = ln.get<std::string>("<xmlattr>.kind", "");
            auto text = ln.get_value<std::string>();
            if (kind == "guard") tr.guard = text;
            else if (kind == "synchronisation") tr.sync = text;
            else if (kind == "assignment") tr.assignment = text;
          }
          t.transitions.push_back(std::move(tr));
        }
      }
      doc.templates.push_back(std::move(t));
    }
  }
  return doc;
}

}  // namespace sre
