#pragma once

// Front ends for DFF descriptions and the timed-automata exporter.
//
// Native text (.dff), one statement per line, '#' starts a comment:
//
//   dff <name> container=<id> timeout=<cc>
//   input <port> bytes=<n>                  DFF-level input (microflow 0)
//   output <port> bytes=<n>                 DFF-level output (microflow 0)
//   <tag> <kernel> <stage> rt=[<min>,<max>] cu=<n> mu=<n> in=<ports> out=<ports> [deadline=<cc>]
//
// <ports> is '-' or a comma list of <tag>.<port>:<bytes>. For in= the
// reference names the producer's output port (tag 0: DFF input port); for
// out= it names the consumer's input port (tag 0: DFF output port).
//
// The pi-xml reader accepts a GraphML subset: <node kind="actor|src|snk">
// with <port kind="input|output" name=.. expr=<bytes>/> children and
// <edge kind="fifo" source=.. sourceport=.. target=.. targetport=../>.
// Actor timing and placement come from optional attributes stage=,
// runtime="min,max", compute=, memory=, deadline=. Graph-level <data>
// keys: name, container, timeout. Anything else is skipped with a warning.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sre/graph.hpp"

namespace sre {

enum class GraphFormat { NativeText, PiXml };

struct Diagnostic {
  int line = 0;    // 1-based; 0 when the problem is not tied to a line
  int column = 0;  // 1-based; 0 when unknown
  std::string message;
};

struct GraphDocument {
  GraphFormat format = GraphFormat::NativeText;
  std::string text;
};

struct ParseOptions {
  std::optional<int> stage_count;  // reject stage ids >= this when set
};

struct ParseResult {
  std::optional<DffGraph> graph;  // set iff diagnostics is empty
  std::vector<Diagnostic> diagnostics;
  std::vector<Diagnostic> warnings;

  bool ok() const { return diagnostics.empty(); }
};

ParseResult parse(const GraphDocument& doc, const ParseOptions& opts = {});
ParseResult parse_dff_text(std::string_view text, const ParseOptions& opts = {});
ParseResult parse_pi_xml(std::string_view text, const ParseOptions& opts = {});

/// Canonical native-text rendering; parse_dff_text(render_dff_text(g)) == g.
std::string render_dff_text(const DffGraph& g);

/// Picks the format from the file name (.pi.xml / .pi / .xml vs anything else).
GraphFormat format_for_path(const std::filesystem::path& path);

struct FileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads and parses a graph file. Throws FileError if the file is unreadable.
ParseResult load_graph_file(const std::filesystem::path& path, const ParseOptions& opts = {});

// ---------------------------------------------------------------------------
// Timed-automata interchange model

struct TaLocation {
  std::string id;
  std::string name;
  bool committed = false;
  bool urgent = false;
  friend bool operator==(const TaLocation&, const TaLocation&) = default;
};

struct TaTransition {
  std::string source;
  std::string target;
  std::string guard;
  std::string sync;
  std::string assignment;
  friend bool operator==(const TaTransition&, const TaTransition&) = default;
};

struct TaTemplate {
  std::string name;
  std::string declaration;
  std::vector<TaLocation> locations;
  std::string init;
  std::vector<TaTransition> transitions;
  friend bool operator==(const TaTemplate&, const TaTemplate&) = default;
};

struct TaModelDoc {
  std::string declaration;
  std::vector<TaTemplate> templates;
  std::string system;
  friend bool operator==(const TaModelDoc&, const TaModelDoc&) = default;
};

inline constexpr int kTaSchemaVersion = 1;

/// Untimed behavioural automaton: one Receive_DFF edge, a fire and an end
/// edge per kernel, one Terminate_DFF edge. Token variables encode the DAG.
TaModelDoc export_ta(const DffGraph& g);
TaModelDoc export_ta(std::span<const DffGraph> graphs);

std::string render_ta_xml(const TaModelDoc& doc);

/// Inverse of render_ta_xml. Throws FileError on malformed input.
TaModelDoc parse_ta_xml(std::string_view xml);

}  // namespace sre
