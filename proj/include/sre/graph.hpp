#pragma once

// Dataflow fragment (DFF) domain model: microflows, ports, containers and
// the structural rules every graph has to satisfy before it can be admitted.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sre {

using Cycles = std::int64_t;

enum class PortDirection : std::uint8_t { Input, Output };

/// A port on a microflow. Owner tag 0 is the DFF boundary (microflow 0):
/// its Input ports are DFF-level inputs, its Output ports DFF-level outputs.
struct PortRef {
  int owner_local_tag = 0;
  int port_index = 0;
  PortDirection direction = PortDirection::Input;

  friend bool operator==(const PortRef&, const PortRef&) = default;
};

struct InputArc {
  PortRef source;  // producer output port, or a boundary input port
  std::int64_t token_bytes = 0;
  friend bool operator==(const InputArc&, const InputArc&) = default;
};

struct OutputArc {
  PortRef sink;  // consumer input port, or a boundary output port
  std::int64_t token_bytes = 0;
  friend bool operator==(const OutputArc&, const OutputArc&) = default;
};

struct RuntimeRange {
  Cycles min_cc = 0;
  Cycles max_cc = 0;
  friend bool operator==(const RuntimeRange&, const RuntimeRange&) = default;
};

struct MicroflowSpec {
  int local_tag = 1;
  std::string kernel_name;
  int stage_id = 0;
  std::vector<InputArc> inputs;    // index == input port number
  std::vector<OutputArc> outputs;  // index == output port number
  RuntimeRange runtime;
  int compute_units = 0;
  int memory_units = 0;
  std::optional<Cycles> deadline_meta;

  friend bool operator==(const MicroflowSpec&, const MicroflowSpec&) = default;
};

struct BoundaryPort {
  int port_index = 0;
  std::int64_t bytes = 0;
  friend bool operator==(const BoundaryPort&, const BoundaryPort&) = default;
};

struct DffGraph {
  std::string name;
  int container_id = 0;
  std::vector<BoundaryPort> boundary_inputs;
  std::vector<BoundaryPort> boundary_outputs;
  std::vector<MicroflowSpec> microflows;
  Cycles timeout_cc = 1;

  const MicroflowSpec* find(int local_tag) const;
  std::int64_t total_input_bytes() const;
  std::int64_t total_output_bytes() const;
  /// Deadline used for EDF ordering; falls back to the DFF timeout.
  Cycles deadline_of(const MicroflowSpec& mf) const {
    return mf.deadline_meta.value_or(timeout_cc);
  }

  friend bool operator==(const DffGraph&, const DffGraph&) = default;
};

/// Per-stage resource envelope inside a feature vector.
struct StageEnvelope {
  int stage_id = 0;
  int compute_units = 0;
  int memory_units = 0;
  std::int64_t buffer_bytes = 0;
  friend bool operator==(const StageEnvelope&, const StageEnvelope&) = default;
};

/// One precomputed placement ("Tetris" block) of a container.
struct FeatureVector {
  std::vector<StageEnvelope> stages;
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

struct Container {
  int container_id = 0;
  std::int64_t max_input_bytes = 0;
  std::int64_t max_output_bytes = 0;
  std::vector<FeatureVector> feature_vectors;
  friend bool operator==(const Container&, const Container&) = default;
};

/// Identifies a live DFF instance. The instance index is the slot in the
/// fixed-size bookkeeping arrays; the global tag is never reused.
struct InstanceId {
  std::uint32_t global_tag = 0;
  int instance_index = 0;
  friend bool operator==(const InstanceId&, const InstanceId&) = default;
};

struct StructuralError {
  std::string message;
  std::vector<int> tags;  // offending local tags, if any
};

std::vector<StructuralError> validate_graph(const DffGraph& g);

/// Retags microflows in a deterministic topological order. Ties are broken
/// by the original tag, then by kernel name. Throws GraphError on a cycle.
DffGraph topo_local_tags(const DffGraph& g);

bool container_fit(const DffGraph& g, const Container& c);

/// Smallest container that holds g exactly: byte maxima equal to g's totals
/// and one feature vector with per-stage maxima of the member microflows.
Container envelope_of(const DffGraph& g);

/// Short display name of a kernel: the prefix before the first underscore
/// (CHEST1_L1metaDataExtractor -> CHEST1).
std::string_view short_kernel_name(std::string_view kernel_name);

/// Local tags of the internal producers feeding `mf` (boundary inputs excluded).
std::vector<int> producers_of(const MicroflowSpec& mf);

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sre
