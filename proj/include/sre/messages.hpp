#pragma once

// SRE packet and descriptor vocabulary with a fixed little-endian wire
// layout, plus the error-code model used for drop reporting.
//
// Every message starts with a 4-byte header:
//   byte 0     layout version (kWireVersion)
//   byte 1     MessageKind
//   bytes 2-3  body length in bytes (u16)
// followed by the kind-specific body (see docs/wire-format.md).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace sre {

inline constexpr std::uint8_t kWireVersion = 1;

enum class ErrorCode : std::uint8_t {
  Ok = 0,
  Timeout = 1,
  ResourceInfeasible = 2,
  QueueOverflow = 3,
  DctUnsupported = 4,
  WriteBeforeRead = 5,
  MaxParallelExceeded = 6,
};

const char* to_string(ErrorCode code);

enum class MessageKind : std::uint8_t {
  ControlPacket = 1,
  DataPacket = 2,
  ErrorPacket = 3,
  DctRequest = 4,
  DffDescriptor = 5,
  DffRelease = 6,
  PointerDescriptor = 7,
  MicroflowDescriptor = 8,
  DffInputReady = 9,
  DffOutputReady = 10,
  ErrorMessage = 11,
};

struct ControlPacket {
  std::uint32_t global_tag = 0;
  std::uint16_t container_id = 0;
  std::uint16_t source_id = 0;
  std::uint64_t arrival_time_cc = 0;
  friend bool operator==(const ControlPacket&, const ControlPacket&) = default;
};

struct DataPacket {
  std::uint32_t global_tag = 0;
  std::uint16_t source_id = 0;
  std::uint16_t port = 0;
  std::uint32_t bytes = 0;
  friend bool operator==(const DataPacket&, const DataPacket&) = default;
};

/// Carried by error packets (to the source) and error messages (internal).
struct ErrorRecord {
  ErrorCode code = ErrorCode::Ok;
  std::uint32_t global_tag = 0;
  std::uint16_t local_tag = 0;
  std::optional<ErrorCode> inherited_from;
  std::uint64_t timestamp_cc = 0;
  friend bool operator==(const ErrorRecord&, const ErrorRecord&) = default;
};

struct ErrorPacket {
  ErrorRecord record;
  friend bool operator==(const ErrorPacket&, const ErrorPacket&) = default;
};

struct ErrorMessage {
  ErrorRecord record;
  friend bool operator==(const ErrorMessage&, const ErrorMessage&) = default;
};

/// Sent before admission, so it has no global tag yet.
struct DctRequest {
  std::uint16_t container_id = 0;
  std::uint16_t source_id = 0;
  friend bool operator==(const DctRequest&, const DctRequest&) = default;
};

struct DffDescriptor {
  std::uint32_t global_tag = 0;
  std::uint16_t container_id = 0;
  std::uint8_t instance_index = 0;
  std::uint8_t microflow_count = 0;
  friend bool operator==(const DffDescriptor&, const DffDescriptor&) = default;
};

struct DffRelease {
  std::uint32_t global_tag = 0;
  friend bool operator==(const DffRelease&, const DffRelease&) = default;
};

/// Buffers are abstract indices; the SRE has no global memory map.
struct PointerDescriptor {
  std::uint32_t global_tag = 0;
  std::uint16_t local_tag = 0;
  std::uint16_t port = 0;
  std::uint32_t buffer_index = 0;
  std::uint32_t bytes = 0;
  friend bool operator==(const PointerDescriptor&, const PointerDescriptor&) = default;
};

struct MicroflowDescriptor {
  std::uint32_t global_tag = 0;
  std::uint16_t local_tag = 0;
  std::uint16_t stage_id = 0;
  std::uint16_t kernel_id = 0;
  std::uint8_t input_count = 0;
  std::uint8_t output_count = 0;
  std::uint32_t runtime_min_cc = 0;
  std::uint32_t runtime_max_cc = 0;
  std::uint16_t compute_units = 0;
  std::uint16_t memory_units = 0;
  std::uint32_t deadline_cc = 0;
  friend bool operator==(const MicroflowDescriptor&, const MicroflowDescriptor&) = default;
};

struct DffInputReady {
  std::uint32_t global_tag = 0;
  std::uint16_t stage_id = 0;
  std::uint16_t ready_inputs = 0;
  friend bool operator==(const DffInputReady&, const DffInputReady&) = default;
};

struct DffOutputReady {
  std::uint32_t global_tag = 0;
  std::uint16_t port = 0;
  std::uint32_t bytes = 0;
  friend bool operator==(const DffOutputReady&, const DffOutputReady&) = default;
};

using Message = std::variant<ControlPacket, DataPacket, ErrorPacket, DctRequest, DffDescriptor, DffRelease,
                             PointerDescriptor, MicroflowDescriptor, DffInputReady, DffOutputReady,
                             ErrorMessage>;

MessageKind kind_of(const Message& m);

enum class DecodeError {
  TruncatedHeader,
  BadVersion,
  UnknownKind,
  TruncatedBody,
  LengthMismatch,  // header length exceeds what the kind defines
  BadField,        // e.g. an error code outside the table
};

const char* to_string(DecodeError e);

std::vector<std::uint8_t> encode(const Message& m);

using DecodeResult = std::variant<Message, DecodeError>;
DecodeResult decode(std::span<const std::uint8_t> bytes);

/// Single-line rendering used in event traces, e.g. "dff_release{global_tag=7}".
std::string to_text(const Message& m);

/// A consumer inherits the code of its failing producer. With several
/// failing producers the earliest timestamp wins (ties: lowest tag pair).
ErrorRecord propagate_error(std::span<const ErrorRecord> producers, std::uint32_t consumer_global_tag,
                            std::uint16_t consumer_local_tag, std::uint64_t now_cc);
ErrorRecord propagate_error(const ErrorRecord& producer, std::uint32_t consumer_global_tag,
                            std::uint16_t consumer_local_tag, std::uint64_t now_cc);

}  // namespace sre
