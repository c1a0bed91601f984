#include "sre/messages.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace sre {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Ok: return "ok";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::ResourceInfeasible: return "resource-infeasible";
    case ErrorCode::QueueOverflow: return "queue-overflow";
    case ErrorCode::DctUnsupported: return "dct-unsupported";
    case ErrorCode::WriteBeforeRead: return "write-before-read";
    case ErrorCode::MaxParallelExceeded: return "max-parallel-exceeded";
  }
  return "?";
}

const char* to_string(DecodeError e) {
  switch (e) {
    case DecodeError::TruncatedHeader: return "truncated header";
    case DecodeError::BadVersion: return "bad version";
    case DecodeError::UnknownKind: return "unknown kind";
    case DecodeError::TruncatedBody: return "truncated body";
    case DecodeError::LengthMismatch: return "length mismatch";
    case DecodeError::BadField: return "bad field";
  }
  return "?";
}

MessageKind kind_of(const Message& m) {
  return static_cast<MessageKind>(m.index() + 1);
}

namespace {

static_assert(std::variant_size_v<Message> == 11);

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }

 private:
  std::uint64_t get(int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

constexpr std::uint8_t kNoInheritance = 0xFF;

// Body sizes per kind; index = kind - 1.
constexpr std::size_t kBodySize[] = {16, 12, 16, 4, 8, 4, 16, 28, 8, 10, 16};

void write_record(Writer& w, const ErrorRecord& r) {
  w.u32(r.global_tag);
  w.u16(r.local_tag);
  w.u8(static_cast<std::uint8_t>(r.code));
  w.u8(r.inherited_from ? static_cast<std::uint8_t>(*r.inherited_from) : kNoInheritance);
  w.u64(r.timestamp_cc);
}

bool valid_code(std::uint8_t c) { return c <= static_cast<std::uint8_t>(ErrorCode::MaxParallelExceeded); }

std::optional<ErrorRecord> read_record(Reader& r) {
  ErrorRecord rec;
  rec.global_tag = r.u32();
  rec.local_tag = r.u16();
  auto code = r.u8();
  auto inh = r.u8();
  rec.timestamp_cc = r.u64();
  if (!valid_code(code) || (inh != kNoInheritance && !valid_code(inh))) return std::nullopt;
  rec.code = static_cast<ErrorCode>(code);
  if (inh != kNoInheritance) rec.inherited_from = static_cast<ErrorCode>(inh);
  return rec;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::vector<std::uint8_t> encode(const Message& m) {
  Writer w;
  w.u8(kWireVersion);
  w.u8(static_cast<std::uint8_t>(kind_of(m)));
  w.u16(0);  // patched below
  std::visit(overloaded{
                 [&](const ControlPacket& p) {
                   w.u32(p.global_tag);
                   w.u16(p.container_id);
                   w.u16(p.source_id);
                   w.u64(p.arrival_time_cc);
                 },
                 [&](const DataPacket& p) {
                   w.u32(p.global_tag);
                   w.u16(p.source_id);
                   w.u16(p.port);
                   w.u32(p.bytes);
                 },
                 [&](const ErrorPacket& p) { write_record(w, p.record); },
                 [&](const DctRequest& p) {
                   w.u16(p.container_id);
                   w.u16(p.source_id);
                 },
                 [&](const DffDescriptor& p) {
                   w.u32(p.global_tag);
                   w.u16(p.container_id);
                   w.u8(p.instance_index);
                   w.u8(p.microflow_count);
                 },
                 [&](const DffRelease& p) { w.u32(p.global_tag); },
                 [&](const PointerDescriptor& p) {
                   w.u32(p.global_tag);
                   w.u16(p.local_tag);
                   w.u16(p.port);
                   w.u32(p.buffer_index);
                   w.u32(p.bytes);
                 },
                 [&](const MicroflowDescriptor& p) {
                   w.u32(p.global_tag);
                   w.u16(p.local_tag);
                   w.u16(p.stage_id);
                   w.u16(p.kernel_id);
                   w.u8(p.input_count);
                   w.u8(p.output_count);
                   w.u32(p.runtime_min_cc);
                   w.u32(p.runtime_max_cc);
                   w.u16(p.compute_units);
                   w.u16(p.memory_units);
                   w.u32(p.deadline_cc);
                 },
                 [&](const DffInputReady& p) {
                   w.u32(p.global_tag);
                   w.u16(p.stage_id);
                   w.u16(p.ready_inputs);
                 },
                 [&](const DffOutputReady& p) {
                   w.u32(p.global_tag);
                   w.u16(p.port);
                   w.u32(p.bytes);
                 },
                 [&](const ErrorMessage& p) { write_record(w, p.record); },
             },
             m);
  auto& bytes = w.bytes();
  const auto body = bytes.size() - 4;
  assert(body == kBodySize[m.index()]);
  bytes[2] = static_cast<std::uint8_t>(body & 0xFF);
  bytes[3] = static_cast<std::uint8_t>(body >> 8);
  return std::move(bytes);
}

DecodeResult decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) return DecodeError::TruncatedHeader;
  if (bytes[0] != kWireVersion) return DecodeError::BadVersion;
  const auto kind = bytes[1];
  if (kind < 1 || kind > std::size(kBodySize)) return DecodeError::UnknownKind;
  const std::size_t length = bytes[2] | (static_cast<std::size_t>(bytes[3]) << 8);
  const std::size_t expected = kBodySize[kind - 1];
  if (bytes.size() - 4 < std::min(length, expected)) return DecodeError::TruncatedBody;
  if (length < expected) return DecodeError::TruncatedBody;
  if (length > expected) return DecodeError::LengthMismatch;

  Reader r(bytes.subspan(4, expected));
  switch (static_cast<MessageKind>(kind)) {
    case MessageKind::ControlPacket: {
      ControlPacket p;
      p.global_tag = r.u32();
      p.container_id = r.u16();
      p.source_id = r.u16();
      p.arrival_time_cc = r.u64();
      return p;
    }
    case MessageKind::DataPacket: {
      DataPacket p;
      p.global_tag = r.u32();
      p.source_id = r.u16();
      p.port = r.u16();
      p.bytes = r.u32();
      return p;
    }
    case MessageKind::ErrorPacket: {
      auto rec = read_record(r);
      if (!rec) return DecodeError::BadField;
      return ErrorPacket{*rec};
    }
    case MessageKind::DctRequest: {
      DctRequest p;
      p.container_id = r.u16();
      p.source_id = r.u16();
      return p;
    }
    case MessageKind::DffDescriptor: {
      DffDescriptor p;
      p.global_tag = r.u32();
      p.container_id = r.u16();
      p.instance_index = r.u8();
      p.microflow_count = r.u8();
      return p;
    }
    case MessageKind::DffRelease:
      return DffRelease{r.u32()};
    case MessageKind::PointerDescriptor: {
      PointerDescriptor p;
      p.global_tag = r.u32();
      p.local_tag = r.u16();
      p.port = r.u16();
      p.buffer_index = r.u32();
      p.bytes = r.u32();
      return p;
    }
    case MessageKind::MicroflowDescriptor: {
      MicroflowDescriptor p;
      p.global_tag = r.u32();
      p.local_tag = r.u16();
      p.stage_id = r.u16();
      p.kernel_id = r.u16();
      p.input_count = r.u8();
      p.output_count = r.u8();
      p.runtime_min_cc = r.u32();
      p.runtime_max_cc = r.u32();
      p.compute_units = r.u16();
      p.memory_units = r.u16();
      p.deadline_cc = r.u32();
      return p;
    }
    case MessageKind::DffInputReady: {
      DffInputReady p;
      p.global_tag = r.u32();
      p.stage_id = r.u16();
      p.ready_inputs = r.u16();
      return p;
    }
    case MessageKind::DffOutputReady: {
      DffOutputReady p;
      p.global_tag = r.u32();
      p.port = r.u16();
      p.bytes = r.u32();
      return p;
    }
    case MessageKind::ErrorMessage: {
      auto rec = read_record(r);
      if (!rec) return DecodeError::BadField;
      return ErrorMessage{*rec};
    }
  }
  return DecodeError::UnknownKind;
}

namespace {

std::string record_text(const ErrorRecord& r) {
  std::ostringstream os;
  os << "code=" << to_string(r.code) << ",global_tag=" << r.global_tag << ",local_tag=" << r.local_tag;
  if (r.inherited_from) os << ",inherited_from=" << to_string(*r.inherited_from);
  os << ",t=" << r.timestamp_cc;
  return os.str();
}

}  // namespace

std::string to_text(const Message& m) {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const ControlPacket& p) {
                   os << "control_packet{global_tag=" << p.global_tag << ",container_id=" << p.container_id
                      << ",source_id=" << p.source_id << ",arrival_time_cc=" << p.arrival_time_cc << "}";
                 },
                 [&](const DataPacket& p) {
                   os << "data_packet{global_tag=" << p.global_tag << ",source_id=" << p.source_id
                      << ",port=" << p.port << ",bytes=" << p.bytes << "}";
                 },
                 [&](const ErrorPacket& p) { os << "error_packet{" << record_text(p.record) << "}"; },
                 [&](const DctRequest& p) {
                   os << "dct_request{container_id=" << p.container_id << ",source_id=" << p.source_id << "}";
                 },
                 [&](const DffDescriptor& p) {
                   os << "dff_descriptor{global_tag=" << p.global_tag << ",container_id=" << p.container_id
                      << ",instance=" << int(p.instance_index) << ",microflows=" << int(p.microflow_count) << "}";
                 },
                 [&](const DffRelease& p) { os << "dff_release{global_tag=" << p.global_tag << "}"; },
                 [&](const PointerDescriptor& p) {
                   os << "pointer_descriptor{global_tag=" << p.global_tag << ",local_tag=" << p.local_tag
                      << ",port=" << p.port << ",buffer=" << p.buffer_index << ",bytes=" << p.bytes << "}";
                 },
                 [&](const MicroflowDescriptor& p) {
                   os << "microflow_descriptor{global_tag=" << p.global_tag << ",local_tag=" << p.local_tag
                      << ",stage=" << p.stage_id << ",kernel=" << p.kernel_id << ",in=" << int(p.input_count)
                      << ",out=" << int(p.output_count) << ",rt=[" << p.runtime_min_cc << ","
                      << p.runtime_max_cc << "],cu=" << p.compute_units << ",mu=" << p.memory_units
                      << ",deadline=" << p.deadline_cc << "}";
                 },
                 [&](const DffInputReady& p) {
                   os << "dff_input_ready{global_tag=" << p.global_tag << ",stage=" << p.stage_id
                      << ",ready_inputs=" << p.ready_inputs << "}";
                 },
                 [&](const DffOutputReady& p) {
                   os << "dff_output_ready{global_tag=" << p.global_tag << ",port=" << p.port
                      << ",bytes=" << p.bytes << "}";
                 },
                 [&](const ErrorMessage& p) { os << "error_message{" << record_text(p.record) << "}"; },
             },
             m);
  return os.str();
}

ErrorRecord propagate_error(std::span<const ErrorRecord> producers, std::uint32_t consumer_global_tag,
                            std::uint16_t consumer_local_tag, std::uint64_t now_cc) {
  assert(!producers.empty());
  const auto& first = *std::min_element(producers.begin(), producers.end(), [](const auto& a, const auto& b) {
    if (a.timestamp_cc != b.timestamp_cc) return a.timestamp_cc < b.timestamp_cc;
    if (a.global_tag != b.global_tag) return a.global_tag < b.global_tag;
    return a.local_tag < b.local_tag;
  });
  ErrorRecord out;
  out.code = first.code;
  out.inherited_from = first.code;
  out.global_tag = consumer_global_tag;
  out.local_tag = consumer_local_tag;
  out.timestamp_cc = std::max(now_cc, first.timestamp_cc);
  return out;
}

ErrorRecord propagate_error(const ErrorRecord& producer, std::uint32_t consumer_global_tag,
                            std::uint16_t consumer_local_tag, std::uint64_t now_cc) {
  return propagate_error(std::span<const ErrorRecord>(&producer, 1), consumer_global_tag, consumer_local_tag,
                         now_cc);
}

}  // namespace sre
