#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "podhive/error.hpp"

/// Kernel wire protocol: one UTF-8 JSON object per line, keys sorted,
/// "\n" terminated. Requests carry "op", replies "status", stream chunks
/// "channel".
namespace podhive::protocol {

struct EvalInNs {
  std::string ns;
  std::string code;
  std::vector<std::string> names;

  bool operator==(const EvalInNs&) const = default;
};
struct AddImport {
  std::string from;
  std::string to;
  std::string name;

  bool operator==(const AddImport&) const = default;
};
struct DeleteImport {
  std::string ns;
  std::string name;

  bool operator==(const DeleteImport&) const = default;
};
struct DeleteNames {
  std::string ns;
  std::vector<std::string> names;

  bool operator==(const DeleteNames&) const = default;
};
struct Ping {
  bool operator==(const Ping&) const = default;
};

using Payload = std::variant<EvalInNs, AddImport, DeleteImport, DeleteNames, Ping>;

/// Wire name of the payload's operation ("eval_in_ns", "ping", ...).
std::string_view op_name(const Payload& payload);

struct Request {
  std::string msg_id;
  Payload payload;

  bool operator==(const Request&) const = default;
};

inline constexpr std::string_view kTextPlain = "text/plain";

struct ResultEnvelope {
  std::string mime{kTextPlain};
  std::string data;

  bool operator==(const ResultEnvelope&) const = default;
};

struct ErrorInfo {
  std::string ename;
  std::string evalue;

  bool operator==(const ErrorInfo&) const = default;
};

enum class Status { Ok, Error };

struct Reply {
  std::string msg_id;
  Status status = Status::Ok;
  std::optional<ResultEnvelope> result;
  std::optional<ErrorInfo> error;

  static Reply ok(std::string msg_id, std::optional<ResultEnvelope> result = {});
  static Reply failure(std::string msg_id, ErrorInfo error);

  bool operator==(const Reply&) const = default;
};

enum class Channel { Stdout, Stderr };

struct StreamChunk {
  std::string msg_id;
  Channel channel = Channel::Stdout;
  std::string text;

  bool operator==(const StreamChunk&) const = default;
};

using Message = std::variant<Request, Reply, StreamChunk>;

/// Canonical frame including the trailing newline. Throws
/// Error("SerializationFailure") for invalid messages or non-UTF-8 text.
std::string encode(const Message& message);

/// Accepts a frame with or without its trailing newline. Throws
/// Error("MalformedFrame") for unparseable or mistyped input and
/// Error("ProtocolError") for an unknown op (echoed in the message).
Message decode(std::string_view frame);

/// Best-effort msg_id of a frame that failed to decode.
std::optional<std::string> peek_msg_id(std::string_view frame);

/// Splits a byte stream into frames. Bytes after the last newline stay
/// buffered until the rest of the line arrives.
class FrameBuffer {
 public:
  void feed(std::string_view bytes);
  /// Next complete frame without its newline, if any.
  std::optional<std::string> next_frame();
  std::string_view partial() const noexcept;

 private:
  std::string buffer_;
  std::size_t start_ = 0;
};

}  // namespace podhive::protocol
