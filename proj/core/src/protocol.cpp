#include "podhive/protocol.hpp"

#include <nlohmann/json.hpp>

namespace podhive::protocol {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& why) {
  throw Error("MalformedFrame", why);
}

const json& field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(std::string("missing field '") + key + "'");
  return *it;
}

std::string str_field(const json& obj, const char* key) {
  const json& v = field(obj, key);
  if (!v.is_string()) malformed(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> list_field(const json& obj, const char* key) {
  const json& v = field(obj, key);
  if (!v.is_array()) malformed(std::string("field '") + key + "' must be a list");
  std::vector<std::string> out;
  for (const json& item : v) {
    if (!item.is_string()) {
      malformed(std::string("field '") + key + "' must hold strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

const json& object_field(const json& obj, const char* key) {
  const json& v = field(obj, key);
  if (!v.is_object()) malformed(std::string("field '") + key + "' must be an object");
  return v;
}

void require_text(const std::string& value, const char* what) {
  if (value.empty()) {
    throw Error("SerializationFailure", std::string(what) + " must be non-empty");
  }
}

json payload_json(const Payload& payload) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, EvalInNs>) {
          require_text(p.ns, "ns");
          return {{"ns", p.ns}, {"code", p.code}, {"names", p.names}};
        } else if constexpr (std::is_same_v<T, AddImport>) {
          require_text(p.from, "from");
          require_text(p.to, "to");
          require_text(p.name, "name");
          return {{"from", p.from}, {"to", p.to}, {"name", p.name}};
        } else if constexpr (std::is_same_v<T, DeleteImport>) {
          require_text(p.ns, "ns");
          require_text(p.name, "name");
          return {{"ns", p.ns}, {"name", p.name}};
        } else if constexpr (std::is_same_v<T, DeleteNames>) {
          require_text(p.ns, "ns");
          return {{"ns", p.ns}, {"names", p.names}};
        } else {
          return json::object();
        }
      },
      payload);
}

json to_json(const Message& message) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        require_text(m.msg_id, "msg_id");
        if constexpr (std::is_same_v<T, Request>) {
          return {{"msg_id", m.msg_id},
                  {"op", std::string(op_name(m.payload))},
                  {"payload", payload_json(m.payload)}};
        } else if constexpr (std::is_same_v<T, Reply>) {
          json j = {{"msg_id", m.msg_id},
                    {"status", m.status == Status::Ok ? "ok" : "error"}};
          if (m.status == Status::Ok && m.error) {
            throw Error("SerializationFailure", "ok reply carries an error");
          }
          if (m.status == Status::Error && (m.result || !m.error)) {
            throw Error("SerializationFailure",
                        "error reply needs an error and no result");
          }
          if (m.result) j["result"] = {{"mime", m.result->mime}, {"data", m.result->data}};
          if (m.error) j["error"] = {{"ename", m.error->ename}, {"evalue", m.error->evalue}};
          return j;
        } else {
          return {{"msg_id", m.msg_id},
                  {"channel", m.channel == Channel::Stdout ? "stdout" : "stderr"},
                  {"text", m.text}};
        }
      },
      message);
}

Payload parse_payload(const std::string& op, const json& p) {
  if (op == "eval_in_ns") {
    return EvalInNs{str_field(p, "ns"), str_field(p, "code"), list_field(p, "names")};
  }
  if (op == "add_import") {
    return AddImport{str_field(p, "from"), str_field(p, "to"), str_field(p, "name")};
  }
  if (op == "delete_import") {
    return DeleteImport{str_field(p, "ns"), str_field(p, "name")};
  }
  if (op == "delete_names") {
    return DeleteNames{str_field(p, "ns"), list_field(p, "names")};
  }
  if (op == "ping") return Ping{};
  throw Error("ProtocolError", "unknown op '" + op + "'");
}

}  // namespace

std::string_view op_name(const Payload& payload) {
  static constexpr std::string_view names[] = {"eval_in_ns", "add_import",
                                               "delete_import", "delete_names", "ping"};
  return names[payload.index()];
}

Reply Reply::ok(std::string msg_id, std::optional<ResultEnvelope> result) {
  return Reply{std::move(msg_id), Status::Ok, std::move(result), std::nullopt};
}

Reply Reply::failure(std::string msg_id, ErrorInfo error) {
  return Reply{std::move(msg_id), Status::Error, std::nullopt, std::move(error)};
}

std::string encode(const Message& message) {
  json j = to_json(message);
  try {
    return j.dump() + "\n";
  } catch (const json::type_error& e) {
    throw Error("SerializationFailure", e.what());
  }
}

Message decode(std::string_view frame) {
  if (!frame.empty() && frame.back() == '\n') frame.remove_suffix(1);
  if (frame.find('\n') != std::string_view::npos) {
    malformed("frame spans more than one line");
  }
  json j;
  try {
    j = json::parse(frame);
  } catch (const json::exception& e) {
    malformed(e.what());
  }
  if (!j.is_object()) malformed("frame is not a JSON object");
  std::string msg_id = str_field(j, "msg_id");

  if (j.contains("op")) {
    std::string op = str_field(j, "op");
    return Request{std::move(msg_id), parse_payload(op, object_field(j, "payload"))};
  }
  if (j.contains("status")) {
    std::string status = str_field(j, "status");
    Reply r;
    r.msg_id = std::move(msg_id);
    if (status == "ok") {
      r.status = Status::Ok;
    } else if (status == "error") {
      r.status = Status::Error;
    } else {
      malformed("unknown status '" + status + "'");
    }
    if (j.contains("result") && !j["result"].is_null()) {
      const json& res = object_field(j, "result");
      r.result = ResultEnvelope{str_field(res, "mime"), str_field(res, "data")};
    }
    if (j.contains("error") && !j["error"].is_null()) {
      const json& err = object_field(j, "error");
      r.error = ErrorInfo{str_field(err, "ename"), str_field(err, "evalue")};
    }
    if (r.status == Status::Ok && r.error) malformed("ok reply carries an error");
    if (r.status == Status::Error && (r.result || !r.error)) {
      malformed("error reply needs an error and no result");
    }
    return r;
  }
  if (j.contains("channel")) {
    std::string channel = str_field(j, "channel");
    StreamChunk s;
    s.msg_id = std::move(msg_id);
    if (channel == "stdout") {
      s.channel = Channel::Stdout;
    } else if (channel == "stderr") {
      s.channel = Channel::Stderr;
    } else {
      malformed("unknown channel '" + channel + "'");
    }
    s.text = str_field(j, "text");
    return s;
  }
  malformed("frame is neither a request, a reply nor a stream chunk");
}

std::optional<std::string> peek_msg_id(std::string_view frame) {
  json j = json::parse(frame, nullptr, false);
  if (j.is_object() && j.contains("msg_id") && j["msg_id"].is_string()) {
    return j["msg_id"].get<std::string>();
  }
  return std::nullopt;
}

void FrameBuffer::feed(std::string_view bytes) {
  if (start_ > 0 && start_ >= buffer_.size() / 2) {
    buffer_.erase(0, start_);
    start_ = 0;
  }
  buffer_.append(bytes);
}

std::optional<std::string> FrameBuffer::next_frame() {
  std::size_t nl = buffer_.find('\n', start_);
  if (nl == std::string::npos) return std::nullopt;
  std::string frame = buffer_.substr(start_, nl - start_);
  start_ = nl + 1;
  return frame;
}

std::string_view FrameBuffer::partial() const noexcept {
  return std::string_view(buffer_).substr(start_);
}

}  // namespace podhive::protocol
