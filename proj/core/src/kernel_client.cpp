#include "podhive/kernel_client.hpp"

#include <iostream>

namespace podhive {

using protocol::ErrorInfo;
using protocol::Reply;
using protocol::ResultEnvelope;
using protocol::StreamChunk;

namespace {

EvalOutcome outcome_of(const std::optional<podlang::Value>& value) {
  EvalOutcome out;
  if (value) out.result = ResultEnvelope{std::string(protocol::kTextPlain),
                                         podlang::display(*value)};
  return out;
}

}  // namespace

EmbeddedKernelClient::EmbeddedKernelClient(std::size_t recursion_limit)
    : recursion_limit_(recursion_limit),
      kernel_(std::make_unique<podlang::Kernel>(recursion_limit)) {}

EvalOutcome EmbeddedKernelClient::eval_in_ns(const std::string& ns,
                                             const std::string& code,
                                             const std::vector<std::string>&,
                                             const StreamSink& on_stream) {
  podlang::StdoutSink sink;
  if (on_stream) {
    sink = [&](std::string_view text) {
      on_stream(StreamChunk{"", protocol::Channel::Stdout, std::string(text)});
    };
  }
  return outcome_of(kernel_->eval_in_ns(ns, code, sink));
}

void EmbeddedKernelClient::add_import(const std::string& from, const std::string& to,
                                      const std::string& name) {
  kernel_->add_import(from, to, name);
}

void EmbeddedKernelClient::delete_import(const std::string& ns,
                                         const std::string& name) {
  kernel_->delete_import(ns, name);
}

void EmbeddedKernelClient::delete_names(const std::string& ns,
                                        const std::vector<std::string>& names) {
  kernel_->delete_names(ns, names);
}

void EmbeddedKernelClient::restart() {
  kernel_ = std::make_unique<podlang::Kernel>(recursion_limit_);
}

SessionKernelClient::SessionKernelClient(Factory factory,
                                         protocol::SessionOptions options,
                                         std::string language)
    : factory_(std::move(factory)), options_(options), language_(std::move(language)) {
  connect();
}

SessionKernelClient::~SessionKernelClient() {
  session_.reset();
  connection_process_.reset();
}

std::unique_ptr<SessionKernelClient> SessionKernelClient::spawn(
    std::vector<std::string> argv, protocol::SessionOptions options,
    std::string language) {
  Factory factory = [argv] {
    auto process = std::make_shared<protocol::KernelProcess>(argv);
    Connection c;
    c.transport = process->take_transport();
    c.process = std::move(process);
    return c;
  };
  return std::make_unique<SessionKernelClient>(std::move(factory), options,
                                               std::move(language));
}

void SessionKernelClient::connect() {
  Connection c = factory_();
  session_.reset();
  connection_process_ = std::move(c.process);
  session_ = std::make_unique<protocol::Session>(std::move(c.transport), options_);
}

protocol::Session& SessionKernelClient::session() { return *session_; }

Reply SessionKernelClient::call(protocol::Payload payload, const StreamSink& on_stream) {
  Reply reply;
  try {
    protocol::StreamCallback cb;
    if (on_stream) cb = [&](const StreamChunk& c) { on_stream(c); };
    reply = session_->request(protocol::Request{"", std::move(payload)}, cb);
  } catch (const Error& e) {
    if (e.code() == "Timeout" || e.code() == "TransportClosed") {
      throw Error("KernelUnavailable", e.what());
    }
    throw;
  }
  if (reply.status == protocol::Status::Error) {
    throw KernelError(reply.error->ename, reply.error->evalue);
  }
  return reply;
}

EvalOutcome SessionKernelClient::eval_in_ns(const std::string& ns,
                                            const std::string& code,
                                            const std::vector<std::string>& names,
                                            const StreamSink& on_stream) {
  Reply r = call(protocol::EvalInNs{ns, code, names}, on_stream);
  return EvalOutcome{r.result};
}

void SessionKernelClient::add_import(const std::string& from, const std::string& to,
                                     const std::string& name) {
  call(protocol::AddImport{from, to, name});
}

void SessionKernelClient::delete_import(const std::string& ns, const std::string& name) {
  call(protocol::DeleteImport{ns, name});
}

void SessionKernelClient::delete_names(const std::string& ns,
                                       const std::vector<std::string>& names) {
  call(protocol::DeleteNames{ns, names});
}

void SessionKernelClient::ping() { call(protocol::Ping{}); }

void SessionKernelClient::restart() {
  try {
    connect();
  } catch (const Error& e) {
    throw Error("KernelUnavailable", e.what());
  }
}

std::vector<protocol::Message> handle_request(podlang::Kernel& kernel,
                                              const protocol::Request& request) {
  std::vector<protocol::Message> out;
  const std::string& id = request.msg_id;
  try {
    std::optional<ResultEnvelope> result;
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, protocol::EvalInNs>) {
            auto value = kernel.eval_in_ns(p.ns, p.code, [&](std::string_view text) {
              out.push_back(StreamChunk{id, protocol::Channel::Stdout, std::string(text)});
            });
            result = outcome_of(value).result;
          } else if constexpr (std::is_same_v<T, protocol::AddImport>) {
            kernel.add_import(p.from, p.to, p.name);
          } else if constexpr (std::is_same_v<T, protocol::DeleteImport>) {
            kernel.delete_import(p.ns, p.name);
          } else if constexpr (std::is_same_v<T, protocol::DeleteNames>) {
            kernel.delete_names(p.ns, p.names);
          }
        },
        request.payload);
    out.push_back(Reply::ok(id, std::move(result)));
  } catch (const Error& e) {
    out.push_back(Reply::failure(id, ErrorInfo{e.code(), e.what()}));
  }
  return out;
}

void serve_kernel(protocol::Transport& transport, std::size_t recursion_limit) {
  podlang::Kernel kernel(recursion_limit);
  protocol::FrameBuffer frames;
  char buf[65536];
  auto send = [&](const protocol::Message& m) {
    std::string frame;
    try {
      frame = protocol::encode(m);
    } catch (const Error& e) {
      // Output that is not valid UTF-8 cannot be framed; report it instead.
      std::string id = std::visit([](const auto& x) { return x.msg_id; }, m);
      if (std::holds_alternative<StreamChunk>(m)) return;
      frame = protocol::encode(Reply::failure(id, ErrorInfo{e.code(), e.what()}));
    }
    transport.write(frame);
  };
  for (;;) {
    std::size_t n = transport.read(buf, sizeof buf);
    if (n == 0) return;
    frames.feed(std::string_view(buf, n));
    while (auto frame = frames.next_frame()) {
      if (frame->empty()) continue;
      protocol::Message msg;
      try {
        msg = protocol::decode(*frame);
      } catch (const Error& e) {
        if (auto id = protocol::peek_msg_id(*frame)) {
          send(Reply::failure(*id, ErrorInfo{e.code(), e.what()}));
        } else {
          std::cerr << "podhive kernel: dropping frame: " << e.what() << "\n";
        }
        continue;
      }
      const auto* req = std::get_if<protocol::Request>(&msg);
      if (!req) {
        std::cerr << "podhive kernel: ignoring non-request frame\n";
        continue;
      }
      for (const protocol::Message& m : handle_request(kernel, *req)) send(m);
    }
  }
}

}  // namespace podhive
