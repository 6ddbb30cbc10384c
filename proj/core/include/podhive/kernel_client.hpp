#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "podhive/kernel.hpp"
#include "podhive/protocol.hpp"
#include "podhive/session.hpp"

namespace podhive {

struct EvalOutcome {
  std::optional<protocol::ResultEnvelope> result;
};

using StreamSink = std::function<void(const protocol::StreamChunk&)>;

/// What the orchestrator needs from a kernel. Evaluation failures throw
/// KernelError; a dead or unreachable kernel throws
/// Error("KernelUnavailable").
class KernelClient {
 public:
  virtual ~KernelClient() = default;

  virtual EvalOutcome eval_in_ns(const std::string& ns, const std::string& code,
                                 const std::vector<std::string>& names,
                                 const StreamSink& on_stream = {}) = 0;
  virtual void add_import(const std::string& from, const std::string& to,
                          const std::string& name) = 0;
  virtual void delete_import(const std::string& ns, const std::string& name) = 0;
  virtual void delete_names(const std::string& ns,
                            const std::vector<std::string>& names) = 0;
  virtual void ping() = 0;
  /// Drops every namespace and starts over.
  virtual void restart() = 0;
  virtual std::string language() const { return "podlang"; }
};

/// Runs the podlang kernel in-process.
class EmbeddedKernelClient final : public KernelClient {
 public:
  explicit EmbeddedKernelClient(
      std::size_t recursion_limit = podlang::Kernel::kDefaultRecursionLimit);

  EvalOutcome eval_in_ns(const std::string& ns, const std::string& code,
                         const std::vector<std::string>& names,
                         const StreamSink& on_stream = {}) override;
  void add_import(const std::string& from, const std::string& to,
                  const std::string& name) override;
  void delete_import(const std::string& ns, const std::string& name) override;
  void delete_names(const std::string& ns,
                    const std::vector<std::string>& names) override;
  void ping() override {}
  void restart() override;

  podlang::Kernel& kernel() { return *kernel_; }

 private:
  std::size_t recursion_limit_;
  std::unique_ptr<podlang::Kernel> kernel_;
};

/// Talks to a kernel over the wire protocol. The factory opens a fresh
/// transport; it is called at construction and on restart().
class SessionKernelClient final : public KernelClient {
 public:
  struct Connection {
    std::unique_ptr<protocol::Transport> transport;
    std::shared_ptr<protocol::KernelProcess> process;  // may be null
  };
  using Factory = std::function<Connection()>;

  SessionKernelClient(Factory factory, protocol::SessionOptions options = {},
                      std::string language = "podlang");
  ~SessionKernelClient() override;

  /// Spawns `argv` as a subprocess kernel.
  static std::unique_ptr<SessionKernelClient> spawn(std::vector<std::string> argv,
                                                    protocol::SessionOptions options = {},
                                                    std::string language = "podlang");

  EvalOutcome eval_in_ns(const std::string& ns, const std::string& code,
                         const std::vector<std::string>& names,
                         const StreamSink& on_stream = {}) override;
  void add_import(const std::string& from, const std::string& to,
                  const std::string& name) override;
  void delete_import(const std::string& ns, const std::string& name) override;
  void delete_names(const std::string& ns,
                    const std::vector<std::string>& names) override;
  void ping() override;
  void restart() override;
  std::string language() const override { return language_; }

  protocol::Session& session();
  protocol::KernelProcess* process() { return connection_process_.get(); }

 private:
  protocol::Reply call(protocol::Payload payload, const StreamSink& on_stream = {});
  void connect();

  Factory factory_;
  protocol::SessionOptions options_;
  std::string language_;
  std::shared_ptr<protocol::KernelProcess> connection_process_;
  std::unique_ptr<protocol::Session> session_;
};

/// Serves protocol requests from `transport` against a podlang kernel
/// until the stream ends. Replies are written in request order.
void serve_kernel(protocol::Transport& transport,
                  std::size_t recursion_limit = podlang::Kernel::kDefaultRecursionLimit);

/// Handles one decoded request frame; returns the frames to send back
/// (stream chunks then the terminal reply).
std::vector<protocol::Message> handle_request(podlang::Kernel& kernel,
                                              const protocol::Request& request);

}  // namespace podhive
