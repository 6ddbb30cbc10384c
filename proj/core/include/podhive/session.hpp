#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <sys/types.h>
#include <thread>
#include <vector>

#include "podhive/protocol.hpp"

namespace podhive::protocol {

/// A bidirectional byte stream.
class Transport {
 public:
  virtual ~Transport() = default;
  /// Blocks until some bytes arrive; returns 0 at end of stream or after
  /// close().
  virtual std::size_t read(char* buf, std::size_t size) = 0;
  /// Writes everything or throws Error("TransportClosed").
  virtual void write(std::string_view bytes) = 0;
  /// Unblocks pending reads and stops further I/O.
  virtual void close() = 0;
};

/// Transport over a pair of file descriptors (pipes or one socket).
class FdTransport final : public Transport {
 public:
  FdTransport(int read_fd, int write_fd, bool owns_fds);
  ~FdTransport() override;

  std::size_t read(char* buf, std::size_t size) override;
  void write(std::string_view bytes) override;
  void close() override;

 private:
  int read_fd_;
  int write_fd_;
  bool owns_;
  std::atomic<bool> closed_{false};
  std::mutex write_mu_;
};

/// Connects to host:port over TCP. Throws Error("TransportClosed").
std::unique_ptr<Transport> connect_tcp(const std::string& host, int port);

/// A kernel running as a child process, speaking frames on its stdio.
class KernelProcess {
 public:
  /// Spawns argv[0] with the given arguments. Throws
  /// Error("KernelUnavailable") if the program cannot be started.
  explicit KernelProcess(std::vector<std::string> argv);
  ~KernelProcess();
  KernelProcess(const KernelProcess&) = delete;
  KernelProcess& operator=(const KernelProcess&) = delete;

  /// Transport bound to the child's stdin/stdout. Can be taken once.
  std::unique_ptr<Transport> take_transport();
  pid_t pid() const noexcept { return pid_; }
  void kill();
  /// Exit status once the child has ended; -1 while running.
  int wait();

 private:
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  bool reaped_ = false;
  int status_ = -1;
};

/// Splits a command string on whitespace (no quoting).
std::vector<std::string> split_command(const std::string& command);

using StreamCallback = std::function<void(const StreamChunk&)>;

struct SessionOptions {
  std::chrono::milliseconds timeout{30000};
};

/// Client side of the protocol: issues requests in FIFO order and matches
/// replies by msg_id on a reader thread.
class Session {
 public:
  explicit Session(std::unique_ptr<Transport> transport, SessionOptions options = {});
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Sends the request and returns a future for its terminal reply.
  /// Stream chunks for the request go to `on_stream` on the reader thread.
  /// An empty msg_id is replaced by a fresh one.
  std::future<Reply> request_async(Request request, StreamCallback on_stream = {});

  /// Sends and waits. Throws Error("Timeout") or Error("TransportClosed").
  Reply request(Request request, StreamCallback on_stream = {});
  Reply request(Request request, StreamCallback on_stream,
                std::chrono::milliseconds timeout);

  std::string next_msg_id();
  bool closed() const noexcept { return closed_; }
  /// Frames the reader could not match or decode (UnknownMsgId,
  /// MalformedFrame, out-of-order replies), oldest first.
  std::vector<std::string> protocol_errors() const;
  void close();

 private:
  struct Pending {
    std::promise<Reply> promise;
    StreamCallback on_stream;
  };

  void reader_loop();
  void fail_all(const std::string& why);

  std::unique_ptr<Transport> transport_;
  SessionOptions options_;
  mutable std::mutex mu_;
  std::mutex issue_mu_;
  std::map<std::string, Pending> pending_;
  std::vector<std::string> order_;  // issued, unanswered msg_ids
  std::vector<std::string> errors_;
  std::atomic<bool> closed_{false};
  std::uint64_t counter_ = 0;
  std::thread reader_;
};

}  // namespace podhive::protocol
