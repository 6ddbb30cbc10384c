#include "podhive/session.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <spawn.h>
#include <sstream>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace podhive::protocol {

namespace {

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { std::signal(SIGPIPE, SIG_IGN); });
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

FdTransport::FdTransport(int read_fd, int write_fd, bool owns_fds)
    : read_fd_(read_fd), write_fd_(write_fd), owns_(owns_fds) {
  ignore_sigpipe();
}

FdTransport::~FdTransport() {
  close();
  if (owns_) {
    ::close(read_fd_);
    if (write_fd_ != read_fd_) ::close(write_fd_);
  }
}

std::size_t FdTransport::read(char* buf, std::size_t size) {
  while (!closed_) {
    pollfd pfd{read_fd_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, 50);
    if (rc < 0) {
      if (errno == EINTR) continue;
      return 0;
    }
    if (rc == 0) continue;
    ssize_t n = ::read(read_fd_, buf, size);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return 0;
    }
    return static_cast<std::size_t>(n);
  }
  return 0;
}

void FdTransport::write(std::string_view bytes) {
  std::lock_guard lock(write_mu_);
  while (!bytes.empty()) {
    if (closed_) throw Error("TransportClosed", "transport is closed");
    ssize_t n = ::write(write_fd_, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("TransportClosed", "write failed: " + errno_text());
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

void FdTransport::close() {
  if (closed_.exchange(true)) return;
  if (owns_) {
    // Signal end of stream to the peer; the fds are released on destruction.
    if (write_fd_ == read_fd_) {
      ::shutdown(write_fd_, SHUT_RDWR);
    } else {
      ::close(write_fd_);
      write_fd_ = -1;
    }
  }
}

std::unique_ptr<Transport> connect_tcp(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw Error("TransportClosed", "cannot resolve " + host + ": " + gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) {
    throw Error("TransportClosed", "cannot connect to " + host + ":" + service);
  }
  return std::make_unique<FdTransport>(fd, fd, true);
}

std::vector<std::string> split_command(const std::string& command) {
  std::istringstream in(command);
  std::vector<std::string> out;
  for (std::string word; in >> word;) out.push_back(word);
  return out;
}

KernelProcess::KernelProcess(std::vector<std::string> argv) {
  if (argv.empty()) throw Error("KernelUnavailable", "empty kernel command");
  ignore_sigpipe();
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) {
    throw Error("KernelUnavailable", "pipe: " + errno_text());
  }
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw Error("KernelUnavailable", "pipe: " + errno_text());
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  std::vector<char*> args;
  for (std::string& a : argv) args.push_back(a.data());
  args.push_back(nullptr);
  int rc = ::posix_spawnp(&pid_, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    pid_ = -1;
    throw Error("KernelUnavailable",
                "cannot start '" + argv[0] + "': " + std::strerror(rc));
  }
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

KernelProcess::~KernelProcess() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  kill();
}

std::unique_ptr<Transport> KernelProcess::take_transport() {
  if (to_child_ < 0) throw Error("TransportClosed", "transport already taken");
  auto t = std::make_unique<FdTransport>(from_child_, to_child_, true);
  to_child_ = from_child_ = -1;
  return t;
}

void KernelProcess::kill() {
  if (pid_ <= 0 || reaped_) return;
  ::kill(pid_, SIGKILL);
  wait();
}

int KernelProcess::wait() {
  if (pid_ <= 0) return -1;
  if (!reaped_) {
    int status = 0;
    while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
    }
    reaped_ = true;
    status_ = status;
  }
  return status_;
}

Session::Session(std::unique_ptr<Transport> transport, SessionOptions options)
    : transport_(std::move(transport)), options_(options) {
  reader_ = std::thread([this] { reader_loop(); });
}

Session::~Session() { close(); }

void Session::close() {
  transport_->close();
  if (reader_.joinable()) reader_.join();
}

std::string Session::next_msg_id() {
  std::lock_guard lock(mu_);
  return "m" + std::to_string(++counter_);
}

std::future<Reply> Session::request_async(Request request, StreamCallback on_stream) {
  std::lock_guard issue(issue_mu_);
  if (request.msg_id.empty()) request.msg_id = next_msg_id();
  std::string frame = encode(request);
  std::future<Reply> fut;
  {
    std::lock_guard lock(mu_);
    if (closed_) throw Error("TransportClosed", "session is closed");
    if (pending_.count(request.msg_id)) {
      throw Error("ProtocolError", "msg_id '" + request.msg_id + "' already in flight");
    }
    Pending& p = pending_[request.msg_id];
    p.on_stream = std::move(on_stream);
    fut = p.promise.get_future();
    order_.push_back(request.msg_id);
  }
  try {
    transport_->write(frame);
  } catch (const Error& e) {
    std::lock_guard lock(mu_);
    auto it = pending_.find(request.msg_id);
    if (it != pending_.end()) {
      it->second.promise.set_exception(std::make_exception_ptr(
          Error("TransportClosed", "request " + request.msg_id + ": " + e.what())));
      pending_.erase(it);
      std::erase(order_, request.msg_id);
    }
  }
  return fut;
}

Reply Session::request(Request request, StreamCallback on_stream) {
  return this->request(std::move(request), std::move(on_stream), options_.timeout);
}

Reply Session::request(Request request, StreamCallback on_stream,
                       std::chrono::milliseconds timeout) {
  if (request.msg_id.empty()) request.msg_id = next_msg_id();
  std::string id = request.msg_id;
  auto start = std::chrono::steady_clock::now();
  std::future<Reply> fut = request_async(std::move(request), std::move(on_stream));
  if (fut.wait_for(timeout) == std::future_status::timeout) {
    {
      std::lock_guard lock(mu_);
      pending_.erase(id);
      std::erase(order_, id);
    }
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);
    throw Error("Timeout", "request " + id + " timed out after " +
                               std::to_string(elapsed.count()) + " ms");
  }
  return fut.get();
}

std::vector<std::string> Session::protocol_errors() const {
  std::lock_guard lock(mu_);
  return errors_;
}

void Session::fail_all(const std::string& why) {
  std::lock_guard lock(mu_);
  closed_ = true;
  for (auto& [id, p] : pending_) {
    p.promise.set_exception(std::make_exception_ptr(
        Error("TransportClosed", "request " + id + ": " + why)));
  }
  pending_.clear();
  order_.clear();
}

void Session::reader_loop() {
  FrameBuffer frames;
  char buf[65536];
  for (;;) {
    std::size_t n = transport_->read(buf, sizeof buf);
    if (n == 0) break;
    frames.feed(std::string_view(buf, n));
    while (auto frame = frames.next_frame()) {
      Message msg;
      try {
        msg = decode(*frame);
      } catch (const Error& e) {
        std::lock_guard lock(mu_);
        errors_.push_back(e.code() + ": " + e.what());
        continue;
      }
      if (auto* reply = std::get_if<Reply>(&msg)) {
        std::lock_guard lock(mu_);
        auto it = pending_.find(reply->msg_id);
        if (it == pending_.end()) {
          errors_.push_back("UnknownMsgId: reply for '" + reply->msg_id + "'");
          continue;
        }
        if (!order_.empty() && order_.front() != reply->msg_id) {
          errors_.push_back("OutOfOrder: reply for '" + reply->msg_id +
                            "' before '" + order_.front() + "'");
        }
        std::erase(order_, reply->msg_id);
        it->second.promise.set_value(std::move(*reply));
        pending_.erase(it);
      } else if (auto* chunk = std::get_if<StreamChunk>(&msg)) {
        StreamCallback cb;
        {
          std::lock_guard lock(mu_);
          auto it = pending_.find(chunk->msg_id);
          if (it == pending_.end()) {
            errors_.push_back("UnknownMsgId: stream for '" + chunk->msg_id + "'");
            continue;
          }
          cb = it->second.on_stream;
        }
        if (cb) cb(*chunk);
      } else {
        std::lock_guard lock(mu_);
        errors_.push_back("ProtocolError: kernel sent a request");
      }
    }
  }
  fail_all("transport closed");
}

}  // namespace podhive::protocol
