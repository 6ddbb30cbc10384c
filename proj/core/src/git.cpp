#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "podhive/repo_store.hpp"

extern char** environ;

namespace podhive::store {

namespace {

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

ProcessResult run_process(const std::vector<std::string>& argv) {
  int out_pipe[2], err_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(err_pipe, O_CLOEXEC) != 0) {
    throw Error("GitFailure", std::string("pipe: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, 0, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], 1);
  posix_spawn_file_actions_adddup2(&actions, err_pipe[1], 2);

  std::vector<char*> args;
  for (const std::string& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  pid_t pid = -1;
  int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  if (rc != 0) {
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);
    throw Error("GitFailure", "cannot run " + argv[0] + ": " + std::strerror(rc));
  }

  ProcessResult result;
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  std::string* sinks[2] = {&result.out, &result.err};
  int open_fds = 2;
  char buf[8192];
  while (open_fds > 0) {
    if (::poll(fds, 2, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      ssize_t n = ::read(fds[i].fd, buf, sizeof buf);
      if (n > 0) {
        sinks[i]->append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || errno != EINTR) {
        ::close(fds[i].fd);
        fds[i].fd = -1;
        --open_fds;
      }
    }
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return result;
}

}  // namespace

GitRepo::GitRepo(std::filesystem::path directory) : dir_(std::move(directory)) {}

std::string GitRepo::git(const std::vector<std::string>& args, bool check,
                         int* exit_code) const {
  std::vector<std::string> argv{"git",
                                "-C",
                                dir_.string(),
                                "-c",
                                "core.quotepath=false",
                                "-c",
                                "user.name=podhive",
                                "-c",
                                "user.email=podhive@localhost",
                                "-c",
                                "commit.gpgsign=false"};
  argv.insert(argv.end(), args.begin(), args.end());
  ProcessResult r = run_process(argv);
  if (exit_code) *exit_code = r.exit_code;
  if (check && r.exit_code != 0) {
    throw Error("GitFailure", "git " + (args.empty() ? std::string() : args[0]) +
                                  " failed: " + r.err);
  }
  return r.out;
}

void GitRepo::init() {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (!std::filesystem::exists(dir_ / ".git")) git({"init", "-q"});
}

bool GitRepo::has_commits() const {
  int code = 0;
  git({"rev-parse", "--verify", "-q", "HEAD"}, false, &code);
  return code == 0;
}

std::string GitRepo::commit_all(const std::string& message) {
  git({"add", "-A"});
  int unchanged = 1;
  git({"diff", "--cached", "--quiet"}, false, &unchanged);
  if (unchanged != 0 || !has_commits()) {
    git({"commit", "-q", "--allow-empty", "-m", message});
  }
  std::string head = git({"rev-parse", "HEAD"});
  while (!head.empty() && (head.back() == '\n' || head.back() == '\r')) head.pop_back();
  return head;
}

std::string GitRepo::working_diff() {
  git({"add", "-A"});
  std::vector<std::string> args{"diff",          "--cached",      "--no-color",
                                "--no-ext-diff", "--text",        "-M",
                                "--src-prefix=a/", "--dst-prefix=b/"};
  if (has_commits()) args.push_back("HEAD");
  return git(args);
}

std::optional<std::string> GitRepo::show_head(const std::string& path) const {
  int code = 0;
  std::string out = git({"show", "HEAD:" + path}, false, &code);
  if (code != 0) return std::nullopt;
  return out;
}

}  // namespace podhive::store
