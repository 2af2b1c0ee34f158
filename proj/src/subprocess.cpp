#include "apa/subprocess.h"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>

extern char** environ;

namespace apa {

namespace {

// Writes to a child that exited must surface as EPIPE, not kill the process.
void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

int millis_until(Subprocess::Clock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Subprocess::Clock::now());
  return static_cast<int>(std::max<long long>(0, left.count()));
}

}  // namespace

Subprocess::Subprocess(const std::string& command, ErrorCode failure_code) : failure_code_(failure_code) {
  ignore_sigpipe();
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) fail("pipe");
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    fail("pipe");
  }

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  std::string sh = "/bin/sh";
  std::string dash_c = "-c";
  std::string cmd = command;
  char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
  const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv, environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    pid_ = -1;
    fail("spawn '" + command + "': " + std::strerror(rc));
  }
  stdin_fd_ = in_pipe[1];
  stdout_fd_ = out_pipe[0];
  set_nonblocking(stdin_fd_);
  set_nonblocking(stdout_fd_);
}

Subprocess::~Subprocess() {
  close_stdin();
  if (stdout_fd_ >= 0) ::close(stdout_fd_);
  if (pid_ > 0 && !reaped_) {
    // Give a well-behaved child a moment to exit on EOF before killing it.
    for (int i = 0; i < 50; ++i) {
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        reaped_ = true;
        return;
      }
      ::usleep(2000);
    }
    ::kill(pid_, SIGKILL);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

void Subprocess::fail(const std::string& what) const { throw Error(failure_code_, "subprocess: " + what); }

void Subprocess::close_stdin() {
  if (stdin_fd_ >= 0) {
    ::close(stdin_fd_);
    stdin_fd_ = -1;
  }
}

void Subprocess::kill() {
  if (pid_ > 0 && !reaped_) ::kill(pid_, SIGKILL);
}

void Subprocess::exchange(std::span<const std::uint8_t> out, std::vector<std::uint8_t>& in,
                          const std::function<bool(const std::vector<std::uint8_t>&)>& done,
                          Clock::time_point deadline) {
  std::size_t written = 0;
  std::uint8_t chunk[65536];
  while (written < out.size() || !done(in)) {
    pollfd fds[2];
    nfds_t count = 0;
    const bool want_write = written < out.size();
    if (want_write) {
      if (stdin_fd_ < 0) fail("stdin already closed");
      fds[count++] = {stdin_fd_, POLLOUT, 0};
    }
    fds[count++] = {stdout_fd_, POLLIN, 0};

    const int timeout = millis_until(deadline);
    const int rc = ::poll(fds, count, timeout);
    if (rc < 0) {
      if (errno == EINTR) continue;
      fail(std::string("poll: ") + std::strerror(errno));
    }
    if (rc == 0) fail("timed out");

    if (want_write && (fds[0].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t n = ::write(stdin_fd_, out.data() + written, out.size() - written);
      if (n < 0 && errno != EAGAIN && errno != EINTR) fail(std::string("write: ") + std::strerror(errno));
      if (n > 0) written += static_cast<std::size_t>(n);
    }
    const pollfd& rfd = fds[count - 1];
    if (rfd.revents & (POLLIN | POLLHUP | POLLERR)) {
      const ssize_t n = ::read(stdout_fd_, chunk, sizeof(chunk));
      if (n < 0 && errno != EAGAIN && errno != EINTR) fail(std::string("read: ") + std::strerror(errno));
      if (n == 0) {
        if (written == out.size() && done(in)) break;
        fail("child closed its output early");
      }
      if (n > 0) in.insert(in.end(), chunk, chunk + n);
    }
  }
}

void Subprocess::read_until(std::vector<std::uint8_t>& in,
                            const std::function<bool(const std::vector<std::uint8_t>&)>& done,
                            Clock::time_point deadline) {
  exchange({}, in, done, deadline);
}

int Subprocess::communicate(std::span<const std::uint8_t> out, std::vector<std::uint8_t>& in,
                            Clock::time_point deadline) {
  bool eof = false;
  std::uint8_t chunk[65536];
  std::size_t written = 0;
  if (out.empty()) close_stdin();
  while (!eof) {
    pollfd fds[2];
    nfds_t count = 0;
    const bool want_write = stdin_fd_ >= 0 && written < out.size();
    if (want_write) fds[count++] = {stdin_fd_, POLLOUT, 0};
    fds[count++] = {stdout_fd_, POLLIN, 0};
    const int rc = ::poll(fds, count, millis_until(deadline));
    if (rc < 0) {
      if (errno == EINTR) continue;
      fail(std::string("poll: ") + std::strerror(errno));
    }
    if (rc == 0) {
      kill();
      fail("timed out");
    }
    if (want_write && (fds[0].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t n = ::write(stdin_fd_, out.data() + written, out.size() - written);
      if (n < 0 && errno == EPIPE) {
        close_stdin();  // child stopped reading; collect what it printed
      } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
        fail(std::string("write: ") + std::strerror(errno));
      } else if (n > 0) {
        written += static_cast<std::size_t>(n);
        if (written == out.size()) close_stdin();
      }
    }
    const pollfd& rfd = fds[count - 1];
    if (rfd.revents & (POLLIN | POLLHUP | POLLERR)) {
      const ssize_t n = ::read(stdout_fd_, chunk, sizeof(chunk));
      if (n < 0 && errno != EAGAIN && errno != EINTR) fail(std::string("read: ") + std::strerror(errno));
      if (n == 0) eof = true;
      if (n > 0) in.insert(in.end(), chunk, chunk + n);
    }
  }
  close_stdin();
  return wait();
}

int Subprocess::wait() {
  if (reaped_) return status_;
  if (pid_ <= 0) return -1;
  int status = 0;
  while (::waitpid(pid_, &status, 0) < 0) {
    if (errno != EINTR) fail(std::string("waitpid: ") + std::strerror(errno));
  }
  reaped_ = true;
  if (WIFEXITED(status)) status_ = WEXITSTATUS(status);
  else if (WIFSIGNALED(status)) status_ = 128 + WTERMSIG(status);
  else status_ = -1;
  return status_;
}

}  // namespace apa
