/// @file subprocess.h
/// @brief Child process with piped stdin/stdout, driven by poll() with deadlines.

#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "apa/error.h"

namespace apa {

class Subprocess {
 public:
  using Clock = std::chrono::steady_clock;

  /// @brief Starts `/bin/sh -c command`. stderr is inherited.
  /// All failures are reported as Error(@p failure_code).
  Subprocess(const std::string& command, ErrorCode failure_code);
  ~Subprocess();

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  /// @brief Writes @p out while appending whatever the child prints to @p in.
  /// Returns once all of @p out is written and @p done(in) is true.
  /// @throws on timeout, or when stdout closes before @p done is satisfied.
  void exchange(std::span<const std::uint8_t> out, std::vector<std::uint8_t>& in,
                const std::function<bool(const std::vector<std::uint8_t>&)>& done, Clock::time_point deadline);

  /// @brief Reads until @p done(in) holds.
  void read_until(std::vector<std::uint8_t>& in, const std::function<bool(const std::vector<std::uint8_t>&)>& done,
                  Clock::time_point deadline);

  /// @brief Writes all of @p out, closes stdin, reads stdout to EOF, and reaps the child.
  /// @return the child's exit status (128 + signal for signalled children).
  int communicate(std::span<const std::uint8_t> out, std::vector<std::uint8_t>& in, Clock::time_point deadline);

  void close_stdin();

  /// @brief Waits for exit and returns the status as in communicate().
  int wait();

  void kill();
  pid_t pid() const { return pid_; }

 private:
  [[noreturn]] void fail(const std::string& what) const;

  pid_t pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  bool reaped_ = false;
  int status_ = 0;
  ErrorCode failure_code_;
};

}  // namespace apa
