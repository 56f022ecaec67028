#pragma once

#include <stdexcept>
#include <string>

namespace avgflow {

enum class ErrorKind {
  kInvalidArgument,
  kConfiguration,
  kNotAveragedControllable,
  kNearTerminalSingularity,
  kDegeneratePosterior,
  kTrainingDivergence,
};

/// Base class for every error raised by the library. The kind drives CLI
/// exit codes and the machine-readable error record.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error(ErrorKind::kInvalidArgument, message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorKind::kConfiguration, message) {}
};

class NotAveragedControllable : public Error {
 public:
  NotAveragedControllable(const std::string& message, double smallest_eigenvalue,
                          double condition_number)
      : Error(ErrorKind::kNotAveragedControllable, message),
        smallest_eigenvalue_(smallest_eigenvalue),
        condition_number_(condition_number) {}
  double smallest_eigenvalue() const noexcept { return smallest_eigenvalue_; }
  double condition_number() const noexcept { return condition_number_; }

 private:
  double smallest_eigenvalue_;
  double condition_number_;
};

class NearTerminalSingularity : public Error {
 public:
  NearTerminalSingularity(const std::string& message, int index)
      : Error(ErrorKind::kNearTerminalSingularity, message), index_(index) {}
  int index() const noexcept { return index_; }

 private:
  int index_;
};

class DegeneratePosterior : public Error {
 public:
  explicit DegeneratePosterior(const std::string& message)
      : Error(ErrorKind::kDegeneratePosterior, message) {}
};

class TrainingDivergence : public Error {
 public:
  TrainingDivergence(const std::string& message, long batch_index)
      : Error(ErrorKind::kTrainingDivergence, message), batch_index_(batch_index) {}
  long batch_index() const noexcept { return batch_index_; }

 private:
  long batch_index_;
};

const char* to_string(ErrorKind kind);

/// Rethrows `e` as the same concrete type with `context` prepended to the
/// message.
[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context);

}  // namespace avgflow
