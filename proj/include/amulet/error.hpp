#pragma once

/// @file error.hpp
/// @brief Error type shared by every amulet module.

#include <stdexcept>
#include <string>

namespace amulet {

enum class ErrorKind {
  InvalidArgument,
  EmptySupport,
  InvalidScore,
  LengthMismatch,
  NonConvergence,
  DegenerateVocabulary,
  Transport,  // retriable
  Protocol,   // fatal wire-level mismatch
  Unparseable,
  Disconnected,
  NotFound,
  Conflict,
  Io,
  Cancelled,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  bool retriable() const noexcept { return kind_ == ErrorKind::Transport; }

 private:
  ErrorKind kind_;
};

}  // namespace amulet
