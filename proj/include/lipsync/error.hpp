#pragma once

#include <stdexcept>
#include <string>

namespace lipsync {

enum class ErrorKind {
  kFormat,
  kUnsupported,
  kEmptyInput,
  kInsufficientFrames,
  kShape,
  kTopology,
  kState,
  kData,
  kIo,
  kUsage,
};

const char* to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it onto an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace lipsync
