#pragma once

#include <stdexcept>
#include <string>

namespace ebgec {

enum class ErrorCode {
  invalid_input,
  invalid_config,
  invalid_state,
  training_diverged,
  degenerate_config,
  corpus_resolution,
  no_data,
  magic_mismatch,
  dim_mismatch,
  truncated_file,
  io_error,
};

const char* to_string(ErrorCode code);

// All library failures surface as this exception; the code is what callers
// branch on (the CLI maps it to an exit status, the service to an HTTP status).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace ebgec
