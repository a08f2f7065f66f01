#include "ebgec/error.hpp"

namespace ebgec {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::invalid_config: return "invalid-config";
    case ErrorCode::invalid_state: return "invalid-state";
    case ErrorCode::training_diverged: return "training-diverged";
    case ErrorCode::degenerate_config: return "degenerate-config";
    case ErrorCode::corpus_resolution: return "corpus-resolution";
    case ErrorCode::no_data: return "no-data";
    case ErrorCode::magic_mismatch: return "magic-mismatch";
    case ErrorCode::dim_mismatch: return "dim-mismatch";
    case ErrorCode::truncated_file: return "truncated-file";
    case ErrorCode::io_error: return "io-error";
  }
  return "unknown";
}

}  // namespace ebgec
