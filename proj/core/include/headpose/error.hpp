#pragma once

#include <stdexcept>
#include <string>

namespace headpose {

/// Error categories raised by the library. Every failure path throws
/// Error with one of these codes; the code is stable API, the message
/// is free-form diagnostics.
enum class Errc {
  invalid_geometry,
  invalid_parameter,
  invalid_input,
  out_of_range,
  invalid_index,
  invalid_rotation,
  degenerate_decomposition,
  invalid_batch,
  shape_mismatch,
  parse_failure,
  invalid_landmarks,
  load_failure,
  incompatible_checkpoint,
  diverged_training,
  empty_evaluation,
  io_failure,
  invalid_config,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace headpose
