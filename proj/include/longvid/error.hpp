#pragma once

#include <stdexcept>
#include <string>

namespace longvid {

// One code per failure class the runtime distinguishes. Tool-facing codes
// (malformed_tool_call, frame_budget_exceeded, ...) are surfaced back to the
// model as observations; backend/provider codes abort the current sample.
enum class Errc {
  invalid_argument,
  invalid_interval,
  parse_error,
  encoding_error,
  provider_error,
  dimension_mismatch,
  zero_content,
  empty_index,
  index_missing,
  missing_track,
  backend_error,
  logprobs_unavailable,
  frame_budget_exceeded,
  malformed_tool_call,
  empty_span,
  unknown_task,
  unparseable_answer,
  config_error,
  io_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace longvid
