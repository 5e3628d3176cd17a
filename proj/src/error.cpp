#include "longvid/error.hpp"

namespace longvid {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::invalid_interval: return "invalid interval";
    case Errc::parse_error: return "parse error";
    case Errc::encoding_error: return "encoding error";
    case Errc::provider_error: return "provider error";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::zero_content: return "zero content";
    case Errc::empty_index: return "empty index";
    case Errc::index_missing: return "index missing";
    case Errc::missing_track: return "missing track";
    case Errc::backend_error: return "backend error";
    case Errc::logprobs_unavailable: return "logprobs unavailable";
    case Errc::frame_budget_exceeded: return "frame budget exceeded";
    case Errc::malformed_tool_call: return "malformed tool call";
    case Errc::empty_span: return "empty span";
    case Errc::unknown_task: return "unknown task";
    case Errc::unparseable_answer: return "unparseable answer";
    case Errc::config_error: return "config error";
    case Errc::io_error: return "io error";
  }
  return "error";
}

}  // namespace longvid
