#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "longvid/media.hpp"

namespace longvid {

enum class Role { system, user, assistant, tool };

const char* role_name(Role role);
std::optional<Role> role_from_name(std::string_view name);

// A typed stand-in for inline video tokens: which video, which interval, and
// how many frames realize it. Backends decide how to materialize it (frame
// attachments over http, a placeholder token for scripted runs).
struct VideoClipPart {
  std::string video_id;
  TimeInterval interval;
  int frame_count = 0;
};

std::string video_clip_placeholder(const VideoClipPart& part);

struct MessagePart {
  enum class Kind { text, video };

  Kind kind = Kind::text;
  std::string text;
  VideoClipPart video;

  static MessagePart make_text(std::string t);
  static MessagePart make_video(VideoClipPart v);
};

struct ChatMessage {
  Role role = Role::user;
  std::vector<MessagePart> parts;

  static ChatMessage from_text(Role role, std::string text);
  void append_text(std::string text);
  void append_video(VideoClipPart clip);
  // Text parts verbatim, video parts as placeholders, joined by newlines.
  std::string rendered_text() const;
};

struct GenerationParams {
  double temperature = 0.0;
  int max_tokens = 1024;
  bool want_logprobs = false;
  std::optional<uint64_t> seed;
};

struct GenerationOutput {
  std::string text;
  std::optional<std::vector<double>> token_logprobs;  // each <= 0
  std::optional<std::vector<std::string>> tokens;     // aligned when reported
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string model_name() const = 0;
  virtual GenerationOutput generate(const std::vector<ChatMessage>& messages,
                                    const GenerationParams& params) = 0;
};

// One playbook line of a scripted backend. Selection: first entry, in file
// order, that is still unused (unless reusable), whose match substring occurs
// in the last user message, and whose turn (if set) equals the number of
// assistant messages so far. No eligible entry is a hard error, so a drifting
// conversation fails tests instead of improvising.
struct ScriptEntry {
  std::string match;
  std::optional<int> turn;
  bool reusable = false;
  std::string text;
  std::optional<std::vector<double>> logprobs;
};

std::vector<ScriptEntry> parse_script(const nlohmann::json& j, const std::string& source);
nlohmann::json script_to_json(const std::vector<ScriptEntry>& entries);

// Conversation state the selection rule cares about.
struct ScriptPosition {
  std::string last_user;
  int assistant_count = 0;
};

ScriptPosition script_position(const std::vector<ChatMessage>& messages);
// First eligible entry index, or -1. candidates restricts the scan to a
// subset (still in file order), for backends that pre-route entries.
int select_script_entry(const std::vector<ScriptEntry>& entries,
                        const std::vector<bool>& used, const ScriptPosition& pos,
                        const std::vector<size_t>* candidates = nullptr);
[[noreturn]] void raise_script_miss(const ScriptPosition& pos);

class ScriptedChatBackend : public ChatBackend {
 public:
  explicit ScriptedChatBackend(std::vector<ScriptEntry> entries,
                               std::string model_name = "scripted");
  static std::shared_ptr<ScriptedChatBackend> from_file(const std::string& path);

  std::string model_name() const override { return model_name_; }
  GenerationOutput generate(const std::vector<ChatMessage>& messages,
                            const GenerationParams& params) override;

  int calls() const;
  void reset();

 private:
  mutable std::mutex mu_;
  std::vector<ScriptEntry> entries_;
  std::vector<bool> used_;
  std::string model_name_;
  int calls_ = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  int base_delay_ms = 200;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  // Throws Errc::backend_error on connection-level failure.
  virtual HttpResponse post_json(const std::string& path, const std::string& body) = 0;
};

std::unique_ptr<HttpTransport> make_httplib_transport(const std::string& base_url,
                                                      const std::string& api_key,
                                                      double timeout_s);

struct HttpBackendConfig {
  std::string model_name = "default";
  RetryPolicy retry;
  int max_inflight = 4;
  bool strict_logprobs = false;  // throw logprobs_unavailable instead of degrading
  uint64_t jitter_seed = 0;
};

// Speaks the de-facto chat-completions protocol. Retries transport errors,
// 429 and 5xx with exponential backoff and full jitter; other statuses fail
// immediately.
class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(std::unique_ptr<HttpTransport> transport, HttpBackendConfig config);

  std::string model_name() const override { return config_.model_name; }
  GenerationOutput generate(const std::vector<ChatMessage>& messages,
                            const GenerationParams& params) override;

  nlohmann::json build_request(const std::vector<ChatMessage>& messages,
                               const GenerationParams& params) const;

 private:
  std::unique_ptr<HttpTransport> transport_;
  HttpBackendConfig config_;
  std::mutex inflight_mu_;
  std::condition_variable inflight_cv_;
  int inflight_ = 0;
};

struct EndpointConfig {
  std::string kind = "scripted";  // "scripted" | "http-chat"
  std::string script_path;
  std::string base_url;
  std::string api_key;
  std::string model_name = "default";
  double timeout_s = 30.0;
  RetryPolicy retry;
  int max_inflight = 4;
};

EndpointConfig endpoint_from_json(const nlohmann::json& j, const std::string& source);
std::shared_ptr<ChatBackend> make_backend(const EndpointConfig& config);

struct TokenSpan {
  size_t begin = 0;
  size_t end = 0;

  size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
};

// Geometric-mean probability over the span: exp(mean of span logprobs).
double answer_confidence(const std::vector<double>& token_logprobs, const TokenSpan& span);

// Token indices covering the option letter inside <answer>...</answer>, when
// the backend reported aligned tokens. nullopt when that span cannot be
// located; callers then fall back to the full sequence.
std::optional<TokenSpan> find_answer_span(const GenerationOutput& out);

enum class ConfidenceSpanMode { answer_tokens, all_tokens };

// 0.0 when the output carries no logprobs (the caller treats that as
// "escalate"); otherwise the confidence over the selected span.
double output_confidence(const GenerationOutput& out, ConfidenceSpanMode mode);

// Priority: <answer>X</answer> block, then "Best option: X", then the first
// standalone option-letter token. nullopt when nothing matches.
std::optional<char> extract_answer(const std::string& text, const std::vector<char>& options);

}  // namespace longvid
