#include "longvid/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "longvid/error.hpp"
#include "longvid/log.hpp"
#include "longvid/util.hpp"

namespace longvid {

using nlohmann::json;

const char* role_name(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool: return "tool";
  }
  return "user";
}

std::optional<Role> role_from_name(std::string_view name) {
  if (name == "system") return Role::system;
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  if (name == "tool") return Role::tool;
  return std::nullopt;
}

std::string video_clip_placeholder(const VideoClipPart& part) {
  return "<video: " + format_seconds(part.interval.start_s) + "-" +
         format_seconds(part.interval.end_s) + ", " +
         std::to_string(part.frame_count) + " frames>";
}

MessagePart MessagePart::make_text(std::string t) {
  MessagePart p;
  p.kind = Kind::text;
  p.text = std::move(t);
  return p;
}

MessagePart MessagePart::make_video(VideoClipPart v) {
  MessagePart p;
  p.kind = Kind::video;
  p.video = std::move(v);
  return p;
}

ChatMessage ChatMessage::from_text(Role role, std::string text) {
  ChatMessage m;
  m.role = role;
  m.parts.push_back(MessagePart::make_text(std::move(text)));
  return m;
}

void ChatMessage::append_text(std::string text) {
  parts.push_back(MessagePart::make_text(std::move(text)));
}

void ChatMessage::append_video(VideoClipPart clip) {
  parts.push_back(MessagePart::make_video(std::move(clip)));
}

std::string ChatMessage::rendered_text() const {
  std::string out;
  for (const auto& part : parts) {
    if (!out.empty()) out += "\n";
    out += (part.kind == MessagePart::Kind::text) ? part.text
                                                  : video_clip_placeholder(part.video);
  }
  return out;
}

std::vector<ScriptEntry> parse_script(const json& j, const std::string& source) {
  if (!j.is_array()) raise(Errc::config_error, source + ": script must be an array");
  std::vector<ScriptEntry> entries;
  entries.reserve(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    std::string where = source + " entry " + std::to_string(i);
    if (!e.is_object() || !e.contains("text") || !e["text"].is_string()) {
      raise(Errc::config_error, where + ": needs a string \"text\"");
    }
    ScriptEntry entry;
    entry.text = e["text"].get<std::string>();
    entry.match = e.value("match", std::string());
    if (e.contains("turn")) entry.turn = e["turn"].get<int>();
    entry.reusable = e.value("reusable", false);
    if (e.contains("logprobs") && !e["logprobs"].is_null()) {
      if (!e["logprobs"].is_array()) {
        raise(Errc::config_error, where + ": logprobs must be an array");
      }
      std::vector<double> lps;
      for (const auto& x : e["logprobs"]) {
        double v = x.get<double>();
        if (v > 0.0) raise(Errc::config_error, where + ": logprob above zero");
        lps.push_back(v);
      }
      entry.logprobs = std::move(lps);
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

json script_to_json(const std::vector<ScriptEntry>& entries) {
  json arr = json::array();
  for (const auto& e : entries) {
    json item{{"text", e.text}};
    if (!e.match.empty()) item["match"] = e.match;
    if (e.turn) item["turn"] = *e.turn;
    if (e.reusable) item["reusable"] = true;
    if (e.logprobs) item["logprobs"] = *e.logprobs;
    arr.push_back(std::move(item));
  }
  return arr;
}

ScriptedChatBackend::ScriptedChatBackend(std::vector<ScriptEntry> entries,
                                         std::string model_name)
    : entries_(std::move(entries)),
      used_(entries_.size(), false),
      model_name_(std::move(model_name)) {}

std::shared_ptr<ScriptedChatBackend> ScriptedChatBackend::from_file(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) raise(Errc::config_error, path + ": invalid JSON");
  return std::make_shared<ScriptedChatBackend>(parse_script(j, path));
}

ScriptPosition script_position(const std::vector<ChatMessage>& messages) {
  ScriptPosition pos;
  for (const auto& m : messages) {
    if (m.role == Role::user) pos.last_user = m.rendered_text();
    if (m.role == Role::assistant) ++pos.assistant_count;
  }
  return pos;
}

int select_script_entry(const std::vector<ScriptEntry>& entries,
                        const std::vector<bool>& used, const ScriptPosition& pos,
                        const std::vector<size_t>* candidates) {
  const size_t n = candidates ? candidates->size() : entries.size();
  for (size_t c = 0; c < n; ++c) {
    const size_t i = candidates ? (*candidates)[c] : c;
    const ScriptEntry& e = entries[i];
    if (used[i] && !e.reusable) continue;
    if (e.turn && *e.turn != pos.assistant_count) continue;
    if (!e.match.empty() && !contains(pos.last_user, e.match)) continue;
    return static_cast<int>(i);
  }
  return -1;
}

void raise_script_miss(const ScriptPosition& pos) {
  raise(Errc::backend_error,
        "scripted backend has no entry for turn " + std::to_string(pos.assistant_count) +
            ", last user message \"" + pos.last_user.substr(0, 120) + "\"");
}

GenerationOutput ScriptedChatBackend::generate(const std::vector<ChatMessage>& messages,
                                               const GenerationParams&) {
  std::lock_guard<std::mutex> lock(mu_);
  ScriptPosition pos = script_position(messages);
  int i = select_script_entry(entries_, used_, pos, nullptr);
  if (i < 0) raise_script_miss(pos);
  used_[i] = true;
  ++calls_;
  GenerationOutput out;
  out.text = entries_[i].text;
  out.token_logprobs = entries_[i].logprobs;
  return out;
}

int ScriptedChatBackend::calls() const {
  std::lock_guard<std::mutex> lock(mu_);
  return calls_;
}

void ScriptedChatBackend::reset() {
  std::lock_guard<std::mutex> lock(mu_);
  std::fill(used_.begin(), used_.end(), false);
  calls_ = 0;
}

HttpChatBackend::HttpChatBackend(std::unique_ptr<HttpTransport> transport,
                                 HttpBackendConfig config)
    : transport_(std::move(transport)), config_(std::move(config)) {}

json HttpChatBackend::build_request(const std::vector<ChatMessage>& messages,
                                    const GenerationParams& params) const {
  json req;
  req["model"] = config_.model_name;
  req["temperature"] = params.temperature;
  req["max_tokens"] = params.max_tokens;
  if (params.want_logprobs) req["logprobs"] = true;
  if (params.seed) req["seed"] = *params.seed;
  json msgs = json::array();
  for (const auto& m : messages) {
    json jm;
    jm["role"] = role_name(m.role);
    bool pure_text = std::all_of(m.parts.begin(), m.parts.end(), [](const MessagePart& p) {
      return p.kind == MessagePart::Kind::text;
    });
    if (pure_text) {
      jm["content"] = m.rendered_text();
    } else {
      json parts = json::array();
      for (const auto& p : m.parts) {
        if (p.kind == MessagePart::Kind::text) {
          parts.push_back({{"type", "text"}, {"text", p.text}});
        } else {
          // One attachment per frame; midpoints of equal slices of the clip.
          const auto& clip = p.video;
          double len = clip.interval.length();
          int n = std::max(clip.frame_count, 1);
          for (int i = 0; i < n; ++i) {
            double ts = clip.interval.start_s +
                        (static_cast<double>(i) + 0.5) * len / static_cast<double>(n);
            std::string url = "video://" + clip.video_id + "#t=" + format_seconds(ts);
            parts.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
          }
        }
      }
      jm["content"] = std::move(parts);
    }
    msgs.push_back(std::move(jm));
  }
  req["messages"] = std::move(msgs);
  return req;
}

GenerationOutput HttpChatBackend::generate(const std::vector<ChatMessage>& messages,
                                           const GenerationParams& params) {
  {
    std::unique_lock<std::mutex> lock(inflight_mu_);
    inflight_cv_.wait(lock, [&] { return inflight_ < config_.max_inflight; });
    ++inflight_;
  }
  struct Release {
    HttpChatBackend* self;
    ~Release() {
      {
        std::lock_guard<std::mutex> lock(self->inflight_mu_);
        --self->inflight_;
      }
      self->inflight_cv_.notify_one();
    }
  } release{this};

  const std::string body = build_request(messages, params).dump();
  Rng jitter(config_.jitter_seed ^ fnv1a64(body));
  std::string last_error;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    HttpResponse resp;
    bool transport_failed = false;
    try {
      resp = transport_->post_json("/v1/chat/completions", body);
    } catch (const Error& e) {
      transport_failed = true;
      last_error = e.what();
    }
    if (!transport_failed) {
      if (resp.status == 200) {
        json j = json::parse(resp.body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
          raise(Errc::backend_error, "malformed completion response");
        }
        const json& choice = j["choices"][0];
        GenerationOutput out;
        const json& content = choice.at("message").at("content");
        if (content.is_string()) {
          out.text = content.get<std::string>();
        } else if (content.is_array()) {
          for (const auto& part : content) {
            if (part.value("type", "") == "text") out.text += part.value("text", "");
          }
        }
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content")) {
          std::vector<double> lps;
          std::vector<std::string> toks;
          for (const auto& t : choice["logprobs"]["content"]) {
            lps.push_back(std::min(0.0, t.value("logprob", 0.0)));
            toks.push_back(t.value("token", ""));
          }
          out.token_logprobs = std::move(lps);
          out.tokens = std::move(toks);
        } else if (params.want_logprobs && config_.strict_logprobs) {
          raise(Errc::logprobs_unavailable,
                "backend " + config_.model_name + " returned no logprobs");
        }
        return out;
      }
      if (resp.status != 429 && resp.status < 500) {
        raise(Errc::backend_error, "http status " + std::to_string(resp.status) +
                                       " from " + config_.model_name);
      }
      last_error = "http status " + std::to_string(resp.status);
    }
    if (attempt < config_.retry.max_attempts) {
      double backoff = static_cast<double>(config_.retry.base_delay_ms) *
                       std::pow(2.0, attempt - 1) * jitter.unit();
      log_event(LogLevel::warn, "retrying chat completion",
                {{"attempt", std::to_string(attempt)}, {"error", last_error}});
      if (backoff > 0.0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(static_cast<int64_t>(backoff)));
      }
    }
  }
  raise(Errc::backend_error, "giving up after " +
                                 std::to_string(config_.retry.max_attempts) +
                                 " attempts: " + last_error);
}

EndpointConfig endpoint_from_json(const json& j, const std::string& source) {
  if (!j.is_object()) raise(Errc::config_error, source + ": endpoint must be an object");
  EndpointConfig cfg;
  cfg.kind = j.value("kind", "scripted");
  cfg.script_path = j.value("script_path", std::string());
  cfg.base_url = j.value("base_url", std::string());
  cfg.api_key = j.value("api_key", std::string());
  cfg.model_name = j.value("model_name", std::string("default"));
  cfg.timeout_s = j.value("timeout_s", 30.0);
  cfg.max_inflight = j.value("max_inflight", 4);
  if (j.contains("retry")) {
    cfg.retry.max_attempts = j["retry"].value("max_attempts", 3);
    cfg.retry.base_delay_ms = j["retry"].value("base_delay_ms", 200);
  }
  if (cfg.kind == "scripted" && cfg.script_path.empty()) {
    raise(Errc::config_error, source + ": scripted endpoint needs script_path");
  }
  if (cfg.kind == "http-chat" && cfg.base_url.empty()) {
    raise(Errc::config_error, source + ": http-chat endpoint needs base_url");
  }
  if (cfg.kind != "scripted" && cfg.kind != "http-chat") {
    raise(Errc::config_error, source + ": unknown endpoint kind \"" + cfg.kind + "\"");
  }
  return cfg;
}

std::shared_ptr<ChatBackend> make_backend(const EndpointConfig& config) {
  if (config.kind == "scripted") {
    return ScriptedChatBackend::from_file(config.script_path);
  }
  HttpBackendConfig http;
  http.model_name = config.model_name;
  http.retry = config.retry;
  http.max_inflight = config.max_inflight;
  return std::make_shared<HttpChatBackend>(
      make_httplib_transport(config.base_url, config.api_key, config.timeout_s), http);
}

double answer_confidence(const std::vector<double>& token_logprobs, const TokenSpan& span) {
  if (span.empty() || span.end > token_logprobs.size()) {
    raise(Errc::empty_span, "span [" + std::to_string(span.begin) + ", " +
                                std::to_string(span.end) + ") over " +
                                std::to_string(token_logprobs.size()) + " tokens");
  }
  double sum = 0.0;
  for (size_t i = span.begin; i < span.end; ++i) sum += token_logprobs[i];
  return std::exp(sum / static_cast<double>(span.size()));
}

std::optional<TokenSpan> find_answer_span(const GenerationOutput& out) {
  if (!out.tokens || !out.token_logprobs ||
      out.tokens->size() != out.token_logprobs->size()) {
    return std::nullopt;
  }
  // Map char offsets of the letter inside <answer>...</answer> back to token
  // indices of the concatenated token stream.
  std::string joined;
  std::vector<size_t> tok_begin(out.tokens->size());
  for (size_t i = 0; i < out.tokens->size(); ++i) {
    tok_begin[i] = joined.size();
    joined += (*out.tokens)[i];
  }
  size_t open = joined.find("<answer>");
  if (open == std::string::npos) return std::nullopt;
  size_t close = joined.find("</answer>", open);
  if (close == std::string::npos) return std::nullopt;
  size_t lo = open + std::string("<answer>").size();
  while (lo < close && std::isspace(static_cast<unsigned char>(joined[lo]))) ++lo;
  size_t hi = close;
  while (hi > lo && std::isspace(static_cast<unsigned char>(joined[hi - 1]))) --hi;
  if (lo >= hi) return std::nullopt;
  TokenSpan span;
  bool begun = false;
  for (size_t i = 0; i < out.tokens->size(); ++i) {
    size_t b = tok_begin[i];
    size_t e = b + (*out.tokens)[i].size();
    if (e <= lo || b >= hi) continue;
    if (!begun) {
      span.begin = i;
      begun = true;
    }
    span.end = i + 1;
  }
  if (!begun) return std::nullopt;
  return span;
}

double output_confidence(const GenerationOutput& out, ConfidenceSpanMode mode) {
  if (!out.token_logprobs || out.token_logprobs->empty()) return 0.0;
  TokenSpan span{0, out.token_logprobs->size()};
  if (mode == ConfidenceSpanMode::answer_tokens) {
    if (auto found = find_answer_span(out)) span = *found;
  }
  return answer_confidence(*out.token_logprobs, span);
}

namespace {

std::optional<char> match_option(std::string_view token, const std::vector<char>& options) {
  // Peel wrapping punctuation: "(B)", "B.", "**B**".
  size_t b = 0;
  size_t e = token.size();
  auto is_wrap = [](char c) {
    return c == '(' || c == ')' || c == '[' || c == ']' || c == '{' || c == '}' ||
           c == '.' || c == ',' || c == ':' || c == ';' || c == '"' || c == '\'' ||
           c == '*' || c == '!' || c == '?';
  };
  while (b < e && is_wrap(token[b])) ++b;
  while (e > b && is_wrap(token[e - 1])) --e;
  if (e - b != 1) return std::nullopt;
  char c = static_cast<char>(std::toupper(static_cast<unsigned char>(token[b])));
  for (char opt : options) {
    if (std::toupper(static_cast<unsigned char>(opt)) == c) return opt;
  }
  return std::nullopt;
}

}  // namespace

std::optional<char> extract_answer(const std::string& text, const std::vector<char>& options) {
  size_t open = text.find("<answer>");
  if (open != std::string::npos) {
    size_t close = text.find("</answer>", open);
    if (close != std::string::npos) {
      std::string inner = trim(text.substr(open + 8, close - open - 8));
      if (auto m = match_option(inner, options)) return m;
    }
  }
  size_t best = text.find("Best option:");
  if (best != std::string::npos) {
    std::string rest = text.substr(best + std::string("Best option:").size());
    // First whitespace-delimited token after the colon.
    std::istringstream ss(rest);
    std::string token;
    if (ss >> token) {
      if (auto m = match_option(token, options)) return m;
    }
  }
  std::istringstream ss(text);
  std::string token;
  while (ss >> token) {
    if (auto m = match_option(token, options)) return m;
  }
  return std::nullopt;
}

}  // namespace longvid
