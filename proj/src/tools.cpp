#include "longvid/tools.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "longvid/error.hpp"
#include "longvid/util.hpp"

namespace longvid {

using nlohmann::json;

namespace {

ParamSpec str_param(const char* name) { return {name, ParamSpec::Type::string, true}; }
ParamSpec num_param(const char* name) { return {name, ParamSpec::Type::number, true}; }
ParamSpec int_param(const char* name) { return {name, ParamSpec::Type::integer, true}; }

}  // namespace

ToolRegistry ToolRegistry::standard() {
  ToolRegistry reg;
  reg.specs_ = {
      {tool_names::clip_retrieval,
       "Retrieve the top-k 10-second clips whose content best matches a text query.",
       {str_param("video_path"), str_param("query"), int_param("topk")}},
      {tool_names::subtitle_retrieval,
       "Retrieve the top-k subtitle lines best matching a text query, with timestamps.",
       {str_param("video_path"), str_param("query"), int_param("topk")}},
      {tool_names::subtitle_summary,
       "Summarize the full subtitle transcript with respect to a query.",
       {str_param("video_path"), str_param("query")}},
      {tool_names::frame_zoom,
       "Sample frames densely from the given time interval for close inspection.",
       {str_param("video_path"), num_param("start"), num_param("end")}},
      {tool_names::subtitle_zoom,
       "Return the subtitle lines spoken inside the given time interval.",
       {str_param("video_path"), num_param("start"), num_param("end")}},
      {tool_names::caption_zoom,
       "Describe in text what happens inside the given time interval.",
       {str_param("video_path"), num_param("start"), num_param("end")}},
  };
  return reg;
}

ToolRegistry ToolRegistry::without(const std::vector<std::string>& names) const {
  ToolRegistry reg;
  for (const auto& spec : specs_) {
    if (std::find(names.begin(), names.end(), spec.name) == names.end()) {
      reg.specs_.push_back(spec);
    }
  }
  return reg;
}

const ToolSpec* ToolRegistry::find(const std::string& name) const {
  for (const auto& spec : specs_) {
    if (spec.name == name) return &spec;
  }
  return nullptr;
}

TimeInterval ToolCall::interval_args() const {
  return {arguments.value("start", 0.0), arguments.value("end", 0.0)};
}

std::string serialize_tool_call(const ToolCall& call) {
  json j{{"name", call.name}, {"arguments", call.arguments}};
  return "<tool_call>" + j.dump() + "</tool_call>";
}

void validate_tool_call(const ToolRegistry& registry, const ToolCall& call) {
  const ToolSpec* spec = registry.find(call.name);
  if (!spec) raise(Errc::malformed_tool_call, "unknown tool \"" + call.name + "\"");
  if (!call.arguments.is_object()) {
    raise(Errc::malformed_tool_call, call.name + ": arguments must be an object");
  }
  for (const auto& param : spec->params) {
    if (!call.arguments.contains(param.name)) {
      if (param.required) {
        raise(Errc::malformed_tool_call,
              call.name + ": missing required argument \"" + param.name + "\"");
      }
      continue;
    }
    const json& v = call.arguments.at(param.name);
    switch (param.type) {
      case ParamSpec::Type::string:
        if (!v.is_string() || v.get<std::string>().empty()) {
          raise(Errc::malformed_tool_call,
                call.name + ": argument \"" + param.name + "\" must be a nonempty string");
        }
        break;
      case ParamSpec::Type::number:
        if (!v.is_number()) {
          raise(Errc::malformed_tool_call,
                call.name + ": argument \"" + param.name + "\" must be a number");
        }
        break;
      case ParamSpec::Type::integer:
        if (!v.is_number_integer() || v.get<int64_t>() < 1) {
          raise(Errc::malformed_tool_call,
                call.name + ": argument \"" + param.name + "\" must be a positive integer");
        }
        break;
    }
  }
  for (auto it = call.arguments.begin(); it != call.arguments.end(); ++it) {
    bool known = std::any_of(spec->params.begin(), spec->params.end(),
                             [&](const ParamSpec& p) { return p.name == it.key(); });
    if (!known) {
      raise(Errc::malformed_tool_call,
            call.name + ": unexpected argument \"" + it.key() + "\"");
    }
  }
}

namespace {

ParsedAction malformed(std::string why) {
  ParsedAction a;
  a.kind = ParsedAction::Kind::malformed;
  a.error = std::move(why);
  return a;
}

}  // namespace

ParsedAction parse_model_action(const std::string& text, const ToolRegistry& registry) {
  const std::string call_open = "<tool_call>";
  const std::string call_close = "</tool_call>";
  const std::string ans_open = "<answer>";
  const std::string ans_close = "</answer>";

  size_t call_pos = text.find(call_open);
  size_t ans_pos = text.find(ans_open);
  if (call_pos == std::string::npos && ans_pos == std::string::npos) {
    return {};  // Kind::none
  }
  if (ans_pos != std::string::npos &&
      (call_pos == std::string::npos || ans_pos < call_pos)) {
    size_t close = text.find(ans_close, ans_pos);
    if (close == std::string::npos) return malformed("unterminated <answer> block");
    std::string inner = trim(text.substr(ans_pos + ans_open.size(),
                                         close - ans_pos - ans_open.size()));
    if (inner.size() != 1 || !std::isalpha(static_cast<unsigned char>(inner[0]))) {
      return malformed("<answer> must contain a single option letter, got \"" + inner + "\"");
    }
    ParsedAction a;
    a.kind = ParsedAction::Kind::answer;
    a.answer = static_cast<char>(std::toupper(static_cast<unsigned char>(inner[0])));
    return a;
  }

  size_t close = text.find(call_close, call_pos);
  if (close == std::string::npos) return malformed("unterminated <tool_call> block");
  std::string inner = trim(text.substr(call_pos + call_open.size(),
                                       close - call_pos - call_open.size()));
  json j = json::parse(inner, nullptr, false);
  if (j.is_discarded()) return malformed("tool call is not valid JSON");
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
    return malformed("tool call needs a string \"name\"");
  }
  ToolCall call;
  call.name = j["name"].get<std::string>();
  call.arguments = j.value("arguments", json::object());
  try {
    validate_tool_call(registry, call);
  } catch (const Error& e) {
    return malformed(e.what());
  }
  ParsedAction a;
  a.kind = ParsedAction::Kind::tool_call;
  a.call = std::move(call);
  return a;
}

void FrameBudget::debit(int count, const std::string& what) {
  if (count > remaining()) {
    raise(Errc::frame_budget_exceeded,
          what + " needs " + std::to_string(count) + " frames but only " +
              std::to_string(remaining()) + " of " + std::to_string(total_) + " remain");
  }
  used_ += count;
}

GatewayCaptioner::GatewayCaptioner(std::shared_ptr<ChatBackend> backend, int frame_count)
    : backend_(std::move(backend)), frame_count_(frame_count) {}

std::string GatewayCaptioner::caption(const std::string& video_id,
                                      const TimeInterval& interval) {
  ChatMessage user;
  user.role = Role::user;
  user.append_video({video_id, interval, frame_count_});
  user.append_text("Describe what happens in this video segment.");
  GenerationParams params;
  params.max_tokens = 512;
  return backend_->generate({user}, params).text;
}

GatewaySummarizer::GatewaySummarizer(std::shared_ptr<ChatBackend> backend)
    : backend_(std::move(backend)) {}

std::string GatewaySummarizer::summarize(const std::string& transcript,
                                         const std::string& query) {
  ChatMessage user = ChatMessage::from_text(
      Role::user, "Summarize this transcript with respect to the question \"" + query +
                      "\":\n" + transcript);
  GenerationParams params;
  params.max_tokens = 512;
  return backend_->generate({user}, params).text;
}

std::string summarize_chunked(Summarizer& summarizer, const std::string& transcript,
                              const std::string& query, int token_budget,
                              int* chunk_count_out) {
  if (token_budget < 1) raise(Errc::invalid_argument, "token budget must be positive");
  std::vector<std::string> words;
  {
    std::istringstream ss(transcript);
    std::string w;
    while (ss >> w) words.push_back(w);
  }
  int chunks = words.empty()
                   ? 1
                   : static_cast<int>((words.size() + static_cast<size_t>(token_budget) - 1) /
                                      static_cast<size_t>(token_budget));
  if (chunk_count_out) *chunk_count_out = chunks;
  if (chunks <= 1) return summarizer.summarize(transcript, query);

  std::vector<std::string> partials;
  for (int c = 0; c < chunks; ++c) {
    size_t lo = static_cast<size_t>(c) * static_cast<size_t>(token_budget);
    size_t hi = std::min(words.size(), lo + static_cast<size_t>(token_budget));
    std::string chunk;
    for (size_t i = lo; i < hi; ++i) {
      if (!chunk.empty()) chunk += " ";
      chunk += words[i];
    }
    partials.push_back(summarizer.summarize(chunk, query));
  }
  std::string merged;
  for (const auto& p : partials) {
    if (!merged.empty()) merged += "\n";
    merged += p;
  }
  return summarizer.summarize(merged, query);
}

std::string render_extract_command(const std::string& command_template,
                                   const VideoMeta& meta, const FrameRef& frame,
                                   const std::string& output_path) {
  std::string out = command_template;
  auto replace_all = [&out](const std::string& key, const std::string& value) {
    size_t pos = 0;
    while ((pos = out.find(key, pos)) != std::string::npos) {
      out.replace(pos, key.size(), value);
      pos += value.size();
    }
  };
  replace_all("{timestamp}", format_seconds(frame.timestamp_s));
  replace_all("{uri}", meta.uri);
  replace_all("{output}", output_path);
  return out;
}

namespace {

std::string require_video_arg(const ToolCall& call) {
  return call.arguments.at("video_path").get<std::string>();
}

const SubtitleTrack& require_track(const ToolContext& ctx, const std::string& video_id,
                                   const std::string& tool) {
  if (!ctx.store) raise(Errc::missing_track, tool + ": no subtitle store configured");
  auto it = ctx.store->tracks.find(video_id);
  if (it == ctx.store->tracks.end()) {
    raise(Errc::missing_track, tool + ": no subtitle track for " + video_id);
  }
  return it->second;
}

std::string render_hits_clips(const std::vector<RetrievalHit>& hits) {
  std::ostringstream out;
  for (const auto& h : hits) {
    out << "clip [" << format_seconds(h.interval.start_s) << "-"
        << format_seconds(h.interval.end_s) << "] score ";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", h.score);
    out << buf << "\n";
  }
  return out.str();
}

std::string render_segment_lines(const std::vector<SubtitleSegment>& segments) {
  if (segments.empty()) return "(no subtitles)";
  std::ostringstream out;
  for (size_t i = 0; i < segments.size(); ++i) {
    if (i) out << "\n";
    out << "[" << format_seconds(segments[i].interval.start_s) << " s] "
        << segments[i].text;
  }
  return out.str();
}

std::string render_hit_lines(const std::vector<RetrievalHit>& hits) {
  std::ostringstream out;
  for (size_t i = 0; i < hits.size(); ++i) {
    if (i) out << "\n";
    out << "[" << format_seconds(hits[i].interval.start_s) << " s] "
        << (hits[i].text ? *hits[i].text : std::string());
  }
  return out.str();
}

ToolResult run_clip_retrieval(ToolContext& ctx, const ToolCall& call) {
  const VideoManifest& video = ctx.catalog->require(require_video_arg(call));
  const std::string& id = video.meta.video_id;
  if (!ctx.store || !ctx.store->clips.count(id)) {
    raise(Errc::index_missing, "no clip index for " + id);
  }
  if (!ctx.query_embedder) raise(Errc::index_missing, "no query embedder configured");
  const auto& entries = ctx.store->clips.at(id);
  EmbeddingVector q = ctx.query_embedder->embed_text(call.arguments.at("query"));
  int k = static_cast<int>(call.arguments.at("topk").get<int64_t>());
  ToolResult result;
  result.tool = call.name;
  result.kind = PayloadKind::hits;
  result.hits = topk(entries, q, k);
  result.rendered = render_hits_clips(result.hits);
  return result;
}

ToolResult run_subtitle_retrieval(ToolContext& ctx, const ToolCall& call) {
  const VideoManifest& video = ctx.catalog->require(require_video_arg(call));
  const std::string& id = video.meta.video_id;
  if (!ctx.store || !ctx.store->subtitles.count(id)) {
    raise(Errc::index_missing, "no subtitle index for " + id);
  }
  if (!ctx.query_embedder) raise(Errc::index_missing, "no query embedder configured");
  const auto& entries = ctx.store->subtitles.at(id);
  EmbeddingVector q = ctx.query_embedder->embed_text(call.arguments.at("query"));
  int k = static_cast<int>(call.arguments.at("topk").get<int64_t>());
  ToolResult result;
  result.tool = call.name;
  result.kind = PayloadKind::hits;
  result.hits = topk(entries, q, k);
  result.rendered = render_hit_lines(result.hits);
  return result;
}

ToolResult run_subtitle_summary(ToolContext& ctx, const ToolCall& call) {
  const VideoManifest& video = ctx.catalog->require(require_video_arg(call));
  const SubtitleTrack& track = require_track(ctx, video.meta.video_id, call.name);
  if (track.empty()) {
    raise(Errc::missing_track, "subtitle track for " + video.meta.video_id + " is empty");
  }
  if (!ctx.summarizer) raise(Errc::missing_track, "no summarizer configured");
  ToolResult result;
  result.tool = call.name;
  result.kind = PayloadKind::summary;
  result.text = summarize_chunked(*ctx.summarizer, track.joined_text(),
                                  call.arguments.at("query"), ctx.config.summary_token_budget);
  result.rendered = result.text;
  return result;
}

ToolResult run_frame_zoom(ToolContext& ctx, const ToolCall& call) {
  const VideoManifest& video = ctx.catalog->require(require_video_arg(call));
  FrameSet frames =
      resample_interval(video.meta, call.interval_args(), ctx.config.frame_zoom_target);
  if (ctx.budget) ctx.budget->debit(frames.count(), call.name);
  ToolResult result;
  result.tool = call.name;
  result.kind = PayloadKind::frames;
  result.frames = std::move(frames);
  VideoClipPart part{video.meta.video_id, *result.frames.source_interval,
                     result.frames.count()};
  result.rendered = video_clip_placeholder(part);
  return result;
}

ToolResult run_subtitle_zoom(ToolContext& ctx, const ToolCall& call) {
  const VideoManifest& video = ctx.catalog->require(require_video_arg(call));
  const SubtitleTrack& track = require_track(ctx, video.meta.video_id, call.name);
  TimeInterval iv = clamp_interval(call.interval_args(), video.meta.duration_s);
  ToolResult result;
  result.tool = call.name;
  result.kind = PayloadKind::segments;
  result.segments = slice_track(track, iv);
  result.rendered = render_segment_lines(result.segments);
  return result;
}

ToolResult run_caption_zoom(ToolContext& ctx, const ToolCall& call) {
  const VideoManifest& video = ctx.catalog->require(require_video_arg(call));
  TimeInterval iv = clamp_interval(call.interval_args(), video.meta.duration_s);
  if (!ctx.captioner) raise(Errc::invalid_argument, "no captioner configured");
  ToolResult result;
  result.tool = call.name;
  result.kind = PayloadKind::caption;
  result.text = ctx.captioner->caption(video.meta.video_id, iv);
  result.rendered = result.text;
  return result;
}

}  // namespace

ToolResult invoke_tool(ToolContext& ctx, const ToolCall& call) {
  if (!ctx.catalog) raise(Errc::invalid_argument, "tool context has no catalog");
  if (call.name == tool_names::clip_retrieval) return run_clip_retrieval(ctx, call);
  if (call.name == tool_names::subtitle_retrieval) return run_subtitle_retrieval(ctx, call);
  if (call.name == tool_names::subtitle_summary) return run_subtitle_summary(ctx, call);
  if (call.name == tool_names::frame_zoom) return run_frame_zoom(ctx, call);
  if (call.name == tool_names::subtitle_zoom) return run_subtitle_zoom(ctx, call);
  if (call.name == tool_names::caption_zoom) return run_caption_zoom(ctx, call);
  raise(Errc::malformed_tool_call, "unknown tool \"" + call.name + "\"");
}

}  // namespace longvid
