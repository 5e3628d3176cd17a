#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "longvid/catalog.hpp"
#include "longvid/embed.hpp"
#include "longvid/gateway.hpp"
#include "longvid/media.hpp"
#include "longvid/subtitle.hpp"

namespace longvid {

namespace tool_names {
inline constexpr const char* clip_retrieval = "clip_retrieval";
inline constexpr const char* subtitle_retrieval = "subtitle_retrieval";
inline constexpr const char* subtitle_summary = "subtitle_summary";
inline constexpr const char* frame_zoom = "frame_zoom";
inline constexpr const char* subtitle_zoom = "subtitle_zoom";
inline constexpr const char* caption_zoom = "caption_zoom";
}  // namespace tool_names

struct ParamSpec {
  enum class Type { string, number, integer };

  std::string name;
  Type type = Type::string;
  bool required = true;
};

struct ToolSpec {
  std::string name;
  std::string description;
  std::vector<ParamSpec> params;
};

class ToolRegistry {
 public:
  // All six tools.
  static ToolRegistry standard();
  // Copy with some tools removed, e.g. caption_zoom at inference time.
  ToolRegistry without(const std::vector<std::string>& names) const;

  const ToolSpec* find(const std::string& name) const;
  const std::vector<ToolSpec>& specs() const { return specs_; }

 private:
  std::vector<ToolSpec> specs_;
};

struct ToolCall {
  std::string name;
  nlohmann::json arguments;  // object

  bool operator==(const ToolCall& other) const {
    return name == other.name && arguments == other.arguments;
  }
  TimeInterval interval_args() const;  // reads "start"/"end"
};

// Canonical wire form: <tool_call>{"name":...,"arguments":{...}}</tool_call>
// with object keys in sorted order.
std::string serialize_tool_call(const ToolCall& call);

// Throws malformed_tool_call on unknown tool, missing/unknown/ill-typed args.
void validate_tool_call(const ToolRegistry& registry, const ToolCall& call);

struct ParsedAction {
  enum class Kind { none, tool_call, answer, malformed };

  Kind kind = Kind::none;
  ToolCall call;        // kind == tool_call
  char answer = 0;      // kind == answer
  std::string error;    // kind == malformed
};

// Scans model text for the first <tool_call> or <answer> block. Returns
// malformed (never throws) when delimiters are present but the payload is
// unusable, so the loop can surface the problem as an observation.
ParsedAction parse_model_action(const std::string& model_text, const ToolRegistry& registry);

enum class PayloadKind { hits, segments, summary, frames, caption };

struct ToolResult {
  std::string tool;
  PayloadKind kind = PayloadKind::summary;
  std::vector<RetrievalHit> hits;
  std::vector<SubtitleSegment> segments;
  std::string text;  // summary or caption
  FrameSet frames;
  std::string rendered;  // what the model sees
};

class FrameBudget {
 public:
  explicit FrameBudget(int total) : total_(total) {}

  int total() const { return total_; }
  int used() const { return used_; }
  int remaining() const { return total_ - used_; }
  // All-or-nothing: debits count frames or throws frame_budget_exceeded.
  void debit(int count, const std::string& what);

 private:
  int total_;
  int used_ = 0;
};

class Captioner {
 public:
  virtual ~Captioner() = default;
  virtual std::string caption(const std::string& video_id, const TimeInterval& interval) = 0;
};

class Summarizer {
 public:
  virtual ~Summarizer() = default;
  virtual std::string summarize(const std::string& transcript, const std::string& query) = 0;
};

// Captions an interval by sending frame attachments to a chat backend.
class GatewayCaptioner : public Captioner {
 public:
  GatewayCaptioner(std::shared_ptr<ChatBackend> backend, int frame_count = 32);
  std::string caption(const std::string& video_id, const TimeInterval& interval) override;

 private:
  std::shared_ptr<ChatBackend> backend_;
  int frame_count_;
};

class GatewaySummarizer : public Summarizer {
 public:
  explicit GatewaySummarizer(std::shared_ptr<ChatBackend> backend);
  std::string summarize(const std::string& transcript, const std::string& query) override;

 private:
  std::shared_ptr<ChatBackend> backend_;
};

// Transcripts above token_budget (whitespace tokens) are split into
// ceil(tokens/budget) chunks, each summarized, then the chunk summaries are
// merged with one more call. chunk_count_out reports the chunk count.
std::string summarize_chunked(Summarizer& summarizer, const std::string& transcript,
                              const std::string& query, int token_budget,
                              int* chunk_count_out = nullptr);

// Per-frame external extraction command, e.g.
// "ffmpeg -ss {timestamp} -i {uri} -frames:v 1 {output}". Only rendered here;
// virtual videos never spawn a process.
std::string render_extract_command(const std::string& command_template,
                                   const VideoMeta& meta, const FrameRef& frame,
                                   const std::string& output_path);

struct IndexStore {
  std::map<std::string, std::vector<ClipIndexEntry>> clips;
  std::map<std::string, std::vector<SubtitleIndexEntry>> subtitles;
  std::map<std::string, SubtitleTrack> tracks;
};

struct ToolRuntimeConfig {
  int frame_zoom_target = 8;
  int summary_token_budget = 2048;
};

struct ToolContext {
  const VideoCatalog* catalog = nullptr;
  const IndexStore* store = nullptr;
  const EmbeddingProvider* query_embedder = nullptr;
  Captioner* captioner = nullptr;
  Summarizer* summarizer = nullptr;
  FrameBudget* budget = nullptr;  // null = unmetered
  ToolRuntimeConfig config;
};

// Dispatches a validated call. Tool-level failures (bad interval, budget,
// missing index/track) surface as Error with the matching code; the agent
// loop decides whether to echo them as observations.
ToolResult invoke_tool(ToolContext& ctx, const ToolCall& call);

}  // namespace longvid
