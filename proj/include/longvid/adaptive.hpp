#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "longvid/catalog.hpp"
#include "longvid/gateway.hpp"
#include "longvid/synthesis.hpp"
#include "longvid/tools.hpp"

namespace longvid {

// Knobs of one adaptive run. Defaults match the shipped configuration:
// 32 direct frames, escalate below 0.7, 64 frames per question all in.
struct RunPolicy {
  int n = 32;          // direct-stage frame samples
  int k = 1;           // clips retrieved to place frames in long videos
  double tau = 0.7;    // escalate when confidence < tau (strict)
  int frame_budget = 64;
  double duration_gate_s = 600.0;  // at/above: retrieval decides where to look
  int max_tool_steps = 8;
  int frame_zoom_target = 8;
  ConfidenceSpanMode span_mode = ConfidenceSpanMode::answer_tokens;
};

void validate_policy(const RunPolicy& policy);

enum class RunMode { direct, escalated };

const char* run_mode_name(RunMode mode);

struct RunResult {
  std::string task_id;
  std::optional<char> answer;
  double confidence = 0.0;  // direct-stage confidence, the gated quantity
  RunMode mode = RunMode::direct;
  int frames_used = 0;  // both stages, shared budget
  int tool_calls = 0;
  std::optional<double> tool_confidence;  // escalated stage, when it answered
};

// Everything one adaptive run reads. Backends carry the per-run conversation
// state; the rest is shared, read-only world plumbing.
struct AdaptiveContext {
  const VideoCatalog* catalog = nullptr;
  const IndexStore* store = nullptr;
  const EmbeddingProvider* query_embedder = nullptr;
  Captioner* captioner = nullptr;    // unused while caption_zoom is disabled
  Summarizer* summarizer = nullptr;  // only subtitle_summary needs one
  std::shared_ptr<ChatBackend> direct_backend;
  std::shared_ptr<ChatBackend> tool_backend;
  PromptTemplate prompt;
};

// Direct pass over sampled frames first; when its answer confidence falls
// below tau, a tool-using pass (caption_zoom disabled, frame_zoom live)
// continues against whatever frame budget the direct stage left over.
RunResult run_adaptive(AdaptiveContext& ctx, const RunPolicy& policy, const QATask& task);

struct TaskRow {
  std::string task_id;
  double duration_s = 0.0;
  char expected = 0;
  std::optional<char> answer;
  bool correct = false;
  double confidence = 0.0;
  RunMode mode = RunMode::direct;
  int frames_used = 0;
  int tool_calls = 0;
  std::string error;  // nonempty: the run failed and the row carries no result
};

struct EvalReport {
  int task_count = 0;
  int failed = 0;
  std::optional<double> accuracy;
  std::optional<double> accuracy_short;   // duration < 120s
  std::optional<double> accuracy_medium;  // 120s <= duration <= 900s
  std::optional<double> accuracy_long;    // duration > 900s
  double mean_frames = 0.0;
  double tool_rate = 0.0;  // fraction of successful runs that escalated
  std::vector<TaskRow> rows;
};

EvalReport evaluate(AdaptiveContext& ctx, const RunPolicy& policy,
                    const std::vector<QATask>& tasks, int workers = 1);

// Recomputes the summary fields from rows, so partial results (or rows merged
// across shards) aggregate the same way evaluate does.
EvalReport summarize_rows(std::vector<TaskRow> rows);

nlohmann::json report_to_json(const EvalReport& report, bool include_rows = false);
nlohmann::json row_to_json(const TaskRow& row);

struct CalibrationBin {
  int count = 0;
  int correct = 0;
  std::optional<double> accuracy;
};

// Ten equal confidence bins [0,0.1) .. [0.9,1.0], the last closed at 1.0.
// Failed rows are skipped.
std::array<CalibrationBin, 10> calibration_bins(const std::vector<TaskRow>& rows);

enum class SweepAxis { tau, n, k };

const char* sweep_axis_name(SweepAxis axis);
std::optional<SweepAxis> sweep_axis_from_name(std::string_view name);

struct SweepCell {
  double value = 0.0;
  EvalReport report;
  std::string error;  // nonempty: the whole cell failed
};

struct SweepResult {
  SweepAxis axis = SweepAxis::tau;
  std::vector<SweepCell> cells;
};

// One evaluation per axis value, everything else pinned by the base policy.
// Each cell runs on a fresh context so scripted backends start from the same
// state and cells stay comparable.
SweepResult sweep(const std::function<AdaptiveContext()>& make_context,
                  const RunPolicy& base, SweepAxis axis,
                  const std::vector<double>& values,
                  const std::vector<QATask>& tasks, int workers = 1);

std::string sweep_to_csv(const SweepResult& result);

}  // namespace longvid
