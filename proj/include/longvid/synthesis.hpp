#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "longvid/gateway.hpp"
#include "longvid/tools.hpp"

namespace longvid {

struct QAOption {
  char letter = 0;
  std::string text;

  bool operator==(const QAOption& other) const {
    return letter == other.letter && text == other.text;
  }
};

struct QATask {
  std::string task_id;
  std::string video_id;
  std::string question;
  std::vector<QAOption> options;
  char answer = 0;
  std::optional<std::string> initial_caption;

  std::vector<char> option_letters() const;
  const QAOption* find_option(char letter) const;
};

// Requires >= 2 options with unique letters and answer among them.
void validate_task(const QATask& task);

nlohmann::json task_to_json(const QATask& task);
QATask task_from_json(const nlohmann::json& j, const std::string& source);
std::vector<QATask> load_tasks(const std::string& path);
void save_tasks(const std::string& path, const std::vector<QATask>& tasks);

const char* payload_kind_name(PayloadKind kind);
std::optional<PayloadKind> payload_kind_from_name(std::string_view name);

struct ReasoningStep {
  enum class Action { tool_call, answer };

  Action action = Action::tool_call;
  std::string thought;                        // text preceding the action block
  ToolCall call;                              // action == tool_call
  std::optional<std::string> rewritten_from;  // original tool name when rewritten
  std::optional<ToolResult> observation;      // present iff action == tool_call
  char answer = 0;                            // action == answer
};

struct Trajectory {
  std::string task_id;
  std::string prompt_fingerprint;
  std::string initial_caption;
  std::vector<ReasoningStep> steps;
  char final_answer = 0;  // 0 when no answer could be extracted
  bool correct = false;
  bool forced = false;  // answer came from the forced final generation
  int sample_index = 0;
  double temperature = 0.0;

  int tool_step_count() const;
};

// Structural checks: tool steps carry observations, at most one answer step
// and only at the end, tool-step count within max_steps.
void validate_trajectory(const Trajectory& traj, int max_steps);

nlohmann::json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& j, const std::string& source);
void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> load_trajectories(const std::string& path);

// Versioned prompt assembly. The version participates in the trajectory
// fingerprint so records from different templates never mix silently.
struct PromptTemplate {
  std::string version = "v1";

  std::string system_text(const ToolRegistry& registry) const;
  // Question + options (+ the whole-video caption when one is supplied).
  std::string task_user_text(const QATask& task,
                             const std::optional<std::string>& initial_caption) const;
  std::string direct_system_text() const;
  // Single-letter protocol for the direct stage.
  std::string direct_user_text(const QATask& task) const;
  std::string forced_answer_text(const QATask& task) const;
};

std::string prompt_fingerprint(const PromptTemplate& tmpl, const ToolRegistry& registry,
                               const QATask& task,
                               const std::optional<std::string>& initial_caption);

struct ToolLoopOptions {
  int max_steps = 8;
  double temperature = 0.7;
  int max_tokens = 1024;
  bool want_logprobs = false;
  // Synthesis mode: execute frame_zoom requests as caption_zoom, recording
  // the original name on the step.
  bool rewrite_frame_zoom = false;
  // Consecutive unusable generations (malformed call, failed tool) before the
  // loop gives up and forces an answer.
  int failure_limit = 2;
  std::optional<uint64_t> generation_seed;
};

struct ToolLoopRun {
  std::vector<ReasoningStep> steps;
  char final_answer = 0;
  bool forced = false;
  GenerationOutput final_output;  // the generation holding the answer
};

// The reason/act/observe engine shared by synthesis and the tool stage of
// adaptive inference. Tool failures and malformed actions are echoed back as
// observations; backend errors propagate.
ToolLoopRun run_tool_loop(ChatBackend& backend, ToolContext& ctx,
                          const ToolRegistry& registry, const PromptTemplate& tmpl,
                          const QATask& task,
                          const std::optional<std::string>& initial_caption,
                          const ToolLoopOptions& opt);

struct SynthesisConfig {
  int max_steps = 8;         // T
  int samples_per_task = 5;  // S
  double temperature = 0.7;
  int max_keep_per_task = 0;  // 0 = keep every correct trajectory
  int workers = 1;
  uint64_t seed = 0;
  PromptTemplate prompt;
};

void validate_config(const SynthesisConfig& cfg);

// One sampled trajectory: whole-video caption first, then the tool loop with
// caption-space visual access.
Trajectory synthesize_trajectory(const QATask& task, const SynthesisConfig& cfg,
                                 ChatBackend& reasoner, ToolContext& ctx, int sample_index);

struct FailedSample {
  std::string task_id;
  int sample_index = 0;
  std::string error;
};

struct FallbackPick {
  std::string task_id;
  uint64_t selection_seed = 0;
  int sample_index = 0;
};

struct SynthesisOutcome {
  std::vector<Trajectory> kept;  // ordered by (task_id, sample_index)
  std::vector<FailedSample> failures;
  std::vector<FallbackPick> fallbacks;
  int sampled = 0;
};

// S samples per task; keeps all correct trajectories (exact duplicates
// removed, per-task cap applied); when none is correct, a seeded uniform
// draw keeps exactly one.
SynthesisOutcome synthesize_dataset(const std::vector<QATask>& tasks,
                                    const SynthesisConfig& cfg, ChatBackend& reasoner,
                                    ToolContext& ctx);

struct TrainingRecord {
  std::string task_id;
  std::string video_id;
  std::vector<ChatMessage> messages;
  char target_answer = 0;
};

struct GroundingConfig {
  int video_frame_count = 8;  // frames realizing each grounded segment
  PromptTemplate prompt;
};

// Rebuilds the trajectory as an inference-shaped conversation: every
// caption_zoom call becomes frame_zoom over the same interval and its caption
// observation becomes an inline video part.
TrainingRecord ground_trajectory(const Trajectory& traj, const QATask& task,
                                 const ToolRegistry& inference_registry,
                                 const GroundingConfig& cfg);

nlohmann::json record_to_json(const TrainingRecord& record);
TrainingRecord record_from_json(const nlohmann::json& j, const std::string& source);
void save_records(const std::string& path, const std::vector<TrainingRecord>& records);
std::vector<TrainingRecord> load_records(const std::string& path);

struct DatasetStats {
  int record_count = 0;
  // Video-duration histogram in minutes: [0,20), [20,40), [40,60), 60+.
  std::array<int, 4> duration_bins{};
  std::map<int, int> tool_call_hist;       // calls per record -> record count
  std::map<std::string, int> tool_usage;   // tool name -> total calls
  double mean_tool_calls = 0.0;
};

DatasetStats dataset_stats(const std::vector<TrainingRecord>& records,
                           const VideoCatalog& catalog);
nlohmann::json stats_to_json(const DatasetStats& stats);

}  // namespace longvid
