#include "longvid/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "longvid/error.hpp"
#include "longvid/util.hpp"

namespace longvid {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string optional_accuracy(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

}  // namespace

void validate_policy(const RunPolicy& policy) {
  if (policy.n < 1) raise(Errc::config_error, "n must be >= 1");
  if (policy.k < 1) raise(Errc::config_error, "k must be >= 1");
  if (policy.tau < 0.0 || policy.tau > 1.0) raise(Errc::config_error, "tau must be in [0,1]");
  if (policy.frame_budget < policy.n) {
    raise(Errc::config_error, "frame_budget must cover the n direct-stage frames");
  }
  if (!(policy.duration_gate_s > 0.0)) {
    raise(Errc::config_error, "duration_gate_s must be > 0");
  }
  if (policy.max_tool_steps < 1) raise(Errc::config_error, "max_tool_steps must be >= 1");
  if (policy.frame_zoom_target < 1) {
    raise(Errc::config_error, "frame_zoom_target must be >= 1");
  }
}

const char* run_mode_name(RunMode mode) {
  return mode == RunMode::direct ? "direct" : "escalated";
}

RunResult run_adaptive(AdaptiveContext& ctx, const RunPolicy& policy, const QATask& task) {
  validate_policy(policy);
  validate_task(task);
  if (!ctx.catalog || !ctx.store || !ctx.direct_backend || !ctx.tool_backend) {
    raise(Errc::invalid_argument, "adaptive context is missing catalog, store or backends");
  }
  const VideoMeta& meta = ctx.catalog->require(task.video_id).meta;

  FrameBudget budget(policy.frame_budget);
  RunResult result;
  result.task_id = task.task_id;

  // Direct stage: n frames, placed uniformly for short videos and into the
  // top-k question-relevant clips for long ones.
  std::vector<FrameSet> frame_sets;
  if (meta.duration_s < policy.duration_gate_s) {
    frame_sets.push_back(uniform_sample(meta, policy.n));
  } else {
    if (!ctx.query_embedder) {
      raise(Errc::invalid_argument, "retrieval-guided sampling needs a query embedder");
    }
    auto it = ctx.store->clips.find(task.video_id);
    if (it == ctx.store->clips.end() || it->second.empty()) {
      raise(Errc::index_missing, "no clip index for video " + task.video_id);
    }
    std::vector<RetrievalHit> hits =
        topk(it->second, ctx.query_embedder->embed_text(task.question), policy.k);
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
      return a.interval.start_s < b.interval.start_s;
    });
    // Even split, remainder frames to the earliest clips.
    const int m = static_cast<int>(hits.size());
    const int per = policy.n / m;
    const int rem = policy.n % m;
    for (int i = 0; i < m; ++i) {
      const int count = per + (i < rem ? 1 : 0);
      if (count == 0) continue;
      frame_sets.push_back(resample_interval(meta, hits[i].interval, count));
    }
  }
  int direct_frames = 0;
  for (const FrameSet& fs : frame_sets) direct_frames += fs.count();
  budget.debit(direct_frames, "direct-stage frames");

  std::vector<ChatMessage> messages;
  messages.push_back(ChatMessage::from_text(Role::system, ctx.prompt.direct_system_text()));
  ChatMessage user;
  user.role = Role::user;
  for (const FrameSet& fs : frame_sets) {
    user.append_video({task.video_id,
                       fs.source_interval.value_or(TimeInterval{0.0, meta.duration_s}),
                       fs.count()});
  }
  user.append_text(ctx.prompt.direct_user_text(task));
  messages.push_back(std::move(user));

  GenerationParams params;
  params.want_logprobs = true;
  GenerationOutput out = ctx.direct_backend->generate(messages, params);

  result.confidence = output_confidence(out, policy.span_mode);
  result.answer = extract_answer(out.text, task.option_letters());
  result.frames_used = budget.used();
  if (result.confidence >= policy.tau) return result;

  // Escalated stage: the tool loop spends whatever budget is left.
  result.mode = RunMode::escalated;
  ToolContext tool_ctx;
  tool_ctx.catalog = ctx.catalog;
  tool_ctx.store = ctx.store;
  tool_ctx.query_embedder = ctx.query_embedder;
  tool_ctx.captioner = ctx.captioner;
  tool_ctx.summarizer = ctx.summarizer;
  tool_ctx.budget = &budget;
  tool_ctx.config.frame_zoom_target = policy.frame_zoom_target;

  const ToolRegistry registry = ToolRegistry::standard().without({tool_names::caption_zoom});
  ToolLoopOptions opt;
  opt.max_steps = policy.max_tool_steps;
  opt.temperature = 0.0;
  opt.want_logprobs = true;

  ToolLoopRun run =
      run_tool_loop(*ctx.tool_backend, tool_ctx, registry, ctx.prompt, task, std::nullopt, opt);
  for (const ReasoningStep& step : run.steps) {
    if (step.action == ReasoningStep::Action::tool_call) ++result.tool_calls;
  }
  if (run.final_answer != 0) {
    result.answer = run.final_answer;
    result.tool_confidence = output_confidence(run.final_output, policy.span_mode);
  }
  result.frames_used = budget.used();
  return result;
}

EvalReport evaluate(AdaptiveContext& ctx, const RunPolicy& policy,
                    const std::vector<QATask>& tasks, int workers) {
  validate_policy(policy);
  std::vector<TaskRow> rows(tasks.size());
  parallel_for(tasks.size(), workers, [&](size_t i) {
    const QATask& task = tasks[i];
    TaskRow row;
    row.task_id = task.task_id;
    row.expected = task.answer;
    try {
      row.duration_s = ctx.catalog->require(task.video_id).meta.duration_s;
      RunResult r = run_adaptive(ctx, policy, task);
      row.answer = r.answer;
      row.correct = r.answer && *r.answer == task.answer;
      row.confidence = r.confidence;
      row.mode = r.mode;
      row.frames_used = r.frames_used;
      row.tool_calls = r.tool_calls;
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows[i] = std::move(row);
  });
  return summarize_rows(std::move(rows));
}

EvalReport summarize_rows(std::vector<TaskRow> rows) {
  EvalReport report;
  report.task_count = static_cast<int>(rows.size());
  struct Bucket {
    int n = 0;
    int correct = 0;
  };
  Bucket all, short_b, medium_b, long_b;
  long frames = 0;
  int escalated = 0;
  for (const TaskRow& row : rows) {
    if (!row.error.empty()) {
      ++report.failed;
      continue;
    }
    ++all.n;
    all.correct += row.correct;
    frames += row.frames_used;
    escalated += row.mode == RunMode::escalated;
    Bucket& b = row.duration_s < 120.0 ? short_b
               : row.duration_s <= 900.0 ? medium_b
                                         : long_b;
    ++b.n;
    b.correct += row.correct;
  }
  auto ratio = [](const Bucket& b) -> std::optional<double> {
    if (b.n == 0) return std::nullopt;
    return static_cast<double>(b.correct) / b.n;
  };
  report.accuracy = ratio(all);
  report.accuracy_short = ratio(short_b);
  report.accuracy_medium = ratio(medium_b);
  report.accuracy_long = ratio(long_b);
  if (all.n > 0) {
    report.mean_frames = static_cast<double>(frames) / all.n;
    report.tool_rate = static_cast<double>(escalated) / all.n;
  }
  report.rows = std::move(rows);
  return report;
}

nlohmann::json row_to_json(const TaskRow& row) {
  nlohmann::json j{{"task_id", row.task_id},
                   {"duration_s", row.duration_s},
                   {"expected", std::string(1, row.expected)},
                   {"correct", row.correct},
                   {"confidence", row.confidence},
                   {"mode", run_mode_name(row.mode)},
                   {"frames_used", row.frames_used},
                   {"tool_calls", row.tool_calls}};
  j["answer"] = row.answer ? nlohmann::json(std::string(1, *row.answer)) : nlohmann::json();
  if (!row.error.empty()) j["error"] = row.error;
  return j;
}

nlohmann::json report_to_json(const EvalReport& report, bool include_rows) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json();
  };
  nlohmann::json j{{"tasks", report.task_count},
                   {"failed", report.failed},
                   {"accuracy", opt(report.accuracy)},
                   {"accuracy_short", opt(report.accuracy_short)},
                   {"accuracy_medium", opt(report.accuracy_medium)},
                   {"accuracy_long", opt(report.accuracy_long)},
                   {"mean_frames", report.mean_frames},
                   {"tool_rate", report.tool_rate}};
  if (include_rows) {
    nlohmann::json rows = nlohmann::json::array();
    for (const TaskRow& row : report.rows) rows.push_back(row_to_json(row));
    j["rows"] = std::move(rows);
  }
  return j;
}

std::array<CalibrationBin, 10> calibration_bins(const std::vector<TaskRow>& rows) {
  std::array<CalibrationBin, 10> bins{};
  for (const TaskRow& row : rows) {
    if (!row.error.empty()) continue;
    const int idx =
        std::clamp(static_cast<int>(row.confidence * 10.0), 0, 9);
    ++bins[idx].count;
    bins[idx].correct += row.correct;
  }
  for (CalibrationBin& bin : bins) {
    if (bin.count > 0) bin.accuracy = static_cast<double>(bin.correct) / bin.count;
  }
  return bins;
}

const char* sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::tau: return "tau";
    case SweepAxis::n: return "n";
    case SweepAxis::k: return "k";
  }
  return "tau";
}

std::optional<SweepAxis> sweep_axis_from_name(std::string_view name) {
  if (name == "tau") return SweepAxis::tau;
  if (name == "n") return SweepAxis::n;
  if (name == "k") return SweepAxis::k;
  return std::nullopt;
}

SweepResult sweep(const std::function<AdaptiveContext()>& make_context,
                  const RunPolicy& base, SweepAxis axis,
                  const std::vector<double>& values,
                  const std::vector<QATask>& tasks, int workers) {
  if (values.empty()) raise(Errc::config_error, "sweep needs at least one value");
  SweepResult result;
  result.axis = axis;
  for (double value : values) {
    SweepCell cell;
    cell.value = value;
    try {
      RunPolicy policy = base;
      switch (axis) {
        case SweepAxis::tau: policy.tau = value; break;
        case SweepAxis::n: policy.n = static_cast<int>(std::llround(value)); break;
        case SweepAxis::k: policy.k = static_cast<int>(std::llround(value)); break;
      }
      validate_policy(policy);
      AdaptiveContext ctx = make_context();
      cell.report = evaluate(ctx, policy, tasks, workers);
    } catch (const Error& e) {
      cell.error = e.what();
    }
    result.cells.push_back(std::move(cell));
  }
  return result;
}

std::string sweep_to_csv(const SweepResult& result) {
  std::string csv =
      "axis,value,tasks,failed,accuracy,accuracy_short,accuracy_medium,"
      "accuracy_long,mean_frames,tool_rate,error\n";
  for (const SweepCell& cell : result.cells) {
    const EvalReport& r = cell.report;
    csv += sweep_axis_name(result.axis);
    csv += ',';
    csv += format_double(cell.value);
    csv += ',';
    csv += std::to_string(r.task_count);
    csv += ',';
    csv += std::to_string(r.failed);
    csv += ',';
    csv += optional_accuracy(r.accuracy);
    csv += ',';
    csv += optional_accuracy(r.accuracy_short);
    csv += ',';
    csv += optional_accuracy(r.accuracy_medium);
    csv += ',';
    csv += optional_accuracy(r.accuracy_long);
    csv += ',';
    csv += cell.error.empty() ? format_double(r.mean_frames) : std::string();
    csv += ',';
    csv += cell.error.empty() ? format_double(r.tool_rate) : std::string();
    csv += ',';
    csv += csv_field(cell.error);
    csv += '\n';
  }
  return csv;
}

}  // namespace longvid
