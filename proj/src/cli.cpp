#include "longvid/cli.hpp"

#include <cstdlib>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "longvid/adaptive.hpp"
#include "longvid/error.hpp"
#include "longvid/log.hpp"
#include "longvid/subtitle.hpp"
#include "longvid/synthesis.hpp"
#include "longvid/util.hpp"
#include "longvid/world.hpp"

namespace longvid {

namespace {

// Settings every subcommand starts from. Precedence: built-in defaults,
// then the JSON config file, then LONGVID_* environment variables, then
// command-line flags.
struct AppConfig {
  RunPolicy policy;
  int workers = 1;
  uint64_t seed = 0;
  int samples_per_task = 5;
  int max_steps = 8;
  int dim = 256;
  uint64_t embed_seed = 17;
  std::string log_level;
};

std::optional<std::string> env_string(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

double parse_env_double(const std::string& name, const std::string& value) {
  try {
    size_t used = 0;
    double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    raise(Errc::config_error, name + ": '" + value + "' is not a number");
  }
}

long long parse_env_int(const std::string& name, const std::string& value) {
  try {
    size_t used = 0;
    long long i = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return i;
  } catch (const std::exception&) {
    raise(Errc::config_error, name + ": '" + value + "' is not an integer");
  }
}

void apply_config_keys(AppConfig& cfg, const nlohmann::json& j, const std::string& path);

void apply_config_file(AppConfig& cfg, const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::config_error, path + ": " + e.what());
  }
  if (!j.is_object()) raise(Errc::config_error, path + ": config must be a JSON object");
  try {
    apply_config_keys(cfg, j, path);
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::config_error, path + ": " + e.what());
  }
}

void apply_config_keys(AppConfig& cfg, const nlohmann::json& j, const std::string& path) {
  for (const auto& [key, value] : j.items()) {
    if (key == "tau") cfg.policy.tau = value.get<double>();
    else if (key == "n") cfg.policy.n = value.get<int>();
    else if (key == "k") cfg.policy.k = value.get<int>();
    else if (key == "frame_budget") cfg.policy.frame_budget = value.get<int>();
    else if (key == "duration_gate_s") cfg.policy.duration_gate_s = value.get<double>();
    else if (key == "max_tool_steps") cfg.policy.max_tool_steps = value.get<int>();
    else if (key == "frame_zoom_target") cfg.policy.frame_zoom_target = value.get<int>();
    else if (key == "workers") cfg.workers = value.get<int>();
    else if (key == "seed") cfg.seed = value.get<uint64_t>();
    else if (key == "samples_per_task") cfg.samples_per_task = value.get<int>();
    else if (key == "max_steps") cfg.max_steps = value.get<int>();
    else if (key == "dim") cfg.dim = value.get<int>();
    else if (key == "embed_seed") cfg.embed_seed = value.get<uint64_t>();
    else if (key == "log_level") cfg.log_level = value.get<std::string>();
    else raise(Errc::config_error, path + ": unknown key '" + key + "'");
  }
}

void apply_env(AppConfig& cfg) {
  if (auto v = env_string("LONGVID_TAU")) cfg.policy.tau = parse_env_double("LONGVID_TAU", *v);
  if (auto v = env_string("LONGVID_N")) {
    cfg.policy.n = static_cast<int>(parse_env_int("LONGVID_N", *v));
  }
  if (auto v = env_string("LONGVID_K")) {
    cfg.policy.k = static_cast<int>(parse_env_int("LONGVID_K", *v));
  }
  if (auto v = env_string("LONGVID_FRAME_BUDGET")) {
    cfg.policy.frame_budget = static_cast<int>(parse_env_int("LONGVID_FRAME_BUDGET", *v));
  }
  if (auto v = env_string("LONGVID_WORKERS")) {
    cfg.workers = static_cast<int>(parse_env_int("LONGVID_WORKERS", *v));
  }
  if (auto v = env_string("LONGVID_SEED")) {
    cfg.seed = static_cast<uint64_t>(parse_env_int("LONGVID_SEED", *v));
  }
  if (auto v = env_string("LONGVID_LOG")) cfg.log_level = *v;
}

void write_status(const std::string& path, const std::string& command,
                  const std::string& state, const std::string& detail = "") {
  if (path.empty()) return;
  nlohmann::json j{{"command", command}, {"state", state}};
  if (!detail.empty()) j["detail"] = detail;
  write_file(path, j.dump() + "\n");
}

void add_policy_options(CLI::App* cmd, RunPolicy& policy) {
  cmd->add_option("--tau", policy.tau, "Escalate when direct confidence is below this")
      ->capture_default_str();
  cmd->add_option("--n", policy.n, "Direct-stage frame samples")->capture_default_str();
  cmd->add_option("--k", policy.k, "Clips retrieved to place frames in long videos")
      ->capture_default_str();
  cmd->add_option("--frame-budget", policy.frame_budget, "Frames one question may spend")
      ->capture_default_str();
  cmd->add_option("--duration-gate", policy.duration_gate_s,
                  "Videos at least this long use retrieval-guided sampling")
      ->capture_default_str();
  cmd->add_option("--max-tool-steps", policy.max_tool_steps, "Tool-loop step ceiling")
      ->capture_default_str();
  cmd->add_option("--frame-zoom-target", policy.frame_zoom_target,
                  "Frames one frame_zoom returns")
      ->capture_default_str();
}

// A loaded bundle with its embedding machinery; heap-bound so the
// self-referential world/provider pair never moves.
struct OpenWorld {
  World world;
  std::unique_ptr<WorldEmbeddings> emb;
};

std::unique_ptr<OpenWorld> open_world(const std::string& dir, const AppConfig& cfg,
                                      bool with_indexes) {
  auto ow = std::make_unique<OpenWorld>();
  ow->world = load_world(dir);
  ow->emb = std::make_unique<WorldEmbeddings>(ow->world, cfg.dim, cfg.embed_seed);
  if (with_indexes) build_world_indexes(ow->world, ow->emb->provider);
  return ow;
}

AdaptiveContext world_context(OpenWorld& ow) {
  AdaptiveContext ctx;
  ctx.catalog = &ow.world.catalog;
  ctx.store = &ow.world.store;
  ctx.query_embedder = &ow.emb->provider;
  ctx.captioner = &ow.world.captions;
  ctx.direct_backend = make_direct_backend(ow.world);
  ctx.tool_backend = make_tool_backend(ow.world);
  return ctx;
}

TaskRow row_from_json(const nlohmann::json& j, const std::string& source) {
  if (!j.is_object()) raise(Errc::parse_error, source + ": row must be a JSON object");
  TaskRow row;
  row.task_id = j.value("task_id", "");
  row.duration_s = j.value("duration_s", 0.0);
  const std::string expected = j.value("expected", "");
  if (!expected.empty()) row.expected = expected[0];
  if (j.contains("answer") && j["answer"].is_string()) {
    const std::string a = j["answer"].get<std::string>();
    if (!a.empty()) row.answer = a[0];
  }
  row.correct = j.value("correct", false);
  row.confidence = j.value("confidence", 0.0);
  row.mode = j.value("mode", "direct") == std::string("escalated") ? RunMode::escalated
                                                                   : RunMode::direct;
  row.frames_used = j.value("frames_used", 0);
  row.tool_calls = j.value("tool_calls", 0);
  row.error = j.value("error", "");
  return row;
}

nlohmann::json run_result_json(const RunResult& r, const QATask& task) {
  nlohmann::json j{{"task_id", r.task_id},
                   {"expected", std::string(1, task.answer)},
                   {"correct", r.answer && *r.answer == task.answer},
                   {"confidence", r.confidence},
                   {"mode", run_mode_name(r.mode)},
                   {"frames_used", r.frames_used},
                   {"tool_calls", r.tool_calls}};
  j["answer"] = r.answer ? nlohmann::json(std::string(1, *r.answer)) : nlohmann::json();
  if (r.tool_confidence) j["tool_confidence"] = *r.tool_confidence;
  return j;
}

}  // namespace

int cmd_dispatch(const std::vector<std::string>& args, std::ostream& out,
                 std::ostream& err) {
  AppConfig cfg;
  try {
    std::optional<std::string> config_path;
    for (size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (!config_path) config_path = env_string("LONGVID_CONFIG");
    if (config_path) apply_config_file(cfg, *config_path);
    apply_env(cfg);
  } catch (const Error& e) {
    err << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Tool-driven question answering over long videos"};
  app.name("longvid");
  std::string config_flag;
  app.add_option("--config", config_flag, "JSON config file with default settings");
  std::string status_path;
  app.add_option("--status", status_path, "Sidecar JSON status file updated as the command runs");
  app.add_option("--log-level", cfg.log_level, "debug, info, warn, error or off");
  app.fallthrough();  // let --status etc. appear after the subcommand name
  app.require_subcommand(0, 1);

  // world-gen
  auto* wg = app.add_subcommand("world-gen", "Generate a deterministic synthetic benchmark bundle");
  WorldSpec spec;
  std::string wg_out;
  wg->add_option("--out", wg_out, "Bundle directory to write")->required();
  wg->add_option("--seed", spec.seed, "World seed")->capture_default_str();
  wg->add_option("--videos", spec.video_count, "Number of videos")->capture_default_str();
  wg->add_option("--tasks-per-video", spec.tasks_per_video, "Questions planted per video")
      ->capture_default_str();
  wg->add_option("--min-minutes", spec.min_minutes, "Shortest video length")
      ->capture_default_str();
  wg->add_option("--max-minutes", spec.max_minutes, "Longest video length")
      ->capture_default_str();
  wg->add_option("--distractors", spec.distractor_lines, "Distractor subtitle lines per video")
      ->capture_default_str();
  wg->add_option("--options", spec.option_count, "Choices per question")->capture_default_str();
  wg->add_option("--tool-gamma", spec.tool_gamma, "Scripted tool-stage answer confidence")
      ->capture_default_str();

  // ingest-subtitles
  auto* ingest = app.add_subcommand("ingest-subtitles",
                                    "Normalize a subtitle file to the canonical JSON form");
  std::string ingest_in, ingest_out, ingest_video, ingest_format;
  ingest->add_option("--in", ingest_in, "Source subtitle file")->required();
  ingest->add_option("--out", ingest_out, "Normalized JSON destination")->required();
  ingest->add_option("--video", ingest_video, "Video id the track belongs to")->required();
  ingest->add_option("--format", ingest_format, "srt, vtt or whisper-json (default: by extension)");

  // build-index
  auto* bi = app.add_subcommand("build-index", "Embed a bundle's clips and subtitles");
  std::string bi_world, bi_out;
  bi->add_option("--world", bi_world, "Bundle directory")->required();
  bi->add_option("--out", bi_out, "Index directory to write")->required();
  bi->add_option("--dim", cfg.dim, "Embedding dimension")->capture_default_str();
  bi->add_option("--embed-seed", cfg.embed_seed, "Embedding hash seed")->capture_default_str();

  // synthesize
  auto* synth = app.add_subcommand("synthesize",
                                   "Sample tool-use trajectories for every bundle task");
  std::string synth_world, synth_out;
  synth->add_option("--world", synth_world, "Bundle directory")->required();
  synth->add_option("--out", synth_out, "Trajectory JSONL destination")->required();
  synth->add_option("--samples", cfg.samples_per_task, "Samples per task")
      ->capture_default_str();
  synth->add_option("--max-steps", cfg.max_steps, "Tool-loop step ceiling")
      ->capture_default_str();
  synth->add_option("--seed", cfg.seed, "Sampling seed")->capture_default_str();
  synth->add_option("--workers", cfg.workers, "Parallel workers")->capture_default_str();
  int synth_max_keep = 0;
  synth->add_option("--max-keep", synth_max_keep, "Cap on kept trajectories per task (0 = all)")
      ->capture_default_str();

  // ground
  auto* ground = app.add_subcommand("ground",
                                    "Rewrite trajectories as frame-grounded training records");
  std::string ground_traj, ground_tasks, ground_out, ground_world;
  int ground_frames = 8;
  ground->add_option("--trajectories", ground_traj, "Trajectory JSONL")->required();
  ground->add_option("--tasks", ground_tasks, "Task JSONL the trajectories answer")->required();
  ground->add_option("--out", ground_out, "Training-record JSONL destination")->required();
  ground->add_option("--frame-count", ground_frames, "Frames realizing each grounded segment")
      ->capture_default_str();
  ground->add_option("--world", ground_world, "Bundle directory; adds dataset stats");

  // run
  auto* run = app.add_subcommand("run", "Answer one bundle task adaptively");
  std::string run_world, run_task;
  run->add_option("--world", run_world, "Bundle directory")->required();
  run->add_option("--task", run_task, "Task id")->required();
  add_policy_options(run, cfg.policy);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate the adaptive policy on a bundle");
  std::string eval_world, eval_rows;
  bool eval_include_rows = false;
  eval_cmd->add_option("--world", eval_world, "Bundle directory")->required();
  eval_cmd->add_option("--rows", eval_rows, "Also write per-task rows to this JSONL file");
  eval_cmd->add_flag("--include-rows", eval_include_rows, "Inline per-task rows in the report");
  eval_cmd->add_option("--workers", cfg.workers, "Parallel workers")->capture_default_str();
  add_policy_options(eval_cmd, cfg.policy);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate one policy knob over several values");
  std::string sweep_world, sweep_axis, sweep_out;
  std::vector<double> sweep_values;
  sweep_cmd->add_option("--world", sweep_world, "Bundle directory")->required();
  sweep_cmd->add_option("--axis", sweep_axis, "tau, n or k")
      ->required()
      ->check(CLI::IsMember({"tau", "n", "k"}));
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated axis values")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "CSV destination (default: stdout)");
  sweep_cmd->add_option("--workers", cfg.workers, "Parallel workers")->capture_default_str();
  add_policy_options(sweep_cmd, cfg.policy);

  // report
  auto* report_cmd = app.add_subcommand("report", "Summarize saved per-task rows");
  std::string report_rows;
  report_cmd->add_option("--rows", report_rows, "Row JSONL written by eval")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  if (!cfg.log_level.empty()) {
    LogLevel level;
    if (!parse_log_level(cfg.log_level, &level)) {
      err << "unknown log level '" << cfg.log_level << "'\n";
      return 2;
    }
    set_log_level(level);
  }

  std::string command;
  std::function<void()> handler;

  if (wg->parsed()) {
    command = "world-gen";
    handler = [&] {
      World world = generate_world(spec);
      save_world(wg_out, world);
      log_event(LogLevel::info, "world generated",
                {{"dir", wg_out}, {"tasks", std::to_string(world.tasks.size())}});
      out << nlohmann::json{{"dir", wg_out},
                            {"videos", world.catalog.size()},
                            {"tasks", world.tasks.size()}}
                 .dump(2)
          << '\n';
    };
  } else if (ingest->parsed()) {
    command = "ingest-subtitles";
    handler = [&] {
      std::optional<SubtitleFormat> format;
      if (!ingest_format.empty()) {
        format = subtitle_format_from_name(ingest_format);
        if (!format) raise(Errc::config_error, "unknown subtitle format '" + ingest_format + "'");
      } else {
        format = guess_subtitle_format(ingest_in);
        if (!format) {
          raise(Errc::config_error, "cannot guess the format of '" + ingest_in +
                                        "'; pass --format");
        }
      }
      SubtitleTrack track = parse_subtitles(read_file(ingest_in), *format, ingest_video);
      write_file(ingest_out, serialize_track(track, SubtitleFormat::whisper_json));
      out << nlohmann::json{{"video_id", ingest_video},
                            {"segments", track.segments.size()},
                            {"source_format", subtitle_format_name(*format)},
                            {"out", ingest_out}}
                 .dump(2)
          << '\n';
    };
  } else if (bi->parsed()) {
    command = "build-index";
    handler = [&] {
      auto ow = open_world(bi_world, cfg, true);
      ensure_dir(bi_out);
      ensure_dir(bi_out + "/clips");
      ensure_dir(bi_out + "/subtitles");
      size_t clip_entries = 0, subtitle_entries = 0;
      for (const auto& [video_id, entries] : ow->world.store.clips) {
        save_clip_index(bi_out + "/clips/" + video_id + ".json", entries,
                        ow->emb->provider.name(), ow->emb->provider.dim());
        clip_entries += entries.size();
      }
      for (const auto& [video_id, entries] : ow->world.store.subtitles) {
        save_subtitle_index(bi_out + "/subtitles/" + video_id + ".json", entries,
                            ow->emb->provider.name(), ow->emb->provider.dim());
        subtitle_entries += entries.size();
      }
      out << nlohmann::json{{"videos", ow->world.catalog.size()},
                            {"clip_entries", clip_entries},
                            {"subtitle_entries", subtitle_entries},
                            {"out", bi_out}}
                 .dump(2)
          << '\n';
    };
  } else if (synth->parsed()) {
    command = "synthesize";
    handler = [&] {
      auto ow = open_world(synth_world, cfg, true);
      auto backend = make_tool_backend(ow->world);
      ToolContext tool_ctx;
      tool_ctx.catalog = &ow->world.catalog;
      tool_ctx.store = &ow->world.store;
      tool_ctx.query_embedder = &ow->emb->provider;
      tool_ctx.captioner = &ow->world.captions;

      SynthesisConfig scfg;
      scfg.max_steps = cfg.max_steps;
      scfg.samples_per_task = cfg.samples_per_task;
      scfg.max_keep_per_task = synth_max_keep;
      scfg.workers = cfg.workers;
      scfg.seed = cfg.seed;
      SynthesisOutcome outcome =
          synthesize_dataset(ow->world.tasks, scfg, *backend, tool_ctx);
      save_trajectories(synth_out, outcome.kept);
      out << nlohmann::json{{"sampled", outcome.sampled},
                            {"kept", outcome.kept.size()},
                            {"failures", outcome.failures.size()},
                            {"fallbacks", outcome.fallbacks.size()},
                            {"out", synth_out}}
                 .dump(2)
          << '\n';
    };
  } else if (ground->parsed()) {
    command = "ground";
    handler = [&] {
      const std::vector<Trajectory> trajectories = load_trajectories(ground_traj);
      const std::vector<QATask> tasks = load_tasks(ground_tasks);
      std::map<std::string, const QATask*> by_id;
      for (const QATask& task : tasks) by_id[task.task_id] = &task;

      const ToolRegistry registry =
          ToolRegistry::standard().without({tool_names::caption_zoom});
      GroundingConfig gcfg;
      gcfg.video_frame_count = ground_frames;
      std::vector<TrainingRecord> records;
      records.reserve(trajectories.size());
      for (const Trajectory& traj : trajectories) {
        auto it = by_id.find(traj.task_id);
        if (it == by_id.end()) {
          raise(Errc::unknown_task, "trajectory for unknown task " + traj.task_id);
        }
        records.push_back(ground_trajectory(traj, *it->second, registry, gcfg));
      }
      save_records(ground_out, records);

      nlohmann::json summary{{"records", records.size()}, {"out", ground_out}};
      if (!ground_world.empty()) {
        World world = load_world(ground_world);
        summary["stats"] = stats_to_json(dataset_stats(records, world.catalog));
      }
      out << summary.dump(2) << '\n';
    };
  } else if (run->parsed()) {
    command = "run";
    handler = [&] {
      auto ow = open_world(run_world, cfg, true);
      const QATask* task = nullptr;
      for (const QATask& t : ow->world.tasks) {
        if (t.task_id == run_task) task = &t;
      }
      if (!task) raise(Errc::unknown_task, "no task '" + run_task + "' in " + run_world);
      AdaptiveContext ctx = world_context(*ow);
      RunResult result = run_adaptive(ctx, cfg.policy, *task);
      out << run_result_json(result, *task).dump(2) << '\n';
    };
  } else if (eval_cmd->parsed()) {
    command = "eval";
    handler = [&] {
      auto ow = open_world(eval_world, cfg, true);
      AdaptiveContext ctx = world_context(*ow);
      EvalReport report = evaluate(ctx, cfg.policy, ow->world.tasks, cfg.workers);
      if (!eval_rows.empty()) {
        std::string lines;
        for (const TaskRow& row : report.rows) lines += row_to_json(row).dump() + "\n";
        write_file(eval_rows, lines);
      }
      log_event(LogLevel::info, "evaluation finished",
                {{"tasks", std::to_string(report.task_count)},
                 {"failed", std::to_string(report.failed)}});
      out << report_to_json(report, eval_include_rows).dump(2) << '\n';
    };
  } else if (sweep_cmd->parsed()) {
    command = "sweep";
    handler = [&] {
      auto ow = open_world(sweep_world, cfg, true);
      auto factory = [&ow] { return world_context(*ow); };
      SweepResult result = sweep(factory, cfg.policy, *sweep_axis_from_name(sweep_axis),
                                 sweep_values, ow->world.tasks, cfg.workers);
      const std::string csv = sweep_to_csv(result);
      if (sweep_out.empty()) {
        out << csv;
      } else {
        write_file(sweep_out, csv);
        out << nlohmann::json{{"cells", result.cells.size()}, {"out", sweep_out}}.dump(2)
            << '\n';
      }
    };
  } else if (report_cmd->parsed()) {
    command = "report";
    handler = [&] {
      std::vector<TaskRow> rows;
      std::istringstream in(read_file(report_rows));
      std::string line;
      int line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = report_rows + ":" + std::to_string(line_no);
        try {
          rows.push_back(row_from_json(nlohmann::json::parse(line), where));
        } catch (const nlohmann::json::exception& e) {
          raise(Errc::parse_error, where + ": " + e.what());
        }
      }
      EvalReport report = summarize_rows(std::move(rows));
      auto bins = calibration_bins(report.rows);
      nlohmann::json calibration = nlohmann::json::array();
      for (size_t i = 0; i < bins.size(); ++i) {
        calibration.push_back(
            {{"lo", static_cast<double>(i) / 10.0},
             {"count", bins[i].count},
             {"accuracy", bins[i].accuracy ? nlohmann::json(*bins[i].accuracy)
                                           : nlohmann::json()}});
      }
      out << nlohmann::json{{"report", report_to_json(report)},
                            {"calibration", calibration}}
                 .dump(2)
          << '\n';
    };
  }

  if (!handler) {
    out << app.help();
    return 0;
  }

  write_status(status_path, command, "running");
  try {
    handler();
  } catch (const Error& e) {
    err << e.what() << '\n';
    log_event(LogLevel::error, "command failed",
              {{"command", command}, {"error", e.what()}});
    write_status(status_path, command, "failed", e.what());
    return 1;
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    write_status(status_path, command, "failed", e.what());
    return 1;
  }
  if (interrupted()) {
    write_status(status_path, command, "interrupted");
    return 1;
  }
  write_status(status_path, command, "done");
  return 0;
}

}  // namespace longvid
