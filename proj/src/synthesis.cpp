#include "longvid/synthesis.hpp"

#include <algorithm>
#include <set>

#include "longvid/error.hpp"
#include "longvid/log.hpp"
#include "longvid/util.hpp"

namespace longvid {

namespace {

char parse_letter(const nlohmann::json& j, const char* key, const std::string& source) {
  if (!j.contains(key) || !j[key].is_string()) {
    raise(Errc::parse_error, source + ": missing string field '" + key + "'");
  }
  const std::string s = j[key].get<std::string>();
  if (s.size() != 1 || !std::isalpha(static_cast<unsigned char>(s[0]))) {
    raise(Errc::parse_error, source + ": '" + key + "' must be a single letter");
  }
  return static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
}

std::string require_string(const nlohmann::json& j, const char* key,
                           const std::string& source) {
  if (!j.contains(key) || !j[key].is_string()) {
    raise(Errc::parse_error, source + ": missing string field '" + key + "'");
  }
  return j[key].get<std::string>();
}

void require_schema(const nlohmann::json& j, const char* expected,
                    const std::string& source) {
  if (!j.contains("schema") || j["schema"] != expected) {
    raise(Errc::parse_error, source + ": expected schema '" + std::string(expected) + "'");
  }
}

std::string letter_str(char letter) { return std::string(1, letter); }

// Text before the first action block, i.e. the model's reasoning.
std::string thought_before(const std::string& text) {
  size_t p = std::min(text.find("<tool_call>"), text.find("<answer>"));
  if (p == std::string::npos) return trim(text);
  return trim(text.substr(0, p));
}

}  // namespace

std::vector<char> QATask::option_letters() const {
  std::vector<char> letters;
  letters.reserve(options.size());
  for (const QAOption& o : options) letters.push_back(o.letter);
  return letters;
}

const QAOption* QATask::find_option(char letter) const {
  for (const QAOption& o : options) {
    if (o.letter == letter) return &o;
  }
  return nullptr;
}

void validate_task(const QATask& task) {
  if (task.task_id.empty()) raise(Errc::invalid_argument, "task without task_id");
  if (task.video_id.empty()) {
    raise(Errc::invalid_argument, "task " + task.task_id + " without video_id");
  }
  if (task.options.size() < 2) {
    raise(Errc::invalid_argument, "task " + task.task_id + " needs at least 2 options");
  }
  std::set<char> letters;
  for (const QAOption& o : task.options) {
    if (!std::isalpha(static_cast<unsigned char>(o.letter))) {
      raise(Errc::invalid_argument, "task " + task.task_id + " has a non-letter option");
    }
    if (!letters.insert(o.letter).second) {
      raise(Errc::invalid_argument,
            "task " + task.task_id + " repeats option " + letter_str(o.letter));
    }
  }
  if (!letters.count(task.answer)) {
    raise(Errc::invalid_argument,
          "task " + task.task_id + " answer " + letter_str(task.answer) +
              " is not among its options");
  }
}

nlohmann::json task_to_json(const QATask& task) {
  nlohmann::json options = nlohmann::json::array();
  for (const QAOption& o : task.options) {
    options.push_back({{"letter", letter_str(o.letter)}, {"text", o.text}});
  }
  nlohmann::json j{{"schema", "qa-task/1"},
                   {"task_id", task.task_id},
                   {"video_id", task.video_id},
                   {"question", task.question},
                   {"options", options},
                   {"answer", letter_str(task.answer)}};
  if (task.initial_caption) j["initial_caption"] = *task.initial_caption;
  return j;
}

QATask task_from_json(const nlohmann::json& j, const std::string& source) {
  require_schema(j, "qa-task/1", source);
  QATask task;
  task.task_id = require_string(j, "task_id", source);
  task.video_id = require_string(j, "video_id", source);
  task.question = require_string(j, "question", source);
  if (!j.contains("options") || !j["options"].is_array()) {
    raise(Errc::parse_error, source + ": missing options array");
  }
  for (const auto& o : j["options"]) {
    QAOption opt;
    opt.letter = parse_letter(o, "letter", source);
    opt.text = require_string(o, "text", source);
    task.options.push_back(std::move(opt));
  }
  task.answer = parse_letter(j, "answer", source);
  if (j.contains("initial_caption") && j["initial_caption"].is_string()) {
    task.initial_caption = j["initial_caption"].get<std::string>();
  }
  validate_task(task);
  return task;
}

std::vector<QATask> load_tasks(const std::string& path) {
  std::vector<QATask> tasks;
  std::vector<std::string> lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      raise(Errc::parse_error, path + " line " + std::to_string(i + 1) + ": " + e.what());
    }
    tasks.push_back(task_from_json(j, path + " line " + std::to_string(i + 1)));
  }
  return tasks;
}

void save_tasks(const std::string& path, const std::vector<QATask>& tasks) {
  std::string out;
  for (const QATask& t : tasks) {
    out += task_to_json(t).dump();
    out += '\n';
  }
  write_file(path, out);
}

const char* payload_kind_name(PayloadKind kind) {
  switch (kind) {
    case PayloadKind::hits: return "hits";
    case PayloadKind::segments: return "segments";
    case PayloadKind::summary: return "summary";
    case PayloadKind::frames: return "frames";
    case PayloadKind::caption: return "caption";
  }
  return "summary";
}

std::optional<PayloadKind> payload_kind_from_name(std::string_view name) {
  if (name == "hits") return PayloadKind::hits;
  if (name == "segments") return PayloadKind::segments;
  if (name == "summary") return PayloadKind::summary;
  if (name == "frames") return PayloadKind::frames;
  if (name == "caption") return PayloadKind::caption;
  return std::nullopt;
}

int Trajectory::tool_step_count() const {
  int n = 0;
  for (const ReasoningStep& s : steps) {
    if (s.action == ReasoningStep::Action::tool_call) ++n;
  }
  return n;
}

void validate_trajectory(const Trajectory& traj, int max_steps) {
  int answers = 0;
  for (size_t i = 0; i < traj.steps.size(); ++i) {
    const ReasoningStep& s = traj.steps[i];
    if (s.action == ReasoningStep::Action::tool_call) {
      if (!s.observation) {
        raise(Errc::invalid_argument,
              "trajectory " + traj.task_id + ": tool step without observation");
      }
    } else {
      ++answers;
      if (i + 1 != traj.steps.size()) {
        raise(Errc::invalid_argument,
              "trajectory " + traj.task_id + ": answer step must be last");
      }
      if (s.observation) {
        raise(Errc::invalid_argument,
              "trajectory " + traj.task_id + ": answer step carries an observation");
      }
      if (s.answer != traj.final_answer) {
        raise(Errc::invalid_argument,
              "trajectory " + traj.task_id + ": answer step disagrees with final_answer");
      }
    }
  }
  if (answers > 1) {
    raise(Errc::invalid_argument, "trajectory " + traj.task_id + ": multiple answer steps");
  }
  if ((traj.final_answer != 0) != (answers == 1)) {
    raise(Errc::invalid_argument,
          "trajectory " + traj.task_id + ": final_answer and answer step disagree");
  }
  if (traj.tool_step_count() > max_steps) {
    raise(Errc::invalid_argument,
          "trajectory " + traj.task_id + ": exceeds max tool steps");
  }
}

namespace {

nlohmann::json step_to_json(const ReasoningStep& s) {
  nlohmann::json j;
  j["thought"] = s.thought;
  if (s.action == ReasoningStep::Action::tool_call) {
    j["action"] = "tool_call";
    j["call"] = {{"name", s.call.name}, {"arguments", s.call.arguments}};
    if (s.rewritten_from) j["rewritten_from"] = *s.rewritten_from;
    nlohmann::json obs;
    obs["tool"] = s.observation->tool;
    obs["kind"] = payload_kind_name(s.observation->kind);
    obs["rendered"] = s.observation->rendered;
    j["observation"] = obs;
  } else {
    j["action"] = "answer";
    j["answer"] = letter_str(s.answer);
  }
  return j;
}

ReasoningStep step_from_json(const nlohmann::json& j, const std::string& source) {
  ReasoningStep s;
  s.thought = require_string(j, "thought", source);
  const std::string action = require_string(j, "action", source);
  if (action == "tool_call") {
    s.action = ReasoningStep::Action::tool_call;
    if (!j.contains("call") || !j["call"].is_object()) {
      raise(Errc::parse_error, source + ": tool step without call");
    }
    s.call.name = require_string(j["call"], "name", source);
    s.call.arguments = j["call"].value("arguments", nlohmann::json::object());
    if (j.contains("rewritten_from")) {
      s.rewritten_from = j["rewritten_from"].get<std::string>();
    }
    if (!j.contains("observation") || !j["observation"].is_object()) {
      raise(Errc::parse_error, source + ": tool step without observation");
    }
    ToolResult obs;
    obs.tool = require_string(j["observation"], "tool", source);
    auto kind = payload_kind_from_name(j["observation"].value("kind", ""));
    if (!kind) raise(Errc::parse_error, source + ": unknown observation kind");
    obs.kind = *kind;
    obs.rendered = require_string(j["observation"], "rendered", source);
    if (obs.kind == PayloadKind::caption || obs.kind == PayloadKind::summary) {
      obs.text = obs.rendered;
    }
    s.observation = std::move(obs);
  } else if (action == "answer") {
    s.action = ReasoningStep::Action::answer;
    s.answer = parse_letter(j, "answer", source);
  } else {
    raise(Errc::parse_error, source + ": unknown step action '" + action + "'");
  }
  return s;
}

}  // namespace

nlohmann::json trajectory_to_json(const Trajectory& traj) {
  nlohmann::json steps = nlohmann::json::array();
  for (const ReasoningStep& s : traj.steps) steps.push_back(step_to_json(s));
  nlohmann::json j{{"schema", "trajectory/1"},
                   {"task_id", traj.task_id},
                   {"prompt_fingerprint", traj.prompt_fingerprint},
                   {"initial_caption", traj.initial_caption},
                   {"steps", steps},
                   {"correct", traj.correct},
                   {"forced", traj.forced},
                   {"sample_index", traj.sample_index},
                   {"temperature", traj.temperature}};
  if (traj.final_answer != 0) {
    j["final_answer"] = letter_str(traj.final_answer);
  } else {
    j["final_answer"] = nullptr;
  }
  return j;
}

Trajectory trajectory_from_json(const nlohmann::json& j, const std::string& source) {
  require_schema(j, "trajectory/1", source);
  Trajectory t;
  t.task_id = require_string(j, "task_id", source);
  t.prompt_fingerprint = require_string(j, "prompt_fingerprint", source);
  t.initial_caption = require_string(j, "initial_caption", source);
  if (!j.contains("steps") || !j["steps"].is_array()) {
    raise(Errc::parse_error, source + ": missing steps array");
  }
  for (const auto& s : j["steps"]) t.steps.push_back(step_from_json(s, source));
  if (j.contains("final_answer") && j["final_answer"].is_string()) {
    t.final_answer = parse_letter(j, "final_answer", source);
  }
  t.correct = j.value("correct", false);
  t.forced = j.value("forced", false);
  t.sample_index = j.value("sample_index", 0);
  t.temperature = j.value("temperature", 0.0);
  return t;
}

void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories) {
  std::string out;
  for (const Trajectory& t : trajectories) {
    out += trajectory_to_json(t).dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::vector<Trajectory> out;
  std::vector<std::string> lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      raise(Errc::parse_error, path + " line " + std::to_string(i + 1) + ": " + e.what());
    }
    out.push_back(trajectory_from_json(j, path + " line " + std::to_string(i + 1)));
  }
  return out;
}

namespace {

const char* param_type_name(ParamSpec::Type type) {
  switch (type) {
    case ParamSpec::Type::string: return "string";
    case ParamSpec::Type::number: return "number";
    case ParamSpec::Type::integer: return "integer";
  }
  return "string";
}

std::string options_block(const QATask& task) {
  std::string out = "Options:\n";
  for (const QAOption& o : task.options) {
    out += letter_str(o.letter);
    out += ". ";
    out += o.text;
    out += '\n';
  }
  return out;
}

std::string letters_list(const QATask& task) {
  std::string out;
  for (size_t i = 0; i < task.options.size(); ++i) {
    if (i) out += ", ";
    out += letter_str(task.options[i].letter);
  }
  return out;
}

}  // namespace

std::string PromptTemplate::system_text(const ToolRegistry& registry) const {
  std::string out =
      "You answer multiple-choice questions about a video by reasoning step by "
      "step and using tools.\n\nTools:\n";
  for (const ToolSpec& spec : registry.specs()) {
    out += "- " + spec.name + "(";
    for (size_t i = 0; i < spec.params.size(); ++i) {
      if (i) out += ", ";
      out += spec.params[i].name;
      out += ": ";
      out += param_type_name(spec.params[i].type);
    }
    out += "): " + spec.description + "\n";
  }
  out +=
      "\nTake exactly one action per turn. To use a tool, write:\n"
      "<tool_call>{\"name\": \"<tool_name>\", \"arguments\": {<parameters>}}</tool_call>\n"
      "When you are confident, answer with:\n"
      "<answer>X</answer>\n"
      "where X is the letter of the chosen option.";
  return out;
}

std::string PromptTemplate::task_user_text(
    const QATask& task, const std::optional<std::string>& initial_caption) const {
  std::string out = "Video: " + task.video_id + "\n";
  if (initial_caption && !initial_caption->empty()) {
    out += "Video summary: " + *initial_caption + "\n";
  }
  out += "Question: " + task.question + "\n";
  out += options_block(task);
  return out;
}

std::string PromptTemplate::direct_system_text() const {
  return "You answer multiple-choice questions about videos.";
}

std::string PromptTemplate::direct_user_text(const QATask& task) const {
  return "Question: " + task.question + "\n" + options_block(task) +
         "Output a single letter. Best option:";
}

std::string PromptTemplate::forced_answer_text(const QATask& task) const {
  return "Answer now. Reply with <answer>X</answer> where X is one of " +
         letters_list(task) + ".";
}

std::string prompt_fingerprint(const PromptTemplate& tmpl, const ToolRegistry& registry,
                               const QATask& task,
                               const std::optional<std::string>& initial_caption) {
  std::string material = tmpl.version;
  material += '\x1f';
  material += tmpl.system_text(registry);
  material += '\x1f';
  material += tmpl.task_user_text(task, initial_caption);
  return hex64(fnv1a64(material));
}

ToolLoopRun run_tool_loop(ChatBackend& backend, ToolContext& ctx,
                          const ToolRegistry& registry, const PromptTemplate& tmpl,
                          const QATask& task,
                          const std::optional<std::string>& initial_caption,
                          const ToolLoopOptions& opt) {
  if (opt.max_steps < 1) raise(Errc::invalid_argument, "max_steps must be >= 1");
  if (opt.failure_limit < 1) raise(Errc::invalid_argument, "failure_limit must be >= 1");

  std::vector<ChatMessage> messages;
  messages.push_back(ChatMessage::from_text(Role::system, tmpl.system_text(registry)));
  messages.push_back(
      ChatMessage::from_text(Role::user, tmpl.task_user_text(task, initial_caption)));

  GenerationParams params;
  params.temperature = opt.temperature;
  params.max_tokens = opt.max_tokens;
  params.want_logprobs = opt.want_logprobs;
  params.seed = opt.generation_seed;

  ToolLoopRun run;
  int tool_steps = 0;
  int consecutive_failures = 0;
  bool give_up = false;

  while (tool_steps < opt.max_steps && !give_up) {
    GenerationOutput gen = backend.generate(messages, params);
    ParsedAction act = parse_model_action(gen.text, registry);

    if (act.kind == ParsedAction::Kind::answer) {
      ReasoningStep step;
      step.action = ReasoningStep::Action::answer;
      step.thought = thought_before(gen.text);
      step.answer = act.answer;
      run.steps.push_back(std::move(step));
      run.final_answer = act.answer;
      run.final_output = std::move(gen);
      return run;
    }

    if (act.kind == ParsedAction::Kind::tool_call) {
      ToolCall exec = act.call;
      std::optional<std::string> rewritten_from;
      if (opt.rewrite_frame_zoom && exec.name == tool_names::frame_zoom) {
        exec.name = tool_names::caption_zoom;
        rewritten_from = tool_names::frame_zoom;
      }
      ToolResult result;
      bool failed = false;
      std::string failure;
      try {
        result = invoke_tool(ctx, exec);
      } catch (const Error& e) {
        if (e.code() == Errc::backend_error) throw;
        failed = true;
        failure = e.what();
      }
      messages.push_back(ChatMessage::from_text(Role::assistant, gen.text));
      if (failed) {
        // The failed attempt stays in the conversation so the model can
        // adjust, but it is not a trajectory step.
        messages.push_back(ChatMessage::from_text(Role::tool, "tool error: " + failure));
        if (++consecutive_failures >= opt.failure_limit) give_up = true;
        continue;
      }
      consecutive_failures = 0;
      messages.push_back(ChatMessage::from_text(Role::tool, result.rendered));
      ReasoningStep step;
      step.action = ReasoningStep::Action::tool_call;
      step.thought = thought_before(gen.text);
      step.call = std::move(exec);
      step.rewritten_from = std::move(rewritten_from);
      step.observation = std::move(result);
      run.steps.push_back(std::move(step));
      ++tool_steps;
      continue;
    }

    // none or malformed: echo the problem back and retry.
    messages.push_back(ChatMessage::from_text(Role::assistant, gen.text));
    std::string note = act.kind == ParsedAction::Kind::malformed
                           ? "invalid action: " + act.error
                           : "no action found; call a tool or answer";
    messages.push_back(ChatMessage::from_text(Role::tool, note));
    if (++consecutive_failures >= opt.failure_limit) give_up = true;
  }

  // Step budget exhausted or the model kept failing: force an answer.
  run.forced = true;
  messages.push_back(ChatMessage::from_text(Role::user, tmpl.forced_answer_text(task)));
  GenerationOutput gen = backend.generate(messages, params);
  std::optional<char> letter = extract_answer(gen.text, task.option_letters());
  if (letter) {
    ReasoningStep step;
    step.action = ReasoningStep::Action::answer;
    step.thought = gen.text.find("<answer>") != std::string::npos ? thought_before(gen.text)
                                                                  : trim(gen.text);
    step.answer = *letter;
    run.steps.push_back(std::move(step));
    run.final_answer = *letter;
  }
  run.final_output = std::move(gen);
  return run;
}

void validate_config(const SynthesisConfig& cfg) {
  if (cfg.max_steps < 1) raise(Errc::config_error, "max_steps must be >= 1");
  if (cfg.samples_per_task < 1) raise(Errc::config_error, "samples_per_task must be >= 1");
  if (cfg.max_keep_per_task < 0) raise(Errc::config_error, "max_keep_per_task must be >= 0");
  if (cfg.workers < 1) raise(Errc::config_error, "workers must be >= 1");
}

Trajectory synthesize_trajectory(const QATask& task, const SynthesisConfig& cfg,
                                 ChatBackend& reasoner, ToolContext& ctx,
                                 int sample_index) {
  validate_config(cfg);
  validate_task(task);
  if (!ctx.catalog) raise(Errc::config_error, "synthesis needs a video catalog");
  const VideoManifest& manifest = ctx.catalog->require(task.video_id);

  std::string caption;
  if (task.initial_caption) {
    caption = *task.initial_caption;
  } else {
    if (!ctx.captioner) raise(Errc::config_error, "synthesis needs a captioner");
    caption = ctx.captioner->caption(task.video_id, {0.0, manifest.meta.duration_s});
  }

  ToolRegistry registry = ToolRegistry::standard();
  ToolLoopOptions opt;
  opt.max_steps = cfg.max_steps;
  opt.temperature = cfg.temperature;
  opt.rewrite_frame_zoom = true;  // caption space only during synthesis
  opt.generation_seed =
      splitmix64(splitmix64(cfg.seed ^ fnv1a64(task.task_id)) +
                 static_cast<uint64_t>(sample_index));

  ToolLoopRun run = run_tool_loop(reasoner, ctx, registry, cfg.prompt, task, caption, opt);

  Trajectory traj;
  traj.task_id = task.task_id;
  traj.prompt_fingerprint = prompt_fingerprint(cfg.prompt, registry, task, caption);
  traj.initial_caption = caption;
  traj.steps = std::move(run.steps);
  traj.final_answer = run.final_answer;
  traj.correct = run.final_answer != 0 && run.final_answer == task.answer;
  traj.forced = run.forced;
  traj.sample_index = sample_index;
  traj.temperature = cfg.temperature;
  validate_trajectory(traj, cfg.max_steps);
  return traj;
}

SynthesisOutcome synthesize_dataset(const std::vector<QATask>& tasks,
                                    const SynthesisConfig& cfg, ChatBackend& reasoner,
                                    ToolContext& ctx) {
  validate_config(cfg);
  const int S = cfg.samples_per_task;
  const size_t units = tasks.size() * static_cast<size_t>(S);

  std::vector<std::optional<Trajectory>> results(units);
  std::vector<std::string> errors(units);
  parallel_for(units, cfg.workers, [&](size_t u) {
    if (interrupted()) {
      errors[u] = "interrupted";
      return;
    }
    const QATask& task = tasks[u / S];
    const int sample_index = static_cast<int>(u % S);
    try {
      results[u] = synthesize_trajectory(task, cfg, reasoner, ctx, sample_index);
    } catch (const std::exception& e) {
      errors[u] = e.what();
    }
  });

  SynthesisOutcome out;
  out.sampled = static_cast<int>(units);
  for (size_t ti = 0; ti < tasks.size(); ++ti) {
    const QATask& task = tasks[ti];
    std::vector<Trajectory> samples;
    for (int si = 0; si < S; ++si) {
      size_t u = ti * S + si;
      if (results[u]) {
        samples.push_back(std::move(*results[u]));
      } else {
        out.failures.push_back({task.task_id, si, errors[u]});
        log_event(LogLevel::warn, "trajectory sample failed",
                  {{"task_id", task.task_id},
                   {"sample_index", std::to_string(si)},
                   {"error", errors[u]}});
      }
    }

    std::vector<Trajectory> correct;
    std::set<std::string> seen;
    for (Trajectory& t : samples) {
      if (!t.correct) continue;
      Trajectory key_copy = t;
      key_copy.sample_index = -1;  // dedup on content, not sample slot
      if (!seen.insert(trajectory_to_json(key_copy).dump()).second) continue;
      correct.push_back(std::move(t));
    }
    if (!correct.empty()) {
      if (cfg.max_keep_per_task > 0 &&
          correct.size() > static_cast<size_t>(cfg.max_keep_per_task)) {
        correct.resize(cfg.max_keep_per_task);
      }
      for (Trajectory& t : correct) out.kept.push_back(std::move(t));
    } else if (!samples.empty()) {
      // No sample matched ground truth: keep one anyway, chosen by a seeded
      // uniform draw so reruns agree.
      const uint64_t selection_seed = splitmix64(cfg.seed ^ fnv1a64(task.task_id));
      Rng pick(selection_seed);
      const int idx = pick.below(static_cast<int>(samples.size()));
      out.fallbacks.push_back({task.task_id, selection_seed, samples[idx].sample_index});
      out.kept.push_back(std::move(samples[idx]));
    }
  }

  std::stable_sort(out.kept.begin(), out.kept.end(),
                   [](const Trajectory& a, const Trajectory& b) {
                     if (a.task_id != b.task_id) return a.task_id < b.task_id;
                     return a.sample_index < b.sample_index;
                   });
  return out;
}

TrainingRecord ground_trajectory(const Trajectory& traj, const QATask& task,
                                 const ToolRegistry& inference_registry,
                                 const GroundingConfig& cfg) {
  if (traj.final_answer == 0) {
    raise(Errc::invalid_argument,
          "trajectory " + traj.task_id + " has no final answer to ground");
  }
  if (cfg.video_frame_count < 1) {
    raise(Errc::config_error, "video_frame_count must be >= 1");
  }

  TrainingRecord record;
  record.task_id = traj.task_id;
  record.video_id = task.video_id;
  record.target_answer = traj.final_answer;

  record.messages.push_back(
      ChatMessage::from_text(Role::system, cfg.prompt.system_text(inference_registry)));
  record.messages.push_back(ChatMessage::from_text(
      Role::user, cfg.prompt.task_user_text(task, traj.initial_caption)));

  for (const ReasoningStep& step : traj.steps) {
    if (step.action == ReasoningStep::Action::answer) {
      std::string body = step.thought;
      if (!body.empty()) body += '\n';
      body += "<answer>" + std::string(1, step.answer) + "</answer>";
      record.messages.push_back(ChatMessage::from_text(Role::assistant, std::move(body)));
      continue;
    }

    ToolCall grounded = step.call;
    const bool was_caption = grounded.name == tool_names::caption_zoom;
    if (was_caption) grounded.name = tool_names::frame_zoom;

    std::string body = step.thought;
    if (!body.empty()) body += '\n';
    body += serialize_tool_call(grounded);
    record.messages.push_back(ChatMessage::from_text(Role::assistant, std::move(body)));

    ChatMessage obs;
    obs.role = Role::tool;
    if (was_caption) {
      // The caption text disappears; the segment itself goes in its place.
      VideoClipPart part;
      part.video_id = grounded.arguments.value("video_path", task.video_id);
      part.interval = grounded.interval_args();
      part.frame_count = cfg.video_frame_count;
      obs.append_video(std::move(part));
    } else {
      obs.append_text(step.observation ? step.observation->rendered : "");
    }
    record.messages.push_back(std::move(obs));
  }
  return record;
}

nlohmann::json record_to_json(const TrainingRecord& record) {
  nlohmann::json messages = nlohmann::json::array();
  for (const ChatMessage& m : record.messages) {
    nlohmann::json content = nlohmann::json::array();
    for (const MessagePart& p : m.parts) {
      if (p.kind == MessagePart::Kind::text) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        content.push_back({{"type", "video"},
                           {"video_id", p.video.video_id},
                           {"start_s", p.video.interval.start_s},
                           {"end_s", p.video.interval.end_s},
                           {"frame_count", p.video.frame_count}});
      }
    }
    messages.push_back({{"role", role_name(m.role)}, {"content", content}});
  }
  return nlohmann::json{{"schema", "training-record/1"},
                        {"task_id", record.task_id},
                        {"video_id", record.video_id},
                        {"messages", messages},
                        {"answer", std::string(1, record.target_answer)}};
}

TrainingRecord record_from_json(const nlohmann::json& j, const std::string& source) {
  require_schema(j, "training-record/1", source);
  TrainingRecord record;
  record.task_id = require_string(j, "task_id", source);
  record.video_id = require_string(j, "video_id", source);
  record.target_answer = parse_letter(j, "answer", source);
  if (!j.contains("messages") || !j["messages"].is_array()) {
    raise(Errc::parse_error, source + ": missing messages array");
  }
  for (const auto& m : j["messages"]) {
    auto role = role_from_name(require_string(m, "role", source));
    if (!role) raise(Errc::parse_error, source + ": unknown role");
    ChatMessage msg;
    msg.role = *role;
    if (!m.contains("content") || !m["content"].is_array()) {
      raise(Errc::parse_error, source + ": message without content array");
    }
    for (const auto& p : m["content"]) {
      const std::string type = require_string(p, "type", source);
      if (type == "text") {
        msg.append_text(require_string(p, "text", source));
      } else if (type == "video") {
        VideoClipPart part;
        part.video_id = require_string(p, "video_id", source);
        part.interval = {p.value("start_s", 0.0), p.value("end_s", 0.0)};
        part.frame_count = p.value("frame_count", 0);
        msg.append_video(std::move(part));
      } else {
        raise(Errc::parse_error, source + ": unknown content type '" + type + "'");
      }
    }
    record.messages.push_back(std::move(msg));
  }
  return record;
}

void save_records(const std::string& path, const std::vector<TrainingRecord>& records) {
  std::string out;
  for (const TrainingRecord& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<TrainingRecord> load_records(const std::string& path) {
  std::vector<TrainingRecord> out;
  std::vector<std::string> lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      raise(Errc::parse_error, path + " line " + std::to_string(i + 1) + ": " + e.what());
    }
    out.push_back(record_from_json(j, path + " line " + std::to_string(i + 1)));
  }
  return out;
}

namespace {

// Tool names mentioned by a record's assistant turns, via the same wire
// format the model emits.
std::vector<std::string> record_tool_names(const TrainingRecord& record) {
  std::vector<std::string> names;
  for (const ChatMessage& m : record.messages) {
    if (m.role != Role::assistant) continue;
    for (const MessagePart& p : m.parts) {
      if (p.kind != MessagePart::Kind::text) continue;
      size_t pos = 0;
      while ((pos = p.text.find("<tool_call>", pos)) != std::string::npos) {
        size_t start = pos + 11;
        size_t end = p.text.find("</tool_call>", start);
        if (end == std::string::npos) break;
        try {
          nlohmann::json j = nlohmann::json::parse(p.text.substr(start, end - start));
          if (j.contains("name") && j["name"].is_string()) {
            names.push_back(j["name"].get<std::string>());
          }
        } catch (const nlohmann::json::exception&) {
          // Unparseable block: not a tool call.
        }
        pos = end + 12;
      }
    }
  }
  return names;
}

}  // namespace

DatasetStats dataset_stats(const std::vector<TrainingRecord>& records,
                           const VideoCatalog& catalog) {
  DatasetStats stats;
  stats.record_count = static_cast<int>(records.size());
  long total_calls = 0;
  for (const TrainingRecord& r : records) {
    if (const VideoManifest* m = catalog.find(r.video_id)) {
      const double minutes = m->meta.duration_s / 60.0;
      int bin = minutes < 20.0 ? 0 : minutes < 40.0 ? 1 : minutes < 60.0 ? 2 : 3;
      ++stats.duration_bins[bin];
    }
    std::vector<std::string> names = record_tool_names(r);
    ++stats.tool_call_hist[static_cast<int>(names.size())];
    for (const std::string& n : names) ++stats.tool_usage[n];
    total_calls += static_cast<long>(names.size());
  }
  if (!records.empty()) {
    stats.mean_tool_calls = static_cast<double>(total_calls) / records.size();
  }
  return stats;
}

nlohmann::json stats_to_json(const DatasetStats& stats) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [calls, count] : stats.tool_call_hist) {
    hist[std::to_string(calls)] = count;
  }
  return nlohmann::json{
      {"record_count", stats.record_count},
      {"duration_bins_minutes",
       {{"0-20", stats.duration_bins[0]},
        {"20-40", stats.duration_bins[1]},
        {"40-60", stats.duration_bins[2]},
        {"60+", stats.duration_bins[3]}}},
      {"tool_call_hist", hist},
      {"tool_usage", stats.tool_usage},
      {"mean_tool_calls", stats.mean_tool_calls}};
}

}  // namespace longvid
