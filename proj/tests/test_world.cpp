#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "longvid/error.hpp"
#include "longvid/synthesis.hpp"
#include "longvid/util.hpp"
#include "longvid/world.hpp"

using namespace longvid;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("longvid-world-" + tag + "-" +
                                        std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }

  std::string str() const { return path.string(); }
};

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    files[fs::relative(entry.path(), root).string()] = read_file(entry.path().string());
  }
  return files;
}

WorldSpec small_spec() {
  WorldSpec spec;
  spec.seed = 11;
  spec.video_count = 4;
  spec.tasks_per_video = 2;
  spec.min_minutes = 2.0;
  spec.max_minutes = 6.0;
  spec.distractor_lines = 6;
  return spec;
}

const PlantedEventRef& event_ref(const World& world, const QATask& task) {
  return world.task_event.at(task.task_id);
}

}  // namespace

TEST_CASE("staircase profile rises to 0.9") {
  GammaProfile p = GammaProfile::staircase();
  CHECK(p.p_correct.back() == 0.9);
  for (size_t i = 1; i < p.p_correct.size(); ++i) {
    CHECK(p.p_correct[i] >= p.p_correct[i - 1]);
  }
}

TEST_CASE("spec validation rejects out-of-range settings") {
  CHECK_NOTHROW(validate_spec(WorldSpec{}));

  auto expect_config_error = [](WorldSpec spec) {
    CHECK_THROWS_AS_MESSAGE(validate_spec(spec), Error, "config error expected");
    try {
      validate_spec(spec);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::config_error);
    }
  };

  WorldSpec spec;
  spec.video_count = 0;
  expect_config_error(spec);

  spec = WorldSpec{};
  spec.option_count = 1;
  expect_config_error(spec);
  spec.option_count = 11;
  expect_config_error(spec);

  spec = WorldSpec{};
  spec.min_minutes = 0.5;  // 3 cells
  spec.tasks_per_video = 4;
  expect_config_error(spec);

  spec = WorldSpec{};
  spec.tool_gamma = 0.0;
  expect_config_error(spec);

  spec = WorldSpec{};
  spec.gamma_profile.p_correct[3] = 1.5;
  expect_config_error(spec);

  spec = WorldSpec{};
  spec.video_count = 50000;  // exceeds the unique-question capacity
  expect_config_error(spec);
}

TEST_CASE("spec json round-trip") {
  WorldSpec spec = small_spec();
  spec.tool_gamma = 0.5;
  spec.gamma_profile.p_correct[0] = 0.05;
  WorldSpec back = spec_from_json(spec_to_json(spec), "test");
  CHECK(spec_to_json(back) == spec_to_json(spec));
}

TEST_CASE("same spec generates byte-identical bundles") {
  TempDir a("gen-a"), b("gen-b");
  save_world(a.str(), generate_world(small_spec()));
  save_world(b.str(), generate_world(small_spec()));

  auto ta = read_tree(a.path), tb = read_tree(b.path);
  REQUIRE(!ta.empty());
  REQUIRE(ta.size() == tb.size());
  for (const auto& [rel, bytes] : ta) {
    INFO("file ", rel);
    REQUIRE(tb.count(rel) == 1);
    CHECK(bytes == tb[rel]);
  }
}

TEST_CASE("world save/load round-trips the observable state") {
  World world = generate_world(small_spec());
  TempDir dir("roundtrip");
  save_world(dir.str(), world);
  World loaded = load_world(dir.str());

  CHECK(spec_to_json(loaded.spec) == spec_to_json(world.spec));
  REQUIRE(loaded.tasks.size() == world.tasks.size());
  for (size_t i = 0; i < world.tasks.size(); ++i) {
    CHECK(task_to_json(loaded.tasks[i]) == task_to_json(world.tasks[i]));
  }
  CHECK(script_to_json(loaded.direct_script) == script_to_json(world.direct_script));
  CHECK(script_to_json(loaded.tool_script) == script_to_json(world.tool_script));
  CHECK(loaded.task_gamma == world.task_gamma);

  REQUIRE(loaded.task_event.size() == world.task_event.size());
  for (const auto& [task_id, ref] : world.task_event) {
    REQUIRE(loaded.task_event.count(task_id) == 1);
    CHECK(loaded.task_event.at(task_id).video_id == ref.video_id);
    CHECK(loaded.task_event.at(task_id).interval == ref.interval);
  }

  for (const auto& [video_id, track] : world.store.tracks) {
    REQUIRE(loaded.store.tracks.count(video_id) == 1);
    CHECK(loaded.store.tracks.at(video_id).segments == track.segments);
  }

  // The reconstructed caption store behaves like the generated one.
  for (const QATask& task : world.tasks) {
    const PlantedEventRef& ref = event_ref(world, task);
    CHECK(loaded.captions.caption(ref.video_id, ref.interval) ==
          world.captions.caption(ref.video_id, ref.interval));
  }

  // Saving the loaded world reproduces the bundle file for file.
  TempDir again("resave");
  save_world(again.str(), loaded);
  auto ta = read_tree(dir.path), tb = read_tree(again.path);
  REQUIRE(ta.size() == tb.size());
  for (const auto& [rel, bytes] : ta) {
    INFO("file ", rel);
    CHECK(bytes == tb[rel]);
  }
}

TEST_CASE("questions are globally unique and answers match the oracle") {
  WorldSpec spec = small_spec();
  spec.video_count = 25;
  spec.tasks_per_video = 4;
  World world = generate_world(spec);
  REQUIRE(world.tasks.size() == 100);

  std::set<std::string> questions;
  std::set<char> answers;
  for (const QATask& task : world.tasks) {
    questions.insert(task.question);
    answers.insert(task.answer);
    CHECK(oracle_answer(world, task) == task.answer);
  }
  CHECK(questions.size() == world.tasks.size());
  CHECK(answers.size() > 1);  // correct letters are shuffled, not constant

  QATask stranger = world.tasks[0];
  stranger.task_id = "task-99999";
  CHECK_THROWS_AS(oracle_answer(world, stranger), Error);
}

TEST_CASE("caption store: coarse intervals stay vague, tight zooms reveal events") {
  World world = generate_world(small_spec());
  const QATask& task = world.tasks[0];
  const PlantedEventRef& ref = event_ref(world, task);
  const VideoManifest* man = world.catalog.find(ref.video_id);
  REQUIRE(man != nullptr);

  const std::string zoomed = world.captions.caption(ref.video_id, ref.interval);
  CHECK(zoomed.find("is wearing") != std::string::npos);
  const std::string& correct_text = task.find_option(task.answer)->text;
  CHECK(zoomed.find(correct_text) != std::string::npos);

  const std::string whole =
      world.captions.caption(ref.video_id, {0.0, man->meta.duration_s});
  CHECK(whole == man->background_caption);
  CHECK(whole.find("is wearing") == std::string::npos);
}

TEST_CASE("caption store joins overlapping events in temporal order") {
  EventCaptionStore store;
  store.set_background("v", "static noise");
  store.add_event("v", {{30.0, 40.0}, "second thing", std::nullopt, 'B'});
  store.add_event("v", {{10.0, 20.0}, "first thing", std::nullopt, 'A'});

  CHECK(store.caption("v", {12.0, 35.0}) == "first thing; second thing");
  CHECK(store.caption("v", {33.0, 34.0}) == "second thing");
  CHECK(store.caption("v", {21.0, 29.0}) == "static noise");
  CHECK(store.caption("v", {0.0, 120.0}) == "static noise");  // beyond the cutoff
  store.set_coarse_cutoff(200.0);
  CHECK(store.caption("v", {0.0, 120.0}) == "first thing; second thing");
}

TEST_CASE("planted cue subtitles sit inside their event cells") {
  World world = generate_world(small_spec());
  for (const QATask& task : world.tasks) {
    const PlantedEventRef& ref = event_ref(world, task);
    const auto* events = world.captions.events_for(ref.video_id);
    REQUIRE(events != nullptr);
    const PlantedEvent* planted = nullptr;
    for (const PlantedEvent& e : *events) {
      if (e.interval == ref.interval) planted = &e;
    }
    REQUIRE(planted != nullptr);
    REQUIRE(planted->subtitle.has_value());

    const SubtitleTrack& track = world.store.tracks.at(ref.video_id);
    bool found = false;
    for (const SubtitleSegment& seg : slice_track(track, ref.interval)) {
      if (seg.text == *planted->subtitle) {
        found = true;
        CHECK(seg.interval.start_s >= ref.interval.start_s);
        CHECK(seg.interval.end_s <= ref.interval.end_s);
      }
    }
    CHECK(found);
  }
}

TEST_CASE("questions retrieve their own event cell") {
  WorldSpec spec = small_spec();
  spec.seed = 3;
  spec.video_count = 25;
  spec.tasks_per_video = 4;
  spec.max_minutes = 20.0;
  World world = generate_world(spec);
  WorldEmbeddings emb(world);
  build_world_indexes(world, emb.provider);

  int clip_hits = 0, subtitle_hits = 0;
  for (const QATask& task : world.tasks) {
    const PlantedEventRef& ref = event_ref(world, task);
    const EmbeddingVector query = emb.provider.embed_text(task.question);

    auto clip_top = topk(world.store.clips.at(ref.video_id), query, 1);
    REQUIRE(clip_top.size() == 1);
    if (clip_top[0].interval == ref.interval) ++clip_hits;

    auto sub_top = topk(world.store.subtitles.at(ref.video_id), query, 1);
    REQUIRE(sub_top.size() == 1);
    if (ref.interval.overlaps(sub_top[0].interval)) ++subtitle_hits;
  }
  const double n = static_cast<double>(world.tasks.size());
  CHECK(clip_hits / n >= 0.95);
  CHECK(subtitle_hits / n >= 0.95);
}

TEST_CASE("scripted tool backend solves its tasks through the real loop") {
  World world = generate_world(small_spec());
  WorldEmbeddings emb(world);
  build_world_indexes(world, emb.provider);
  auto backend = make_tool_backend(world);

  ToolContext ctx;
  ctx.catalog = &world.catalog;
  ctx.store = &world.store;
  ctx.query_embedder = &emb.provider;
  ctx.captioner = &world.captions;

  const ToolRegistry registry = ToolRegistry::standard().without({"caption_zoom"});
  const PromptTemplate tmpl;
  ToolLoopOptions opt;
  opt.want_logprobs = true;

  for (const QATask& task : world.tasks) {
    CAPTURE(task.task_id);
    FrameBudget budget(64);
    ctx.budget = &budget;
    ToolLoopRun run = run_tool_loop(*backend, ctx, registry, tmpl, task,
                                    std::nullopt, opt);
    CHECK(run.final_answer == task.answer);
    CHECK_FALSE(run.forced);
    REQUIRE(run.steps.size() == 3);
    CHECK(run.steps[0].call.name == "subtitle_retrieval");
    CHECK(run.steps[1].call.name == "frame_zoom");
    CHECK(run.steps[1].call.interval_args() == event_ref(world, task).interval);
    CHECK(budget.used() == 8);
    CHECK(output_confidence(run.final_output, ConfidenceSpanMode::all_tokens) ==
          doctest::Approx(world.spec.tool_gamma).epsilon(1e-12));
  }
}

TEST_CASE("direct backend reports the drawn confidence") {
  World world = generate_world(small_spec());
  auto backend = make_direct_backend(world);
  const PromptTemplate tmpl;
  GenerationParams params;
  params.want_logprobs = true;

  for (const QATask& task : world.tasks) {
    std::vector<ChatMessage> messages = {
        ChatMessage::from_text(Role::system, tmpl.direct_system_text()),
        ChatMessage::from_text(Role::user, tmpl.direct_user_text(task))};
    GenerationOutput out = backend->generate(messages, params);
    const double gamma = output_confidence(out, ConfidenceSpanMode::all_tokens);
    CHECK(gamma == doctest::Approx(world.task_gamma.at(task.task_id)).epsilon(1e-12));
    auto letter = extract_answer(out.text, task.option_letters());
    REQUIRE(letter.has_value());
    CHECK(task.find_option(*letter) != nullptr);
  }
}

TEST_CASE("question routing agrees with the linear scripted backend") {
  WorldSpec spec = small_spec();
  spec.video_count = 6;
  spec.tasks_per_video = 3;
  World world = generate_world(spec);

  QuestionRoutedBackend routed(world.tool_script);
  ScriptedChatBackend linear(world.tool_script);
  const PromptTemplate tmpl;

  std::vector<QATask> order(world.tasks.begin(), world.tasks.end());
  std::reverse(order.begin(), order.end());  // not script order
  for (const QATask& task : order) {
    std::vector<ChatMessage> messages = {
        ChatMessage::from_text(Role::user, tmpl.task_user_text(task, std::nullopt))};
    for (int turn = 0; turn < 3; ++turn) {
      GenerationOutput a = routed.generate(messages, {});
      GenerationOutput b = linear.generate(messages, {});
      CHECK(a.text == b.text);
      CHECK(a.token_logprobs == b.token_logprobs);
      messages.push_back(ChatMessage::from_text(Role::assistant, a.text));
      messages.push_back(ChatMessage::from_text(Role::tool, "observation"));
    }
  }
  CHECK(routed.calls() == static_cast<int>(order.size()) * 3);

  routed.reset();
  CHECK(routed.calls() == 0);
}

TEST_CASE("question routing falls back to a scan and reports misses") {
  std::vector<ScriptEntry> entries;
  ScriptEntry keyed;
  keyed.match = "Question: what is planted?";
  keyed.text = "keyed";
  keyed.reusable = true;
  entries.push_back(keyed);
  ScriptEntry open;
  open.match = "anything";
  open.text = "fallback";
  open.reusable = true;
  entries.push_back(open);
  QuestionRoutedBackend backend(entries);

  auto ask = [&](const std::string& text) {
    std::vector<ChatMessage> messages = {ChatMessage::from_text(Role::user, text)};
    return backend.generate(messages, {}).text;
  };

  CHECK(ask("intro\nQuestion: what is planted?\noptions") == "keyed");
  CHECK(ask("no question line, but anything goes") == "fallback");
  // An unknown question line still reaches the linear scan.
  CHECK(ask("Question: never scripted\nbut anything matches") == "fallback");

  try {
    ask("Question: never scripted");
    FAIL("expected a script miss");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::backend_error);
  }
}

TEST_CASE("durations and distractors follow the requested settings") {
  WorldSpec spec = small_spec();
  spec.distractor_lines = 9;
  World world = generate_world(spec);
  CHECK(world.catalog.size() == static_cast<size_t>(spec.video_count));

  for (const VideoManifest* m : world.catalog.all()) {
    CHECK(m->meta.duration_s >= spec.min_minutes * 60.0);
    CHECK(m->meta.duration_s <= spec.max_minutes * 60.0);
    const SubtitleTrack& track = world.store.tracks.at(m->meta.video_id);
    CHECK(track.segments.size() ==
          static_cast<size_t>(spec.tasks_per_video + spec.distractor_lines));
    CHECK(std::is_sorted(track.segments.begin(), track.segments.end(),
                         [](const SubtitleSegment& a, const SubtitleSegment& b) {
                           return a.interval.start_s < b.interval.start_s;
                         }));
  }
}
