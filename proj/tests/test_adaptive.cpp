#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "longvid/adaptive.hpp"
#include "longvid/error.hpp"
#include "longvid/world.hpp"

using namespace longvid;

namespace {

struct CapturingBackend : ChatBackend {
  std::vector<std::vector<ChatMessage>> calls;
  std::string reply = "<answer>A</answer>";
  std::vector<double> logprobs = {std::log(0.9)};

  std::string model_name() const override { return "capture"; }
  GenerationOutput generate(const std::vector<ChatMessage>& messages,
                            const GenerationParams&) override {
    calls.push_back(messages);
    GenerationOutput out;
    out.text = reply;
    out.token_logprobs = logprobs;
    return out;
  }
};

struct CellText : ClipTextSource {
  std::string clip_text(const std::string&, const TimeInterval& interval) const override {
    if (interval.start_s == 50.0) return "a zebra grazes by the fence";
    if (interval.start_s == 200.0) return "the zebra rests in the shade";
    if (interval.start_s == 410.0) return "a zebra drinks from the trough";
    return "nothing notable here";
  }
};

QATask toy_task(const std::string& video_id) {
  QATask task;
  task.task_id = "toy-1";
  task.video_id = video_id;
  task.question = "Where is the zebra hiding?";
  task.options = {{'A', "by the fence"}, {'B', "in the barn"}};
  task.answer = 'A';
  return task;
}

struct ToyFixture {
  VideoCatalog catalog;
  IndexStore store;
  CellText text;
  HashingEmbeddingProvider provider{128, 5, &text};
  std::shared_ptr<CapturingBackend> direct = std::make_shared<CapturingBackend>();
  std::shared_ptr<CapturingBackend> tool = std::make_shared<CapturingBackend>();

  ToyFixture() {
    VideoManifest short_v;
    short_v.meta = {"short-v", "virtual://short-v", 599.9, 1.0, VideoKind::virtual_manifest};
    catalog.add(short_v);
    VideoManifest long_v;
    long_v.meta = {"long-v", "virtual://long-v", 600.0, 1.0, VideoKind::virtual_manifest};
    catalog.add(long_v);
    store.clips["long-v"] = build_clip_index(catalog.require("long-v").meta, provider);
  }

  AdaptiveContext context() {
    AdaptiveContext ctx;
    ctx.catalog = &catalog;
    ctx.store = &store;
    ctx.query_embedder = &provider;
    ctx.direct_backend = direct;
    ctx.tool_backend = tool;
    return ctx;
  }
};

struct WorldFixture {
  World world;
  WorldEmbeddings emb;

  explicit WorldFixture(WorldSpec spec) : world(generate_world(spec)), emb(world) {
    build_world_indexes(world, emb.provider);
  }

  AdaptiveContext context() {
    AdaptiveContext ctx;
    ctx.catalog = &world.catalog;
    ctx.store = &world.store;
    ctx.query_embedder = &emb.provider;
    ctx.captioner = &world.captions;
    ctx.direct_backend = make_direct_backend(world);
    ctx.tool_backend = make_tool_backend(world);
    return ctx;
  }
};

WorldSpec eval_spec() {
  WorldSpec spec;
  spec.seed = 23;
  spec.video_count = 10;
  spec.tasks_per_video = 2;
  spec.min_minutes = 2.0;
  spec.max_minutes = 12.0;
  spec.distractor_lines = 5;
  return spec;
}

}  // namespace

TEST_CASE("policy validation rejects out-of-range knobs") {
  CHECK_NOTHROW(validate_policy(RunPolicy{}));
  auto rejected = [](RunPolicy p) {
    try {
      validate_policy(p);
      return false;
    } catch (const Error& e) {
      return e.code() == Errc::config_error;
    }
  };
  RunPolicy p;
  p.n = 0;
  CHECK(rejected(p));
  p = RunPolicy{};
  p.k = 0;
  CHECK(rejected(p));
  p = RunPolicy{};
  p.tau = -0.1;
  CHECK(rejected(p));
  p.tau = 1.1;
  CHECK(rejected(p));
  p = RunPolicy{};
  p.frame_budget = p.n - 1;  // budget cannot even cover the direct stage
  CHECK(rejected(p));
  p = RunPolicy{};
  p.duration_gate_s = 0.0;
  CHECK(rejected(p));
  p = RunPolicy{};
  p.max_tool_steps = 0;
  CHECK(rejected(p));
}

TEST_CASE("videos under the duration gate sample uniformly, no index needed") {
  ToyFixture fx;
  AdaptiveContext ctx = fx.context();
  RunPolicy policy;  // tau 0.7 < scripted 0.9 confidence, stays direct

  RunResult r = run_adaptive(ctx, policy, toy_task("short-v"));
  CHECK(r.mode == RunMode::direct);
  CHECK(r.frames_used == policy.n);
  CHECK(r.answer == 'A');
  CHECK(r.confidence == doctest::Approx(0.9).epsilon(1e-12));

  // One uniform clip part spanning the whole video.
  REQUIRE(fx.direct->calls.size() == 1);
  const ChatMessage& user = fx.direct->calls[0].back();
  int videos = 0;
  for (const MessagePart& part : user.parts) {
    if (part.kind != MessagePart::Kind::video) continue;
    ++videos;
    CHECK(part.video.frame_count == policy.n);
    CHECK(part.video.interval == TimeInterval{0.0, 599.9});
  }
  CHECK(videos == 1);
}

TEST_CASE("videos at the gate need a clip index and split frames over top-k") {
  ToyFixture fx;
  AdaptiveContext ctx = fx.context();
  RunPolicy policy;
  policy.k = 3;

  SUBCASE("missing index is a hard error") {
    fx.store.clips.erase("long-v");
    try {
      run_adaptive(ctx, policy, toy_task("long-v"));
      FAIL("expected index_missing");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::index_missing);
    }
  }

  SUBCASE("frames go to retrieved clips, remainder to the earliest") {
    RunResult r = run_adaptive(ctx, policy, toy_task("long-v"));
    CHECK(r.frames_used == 32);

    const ChatMessage& user = fx.direct->calls[0].back();
    std::vector<VideoClipPart> parts;
    for (const MessagePart& part : user.parts) {
      if (part.kind == MessagePart::Kind::video) parts.push_back(part.video);
    }
    REQUIRE(parts.size() == 3);  // 32 = 11 + 11 + 10 over three clips
    CHECK(parts[0].frame_count == 11);
    CHECK(parts[1].frame_count == 11);
    CHECK(parts[2].frame_count == 10);
    CHECK(std::is_sorted(parts.begin(), parts.end(),
                         [](const VideoClipPart& a, const VideoClipPart& b) {
                           return a.interval.start_s < b.interval.start_s;
                         }));
    // The planted zebra cells are what retrieval surfaces.
    for (const VideoClipPart& part : parts) {
      const double s = part.video_id == "long-v" ? part.interval.start_s : -1.0;
      CHECK((s == 50.0 || s == 200.0 || s == 410.0));
    }
  }

  SUBCASE("more requested clips than frames leaves later clips empty") {
    policy.n = 2;
    RunResult r = run_adaptive(ctx, policy, toy_task("long-v"));
    CHECK(r.frames_used == 2);
    const ChatMessage& user = fx.direct->calls[0].back();
    int videos = 0;
    for (const MessagePart& part : user.parts) {
      if (part.kind == MessagePart::Kind::video) {
        ++videos;
        CHECK(part.video.frame_count == 1);
      }
    }
    CHECK(videos == 2);  // third clip got nothing
  }
}

TEST_CASE("escalation is strict: confidence equal to tau stays direct") {
  WorldFixture fx(eval_spec());
  AdaptiveContext ctx = fx.context();
  const QATask& task = fx.world.tasks.front();

  RunPolicy policy;
  policy.tau = 0.0;  // never escalate; measure the confidence
  const double gamma = run_adaptive(ctx, policy, task).confidence;
  CHECK(gamma == doctest::Approx(fx.world.task_gamma.at(task.task_id)).epsilon(1e-12));
  REQUIRE(gamma > 0.0);
  REQUIRE(gamma < 1.0);

  policy.tau = gamma;
  RunResult at_tau = run_adaptive(ctx, policy, task);
  CHECK(at_tau.mode == RunMode::direct);
  CHECK(at_tau.tool_calls == 0);
  CHECK_FALSE(at_tau.tool_confidence.has_value());

  policy.tau = std::nextafter(gamma, 1.0);
  RunResult above = run_adaptive(ctx, policy, task);
  CHECK(above.mode == RunMode::escalated);
  CHECK(above.answer == task.answer);
  CHECK(above.tool_calls == 2);
  CHECK(above.confidence == doctest::Approx(gamma).epsilon(1e-12));
  REQUIRE(above.tool_confidence.has_value());
  CHECK(*above.tool_confidence ==
        doctest::Approx(fx.world.spec.tool_gamma).epsilon(1e-12));
  CHECK(above.frames_used == policy.n + policy.frame_zoom_target);
}

TEST_CASE("the frame budget caps both stages together") {
  WorldFixture fx(eval_spec());
  AdaptiveContext ctx = fx.context();
  const QATask& task = fx.world.tasks.front();

  RunPolicy policy;
  policy.tau = 1.0;  // always escalate
  policy.n = 60;
  policy.frame_budget = 64;  // leaves 4: not enough for a frame_zoom of 8

  RunResult r = run_adaptive(ctx, policy, task);
  CHECK(r.mode == RunMode::escalated);
  CHECK(r.frames_used == 60);  // the refused zoom debited nothing
  CHECK(r.frames_used <= policy.frame_budget);
  CHECK(r.answer == task.answer);  // script still answers after the failed zoom
  CHECK(r.tool_calls == 1);        // only the retrieval step succeeded
}

TEST_CASE("gate soundness across a whole world") {
  WorldFixture fx(eval_spec());
  AdaptiveContext ctx = fx.context();
  RunPolicy policy;

  EvalReport report = evaluate(ctx, policy, fx.world.tasks);
  CHECK(report.failed == 0);
  REQUIRE(report.rows.size() == fx.world.tasks.size());
  int escalated = 0;
  for (const TaskRow& row : report.rows) {
    const bool should = row.confidence < policy.tau;
    CHECK((row.mode == RunMode::escalated) == should);
    escalated += should;
    CHECK(row.frames_used <= policy.frame_budget);
    CHECK(row.confidence ==
          doctest::Approx(fx.world.task_gamma.at(row.task_id)).epsilon(1e-12));
  }
  CHECK(report.tool_rate ==
        doctest::Approx(static_cast<double>(escalated) / report.rows.size()));
}

TEST_CASE("evaluate is worker-count independent") {
  WorldFixture fx(eval_spec());
  RunPolicy policy;

  AdaptiveContext one = fx.context();
  EvalReport serial = evaluate(one, policy, fx.world.tasks, 1);
  AdaptiveContext four = fx.context();
  EvalReport parallel = evaluate(four, policy, fx.world.tasks, 4);

  CHECK(report_to_json(serial, true) == report_to_json(parallel, true));
}

TEST_CASE("summarize_rows buckets by duration and skips failures") {
  std::vector<TaskRow> rows(5);
  rows[0] = {"a", 100.0, 'A', 'A', true, 0.9, RunMode::direct, 32, 0, ""};
  rows[1] = {"b", 500.0, 'B', 'C', false, 0.4, RunMode::escalated, 40, 2, ""};
  rows[2] = {"c", 500.0, 'B', 'B', true, 0.8, RunMode::direct, 32, 0, ""};
  rows[3] = {"d", 1000.0, 'D', 'D', true, 0.95, RunMode::direct, 32, 0, ""};
  rows[4] = {"e", 50.0, 'A', std::nullopt, false, 0.0, RunMode::direct, 0, 0, "backend broke"};

  EvalReport r = summarize_rows(rows);
  CHECK(r.task_count == 5);
  CHECK(r.failed == 1);
  CHECK(*r.accuracy == doctest::Approx(0.75));
  CHECK(*r.accuracy_short == doctest::Approx(1.0));    // only row a
  CHECK(*r.accuracy_medium == doctest::Approx(0.5));   // rows b, c
  CHECK(*r.accuracy_long == doctest::Approx(1.0));     // row d
  CHECK(r.mean_frames == doctest::Approx(34.0));
  CHECK(r.tool_rate == doctest::Approx(0.25));

  EvalReport empty = summarize_rows({});
  CHECK_FALSE(empty.accuracy.has_value());
  CHECK_FALSE(empty.accuracy_short.has_value());
  CHECK(empty.mean_frames == 0.0);

  // Bucket edges: 120 and 900 are both medium.
  std::vector<TaskRow> edges(2);
  edges[0] = {"x", 120.0, 'A', 'A', true, 0.9, RunMode::direct, 8, 0, ""};
  edges[1] = {"y", 900.0, 'A', 'B', false, 0.9, RunMode::direct, 8, 0, ""};
  EvalReport er = summarize_rows(edges);
  CHECK_FALSE(er.accuracy_short.has_value());
  CHECK_FALSE(er.accuracy_long.has_value());
  CHECK(*er.accuracy_medium == doctest::Approx(0.5));
}

TEST_CASE("summary is order independent") {
  WorldFixture fx(eval_spec());
  RunPolicy policy;
  AdaptiveContext ctx = fx.context();
  EvalReport base = evaluate(ctx, policy, fx.world.tasks);

  std::vector<TaskRow> shuffled = base.rows;
  std::reverse(shuffled.begin(), shuffled.end());
  std::swap(shuffled[0], shuffled[shuffled.size() / 2]);
  EvalReport again = summarize_rows(shuffled);
  CHECK(report_to_json(base) == report_to_json(again));
}

TEST_CASE("calibration bins use tenth-wide confidence bins") {
  std::vector<TaskRow> rows(6);
  rows[0] = {"a", 100.0, 'A', 'A', true, 0.05, RunMode::direct, 8, 0, ""};
  rows[1] = {"b", 100.0, 'A', 'B', false, 0.5, RunMode::direct, 8, 0, ""};   // [0.5,0.6)
  rows[2] = {"c", 100.0, 'A', 'A', true, 0.59, RunMode::direct, 8, 0, ""};   // same bin
  rows[3] = {"d", 100.0, 'A', 'A', true, 1.0, RunMode::direct, 8, 0, ""};    // top bin
  rows[4] = {"e", 100.0, 'A', 'A', true, 0.95, RunMode::direct, 8, 0, ""};
  rows[5] = {"f", 100.0, 'A', 'A', true, 0.9, RunMode::direct, 8, 0, "boom"};  // skipped

  auto bins = calibration_bins(rows);
  CHECK(bins[0].count == 1);
  CHECK(*bins[0].accuracy == doctest::Approx(1.0));
  CHECK(bins[5].count == 2);
  CHECK(*bins[5].accuracy == doctest::Approx(0.5));
  CHECK(bins[9].count == 2);
  CHECK(*bins[9].accuracy == doctest::Approx(1.0));
  CHECK(bins[8].count == 0);
  CHECK_FALSE(bins[8].accuracy.has_value());
  int total = 0;
  for (const auto& bin : bins) total += bin.count;
  CHECK(total == 5);
}

TEST_CASE("tau sweep hits both extremes and stays monotone") {
  WorldFixture fx(eval_spec());
  RunPolicy base;
  auto factory = [&] { return fx.context(); };

  SweepResult result = sweep(factory, base, SweepAxis::tau,
                             {0.0, 0.25, 0.5, 0.75, 1.0}, fx.world.tasks, 2);
  REQUIRE(result.cells.size() == 5);
  for (const SweepCell& cell : result.cells) CHECK(cell.error.empty());
  CHECK(result.cells.front().report.tool_rate == 0.0);
  CHECK(result.cells.back().report.tool_rate == 1.0);
  for (size_t i = 1; i < result.cells.size(); ++i) {
    CHECK(result.cells[i].report.tool_rate >=
          result.cells[i - 1].report.tool_rate);
    CHECK(result.cells[i].report.mean_frames >=
          result.cells[i - 1].report.mean_frames);
  }

  const std::string csv = sweep_to_csv(result);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);  // header + 5 cells
  CHECK(csv.rfind("axis,value,tasks,failed,accuracy", 0) == 0);
  CHECK(csv.find("tau,0,") != std::string::npos);
  CHECK(csv.find("tau,1,") != std::string::npos);
}

TEST_CASE("n sweep pins mean frames when nothing escalates") {
  WorldFixture fx(eval_spec());
  RunPolicy base;
  base.tau = 0.0;
  auto factory = [&] { return fx.context(); };

  SweepResult result =
      sweep(factory, base, SweepAxis::n, {8, 16, 32}, fx.world.tasks);
  REQUIRE(result.cells.size() == 3);
  for (size_t i = 0; i < result.cells.size(); ++i) {
    CHECK(result.cells[i].error.empty());
    CHECK(result.cells[i].report.mean_frames ==
          doctest::Approx(result.cells[i].value));
  }
}

TEST_CASE("sweep cells are independent and bad values fail alone") {
  WorldFixture fx(eval_spec());
  RunPolicy base;
  auto factory = [&] { return fx.context(); };

  SweepResult result =
      sweep(factory, base, SweepAxis::k, {1.0, 0.0, 1.0}, fx.world.tasks);
  REQUIRE(result.cells.size() == 3);
  CHECK(result.cells[0].error.empty());
  CHECK_FALSE(result.cells[1].error.empty());  // k = 0 is rejected
  CHECK(result.cells[2].error.empty());
  CHECK(report_to_json(result.cells[0].report, true) ==
        report_to_json(result.cells[2].report, true));

  const std::string csv = sweep_to_csv(result);
  CHECK(csv.find("k,0,") != std::string::npos);
  CHECK(csv.find("k must be >= 1") != std::string::npos);
}

TEST_CASE("rows and reports serialize to json") {
  TaskRow row{"t", 250.0, 'B', 'B', true, 0.81, RunMode::escalated, 40, 2, ""};
  nlohmann::json j = row_to_json(row);
  CHECK(j["task_id"] == "t");
  CHECK(j["answer"] == "B");
  CHECK(j["mode"] == "escalated");
  CHECK_FALSE(j.contains("error"));

  row.answer = std::nullopt;
  row.error = "no answer";
  j = row_to_json(row);
  CHECK(j["answer"].is_null());
  CHECK(j["error"] == "no answer");

  EvalReport report = summarize_rows({row});
  nlohmann::json rj = report_to_json(report, true);
  CHECK(rj["tasks"] == 1);
  CHECK(rj["failed"] == 1);
  CHECK(rj["accuracy"].is_null());
  REQUIRE(rj["rows"].size() == 1);

  nlohmann::json without_rows = report_to_json(report);
  CHECK_FALSE(without_rows.contains("rows"));
}

TEST_CASE("sweep axis names round-trip") {
  CHECK(sweep_axis_from_name("tau") == SweepAxis::tau);
  CHECK(sweep_axis_from_name("n") == SweepAxis::n);
  CHECK(sweep_axis_from_name("k") == SweepAxis::k);
  CHECK_FALSE(sweep_axis_from_name("gamma").has_value());
  CHECK(sweep_axis_name(SweepAxis::n) == std::string("n"));
}
