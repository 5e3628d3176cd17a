#include <doctest.h>

#include <cmath>
#include <random>

#include "longvid/error.hpp"
#include "longvid/gateway.hpp"

using namespace longvid;

TEST_CASE("answer_confidence is exp of the span mean") {
  // Two tokens at -ln 2: geometric mean probability is exactly 1/2.
  std::vector<double> lps{-std::log(2.0), -std::log(2.0)};
  CHECK(answer_confidence(lps, {0, 2}) == 0.5);

  // All-zero logprobs mean certain tokens.
  std::vector<double> zeros(7, 0.0);
  CHECK(answer_confidence(zeros, {0, 7}) == 1.0);
}

TEST_CASE("answer_confidence matches a separately-accumulated mean") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lp(-9.0, 0.0);
  for (int trial = 0; trial < 2000; ++trial) {
    size_t n = 1 + rng() % 40;
    std::vector<double> lps(n);
    for (auto& x : lps) x = lp(rng);
    // Kahan summation as the independent path.
    double sum = 0.0, c = 0.0;
    for (double x : lps) {
      double y = x - c;
      double t = sum + y;
      c = (t - sum) - y;
      sum = t;
    }
    double want = std::exp(sum / static_cast<double>(n));
    double got = answer_confidence(lps, {0, n});
    CHECK(std::abs(got - want) < 1e-12);
    CHECK(got > 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("lowering any token logprob lowers confidence") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> lp(-5.0, -0.01);
  for (int trial = 0; trial < 500; ++trial) {
    size_t n = 2 + rng() % 10;
    std::vector<double> lps(n);
    for (auto& x : lps) x = lp(rng);
    double base = answer_confidence(lps, {0, n});
    size_t idx = rng() % n;
    lps[idx] -= 0.5 + lp(rng) * -1.0;
    CHECK(answer_confidence(lps, {0, n}) < base);
  }
}

TEST_CASE("empty or out-of-range spans are rejected") {
  std::vector<double> lps{-1.0, -2.0};
  CHECK_THROWS_AS(answer_confidence(lps, {1, 1}), Error);
  CHECK_THROWS_AS(answer_confidence(lps, {0, 3}), Error);
  CHECK_THROWS_AS(answer_confidence({}, {0, 0}), Error);
}

TEST_CASE("extract_answer priority order") {
  std::vector<char> opts{'A', 'B', 'C', 'D'};
  CHECK(extract_answer("thinking...\n<answer>C</answer>", opts) == 'C');
  CHECK(extract_answer("<answer> b </answer>", opts) == 'B');
  CHECK(extract_answer("Best option: (B)", opts) == 'B');
  CHECK(extract_answer("Best option: D.", opts) == 'D');
  // The block wins over a later "Best option:".
  CHECK(extract_answer("<answer>A</answer> Best option: B", opts) == 'A');
  // Standalone letter token as a last resort.
  CHECK(extract_answer("I would pick B. here", opts) == 'B');
  CHECK(extract_answer("the answer is (c)", opts) == 'C');
  CHECK_FALSE(extract_answer("no option named here", opts).has_value());
  CHECK_FALSE(extract_answer("", opts).has_value());
  // E is not among the options.
  CHECK_FALSE(extract_answer("<answer>E</answer>", opts).has_value());
}

TEST_CASE("find_answer_span maps letter tokens") {
  GenerationOutput out;
  out.text = "reason <answer>B</answer>";
  out.tokens = std::vector<std::string>{"reason ", "<answer", ">", "B", "</answer", ">"};
  out.token_logprobs = std::vector<double>{-0.5, -0.1, -0.1, -0.25, -0.1, -0.1};
  auto span = find_answer_span(out);
  REQUIRE(span.has_value());
  CHECK(span->begin == 3);
  CHECK(span->end == 4);
  CHECK(output_confidence(out, ConfidenceSpanMode::answer_tokens) ==
        doctest::Approx(std::exp(-0.25)));
  // all_tokens mode averages the whole sequence.
  CHECK(output_confidence(out, ConfidenceSpanMode::all_tokens) ==
        doctest::Approx(std::exp((-0.5 - 0.1 - 0.1 - 0.25 - 0.1 - 0.1) / 6.0)));
}

TEST_CASE("output_confidence degrades to 0 without logprobs") {
  GenerationOutput out;
  out.text = "<answer>A</answer>";
  CHECK(output_confidence(out, ConfidenceSpanMode::answer_tokens) == 0.0);
}

TEST_CASE("scripted logprobs without tokens are treated as the answer span") {
  GenerationOutput out;
  out.text = "<answer>A</answer>";
  out.token_logprobs = std::vector<double>{std::log(0.7)};
  CHECK(output_confidence(out, ConfidenceSpanMode::answer_tokens) ==
        doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("scripted backend consumes entries in order and enforces matches") {
  std::vector<ScriptEntry> entries;
  entries.push_back({"", std::nullopt, false, "first", std::nullopt});
  entries.push_back({"", std::nullopt, false, "second", std::nullopt});
  ScriptedChatBackend backend(entries);
  std::vector<ChatMessage> convo{ChatMessage::from_text(Role::user, "hello")};
  CHECK(backend.generate(convo, {}).text == "first");
  CHECK(backend.generate(convo, {}).text == "second");
  CHECK(backend.calls() == 2);
  CHECK_THROWS_AS(backend.generate(convo, {}), Error);  // script exhausted
  backend.reset();
  CHECK(backend.generate(convo, {}).text == "first");
}

TEST_CASE("scripted backend match and turn gating") {
  std::vector<ScriptEntry> entries;
  entries.push_back({"question one", 0, true, "q1 turn0", std::nullopt});
  entries.push_back({"question one", 1, true, "q1 turn1", std::nullopt});
  entries.push_back({"question two", 0, true, "q2 turn0", std::nullopt});
  ScriptedChatBackend backend(entries);

  std::vector<ChatMessage> convo2{ChatMessage::from_text(Role::user, "about question two")};
  CHECK(backend.generate(convo2, {}).text == "q2 turn0");

  std::vector<ChatMessage> convo1{ChatMessage::from_text(Role::user, "about question one")};
  CHECK(backend.generate(convo1, {}).text == "q1 turn0");
  convo1.push_back(ChatMessage::from_text(Role::assistant, "call"));
  convo1.push_back(ChatMessage::from_text(Role::tool, "observation"));
  CHECK(backend.generate(convo1, {}).text == "q1 turn1");
  // Reusable entries can serve a rerun of the same conversation.
  std::vector<ChatMessage> again{ChatMessage::from_text(Role::user, "about question one")};
  CHECK(backend.generate(again, {}).text == "q1 turn0");

  std::vector<ChatMessage> unknown{ChatMessage::from_text(Role::user, "mystery")};
  CHECK_THROWS_AS(backend.generate(unknown, {}), Error);
}

TEST_CASE("script files validate logprob signs") {
  nlohmann::json bad = nlohmann::json::array({{{"text", "x"}, {"logprobs", {0.5}}}});
  CHECK_THROWS_AS(parse_script(bad, "test"), Error);
  nlohmann::json good = nlohmann::json::array({{{"text", "x"}, {"logprobs", {-0.5, 0.0}}}});
  auto entries = parse_script(good, "test");
  REQUIRE(entries.size() == 1);
  REQUIRE(entries[0].logprobs.has_value());
  CHECK(entries[0].logprobs->size() == 2);
}

namespace {

// Transport double with a programmable response sequence.
struct FakeTransport : HttpTransport {
  std::vector<HttpResponse> responses;
  std::vector<std::string> bodies;
  size_t cursor = 0;
  int connection_failures = 0;

  HttpResponse post_json(const std::string&, const std::string& body) override {
    bodies.push_back(body);
    if (connection_failures > 0) {
      --connection_failures;
      throw Error(Errc::backend_error, "connection refused");
    }
    if (cursor >= responses.size()) throw Error(Errc::backend_error, "no scripted response");
    return responses[cursor++];
  }
};

std::string ok_completion(const std::string& text, bool with_logprobs) {
  nlohmann::json msg{{"role", "assistant"}, {"content", text}};
  nlohmann::json choice{{"message", msg}};
  if (with_logprobs) {
    choice["logprobs"] = {
        {"content", nlohmann::json::array({{{"token", text}, {"logprob", -0.3}}})}};
  }
  nlohmann::json body{{"choices", nlohmann::json::array({choice})}};
  return body.dump();
}

}  // namespace

TEST_CASE("http backend builds a chat-completions request with frame parts") {
  auto transport = std::make_unique<FakeTransport>();
  auto* raw = transport.get();
  raw->responses.push_back({200, ok_completion("hi", false)});
  HttpBackendConfig cfg;
  cfg.model_name = "test-model";
  cfg.retry.base_delay_ms = 0;
  HttpChatBackend backend(std::move(transport), cfg);

  ChatMessage user;
  user.role = Role::user;
  user.append_video({"v1", {0.0, 10.0}, 2});
  user.append_text("Question: what happens?");
  GenerationParams params;
  params.temperature = 0.7;
  params.want_logprobs = true;
  CHECK(backend.generate({user}, params).text == "hi");

  REQUIRE(raw->bodies.size() == 1);
  nlohmann::json req = nlohmann::json::parse(raw->bodies[0]);
  CHECK(req["model"] == "test-model");
  CHECK(req["temperature"] == 0.7);
  CHECK(req["logprobs"] == true);
  REQUIRE(req["messages"].size() == 1);
  const auto& content = req["messages"][0]["content"];
  REQUIRE(content.is_array());
  REQUIRE(content.size() == 3);  // 2 frames + 1 text
  CHECK(content[0]["type"] == "image_url");
  CHECK(content[0]["image_url"]["url"] == "video://v1#t=2.5");
  CHECK(content[1]["image_url"]["url"] == "video://v1#t=7.5");
  CHECK(content[2]["type"] == "text");
}

TEST_CASE("http backend retries transient failures with a bounded budget") {
  auto transport = std::make_unique<FakeTransport>();
  auto* raw = transport.get();
  raw->connection_failures = 99;  // never recovers
  HttpBackendConfig cfg;
  cfg.retry.max_attempts = 3;
  cfg.retry.base_delay_ms = 0;
  HttpChatBackend backend(std::move(transport), cfg);
  std::vector<ChatMessage> convo{ChatMessage::from_text(Role::user, "x")};
  try {
    backend.generate(convo, {});
    FAIL("expected backend error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::backend_error);
    CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
  }
  CHECK(raw->bodies.size() == 3);
}

TEST_CASE("http backend recovers when a retry succeeds") {
  auto transport = std::make_unique<FakeTransport>();
  auto* raw = transport.get();
  raw->responses.push_back({500, "oops"});
  raw->responses.push_back({429, "slow down"});
  raw->responses.push_back({200, ok_completion("ok now", true)});
  HttpBackendConfig cfg;
  cfg.retry.max_attempts = 3;
  cfg.retry.base_delay_ms = 0;
  HttpChatBackend backend(std::move(transport), cfg);
  std::vector<ChatMessage> convo{ChatMessage::from_text(Role::user, "x")};
  GenerationParams params;
  params.want_logprobs = true;
  GenerationOutput out = backend.generate(convo, params);
  CHECK(out.text == "ok now");
  REQUIRE(out.token_logprobs.has_value());
  CHECK((*out.token_logprobs)[0] == -0.3);
  CHECK(raw->bodies.size() == 3);
}

TEST_CASE("http 4xx fails immediately") {
  auto transport = std::make_unique<FakeTransport>();
  auto* raw = transport.get();
  raw->responses.push_back({400, "bad request"});
  HttpBackendConfig cfg;
  cfg.retry.base_delay_ms = 0;
  HttpChatBackend backend(std::move(transport), cfg);
  std::vector<ChatMessage> convo{ChatMessage::from_text(Role::user, "x")};
  CHECK_THROWS_AS(backend.generate(convo, {}), Error);
  CHECK(raw->bodies.size() == 1);
}

TEST_CASE("strict logprobs surfaces logprobs_unavailable") {
  auto transport = std::make_unique<FakeTransport>();
  auto* raw = transport.get();
  raw->responses.push_back({200, ok_completion("text", false)});
  HttpBackendConfig cfg;
  cfg.strict_logprobs = true;
  cfg.retry.base_delay_ms = 0;
  HttpChatBackend backend(std::move(transport), cfg);
  std::vector<ChatMessage> convo{ChatMessage::from_text(Role::user, "x")};
  GenerationParams params;
  params.want_logprobs = true;
  try {
    backend.generate(convo, params);
    FAIL("expected logprobs_unavailable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::logprobs_unavailable);
  }
}

TEST_CASE("video placeholder rendering") {
  VideoClipPart part{"v3", {600.0, 610.0}, 8};
  CHECK(video_clip_placeholder(part) == "<video: 600-610, 8 frames>");
  ChatMessage m;
  m.role = Role::user;
  m.append_text("look:");
  m.append_video(part);
  CHECK(m.rendered_text() == "look:\n<video: 600-610, 8 frames>");
}
