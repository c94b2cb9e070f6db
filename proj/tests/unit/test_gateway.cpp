#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include <fmt/format.h>

#include "difftune/errors.hpp"
#include "difftune/gateway.hpp"
#include "support/fakes.hpp"

using namespace difftune::gateway;
using difftune::testing::FakeTransport;
using difftune::testing::ScriptedClient;
using difftune::testing::TempDir;
using difftune::testing::wire_body;

namespace {

ChatRequest request(const std::string& user = "hello") {
  ChatRequest r;
  r.model = "test-model";
  r.messages = {{"system", "be brief"}, {"user", user}};
  r.temperature = 0.5;
  r.max_output_tokens = 64;
  return r;
}

GatewayConfig config() {
  GatewayConfig c;
  c.base_url = "http://localhost:1";
  c.api_key = "k";
  return c;
}

struct SleepLog {
  std::vector<std::chrono::milliseconds> waits;
  Sleeper sleeper() {
    return [this](std::chrono::milliseconds d) { waits.push_back(d); };
  }
};

std::string fnv_hex(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace

TEST(Wire, ShapeAndBudget) {
  auto r = request();
  r.max_reasoning_tokens = 4096;
  const auto w = request_to_wire(r);
  EXPECT_EQ(w["model"], "test-model");
  EXPECT_EQ(w["messages"].size(), 2U);
  EXPECT_EQ(w["messages"][1]["content"], "hello");
  EXPECT_EQ(w["temperature"], 0.5);
  EXPECT_EQ(w["max_tokens"], 64 + 4096);
  EXPECT_EQ(w["reasoning"]["max_tokens"], 4096);
  EXPECT_FALSE(request_to_wire(request()).contains("reasoning"));
}

TEST(Wire, ExtraFieldsMerge) {
  auto r = request();
  r.max_reasoning_tokens = 10;
  r.extra = {{"reasoning", {{"effort", "low"}}}, {"top_p", 0.9}};
  const auto w = request_to_wire(r);
  EXPECT_EQ(w["top_p"], 0.9);
  EXPECT_EQ(w["reasoning"], (nlohmann::json{{"effort", "low"}}));
}

TEST(Wire, RejectsBrokenRequests) {
  auto r = request();
  r.messages.clear();
  EXPECT_THROW(request_to_wire(r), difftune::InvalidArgument);
  r = request();
  r.messages.front().role = "assistant";
  EXPECT_THROW(request_to_wire(r), difftune::InvalidArgument);
  r = request();
  r.temperature = -1;
  EXPECT_THROW(request_to_wire(r), difftune::InvalidArgument);
  r = request();
  r.max_output_tokens = 0;
  EXPECT_THROW(request_to_wire(r), difftune::InvalidArgument);
}

TEST(Hash, CanonicalAndIndependent) {
  EXPECT_EQ(request_hash(request()), request_hash(request()));
  EXPECT_NE(request_hash(request()), request_hash(request("bye")));
  EXPECT_EQ(request_hash(request()), fnv_hex(request_to_wire(request()).dump()));
  EXPECT_EQ(fnv_hex(""), "cbf29ce484222325");
  EXPECT_EQ(request_hash(request()).size(), 16U);
}

TEST(ParseWire, ReadsFields) {
  const auto r = parse_wire_response(wire_body("hi there", "length"));
  EXPECT_EQ(r.content, "hi there");
  EXPECT_EQ(r.finish_reason, "length");
  EXPECT_EQ(r.usage, (Usage{11, 7, 18}));
  EXPECT_EQ(response_from_json(response_to_json(r)), r);
  EXPECT_THROW(parse_wire_response("not json"), difftune::MalformedResponse);
  EXPECT_THROW(parse_wire_response(R"({"choices": []})"), difftune::MalformedResponse);
}

TEST(Live, AuthMissingBeforeAnyCall) {
  auto transport = std::make_shared<FakeTransport>();
  auto c = config();
  c.api_key.clear();
  LiveClient client(c, transport);
  EXPECT_THROW(client.chat(request()), difftune::AuthMissing);
  EXPECT_EQ(transport->calls.load(), 0);
}

TEST(Live, CannedResponse) {
  auto transport = std::make_shared<FakeTransport>();
  transport->script.push_back({200, wire_body("the answer")});
  LiveClient client(config(), transport);
  EXPECT_EQ(client.chat(request()).content, "the answer");
  ASSERT_EQ(transport->calls.load(), 1);
  EXPECT_EQ(nlohmann::json::parse(transport->bodies[0]), request_to_wire(request()));
  bool auth = false;
  for (const auto& [k, v] : transport->headers[0]) auth |= k == "Authorization" && v == "Bearer k";
  EXPECT_TRUE(auth);
}

TEST(Live, PersistentRateLimit) {
  auto transport = std::make_shared<FakeTransport>();
  for (int i = 0; i < 5; ++i) transport->script.push_back({429, "{}"});
  SleepLog log;
  LiveClient client(config(), transport, log.sleeper());
  EXPECT_THROW(client.chat(request()), difftune::RateLimited);
  EXPECT_EQ(transport->calls.load(), 5);
  using std::chrono::milliseconds;
  EXPECT_EQ(log.waits, (std::vector<milliseconds>{milliseconds(1000), milliseconds(2000),
                                                  milliseconds(4000), milliseconds(8000)}));
}

TEST(Live, RecoversAfterServerErrors) {
  auto transport = std::make_shared<FakeTransport>();
  transport->script.push_back({503, ""});
  transport->script.push_back({429, ""});
  transport->script.push_back({200, wire_body("ok")});
  SleepLog log;
  LiveClient client(config(), transport, log.sleeper());
  EXPECT_EQ(client.chat(request()).content, "ok");
  EXPECT_EQ(log.waits.size(), 2U);
}

TEST(Live, ClientErrorFailsFast) {
  auto transport = std::make_shared<FakeTransport>();
  transport->script.push_back({400, R"({"error":"bad"})"});
  SleepLog log;
  LiveClient client(config(), transport, log.sleeper());
  EXPECT_THROW(client.chat(request()), difftune::TransportError);
  EXPECT_EQ(transport->calls.load(), 1);
}

TEST(Live, TransportFailuresExhaustRetries) {
  auto transport = std::make_shared<FakeTransport>();  // empty script: every call throws
  SleepLog log;
  LiveClient client(config(), transport, log.sleeper());
  EXPECT_THROW(client.chat(request()), difftune::TransportError);
  EXPECT_EQ(transport->calls.load(), 5);
}

TEST(Live, MalformedBody) {
  auto transport = std::make_shared<FakeTransport>();
  transport->script.push_back({200, "<html>"});
  LiveClient client(config(), transport, SleepLog().sleeper());
  EXPECT_THROW(client.chat(request()), difftune::MalformedResponse);
}

TEST(Mode, Names) {
  EXPECT_EQ(parse_mode("replay"), Mode::kReplay);
  EXPECT_EQ(to_string(Mode::kRecord), "record");
  EXPECT_THROW(parse_mode("offline"), difftune::InvalidArgument);
}

TEST(RecordReplay, RoundTripAndTranscript) {
  TempDir dir;
  auto scripted = std::make_shared<ScriptedClient>(std::vector<std::string>{"one", "two", "three"});
  const std::vector<ChatRequest> reqs = {request("a"), request("b"), request("a")};
  std::vector<ChatResponse> recorded;
  {
    RecordReplayClient rec(Mode::kRecord, dir / "store.jsonl", scripted, dir / "rec.txt");
    for (const auto& r : reqs) recorded.push_back(rec.chat(r));
  }
  EXPECT_EQ(recorded[0].content, "one");
  EXPECT_EQ(recorded[2].content, "three");

  auto transport = std::make_shared<FakeTransport>();
  auto live = std::make_shared<LiveClient>(config(), transport);
  RecordReplayClient rep(Mode::kReplay, dir / "store.jsonl", live, dir / "rep.txt");
  for (std::size_t i = 0; i < reqs.size(); ++i) EXPECT_EQ(rep.chat(reqs[i]), recorded[i]);
  EXPECT_EQ(transport->calls.load(), 0);
  EXPECT_EQ(difftune::testing::slurp(dir / "rec.txt"), difftune::testing::slurp(dir / "rep.txt"));
  EXPECT_FALSE(difftune::testing::slurp(dir / "rec.txt").empty());
  EXPECT_THROW(rep.chat(request("unseen")), difftune::ReplayMiss);
}

TEST(RecordReplay, StoreLinesCarryHash) {
  TempDir dir;
  auto scripted = std::make_shared<ScriptedClient>(std::vector<std::string>{"x"});
  RecordReplayClient rec(Mode::kRecord, dir / "store.jsonl", scripted);
  rec.chat(request());
  const auto line = nlohmann::json::parse(difftune::testing::slurp(dir / "store.jsonl"));
  EXPECT_EQ(line["request_hash"], request_hash(request()));
  EXPECT_EQ(line["response"]["content"], "x");
  EXPECT_TRUE(line.contains("request"));
}

TEST(RecordReplay, ReplayNeedsStore) {
  TempDir dir;
  EXPECT_ANY_THROW(RecordReplayClient(Mode::kReplay, dir / "missing.jsonl", nullptr));
}

TEST(RecordReplay, ReplayClientFactoryMakesNoNetworkClient) {
  TempDir dir;
  auto scripted = std::make_shared<ScriptedClient>(std::vector<std::string>{"cached"});
  {
    RecordReplayClient rec(Mode::kRecord, dir / "store.jsonl", scripted);
    rec.chat(request());
  }
  auto client = make_client(Mode::kReplay, dir / "store.jsonl");
  EXPECT_EQ(client->chat(request()).content, "cached");
}

TEST(RecordReplay, ConcurrentRecording) {
  TempDir dir;
  auto scripted = std::make_shared<ScriptedClient>(std::vector<std::string>{"r"});
  RecordReplayClient rec(Mode::kRecord, dir / "store.jsonl", scripted);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&rec, t] {
      for (int i = 0; i < 25; ++i) rec.chat(request(std::to_string(t * 100 + i)));
    });
  }
  for (auto& th : threads) th.join();
  const auto text = difftune::testing::slurp(dir / "store.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 100);
  RecordReplayClient rep(Mode::kReplay, dir / "store.jsonl", nullptr);
  EXPECT_EQ(rep.chat(request("307")).content, "r");
}
