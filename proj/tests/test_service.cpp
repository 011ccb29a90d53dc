#include <gtest/gtest.h>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <random>
#include <regex>

#include "amulet/decoder.hpp"
#include "amulet/service.hpp"
#include "httplib.h"
#include "json.hpp"
#include "test_support.hpp"

namespace amulet {
namespace {

using nlohmann::json;
using namespace std::chrono_literals;

struct SseEvent {
  std::string name;
  json data;
};

/// POSTs to a generate endpoint on a background thread and parses the
/// event stream as it arrives.
class SseStream {
 public:
  SseStream(int port, const std::string& path, const json& body) {
    thread_ = std::thread([this, port, path, body] {
      httplib::Client cli("127.0.0.1", port);
      cli.set_read_timeout(30, 0);
      httplib::Request req;
      req.method = "POST";
      req.path = path;
      req.body = body.dump();
      req.set_header("Content-Type", "application/json");
      req.content_receiver = [this](const char* data, std::size_t len, std::uint64_t,
                                    std::uint64_t) {
        std::lock_guard lock(mu_);
        buffer_.append(data, len);
        for (auto end = buffer_.find("\n\n"); end != std::string::npos;
             end = buffer_.find("\n\n")) {
          parse_block(buffer_.substr(0, end));
          buffer_.erase(0, end + 2);
        }
        cv_.notify_all();
        return !abort_;
      };
      httplib::Response res;
      httplib::Error err;
      cli.send(req, res, err);
      std::lock_guard lock(mu_);
      status_ = res.status;
      if (status_ != 200) error_body_ = res.body;
      finished_ = true;
      cv_.notify_all();
    });
  }
  ~SseStream() {
    abort();
    thread_.join();
  }

  /// Blocks until `n` token events arrived (or the stream ended).
  bool wait_tokens(std::size_t n, std::chrono::milliseconds timeout = 20s) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return tokens_ >= n || finished_; }) && tokens_ >= n;
  }
  std::vector<SseEvent> wait_done(std::chrono::milliseconds timeout = 30s) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return finished_; });
    return events_;
  }
  int status() {
    wait_done();
    std::lock_guard lock(mu_);
    return status_;
  }
  void abort() {
    std::lock_guard lock(mu_);
    abort_ = true;
  }

 private:
  void parse_block(const std::string& block) {
    SseEvent ev;
    std::istringstream in(block);
    for (std::string line; std::getline(in, line);) {
      if (line.rfind("event: ", 0) == 0) ev.name = line.substr(7);
      if (line.rfind("data: ", 0) == 0) ev.data = json::parse(line.substr(6));
    }
    if (ev.name == "token") ++tokens_;
    events_.push_back(std::move(ev));
  }

  std::thread thread_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::string buffer_;
  std::vector<SseEvent> events_;
  std::size_t tokens_ = 0;
  bool finished_ = false;
  bool abort_ = false;
  int status_ = 0;
  std::string error_body_;
};

std::vector<SseEvent> tokens_of(const std::vector<SseEvent>& events) {
  std::vector<SseEvent> out;
  for (const auto& e : events) {
    if (e.name == "token") out.push_back(e);
  }
  return out;
}

class ServiceTest : public ::testing::Test {
 protected:
  void start(std::chrono::milliseconds delay = 0ms) {
    ServiceOptions opts;
    opts.providers.emplace_back("toy", testing::toy_provider());
    opts.cors_origins = {"http://ui.local"};
    opts.token_delay = delay;
    service_ = std::make_unique<SteeringService>(std::move(opts));
    service_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", service_->port());
  }

  std::string create_session() {
    auto res = client_->Post("/sessions", "{}", "application/json");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    return json::parse(res->body)["id"];
  }

  httplib::Result patch(const std::string& id, const json& body) {
    return client_->Patch("/sessions/" + id, body.dump(), "application/json");
  }

  std::unique_ptr<SteeringService> service_;
  std::unique_ptr<httplib::Client> client_;
};

json steering_body(const std::string& base, const std::string& pref, std::size_t n) {
  return {{"base_prompt", base},    {"pref_prompt", pref},     {"method", "amulet"},
          {"max_new_tokens", n},    {"stop_on_eos", false}};
}

TEST_F(ServiceTest, Healthz) {
  start();
  auto res = client_->Get("/healthz");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["provider"], "toy");
  EXPECT_EQ(j["vocab_size"], testing::toy_provider()->vocab_size());
}

TEST_F(ServiceTest, SessionLifecycle) {
  start();
  const std::string id = create_session();
  EXPECT_TRUE(std::regex_match(id, std::regex("[0-9a-f]{32}")));
  EXPECT_NE(create_session(), id);
  EXPECT_EQ(service_->session_count(), 2u);

  auto del = client_->Delete("/sessions/" + id);
  ASSERT_TRUE(del);
  EXPECT_EQ(del->status, 204);
  EXPECT_EQ(client_->Delete("/sessions/" + id)->status, 404);
  EXPECT_EQ(service_->session_count(), 1u);

  auto bad = client_->Post("/sessions", R"({"provider":"nope"})", "application/json");
  EXPECT_EQ(bad->status, 400);
}

TEST_F(ServiceTest, UnknownSessionIs404Everywhere) {
  start();
  const std::string ghost = std::string(32, 'a');
  EXPECT_EQ(patch(ghost, {{"alpha", 1}})->status, 404);
  EXPECT_EQ(client_->Post("/sessions/" + ghost + "/cancel")->status, 404);
  EXPECT_EQ(client_->Post("/sessions/" + ghost + "/generate", "{}", "application/json")->status,
            404);
}

TEST_F(ServiceTest, PatchValidation) {
  start();
  const std::string id = create_session();
  EXPECT_EQ(patch(id, {{"alpha", -1}})->status, 422);
  EXPECT_EQ(patch(id, {{"alpha", 1e6}})->status, 422);
  EXPECT_EQ(patch(id, {{"eta", 0}})->status, 422);
  EXPECT_EQ(patch(id, {{"iterations", 0}})->status, 422);
  EXPECT_EQ(patch(id, {{"iterations", 2.5}})->status, 422);
  EXPECT_EQ(patch(id, {{"temperature", 1}})->status, 422);
  EXPECT_EQ(patch(id, {{"method", "beam"}})->status, 422);
  EXPECT_EQ(patch(id, {{"pref_prompt", "~~"}})->status, 422);
  EXPECT_EQ(client_->Patch("/sessions/" + id, "{", "application/json")->status, 400);

  auto ok = patch(id, {{"alpha", 0.5}, {"pref_prompt", "shout: "}});
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 200);
  EXPECT_EQ(json::parse(ok->body)["effective_from_token"], 0);
}

TEST_F(ServiceTest, StreamMatchesDirectGeneration) {
  start();
  const std::string id = create_session();
  const json body = steering_body("the cold ship ", "shout: ", 20);
  SseStream stream(service_->port(), "/sessions/" + id + "/generate", body);
  const auto events = stream.wait_done();
  ASSERT_EQ(stream.status(), 200);
  const auto toks = tokens_of(events);
  ASSERT_EQ(toks.size(), 20u);
  ASSERT_EQ(events.back().name, "done");
  EXPECT_EQ(events.back().data["finish_reason"], "length");
  EXPECT_EQ(events.back().data["tokens"], 20);

  GenerationRequest req;
  req.base_prompt = "the cold ship ";
  req.pref_prompt = "shout: ";
  req.max_new_tokens = 20;
  req.stop_on_eos = false;
  const auto direct = generate(req, testing::toy_provider());
  std::string streamed;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    EXPECT_EQ(toks[i].data["index"], i);
    EXPECT_EQ(toks[i].data["method"], "amulet");
    EXPECT_TRUE(toks[i].data["diag"].contains("iters_run"));
    EXPECT_TRUE(toks[i].data["diag"].contains("final_kl_step"));
    EXPECT_TRUE(toks[i].data["diag"].contains("kl_pi1_to_base"));
    streamed += toks[i].data["token_text"].get<std::string>();
  }
  EXPECT_EQ(streamed, direct.text);
}

TEST_F(ServiceTest, SecondGenerateWhileStreamingIs409) {
  start(20ms);
  const std::string id = create_session();
  SseStream stream(service_->port(), "/sessions/" + id + "/generate",
                   steering_body("the red fox ", "", 50));
  ASSERT_TRUE(stream.wait_tokens(1));
  auto res = client_->Post("/sessions/" + id + "/generate",
                           steering_body("the red fox ", "", 5).dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);
  EXPECT_EQ(client_->Post("/sessions/" + id + "/cancel")->status, 202);
}

TEST_F(ServiceTest, InvalidGenerateBodies) {
  start();
  const std::string id = create_session();
  auto res = client_->Post("/sessions/" + id + "/generate", "{", "application/json");
  EXPECT_EQ(res->status, 400);
  res = client_->Post("/sessions/" + id + "/generate",
                      json{{"base_prompt", "the "}, {"max_new_tokens", 0}}.dump(),
                      "application/json");
  EXPECT_EQ(res->status, 422);
  res = client_->Post("/sessions/" + id + "/generate",
                      json{{"base_prompt", "the "}, {"max_new_tokens", 100000}}.dump(),
                      "application/json");
  EXPECT_EQ(res->status, 422);
}

TEST_F(ServiceTest, MidStreamPreferencePatchTakesEffectAtAcknowledgedToken) {
  start(15ms);
  const std::string id = create_session();
  const json body = steering_body("the red fox ", "", 40);
  SseStream stream(service_->port(), "/sessions/" + id + "/generate", body);
  ASSERT_TRUE(stream.wait_tokens(6));
  auto ack = patch(id, {{"pref_prompt", "shout: "}});
  ASSERT_TRUE(ack);
  ASSERT_EQ(ack->status, 200);
  const std::size_t boundary = json::parse(ack->body)["effective_from_token"];
  EXPECT_GE(boundary, 6u);

  const auto toks = tokens_of(stream.wait_done());
  ASSERT_EQ(toks.size(), 40u);
  ASSERT_LT(boundary, 40u);
  const std::string before = toks.front().data["fingerprint"];
  const std::string after = toks.back().data["fingerprint"];
  EXPECT_NE(before, after);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    EXPECT_EQ(toks[i].data["fingerprint"], i < boundary ? before : after) << "token " << i;
  }

  // Replay: same request, preference switched before token `boundary`.
  GenerationRequest req;
  req.base_prompt = "the red fox ";
  req.max_new_tokens = 40;
  req.stop_on_eos = false;
  Decoder replay(testing::toy_provider(), req);
  for (std::size_t i = 0; i < boundary; ++i) replay.step();
  replay.set_pref_prompt("shout: ");
  while (replay.step()) {
  }
  for (std::size_t i = 0; i < toks.size(); ++i) {
    EXPECT_EQ(toks[i].data["token_id"], replay.result().tokens[i].id) << "token " << i;
  }
}

TEST_F(ServiceTest, AlphaZeroPatchContinuesLikePref) {
  start(15ms);
  const std::string id = create_session();
  SseStream stream(service_->port(), "/sessions/" + id + "/generate",
                   steering_body("a wild horse ", "shout: ", 40));
  ASSERT_TRUE(stream.wait_tokens(3));
  auto ack = patch(id, {{"alpha", 0}});
  ASSERT_EQ(ack->status, 200);
  const std::size_t boundary = json::parse(ack->body)["effective_from_token"];
  const auto toks = tokens_of(stream.wait_done());
  ASSERT_EQ(toks.size(), 40u);

  const auto provider = testing::toy_provider();
  DualContext ctx(provider->tokenize("a wild horse "), provider->tokenize("shout: "));
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const TokenId id_i = toks[i].data["token_id"];
    if (i >= boundary) {
      EXPECT_EQ(argmax(provider->next_logprobs(ctx.pref_context()).log_probs()), id_i)
          << "token " << i;
    }
    ctx = advance(ctx, provider->token(id_i));
  }
}

TEST_F(ServiceTest, CancelEndsTheStream) {
  start(10ms);
  const std::string id = create_session();
  SseStream stream(service_->port(), "/sessions/" + id + "/generate",
                   steering_body("the red fox ", "", 500));
  ASSERT_TRUE(stream.wait_tokens(2));
  EXPECT_EQ(client_->Post("/sessions/" + id + "/cancel")->status, 202);
  const auto events = stream.wait_done();
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(events.back().name, "done");
  EXPECT_EQ(events.back().data["finish_reason"], "cancelled");
  EXPECT_LT(tokens_of(events).size(), 500u);

  // The session is reusable afterwards.
  SseStream again(service_->port(), "/sessions/" + id + "/generate",
                  steering_body("the red fox ", "", 3));
  EXPECT_EQ(tokens_of(again.wait_done()).size(), 3u);
}

TEST_F(ServiceTest, ClientDisconnectReleasesTheSession) {
  start(10ms);
  const std::string id = create_session();
  {
    SseStream stream(service_->port(), "/sessions/" + id + "/generate",
                     steering_body("the red fox ", "", 500));
    ASSERT_TRUE(stream.wait_tokens(2));
    stream.abort();
  }
  bool reusable = false;
  for (int attempt = 0; attempt < 100 && !reusable; ++attempt) {
    SseStream again(service_->port(), "/sessions/" + id + "/generate",
                    steering_body("the red fox ", "", 2));
    reusable = again.status() == 200;
    if (!reusable) std::this_thread::sleep_for(20ms);
  }
  EXPECT_TRUE(reusable);
}

TEST_F(ServiceTest, IdlePatchAppliesToTheNextRun) {
  start();
  const std::string id = create_session();
  ASSERT_EQ(patch(id, {{"method", "pref"}, {"pref_prompt", "shout: "}})->status, 200);
  SseStream stream(service_->port(), "/sessions/" + id + "/generate",
                   json{{"base_prompt", "my green tree "}, {"max_new_tokens", 12}});
  const auto toks = tokens_of(stream.wait_done());
  ASSERT_FALSE(toks.empty());
  EXPECT_EQ(toks.front().data["method"], "pref");

  GenerationRequest req;
  req.base_prompt = "my green tree ";
  req.pref_prompt = "shout: ";
  req.method = method::Pref{};
  req.max_new_tokens = 12;
  std::string streamed;
  for (const auto& t : toks) streamed += t.data["token_text"].get<std::string>();
  EXPECT_EQ(streamed, generate(req, testing::toy_provider()).text);
}

TEST_F(ServiceTest, ConcurrentSessionsAreIsolated) {
  start(2ms);
  const auto prompts = testing::lexicon_prompts(6);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < prompts.size(); ++i) ids.push_back(create_session());

  std::vector<std::unique_ptr<SseStream>> streams;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    streams.push_back(std::make_unique<SseStream>(service_->port(), "/sessions/" + ids[i] + "/generate",
                                                  steering_body(prompts[i], "shout: ", 30)));
  }
  // Odd sessions get hammered with patches; even sessions must not notice.
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> alpha(0.0, 4.0);
  for (int round = 0; round < 20; ++round) {
    for (std::size_t i = 1; i < ids.size(); i += 2) {
      patch(ids[i], {{"alpha", alpha(rng)}, {"pref_prompt", round % 2 ? "" : "shout: "}});
    }
    std::this_thread::sleep_for(3ms);
  }
  for (std::size_t i = 0; i < ids.size(); i += 2) {
    const auto toks = tokens_of(streams[i]->wait_done());
    GenerationRequest req;
    req.base_prompt = prompts[i];
    req.pref_prompt = "shout: ";
    req.max_new_tokens = 30;
    req.stop_on_eos = false;
    std::string streamed;
    for (const auto& t : toks) streamed += t.data["token_text"].get<std::string>();
    EXPECT_EQ(streamed, generate(req, testing::toy_provider()).text) << prompts[i];
  }
  for (std::size_t i = 1; i < ids.size(); i += 2) {
    EXPECT_EQ(tokens_of(streams[i]->wait_done()).size(), 30u);
  }
}

TEST_F(ServiceTest, CorsHeadersForAllowedOrigin) {
  start();
  httplib::Headers allowed{{"Origin", "http://ui.local"}};
  auto res = client_->Get("/healthz", allowed);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://ui.local");

  httplib::Headers other{{"Origin", "http://evil.local"}};
  res = client_->Get("/healthz", other);
  EXPECT_FALSE(res->has_header("Access-Control-Allow-Origin"));

  res = client_->Options("/sessions", allowed);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("PATCH"), std::string::npos);
}

}  // namespace
}  // namespace amulet
