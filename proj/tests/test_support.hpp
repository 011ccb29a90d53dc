#pragma once

/// @file test_support.hpp
/// @brief Shared fixtures: toy model, temp dirs, a scriptable chat stub.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "amulet/ngram.hpp"
#include "amulet/provider.hpp"
#include "httplib.h"
#include "json.hpp"

namespace amulet::testing {

inline std::string data_path(const std::string& name) {
  return std::string(AMULET_TEST_DATA_DIR) + "/" + name;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Order-4 model over the mixed-register corpus, trained once per process.
inline const NGramModel& toy_model() {
  static const NGramModel model = train_ngram(read_text(data_path("mixed_corpus.txt")), 4, 0.1);
  return model;
}

inline std::shared_ptr<const LogprobProvider> toy_provider() {
  static const auto provider = std::make_shared<NGramProvider>(toy_model());
  return provider;
}

/// Distinct lowercase base prompts drawn from the corpus lexicon.
inline std::vector<std::string> lexicon_prompts(std::size_t n) {
  static const char* adj[] = {"red", "big", "old", "small", "quiet", "dark",
                              "warm", "cold", "green", "happy", "slow", "wild"};
  static const char* noun[] = {"cat", "dog", "fox", "bird", "horse", "river",
                               "tree", "house", "road", "ship", "king", "child"};
  static const char* lead[] = {"the ", "a ", "my "};
  std::vector<std::string> out;
  for (const char* l : lead) {
    for (const char* a : adj) {
      for (const char* w : noun) {
        if (out.size() == n) return out;
        out.push_back(std::string(l) + a + " " + w + " ");
      }
    }
  }
  return out;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("amulet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/**
 * Chat-completion endpoint on a loopback port. The reply function maps the
 * user prompt to the assistant content; it may also set an HTTP status.
 */
class ChatStub {
 public:
  using Reply = std::function<std::string(const std::string& prompt, int& status)>;

  explicit ChatStub(Reply reply) : reply_(std::move(reply)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      ++calls_;
      const auto body = nlohmann::json::parse(req.body);
      {
        std::lock_guard lock(mu_);
        last_request_ = body;
        auth_ = req.get_header_value("Authorization");
      }
      const std::string prompt = body["messages"][0]["content"];
      int status = 200;
      const std::string content = reply_(prompt, status);
      res.status = status;
      if (status == 200) {
        nlohmann::json out = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
        res.set_content(out.dump(), "application/json");
      } else {
        res.set_content(R"({"error":"stub"})", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ChatStub() {
    server_.stop();
    thread_.join();
  }

  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }
  int calls() const { return calls_; }
  nlohmann::json last_request() const {
    std::lock_guard lock(mu_);
    return last_request_;
  }
  std::string last_authorization() const {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  Reply reply_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
  mutable std::mutex mu_;
  nlohmann::json last_request_;
  std::string auth_;
};

/// Pulls the two response texts back out of a judge prompt.
inline std::pair<std::string, std::string> judge_outputs(const std::string& prompt) {
  const std::string t1 = "\"model\": \"model_1\",\n    \"text\": ";
  const std::string t2 = "\"model\": \"model_2\",\n    \"text\": ";
  const auto a = prompt.find(t1);
  const auto a_end = prompt.find("\n}\nText 2:", a);
  const auto b = prompt.find(t2);
  const auto b_end = prompt.find("\n}\nPlease rank", b);
  if (a == std::string::npos || b == std::string::npos || a_end == std::string::npos ||
      b_end == std::string::npos) {
    return {};
  }
  return {prompt.substr(a + t1.size(), a_end - a - t1.size()),
          prompt.substr(b + t2.size(), b_end - b - t2.size())};
}

}  // namespace amulet::testing
