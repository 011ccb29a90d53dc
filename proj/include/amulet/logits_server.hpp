#pragma once

/**
 * @file logits_server.hpp
 * @brief Serves any LogprobProvider over the remote logits wire protocol.
 *
 * Endpoints (all bodies JSON, UTF-8):
 *
 *   GET  /v1/info        -> {"model": str, "vocab_size": int, "eos_id": int|null}
 *   POST /v1/logprobs    {"model": str, "context_ids": [int], "vocab_size": int}
 *                        -> {"logprobs": [float; vocab_size]}   natural log
 *   POST /v1/tokenize    {"text": str} -> {"ids": [int]}
 *   POST /v1/detokenize  {"ids": [int]} -> {"text": str}
 *
 * Client errors are HTTP 4xx with {"error": str}. A request whose vocab_size
 * disagrees with the served vocabulary is rejected with 409.
 */

#include <memory>
#include <string>
#include <thread>

#include "amulet/provider.hpp"

namespace httplib {
class Server;
}

namespace amulet {

class LogitsServer {
 public:
  LogitsServer(std::shared_ptr<const LogprobProvider> provider, std::string model_name);
  ~LogitsServer();

  LogitsServer(const LogitsServer&) = delete;
  LogitsServer& operator=(const LogitsServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  int port() const noexcept { return port_; }
  std::string url() const;

 private:
  void install_routes();

  std::shared_ptr<const LogprobProvider> provider_;
  std::string model_name_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = -1;
};

}  // namespace amulet
