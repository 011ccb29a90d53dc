#pragma once

/**
 * @file service.hpp
 * @brief HTTP service for live-steered streaming generation.
 *
 *   POST   /sessions                 {"provider"?: spec}      -> {"id"}
 *   DELETE /sessions/{id}                                      -> 204
 *   POST   /sessions/{id}/generate   GenerationRequest JSON   -> text/event-stream
 *            event: token   data: {index, token_text, method, diag: {iters_run,
 *                                  final_kl_step, kl_pi1_to_base}, fingerprint, ...}
 *            event: error   data: {"error"}
 *            event: done    data: {"finish_reason", "tokens"}
 *   PATCH  /sessions/{id}            {pref_prompt?, alpha?, lambda?, eta?,
 *                                     iterations?, beta?, method?}
 *                                                              -> {"effective_from_token"}
 *   POST   /sessions/{id}/cancel                               -> 202
 *   GET    /healthz                                            -> {status, provider, vocab_size}
 *
 * While a generation streams, its loop is the only writer of the session's
 * decoder. PATCH requests are queued in the session mailbox and applied at
 * the next token boundary; the acknowledged index is the first token that
 * will be produced under the new state.
 */

#include <chrono>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "amulet/provider.hpp"

namespace httplib {
class Server;
}

namespace amulet {

struct ServiceOptions {
  /// Providers a session may bind to, keyed by spec string. The first one
  /// is the default for sessions created without a "provider" field.
  std::vector<std::pair<std::string, std::shared_ptr<const LogprobProvider>>> providers;
  /// Origins allowed by CORS. "*" allows any.
  std::vector<std::string> cors_origins;
  /// Artificial pause after each streamed token (for demos and tests).
  std::chrono::milliseconds token_delay{0};
  /// Upper bounds accepted for steering parameters.
  double max_alpha = 100.0;
  double max_lambda = 100.0;
  double max_eta = 1000.0;
  std::size_t max_iterations = 10000;
  std::size_t max_new_tokens = 4096;
};

class SteeringService {
 public:
  explicit SteeringService(ServiceOptions options);
  ~SteeringService();

  SteeringService(const SteeringService&) = delete;
  SteeringService& operator=(const SteeringService&) = delete;

  /// Binds (port 0 picks a free port), serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  int port() const noexcept { return port_; }
  std::string url() const;

  std::size_t session_count() const;

 private:
  struct Session;
  struct Impl;

  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = -1;
};

}  // namespace amulet
