#include "amulet/logits_server.hpp"

#include "amulet/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace amulet {

using json = nlohmann::json;

namespace {

void reply_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

}  // namespace

LogitsServer::LogitsServer(std::shared_ptr<const LogprobProvider> provider,
                           std::string model_name)
    : provider_(std::move(provider)),
      model_name_(std::move(model_name)),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

LogitsServer::~LogitsServer() { stop(); }

void LogitsServer::install_routes() {
  server_->Get("/v1/info", [this](const httplib::Request&, httplib::Response& res) {
    json body = {{"model", model_name_}, {"vocab_size", provider_->vocab_size()}};
    if (auto eos = provider_->eos_id()) body["eos_id"] = *eos;
    else body["eos_id"] = nullptr;
    res.set_content(body.dump(), "application/json");
  });

  server_->Post("/v1/logprobs", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const json body = json::parse(req.body);
      const auto vocab = body.at("vocab_size").get<std::size_t>();
      if (vocab != provider_->vocab_size()) {
        return reply_error(res, 409, "vocab_size mismatch: served vocabulary has " +
                                         std::to_string(provider_->vocab_size()));
      }
      const auto ids = body.at("context_ids").get<std::vector<TokenId>>();
      const LogDist d = provider_->next_logprobs(ids);
      const auto lp = d.log_probs();
      res.set_content(json{{"logprobs", std::vector<double>(lp.begin(), lp.end())}}.dump(),
                      "application/json");
    } catch (const json::exception& e) {
      reply_error(res, 400, e.what());
    } catch (const Error& e) {
      reply_error(res, 400, e.what());
    }
  });

  server_->Post("/v1/tokenize", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto text = json::parse(req.body).at("text").get<std::string>();
      res.set_content(json{{"ids", provider_->tokenize(text)}}.dump(), "application/json");
    } catch (const json::exception& e) {
      reply_error(res, 400, e.what());
    } catch (const Error& e) {
      reply_error(res, 400, e.what());
    }
  });

  server_->Post("/v1/detokenize", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto ids = json::parse(req.body).at("ids").get<std::vector<TokenId>>();
      res.set_content(json{{"text", provider_->detokenize(ids)}}.dump(), "application/json");
    } catch (const json::exception& e) {
      reply_error(res, 400, e.what());
    } catch (const Error& e) {
      reply_error(res, 400, e.what());
    }
  });
}

int LogitsServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void LogitsServer::run(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->listen(host, port)) {
    throw Error(ErrorKind::Io, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

void LogitsServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string LogitsServer::url() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

}  // namespace amulet
