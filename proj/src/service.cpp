#include "amulet/service.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <random>

#include "amulet/decoder.hpp"
#include "amulet/error.hpp"
#include "amulet/json_io.hpp"
#include "httplib.h"

namespace amulet {

using json = nlohmann::json;

struct SteeringService::Session {
  std::string id;
  std::string provider_spec;
  std::shared_ptr<const LogprobProvider> provider;

  std::mutex mu;
  GenerationRequest steering;    // state the next token step / next run uses
  std::vector<json> mailbox;     // patches not yet applied by the live loop
  bool streaming = false;
  std::size_t boundary = 0;      // first token index whose step has not begun
  std::vector<std::string> transcript;
  std::atomic<bool> cancel{false};
};

struct SteeringService::Impl {
  ServiceOptions options;
  httplib::Server server;
  mutable std::mutex mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;

  explicit Impl(ServiceOptions o) : options(std::move(o)) {}

  std::shared_ptr<Session> find(const std::string& id) const {
    std::lock_guard lock(mu);
    auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : it->second;
  }

  void install_routes();
  void handle_generate(const std::shared_ptr<Session>& s, const httplib::Request& req,
                       httplib::Response& res);
  /// Validates a patch against bounds and applies it to `r`. Throws
  /// Error{InvalidArgument} on anything out of bounds.
  void apply_patch(GenerationRequest& r, const json& patch, const LogprobProvider& p) const;
};

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply_json(res, status, json{{"error", message}});
}

std::string random_id() {
  std::random_device rd;
  static const char* kHex = "0123456789abcdef";
  std::string id;
  for (int i = 0; i < 16; ++i) {
    const auto byte = static_cast<unsigned>(rd() & 0xffu);
    id += kHex[byte >> 4];
    id += kHex[byte & 0xf];
  }
  return id;
}

std::string sse(const char* event, const json& data) {
  return std::string("event: ") + event + "\ndata: " + data.dump() + "\n\n";
}

}  // namespace

void SteeringService::Impl::apply_patch(GenerationRequest& r, const json& patch,
                                        const LogprobProvider& p) const {
  if (!patch.is_object()) throw Error(ErrorKind::InvalidArgument, "patch must be an object");
  static const char* kAllowed[] = {"pref_prompt", "alpha", "lambda", "eta",
                                   "iterations",  "beta",  "method"};
  for (const auto& [key, _] : patch.items()) {
    if (std::find(std::begin(kAllowed), std::end(kAllowed), key) == std::end(kAllowed)) {
      throw Error(ErrorKind::InvalidArgument, "unknown patch field '" + key + "'");
    }
  }
  auto number = [&](const char* key, double lo, double hi, bool open_lo) {
    if (!patch.contains(key)) return;
    if (!patch.at(key).is_number()) {
      throw Error(ErrorKind::InvalidArgument, std::string(key) + " must be a number");
    }
    const double v = patch.at(key).get<double>();
    if (!(open_lo ? v > lo : v >= lo) || !(v <= hi)) {
      throw Error(ErrorKind::InvalidArgument, std::string(key) + " out of bounds");
    }
  };
  number("alpha", 0.0, options.max_alpha, false);
  number("lambda", 0.0, options.max_lambda, false);
  number("eta", 0.0, options.max_eta, true);
  number("iterations", 1.0, static_cast<double>(options.max_iterations), false);
  number("beta", -options.max_alpha, options.max_alpha, false);
  if (patch.contains("iterations") && !patch.at("iterations").is_number_integer()) {
    throw Error(ErrorKind::InvalidArgument, "iterations must be an integer");
  }

  GenerationRequest next = r;
  next.method = json_io::method_from_json(patch, r.method);
  if (patch.contains("pref_prompt")) {
    if (!patch.at("pref_prompt").is_string()) {
      throw Error(ErrorKind::InvalidArgument, "pref_prompt must be a string");
    }
    next.pref_prompt = patch.at("pref_prompt").get<std::string>();
    p.tokenize(next.pref_prompt);  // must be representable
  }
  r = std::move(next);
}

void SteeringService::Impl::install_routes() {
  server.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    const std::string origin = req.get_header_value("Origin");
    if (origin.empty()) return;
    for (const auto& allowed : options.cors_origins) {
      if (allowed == "*" || allowed == origin) {
        res.set_header("Access-Control-Allow-Origin", allowed == "*" ? "*" : origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, PATCH, DELETE, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        return;
      }
    }
  });
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    const auto& [spec, provider] = options.providers.front();
    reply_json(res, 200,
               {{"status", "ok"}, {"provider", spec}, {"vocab_size", provider->vocab_size()}});
  });

  server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    std::string spec = options.providers.front().first;
    if (!req.body.empty()) {
      try {
        const json body = json::parse(req.body);
        if (body.contains("provider")) spec = body.at("provider").get<std::string>();
      } catch (const json::exception& e) {
        return reply_error(res, 400, e.what());
      }
    }
    auto it = std::find_if(options.providers.begin(), options.providers.end(),
                           [&](const auto& p) { return p.first == spec; });
    if (it == options.providers.end()) return reply_error(res, 400, "unknown provider " + spec);

    auto s = std::make_shared<Session>();
    s->provider_spec = spec;
    s->provider = it->second;
    std::lock_guard lock(mu);
    do {
      s->id = random_id();
    } while (sessions.count(s->id));
    sessions.emplace(s->id, s);
    reply_json(res, 201, {{"id", s->id}});
  });

  server.Delete(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req,
                                                  httplib::Response& res) {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lock(mu);
      auto it = sessions.find(req.matches[1]);
      if (it == sessions.end()) return reply_error(res, 404, "unknown session");
      s = it->second;
      sessions.erase(it);
    }
    s->cancel = true;
    res.status = 204;
  });

  server.Patch(R"(/sessions/([0-9a-f]+))", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
    auto s = find(req.matches[1]);
    if (!s) return reply_error(res, 404, "unknown session");
    json patch;
    try {
      patch = req.body.empty() ? json::object() : json::parse(req.body);
    } catch (const json::exception& e) {
      return reply_error(res, 400, e.what());
    }
    std::lock_guard lock(s->mu);
    try {
      apply_patch(s->steering, patch, *s->provider);
    } catch (const Error& e) {
      return reply_error(res, 422, e.what());
    }
    std::size_t effective = 0;
    if (s->streaming) {
      if (!patch.empty()) s->mailbox.push_back(patch);
      effective = s->boundary;
    }
    reply_json(res, 200, {{"effective_from_token", effective}});
  });

  server.Post(R"(/sessions/([0-9a-f]+)/cancel)", [this](const httplib::Request& req,
                                                        httplib::Response& res) {
    auto s = find(req.matches[1]);
    if (!s) return reply_error(res, 404, "unknown session");
    s->cancel = true;
    res.status = 202;
  });

  server.Post(R"(/sessions/([0-9a-f]+)/generate)", [this](const httplib::Request& req,
                                                          httplib::Response& res) {
    auto s = find(req.matches[1]);
    if (!s) return reply_error(res, 404, "unknown session");
    handle_generate(s, req, res);
  });
}

void SteeringService::Impl::handle_generate(const std::shared_ptr<Session>& s,
                                            const httplib::Request& req,
                                            httplib::Response& res) {
  std::shared_ptr<Decoder> decoder;
  {
    std::lock_guard lock(s->mu);
    if (s->streaming) return reply_error(res, 409, "a generation is already streaming");
    GenerationRequest request;
    try {
      const json body = req.body.empty() ? json::object() : json::parse(req.body);
      request = json_io::request_from_json(body, s->steering);
      if (request.max_new_tokens > options.max_new_tokens) {
        throw Error(ErrorKind::InvalidArgument, "max_new_tokens out of bounds");
      }
      decoder = std::make_shared<Decoder>(s->provider, request);
    } catch (const json::exception& e) {
      return reply_error(res, 400, e.what());
    } catch (const Error& e) {
      return reply_error(res, 422, e.what());
    }
    s->steering = request;
    s->streaming = true;
    s->boundary = 0;
    s->mailbox.clear();
    s->cancel = false;
  }

  const auto delay = options.token_delay;
  res.set_header("Cache-Control", "no-cache");
  res.set_chunked_content_provider(
      "text/event-stream",
      [s, decoder, delay](std::size_t, httplib::DataSink& sink) {
        std::size_t produced = 0;
        bool client_gone = false;
        for (;;) {
          {
            std::lock_guard lock(s->mu);
            if (s->cancel) decoder->cancel();
            for (const auto& patch : s->mailbox) {
              decoder->set_method(json_io::method_from_json(patch, decoder->method()));
              if (patch.contains("pref_prompt")) {
                decoder->set_pref_prompt(patch.at("pref_prompt").get<std::string>());
              }
            }
            s->mailbox.clear();
            s->boundary = decoder->next_index() + 1;
          }
          if (decoder->finished()) break;

          std::optional<StepRecord> rec;
          try {
            rec = decoder->step();
          } catch (const std::exception& e) {
            const std::string ev = sse("error", json{{"error", e.what()}});
            sink.write(ev.data(), ev.size());
            sink.done();
            std::lock_guard lock(s->mu);
            s->streaming = false;
            return true;
          }
          if (!rec) continue;
          ++produced;
          const std::string ev = sse("token", json_io::to_json(*rec));
          if (!sink.write(ev.data(), ev.size())) {
            client_gone = true;
            decoder->cancel();
            break;
          }
          if (delay.count() > 0) std::this_thread::sleep_for(delay);
        }

        const auto reason = decoder->finish_reason().value_or(FinishReason::Cancelled);
        if (!client_gone) {
          const std::string ev =
              sse("done", json{{"finish_reason", to_string(reason)}, {"tokens", produced}});
          sink.write(ev.data(), ev.size());
          sink.done();
        }
        std::lock_guard lock(s->mu);
        s->transcript.push_back(decoder->result().text);
        s->streaming = false;
        s->boundary = 0;
        return true;
      },
      [s](bool) {
        std::lock_guard lock(s->mu);
        s->streaming = false;
      });
}

// ---------------------------------------------------------------------------

SteeringService::SteeringService(ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {
  if (impl_->options.providers.empty()) {
    throw Error(ErrorKind::InvalidArgument, "service needs at least one provider");
  }
  impl_->server.new_task_queue = [] { return new httplib::ThreadPool(64); };
  impl_->install_routes();
}

SteeringService::~SteeringService() { stop(); }

int SteeringService::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? impl_->server.bind_to_any_port(host)
                    : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void SteeringService::run(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!impl_->server.listen(host, port)) {
    throw Error(ErrorKind::Io, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

void SteeringService::stop() {
  if (!impl_) return;
  {
    std::lock_guard lock(impl_->mu);
    for (auto& [_, s] : impl_->sessions) s->cancel = true;
  }
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

std::string SteeringService::url() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

std::size_t SteeringService::session_count() const {
  std::lock_guard lock(impl_->mu);
  return impl_->sessions.size();
}

}  // namespace amulet
