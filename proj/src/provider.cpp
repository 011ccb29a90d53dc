#include "amulet/provider.hpp"

#include <thread>

#include "amulet/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace amulet {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// NGramProvider
// ---------------------------------------------------------------------------

NGramProvider::NGramProvider(NGramModel model, std::string label)
    : model_(std::move(model)), label_(std::move(label)) {}

LogDist NGramProvider::next_logprobs(std::span<const TokenId> context) const {
  for (TokenId id : context) {
    if (id >= vocab_size()) {
      throw Error(ErrorKind::InvalidArgument, "context token " + std::to_string(id) +
                                                  " outside vocabulary");
    }
  }
  return model_.next_logprobs(context);
}

std::vector<TokenId> NGramProvider::tokenize(std::string_view text) const {
  return model_.vocab().encode(text);
}

std::string NGramProvider::detokenize(std::span<const TokenId> ids) const {
  return model_.vocab().decode(ids);
}

// ---------------------------------------------------------------------------
// RemoteProvider
// ---------------------------------------------------------------------------

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string prefix;  // optional path prefix, no trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto path_start =
      url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.origin = url;
  } else {
    out.origin = url.substr(0, path_start);
    out.prefix = url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

std::string error_message(const httplib::Result& res) {
  try {
    return json::parse(res->body).at("error").get<std::string>();
  } catch (const std::exception&) {
    return res->body;
  }
}

}  // namespace

RemoteProvider::RemoteProvider(std::string base_url, RemoteOptions options)
    : base_url_(std::move(base_url)), options_(std::move(options)) {
  try {
    const json info = json::parse(get("/v1/info"));
    vocab_size_ = info.at("vocab_size").get<std::size_t>();
    if (info.contains("eos_id") && !info.at("eos_id").is_null()) {
      eos_id_ = info.at("eos_id").get<TokenId>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Protocol, std::string("bad /v1/info response: ") + e.what());
  }
  if (vocab_size_ < 2) throw Error(ErrorKind::Protocol, "remote vocabulary smaller than 2");
}

std::string RemoteProvider::get(const std::string& path) const {
  const auto url = split_url(base_url_);
  std::chrono::milliseconds backoff = options_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    httplib::Client cli(url.origin);
    cli.set_connection_timeout(options_.timeout);
    cli.set_read_timeout(options_.timeout);
    auto res = cli.Get(url.prefix + path);
    if (res && res->status < 500) {
      if (res->status >= 400) {
        throw Error(ErrorKind::Protocol, "GET " + path + " -> " +
                                             std::to_string(res->status) + ": " +
                                             error_message(res));
      }
      return res->body;
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorKind::Transport, "GET " + base_url_ + path + " failed after " +
                                        std::to_string(options_.max_attempts) +
                                        " attempts: " + last_error);
}

std::string RemoteProvider::post_json(const std::string& path, const std::string& body) const {
  const auto url = split_url(base_url_);
  std::chrono::milliseconds backoff = options_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    httplib::Client cli(url.origin);
    cli.set_connection_timeout(options_.timeout);
    cli.set_read_timeout(options_.timeout);
    auto res = cli.Post(url.prefix + path, body, "application/json");
    if (res && res->status < 500) {
      if (res->status >= 400) {
        throw Error(ErrorKind::Protocol, "POST " + path + " -> " +
                                             std::to_string(res->status) + ": " +
                                             error_message(res));
      }
      return res->body;
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorKind::Transport, "POST " + base_url_ + path + " failed after " +
                                        std::to_string(options_.max_attempts) +
                                        " attempts: " + last_error);
}

LogDist RemoteProvider::next_logprobs(std::span<const TokenId> context) const {
  const json req = {{"model", options_.model},
                    {"context_ids", std::vector<TokenId>(context.begin(), context.end())},
                    {"vocab_size", vocab_size_}};
  std::vector<double> raw;
  try {
    raw = json::parse(post_json("/v1/logprobs", req.dump())).at("logprobs").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Protocol, std::string("bad /v1/logprobs response: ") + e.what());
  }
  if (raw.size() != vocab_size_) {
    throw Error(ErrorKind::Protocol, "vocabulary size mismatch: session has " +
                                         std::to_string(vocab_size_) + ", response has " +
                                         std::to_string(raw.size()));
  }
  return normalize_log(raw);
}

std::vector<TokenId> RemoteProvider::tokenize(std::string_view text) const {
  const json req = {{"text", std::string(text)}};
  try {
    return json::parse(post_json("/v1/tokenize", req.dump())).at("ids").get<std::vector<TokenId>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Protocol, std::string("bad /v1/tokenize response: ") + e.what());
  }
}

std::string RemoteProvider::detokenize(std::span<const TokenId> ids) const {
  const json req = {{"ids", std::vector<TokenId>(ids.begin(), ids.end())}};
  try {
    return json::parse(post_json("/v1/detokenize", req.dump())).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Protocol, std::string("bad /v1/detokenize response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

std::shared_ptr<const LogprobProvider> make_provider(const std::string& spec,
                                                     RemoteOptions remote) {
  if (spec.rfind("toy:", 0) == 0) {
    const std::string path = spec.substr(4);
    return std::make_shared<NGramProvider>(NGramModel::load(path), spec);
  }
  if (spec.rfind("remote:", 0) == 0) {
    return std::make_shared<RemoteProvider>(spec.substr(7), std::move(remote));
  }
  throw Error(ErrorKind::InvalidArgument,
              "unknown provider '" + spec + "' (expected toy:PATH or remote:URL)");
}

// ---------------------------------------------------------------------------
// DualContext
// ---------------------------------------------------------------------------

DualContext::DualContext(Context base_prompt, Context pref_prompt, Context suffix)
    : base_prompt_(std::move(base_prompt)),
      pref_prompt_(std::move(pref_prompt)),
      suffix_(std::move(suffix)) {}

Context DualContext::pref_context() const {
  Context c;
  c.reserve(base_prompt_.size() + pref_prompt_.size() + suffix_.size());
  c.insert(c.end(), base_prompt_.begin(), base_prompt_.end());
  c.insert(c.end(), pref_prompt_.begin(), pref_prompt_.end());
  c.insert(c.end(), suffix_.begin(), suffix_.end());
  return c;
}

Context DualContext::base_context() const {
  Context c;
  c.reserve(base_prompt_.size() + suffix_.size());
  c.insert(c.end(), base_prompt_.begin(), base_prompt_.end());
  c.insert(c.end(), suffix_.begin(), suffix_.end());
  return c;
}

DualContext DualContext::with_pref_prompt(Context pref_prompt) const {
  return DualContext(base_prompt_, std::move(pref_prompt), suffix_);
}

DualContext advance(const DualContext& dc, const Token& tok) {
  DualContext next = dc;
  next.suffix_.push_back(tok.id);
  return next;
}

}  // namespace amulet
