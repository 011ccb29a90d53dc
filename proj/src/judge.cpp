#include "amulet/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <iomanip>
#include <sstream>
#include <thread>

#include "amulet/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace amulet {

using json = nlohmann::json;

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Text1Wins: return "Text 1";
    case Verdict::Text2Wins: return "Text 2";
    case Verdict::Tie: return "Tie";
  }
  return "?";
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::AWins: return "win";
    case Outcome::BWins: return "lose";
    case Outcome::Tie: return "tie";
  }
  return "?";
}

std::string build_judge_prompt(const std::string& question, const std::string& preference,
                               const std::string& output_1, const std::string& output_2) {
  if (question.empty()) throw Error(ErrorKind::InvalidArgument, "question required");
  if (preference.empty()) throw Error(ErrorKind::InvalidArgument, "preference required");

  std::string p;
  p += "Which of the following responses answers the given question while better aligning "
       "with the specified preferences, without including unnecessary or irrelevant details?\n";
  p += "\n";
  p += "Question: " + question + "\n";
  p += "Preference: " + preference + "\n";
  p += "Text 1:\n";
  p += "{\n";
  p += "    \"model\": \"model_1\",\n";
  p += "    \"text\": " + output_1 + "\n";
  p += "}\n";
  p += "Text 2:\n";
  p += "{\n";
  p += "    \"model\": \"model_2\",\n";
  p += "    \"text\": " + output_2 + "\n";
  p += "}\n";
  p += "Please rank the models based on how well their responses align with the given "
       "preferences.\n";
  p += "Then only return an option in [Text 1, Text 2, Tie].\n";
  p += "Please provide the ranking that the majority of humans would give.\n";
  return p;
}

Verdict parse_verdict(const std::string& reply) {
  struct Option {
    const char* text;
    Verdict verdict;
  };
  static constexpr Option kOptions[] = {
      {"Text 1", Verdict::Text1Wins}, {"Text 2", Verdict::Text2Wins}, {"Tie", Verdict::Tie}};

  std::size_t best_pos = std::string::npos;
  Verdict best = Verdict::Tie;
  for (const auto& opt : kOptions) {
    const auto pos = reply.find(opt.text);
    if (pos < best_pos) {
      best_pos = pos;
      best = opt.verdict;
    }
  }
  if (best_pos == std::string::npos) {
    throw Error(ErrorKind::Unparseable, "unparseable judge reply: " + reply);
  }
  return best;
}

// ---------------------------------------------------------------------------

HttpChatClient::HttpChatClient(HttpJudgeOptions options) : options_(std::move(options)) {
  if (options_.token.empty()) {
    if (const char* env = std::getenv("AMULET_JUDGE_TOKEN")) options_.token = env;
  }
}

std::string HttpChatClient::complete(const std::string& prompt) const {
  const auto scheme_end = options_.url.find("://");
  const auto path_start =
      options_.url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin =
      path_start == std::string::npos ? options_.url : options_.url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : options_.url.substr(path_start);

  httplib::Client cli(origin);
  cli.set_connection_timeout(options_.timeout);
  cli.set_read_timeout(options_.timeout);
  httplib::Headers headers;
  if (!options_.token.empty()) headers.emplace("Authorization", "Bearer " + options_.token);

  const json body = {{"model", options_.model},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                     {"temperature", 0}};
  auto res = cli.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorKind::Transport, "judge request failed: " + httplib::to_string(res.error()));
  }
  if (res->status >= 500 || res->status == 429) {
    throw Error(ErrorKind::Transport, "judge returned HTTP " + std::to_string(res->status));
  }
  if (res->status >= 400) {
    throw Error(ErrorKind::Protocol,
                "judge returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  try {
    const json reply = json::parse(res->body);
    if (reply.contains("choices")) {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    }
    return reply.at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Protocol, std::string("malformed judge reply: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

JudgeVerdict judge_pair(const std::string& question, const std::string& preference,
                        const std::string& text1, const std::string& text2,
                        const ChatClient& judge, const RetryPolicy& retry) {
  const std::string prompt = build_judge_prompt(question, preference, text1, text2);
  auto backoff = retry.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      std::string reply = judge.complete(prompt);
      const Verdict v = parse_verdict(reply);
      return JudgeVerdict{v, std::move(reply)};
    } catch (const Error& e) {
      if (!e.retriable()) throw;
      if (attempt >= retry.max_attempts) {
        throw Error(ErrorKind::Transport, std::string(e.what()) + " (after " +
                                              std::to_string(attempt) + " attempts)");
      }
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
}

DebiasedJudgment judge_debiased(const std::string& question, const std::string& preference,
                                const std::string& text_a, const std::string& text_b,
                                const ChatClient& judge, const RetryPolicy& retry) {
  DebiasedJudgment out;
  out.a_first = judge_pair(question, preference, text_a, text_b, judge, retry);
  out.b_first = judge_pair(question, preference, text_b, text_a, judge, retry);
  const Verdict ab = out.a_first.verdict;
  const Verdict ba = out.b_first.verdict;
  if (ab == Verdict::Text1Wins && ba == Verdict::Text2Wins) {
    out.outcome = Outcome::AWins;
  } else if (ab == Verdict::Text2Wins && ba == Verdict::Text1Wins) {
    out.outcome = Outcome::BWins;
  } else {
    out.outcome = Outcome::Tie;
  }
  return out;
}

std::vector<DebiasedJudgment> judge_all(const std::vector<JudgeTask>& tasks,
                                        const ChatClient& judge, std::size_t parallelism,
                                        const RetryPolicy& retry) {
  std::vector<DebiasedJudgment> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const auto& t = tasks[i];
      try {
        results[i] = judge_debiased(t.question, t.preference, t.text_a, t.text_b, judge, retry);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t n_threads = std::clamp<std::size_t>(parallelism, 1, std::max<std::size_t>(tasks.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

// ---------------------------------------------------------------------------

VerdictLog::VerdictLog(const std::string& path) : out_(path, std::ios::app) {
  if (!out_) throw Error(ErrorKind::Io, "cannot open verdict log " + path);
}

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

void VerdictLog::append(const JudgeTask& task, const DebiasedJudgment& judgment) {
  const std::string ts = utc_timestamp();
  const json pair = {task.system_a, task.system_b};
  const json ab = {{"pair", pair},
                   {"instance_id", task.instance_id},
                   {"order", "ab"},
                   {"verdict", to_string(judgment.a_first.verdict)},
                   {"raw_reply", judgment.a_first.raw_reply},
                   {"timestamp", ts}};
  const json ba = {{"pair", pair},
                   {"instance_id", task.instance_id},
                   {"order", "ba"},
                   {"verdict", to_string(judgment.b_first.verdict)},
                   {"raw_reply", judgment.b_first.raw_reply},
                   {"timestamp", ts}};
  std::lock_guard lock(mu_);
  out_ << ab.dump() << '\n' << ba.dump() << '\n';
  out_.flush();
}

}  // namespace amulet
