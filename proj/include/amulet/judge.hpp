#pragma once

/**
 * @file judge.hpp
 * @brief Pairwise LLM-as-judge: prompt construction, verdict parsing, clients.
 *
 * The judge sees two responses to one question under one stated preference
 * and must answer with one of "Text 1", "Text 2" or "Tie". Every pair is
 * judged twice with the presentation order swapped; a win only counts when
 * both orders agree, otherwise the comparison is recorded as a tie.
 */

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <fstream>
#include <string>
#include <vector>

namespace amulet {

enum class Verdict { Text1Wins, Text2Wins, Tie };
std::string to_string(Verdict v);

struct JudgeVerdict {
  Verdict verdict = Verdict::Tie;
  std::string raw_reply;
};

/// Outcome of a (debiased) comparison from the perspective of system A.
enum class Outcome { AWins, BWins, Tie };
std::string to_string(Outcome o);

/// Fills the judge template. Throws Error{InvalidArgument} "preference
/// required" / "question required" on empty slots; outputs may be empty.
std::string build_judge_prompt(const std::string& question, const std::string& preference,
                               const std::string& output_1, const std::string& output_2);

/// First occurrence of "Text 1", "Text 2" or "Tie" decides. Throws
/// Error{Unparseable} carrying the reply if none occurs.
Verdict parse_verdict(const std::string& reply);

/// Anything that turns a prompt into a reply.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Throws Error{Transport} for retriable failures.
  virtual std::string complete(const std::string& prompt) const = 0;
};

struct HttpJudgeOptions {
  std::string url;  ///< full endpoint URL, e.g. http://host:port/v1/chat/completions
  std::string model = "gpt-4o";
  /// Bearer token; defaults to $AMULET_JUDGE_TOKEN when empty.
  std::string token;
  std::chrono::milliseconds timeout{60000};
};

/**
 * Chat-completion client. Sends
 *   {"model": m, "messages": [{"role": "user", "content": prompt}], "temperature": 0}
 * and reads choices[0].message.content (or a top-level "content").
 * A single attempt; retrying is the caller's policy (see RetryPolicy).
 */
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(HttpJudgeOptions options);
  std::string complete(const std::string& prompt) const override;

 private:
  HttpJudgeOptions options_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
};

/// Sends the built prompt (with retries on transport failure) and parses it.
JudgeVerdict judge_pair(const std::string& question, const std::string& preference,
                        const std::string& text1, const std::string& text2,
                        const ChatClient& judge, const RetryPolicy& retry = {});

struct DebiasedJudgment {
  Outcome outcome = Outcome::Tie;
  JudgeVerdict a_first;  ///< A shown as Text 1
  JudgeVerdict b_first;  ///< B shown as Text 1
};

/// Judges (A, B) and (B, A); credits a win only when both orders agree.
DebiasedJudgment judge_debiased(const std::string& question, const std::string& preference,
                                const std::string& text_a, const std::string& text_b,
                                const ChatClient& judge, const RetryPolicy& retry = {});

struct JudgeTask {
  std::string system_a;
  std::string system_b;
  std::string instance_id;
  std::string question;
  std::string preference;
  std::string text_a;
  std::string text_b;
};

/// Runs debiased judgments with at most `parallelism` in flight. Results are
/// returned in task order. The first error (after retries) is rethrown.
std::vector<DebiasedJudgment> judge_all(const std::vector<JudgeTask>& tasks,
                                        const ChatClient& judge, std::size_t parallelism,
                                        const RetryPolicy& retry = {});

/// Append-only JSON-lines verdict log:
/// {"pair": [a, b], "instance_id", "order": "ab"|"ba", "verdict", "raw_reply", "timestamp"}
class VerdictLog {
 public:
  explicit VerdictLog(const std::string& path);
  void append(const JudgeTask& task, const DebiasedJudgment& judgment);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

}  // namespace amulet
