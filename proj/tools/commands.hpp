#pragma once

/// @file commands.hpp
/// @brief Subcommand implementations behind the `amulet` executable.
///
/// Exit codes: 0 success, 1 check failure, 2 usage, 3 external-service failure.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "amulet/decoder.hpp"

namespace amulet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitExternal = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MethodArgs {
  std::string method = "amulet";
  double alpha = 2.0;
  double lambda = 2.0;
  double eta = 10.0;
  std::size_t iters = 60;
  double beta = 1.0;
  double early_stop = 0.0;
};

struct SamplingArgs {
  bool greedy = false;
  std::optional<double> temperature;
  std::optional<std::size_t> top_k;
  std::optional<double> top_p;
  std::uint64_t seed = 0;
};

/// Method from a spec such as "amulet", "la" or "amulet:alpha=0,eta=5".
/// Keys not given in the spec come from `defaults`.
Method parse_method(const std::string& spec, const MethodArgs& defaults);
SamplingStrategy make_sampling(const SamplingArgs& args);

struct GenerateArgs {
  std::string provider;
  MethodArgs method;
  SamplingArgs sampling;
  std::string prompt;
  std::string pref;
  std::size_t max_new_tokens = 64;
  bool no_stop_on_eos = false;
  std::string trace_path;
};

struct CompareArgs {
  std::string provider;
  std::vector<std::string> methods{"base", "pref", "la", "amulet"};
  MethodArgs method;
  SamplingArgs sampling;
  /// JSON-lines file of {"prompt_id"?, "base_prompt", "pref_prompt"?,
  /// "question"?, "preference"?}.
  std::string prompts_path;
  std::size_t max_new_tokens = 64;
  bool no_stop_on_eos = false;
  std::string out_path;
  std::size_t jobs = 1;
};

struct OracleCheckArgs {
  std::uint64_t seed = 0;
  std::size_t cases = 200;
  double tolerance = 1e-5;
  /// != 1 perturbs the closed-form coefficient (harness sanity check).
  double fault_scale = 1.0;
};

struct BenchArgs {
  std::string provider;
  std::vector<std::size_t> iterations{1, 20, 40, 60, 80, 100};
  std::size_t tokens = 200;
  std::size_t repeats = 3;
  std::string prompt = "the ";
  std::string pref;
  std::string csv_path;
  MethodArgs method;
};

struct BenchRow {
  std::size_t iterations = 0;
  double ms_per_token = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::optional<double> r_squared;
};

struct TrainToyArgs {
  std::string corpus_path;
  int order = 3;
  double smoothing = 0.1;
  std::string out_path;
};

struct EvalArgs {
  std::string report_path;
  std::string judge_url;
  std::string judge_model = "gpt-4o";
  std::string verdicts_path;
  std::size_t jobs = 1;
  int retry_attempts = 3;
  std::size_t retry_backoff_ms = 1000;
  std::size_t timeout_ms = 60000;
  /// Used when a generation record carries no question / preference.
  std::string question;
  std::string preference;
};

int cmd_generate(const GenerateArgs& args, std::ostream& out, std::ostream& err);
int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err);
int cmd_oracle_check(const OracleCheckArgs& args, std::ostream& out, std::ostream& err);
int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err,
              BenchReport* report = nullptr);
int cmd_train_toy(const TrainToyArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);

/// Coefficient of determination of the least-squares line y ~ a + b x.
double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace amulet::cli
