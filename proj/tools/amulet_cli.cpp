/// @file amulet_cli.cpp
/// @brief `amulet` executable: argument parsing and dispatch.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "amulet/logits_server.hpp"
#include "amulet/provider.hpp"
#include "amulet/service.hpp"
#include "commands.hpp"

namespace {

using namespace amulet;
using namespace amulet::cli;

void add_provider(CLI::App* cmd, std::string& target) {
  cmd->add_option("--provider", target, "toy:MODEL.json or remote:http://host:port")
      ->envname("AMULET_PROVIDER");
}

void add_method(CLI::App* cmd, MethodArgs& m, bool with_name) {
  if (with_name) {
    cmd->add_option("--method", m.method, "base | pref | la | amulet")->capture_default_str();
  }
  cmd->add_option("--alpha", m.alpha, "utility scale")->capture_default_str();
  cmd->add_option("--lambda", m.lambda, "strength of the pull toward the preference prior")
      ->capture_default_str();
  cmd->add_option("--eta", m.eta, "proximal learning rate")->capture_default_str();
  cmd->add_option("--iters", m.iters, "iterations per token (T)")->capture_default_str();
  cmd->add_option("--beta", m.beta, "linear-alignment strength")->capture_default_str();
  cmd->add_option("--early-stop", m.early_stop,
                  "stop iterating once KL between iterates falls below this (0 = off)")
      ->capture_default_str();
}

void add_sampling(CLI::App* cmd, SamplingArgs& s) {
  auto* greedy = cmd->add_flag("--greedy", s.greedy, "greedy decoding (default)");
  auto* temp = cmd->add_option("--temperature", s.temperature, "sampling temperature");
  auto* top_k = cmd->add_option("--top-k", s.top_k, "sample from the K most likely tokens");
  auto* top_p = cmd->add_option("--top-p", s.top_p, "nucleus sampling mass");
  greedy->excludes(temp)->excludes(top_k)->excludes(top_p);
  top_k->excludes(top_p);
  cmd->add_option("--seed", s.seed, "sampling seed")->capture_default_str();
}

/// Blocks SIGINT/SIGTERM in every thread and waits for one of them.
class SignalWaiter {
 public:
  SignalWaiter() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
  }
  void wait() {
    int sig = 0;
    sigwait(&set_, &sig);
  }

 private:
  sigset_t set_;
};

std::pair<std::string, int> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw UsageError("address must be HOST:PORT, got " + addr);
  try {
    return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
  } catch (const std::exception&) {
    throw UsageError("bad port in " + addr);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time preference steering for token-level decoding"};
  app.set_config("--config", "", "TOML file of option defaults (flags override it)");
  app.require_subcommand(1);
  int code = kExitOk;

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "generate one continuation");
  add_provider(c_gen, gen.provider);
  add_method(c_gen, gen.method, true);
  add_sampling(c_gen, gen.sampling);
  c_gen->add_option("--prompt", gen.prompt, "base prompt")->required();
  c_gen->add_option("--pref", gen.pref, "preference prompt");
  c_gen->add_option("--max-new-tokens", gen.max_new_tokens)->capture_default_str();
  c_gen->add_flag("--no-stop-on-eos", gen.no_stop_on_eos, "keep going past end-of-sequence");
  c_gen->add_option("--trace", gen.trace_path, "write per-token diagnostics as JSON lines");
  c_gen->callback([&] { code = cmd_generate(gen, std::cout, std::cerr); });

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare", "run several methods over a prompt file");
  add_provider(c_cmp, cmp.provider);
  c_cmp->add_option("--methods", cmp.methods, "method specs, e.g. base la amulet:alpha=1")
      ->delimiter(' ')
      ->capture_default_str();
  add_method(c_cmp, cmp.method, false);
  add_sampling(c_cmp, cmp.sampling);
  c_cmp->add_option("--prompts", cmp.prompts_path, "JSON-lines prompt file")->required();
  c_cmp->add_option("--max-new-tokens", cmp.max_new_tokens)->capture_default_str();
  c_cmp->add_flag("--no-stop-on-eos", cmp.no_stop_on_eos);
  c_cmp->add_option("--out", cmp.out_path, "report path")->required();
  c_cmp->add_option("--jobs", cmp.jobs, "parallel generations")->capture_default_str();
  c_cmp->callback([&] { code = cmd_compare(cmp, std::cout, std::cerr); });

  OracleCheckArgs orc;
  auto* c_orc = app.add_subcommand("oracle-check", "closed form vs. numerical optimizer");
  c_orc->add_option("--seed", orc.seed)->capture_default_str();
  c_orc->add_option("--cases", orc.cases)->capture_default_str();
  c_orc->add_option("--tolerance", orc.tolerance)->capture_default_str();
  c_orc->add_option("--fault-scale", orc.fault_scale,
                    "multiply the update denominator by this (harness self-test)");
  c_orc->callback([&] { code = cmd_oracle_check(orc, std::cout, std::cerr); });

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "per-token latency against iteration count");
  add_provider(c_bench, bench.provider);
  add_method(c_bench, bench.method, false);
  c_bench->add_option("--iters-list", bench.iterations, "iteration counts to measure")
      ->delimiter(',')
      ->capture_default_str();
  c_bench->add_option("--tokens", bench.tokens, "tokens per run")->capture_default_str();
  c_bench->add_option("--repeats", bench.repeats, "runs per T, fastest kept")
      ->capture_default_str();
  c_bench->add_option("--prompt", bench.prompt)->capture_default_str();
  c_bench->add_option("--pref", bench.pref);
  c_bench->add_option("--csv", bench.csv_path, "CSV output path");
  c_bench->callback([&] { code = cmd_bench(bench, std::cout, std::cerr); });

  TrainToyArgs train;
  auto* c_train = app.add_subcommand("train-toy", "fit a character n-gram model");
  c_train->add_option("--corpus", train.corpus_path)->required();
  c_train->add_option("--order", train.order)->capture_default_str();
  c_train->add_option("--smoothing", train.smoothing)->capture_default_str();
  c_train->add_option("--out", train.out_path)->required();
  c_train->callback([&] { code = cmd_train_toy(train, std::cout, std::cerr); });

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "judge a comparison report pairwise");
  c_eval->add_option("--report", ev.report_path)->required();
  c_eval->add_option("--judge-url", ev.judge_url, "chat-completion endpoint")
      ->envname("AMULET_JUDGE_URL");
  c_eval->add_option("--judge-model", ev.judge_model)->capture_default_str();
  c_eval->add_option("--verdicts", ev.verdicts_path, "append verdicts as JSON lines");
  c_eval->add_option("--jobs", ev.jobs, "judge calls in flight")->capture_default_str();
  c_eval->add_option("--retries", ev.retry_attempts, "attempts per judge call")
      ->capture_default_str();
  c_eval->add_option("--retry-backoff-ms", ev.retry_backoff_ms)->capture_default_str();
  c_eval->add_option("--judge-timeout-ms", ev.timeout_ms, "per-request timeout")
      ->capture_default_str();
  c_eval->add_option("--question", ev.question, "fallback question");
  c_eval->add_option("--preference", ev.preference, "fallback preference");
  c_eval->callback([&] { code = cmd_eval(ev, std::cout, std::cerr); });

  std::vector<std::string> serve_providers;
  std::string serve_addr = "127.0.0.1:8080";
  std::vector<std::string> cors;
  int token_delay_ms = 0;
  auto* c_serve = app.add_subcommand("serve", "HTTP steering service");
  c_serve->add_option("--provider", serve_providers, "provider spec(s); first is the default")
      ->required();
  c_serve->add_option("--addr", serve_addr, "HOST:PORT")
      ->envname("AMULET_ADDR")
      ->capture_default_str();
  c_serve->add_option("--cors", cors, "allowed origin(s), or *");
  c_serve->add_option("--token-delay-ms", token_delay_ms, "pause after each streamed token");
  c_serve->callback([&] {
    try {
      const auto [host, port] = split_addr(serve_addr);
      ServiceOptions opts;
      for (const auto& spec : serve_providers) opts.providers.emplace_back(spec, make_provider(spec));
      opts.cors_origins = cors;
      opts.token_delay = std::chrono::milliseconds(token_delay_ms);
      SignalWaiter signals;
      SteeringService service(std::move(opts));
      service.start(host, port);
      std::cerr << "listening on " << service.url() << '\n';
      signals.wait();
      service.stop();
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      code = kExitUsage;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      code = kExitExternal;
    }
  });

  std::string logits_provider;
  std::string logits_addr = "127.0.0.1:8081";
  std::string logits_model = "toy";
  auto* c_logits = app.add_subcommand("serve-logits", "expose a provider over the logits protocol");
  c_logits->add_option("--provider", logits_provider)->required();
  c_logits->add_option("--addr", logits_addr, "HOST:PORT")->capture_default_str();
  c_logits->add_option("--model", logits_model)->capture_default_str();
  c_logits->callback([&] {
    try {
      const auto [host, port] = split_addr(logits_addr);
      SignalWaiter signals;
      LogitsServer server(make_provider(logits_provider), logits_model);
      server.start(host, port);
      std::cerr << "listening on " << server.url() << '\n';
      signals.wait();
      server.stop();
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << '\n';
      code = kExitUsage;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      code = kExitExternal;
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  return code;
}
