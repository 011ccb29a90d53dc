#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "amulet/bradley_terry.hpp"
#include "amulet/error.hpp"
#include "amulet/json_io.hpp"
#include "amulet/judge.hpp"
#include "amulet/ngram.hpp"
#include "amulet/provider.hpp"
#include "amulet/verification.hpp"
#include "json.hpp"

namespace amulet::cli {

using json = nlohmann::json;

namespace {

/// Maps exceptions to exit codes and prints them.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::Transport:
      case ErrorKind::Protocol: return kExitExternal;
      case ErrorKind::InvalidArgument:
      case ErrorKind::Io: return kExitUsage;
      default: return kExitCheckFailed;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::shared_ptr<const LogprobProvider> require_provider(const std::string& spec) {
  if (spec.empty()) throw UsageError("--provider is required (toy:PATH or remote:URL)");
  return make_provider(spec);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw UsageError("bad value for " + key + ": " + value);
  }
}

struct Prompt {
  std::string id;
  std::string base_prompt;
  std::string pref_prompt;
  std::string question;
  std::string preference;
};

std::vector<Prompt> load_prompts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::vector<Prompt> prompts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw UsageError("prompt file line " + std::to_string(prompts.size() + 1) + ": " + e.what());
    }
    Prompt p;
    p.id = j.value("prompt_id", std::to_string(prompts.size()));
    p.base_prompt = j.at("base_prompt").get<std::string>();
    p.pref_prompt = j.value("pref_prompt", std::string());
    p.question = j.value("question", p.base_prompt);
    p.preference = j.value("preference", p.pref_prompt);
    prompts.push_back(std::move(p));
  }
  if (prompts.empty()) throw UsageError("prompt file " + path + " is empty");
  return prompts;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < std::min(std::max<std::size_t>(jobs, 1), n); ++k) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Method parse_method(const std::string& spec, const MethodArgs& defaults) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  json j = {{"method", name},          {"alpha", defaults.alpha}, {"lambda", defaults.lambda},
            {"eta", defaults.eta},     {"iterations", defaults.iters},
            {"beta", defaults.beta},   {"early_stop_tol", defaults.early_stop}};
  if (colon != std::string::npos) {
    std::stringstream ss(spec.substr(colon + 1));
    std::string kv;
    while (std::getline(ss, kv, ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("bad method parameter '" + kv + "'");
      std::string key = kv.substr(0, eq);
      const std::string value = kv.substr(eq + 1);
      if (key == "iters" || key == "T") key = "iterations";
      if (key == "iterations") {
        const double v = parse_double(key, value);
        if (v < 1 || v != std::floor(v)) throw UsageError("iterations must be an integer >= 1");
        j[key] = static_cast<std::size_t>(v);
      } else if (key == "alpha" || key == "lambda" || key == "eta" || key == "beta" ||
                 key == "early_stop_tol") {
        j[key] = parse_double(key, value);
      } else {
        throw UsageError("unknown method parameter '" + key + "'");
      }
    }
  }
  if (name != "base" && name != "pref" && name != "la" && name != "amulet") {
    throw UsageError("unknown method '" + name + "' (base|pref|la|amulet)");
  }
  if (j["iterations"].get<std::size_t>() < 1) throw UsageError("--iters must be >= 1");
  try {
    return json_io::method_from_json(j, method::Base{});
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

SamplingStrategy make_sampling(const SamplingArgs& a) {
  const int chosen = int(a.greedy) + int(a.temperature.has_value()) + int(a.top_k.has_value()) +
                     int(a.top_p.has_value() && !a.top_k.has_value());
  SamplingStrategy s;
  s.seed = a.seed;
  if (a.greedy && chosen > 1) throw UsageError("--greedy excludes other sampling flags");
  const double temp = a.temperature.value_or(1.0);
  if (a.top_k) {
    s = SamplingStrategy::top_k(*a.top_k, temp, a.seed);
  } else if (a.top_p) {
    s = SamplingStrategy::top_p(*a.top_p, temp, a.seed);
  } else if (a.temperature) {
    s = SamplingStrategy::with_temperature(temp, a.seed);
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return s;
}

double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return syy == 0.0 ? 1.0 : 0.0;
  return (sxy * sxy) / (sxx * syy);
}

// ---------------------------------------------------------------------------

int cmd_generate(const GenerateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.max_new_tokens < 1) throw UsageError("--max-new-tokens must be >= 1");
    if (args.prompt.empty()) throw UsageError("--prompt is required");
    GenerationRequest req;
    req.base_prompt = args.prompt;
    req.pref_prompt = args.pref;
    req.method = parse_method(args.method.method, args.method);
    req.max_new_tokens = args.max_new_tokens;
    req.sampling = make_sampling(args.sampling);
    req.stop_on_eos = !args.no_stop_on_eos;
    auto provider = require_provider(args.provider);

    const GenerationResult result = generate(req, provider);
    out << result.text << '\n';

    if (!args.trace_path.empty()) {
      std::ofstream trace(args.trace_path);
      if (!trace) throw Error(ErrorKind::Io, "cannot write " + args.trace_path);
      for (const auto& rec : result.per_token) trace << json_io::to_json(rec, true).dump() << '\n';
    }
    return kExitOk;
  });
}

int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.methods.empty()) throw UsageError("--methods must list at least one method");
    if (args.max_new_tokens < 1) throw UsageError("--max-new-tokens must be >= 1");
    if (args.out_path.empty()) throw UsageError("--out is required");
    if (args.prompts_path.empty()) throw UsageError("--prompts is required");

    std::vector<std::string> labels;
    std::vector<Method> methods;
    std::map<std::string, int> seen;
    for (const auto& spec : args.methods) {
      methods.push_back(parse_method(spec, args.method));
      const int k = ++seen[spec];
      labels.push_back(k == 1 ? spec : spec + "#" + std::to_string(k));
    }
    const SamplingStrategy sampling = make_sampling(args.sampling);
    auto provider = require_provider(args.provider);
    const auto prompts = load_prompts(args.prompts_path);

    const std::size_t m = methods.size();
    std::vector<GenerationResult> results(prompts.size() * m);
    parallel_for(results.size(), args.jobs, [&](std::size_t k) {
      const auto& p = prompts[k / m];
      GenerationRequest req;
      req.base_prompt = p.base_prompt;
      req.pref_prompt = p.pref_prompt;
      req.method = methods[k % m];
      req.max_new_tokens = args.max_new_tokens;
      req.sampling = sampling;
      req.stop_on_eos = !args.no_stop_on_eos;
      results[k] = generate(req, provider);
    });

    json generations = json::array();
    json identical = json::array();
    std::vector<double> ms_sum(m, 0.0);
    std::vector<std::size_t> ms_count(m, 0);
    for (std::size_t pi = 0; pi < prompts.size(); ++pi) {
      const auto& p = prompts[pi];
      for (std::size_t a = 0; a < m; ++a) {
        const auto& r = results[pi * m + a];
        json same = json::array();
        for (std::size_t b = 0; b < m; ++b) {
          if (b != a && results[pi * m + b].text == r.text) same.push_back(labels[b]);
          if (b > a && results[pi * m + b].text == r.text) {
            identical.push_back({{"prompt_id", p.id}, {"methods", {labels[a], labels[b]}}});
          }
        }
        json per_token = json::array();
        for (const auto& rec : r.per_token) {
          per_token.push_back(json_io::to_json(rec));
          ms_sum[a] += rec.wall_ms;
          ++ms_count[a];
        }
        generations.push_back({{"prompt_id", p.id},
                               {"method", labels[a]},
                               {"base_prompt", p.base_prompt},
                               {"pref_prompt", p.pref_prompt},
                               {"question", p.question},
                               {"preference", p.preference},
                               {"text", r.text},
                               {"finish_reason", to_string(r.finish_reason)},
                               {"tie_by_identity_with", std::move(same)},
                               {"per_token", std::move(per_token)}});
      }
    }

    json method_meta = json::array();
    json latency = json::object();
    for (std::size_t a = 0; a < m; ++a) {
      json mj = json_io::to_json(methods[a]);
      mj["label"] = labels[a];
      method_meta.push_back(std::move(mj));
      latency[labels[a]] = ms_count[a] ? ms_sum[a] / static_cast<double>(ms_count[a]) : 0.0;
    }
    const json report = {{"meta",
                          {{"provider", args.provider},
                           {"methods", std::move(method_meta)},
                           {"sampling", json_io::to_json(sampling)},
                           {"max_new_tokens", args.max_new_tokens},
                           {"prompts", prompts.size()},
                           {"mean_ms_per_token", latency},
                           {"identical_outputs", std::move(identical)}}},
                         {"generations", std::move(generations)}};
    std::ofstream file(args.out_path);
    if (!file) throw Error(ErrorKind::Io, "cannot write " + args.out_path);
    file << report.dump(2) << '\n';

    out << "wrote " << report["generations"].size() << " generations to " << args.out_path << '\n';
    for (std::size_t a = 0; a < m; ++a) {
      out << "  " << std::left << std::setw(24) << labels[a] << std::fixed << std::setprecision(3)
          << latency[labels[a]].get<double>() << " ms/token\n";
    }
    return kExitOk;
  });
}

int cmd_oracle_check(const OracleCheckArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.cases == 0) throw UsageError("--cases must be >= 1");
    const OracleSuiteReport r =
        run_oracle_suite(args.seed, args.cases, args.tolerance, args.fault_scale);
    out << "cases: " << r.cases << '\n'
        << "max L-inf gap: " << std::scientific << std::setprecision(3) << r.max_linf_gap << '\n'
        << "failures (gap > " << args.tolerance << "): " << r.failures << '\n'
        << "min objective gain per step: " << r.min_objective_gain << '\n';
    return r.max_linf_gap <= args.tolerance ? kExitOk : kExitCheckFailed;
  });
}

int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err, BenchReport* report) {
  return guarded(err, [&] {
    if (args.tokens == 0) throw UsageError("--tokens must be >= 1");
    if (args.iterations.empty()) throw UsageError("--iters-list must not be empty");
    if (args.repeats == 0) throw UsageError("--repeats must be >= 1");
    auto provider = require_provider(args.provider);

    std::vector<GenerationRequest> reqs;
    for (std::size_t t : args.iterations) {
      if (t < 1) throw UsageError("iteration counts must be >= 1");
      MethodArgs margs = args.method;
      margs.iters = t;
      GenerationRequest req;
      req.base_prompt = args.prompt;
      req.pref_prompt = args.pref;
      req.method = parse_method("amulet", margs);
      req.max_new_tokens = args.tokens;
      req.stop_on_eos = false;
      reqs.push_back(std::move(req));
    }

    // Repeats go round-robin over T so a slow stretch on the host hits every
    // row rather than skewing one.
    std::vector<double> best(reqs.size(), std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < args.repeats; ++r) {
      for (std::size_t i = 0; i < reqs.size(); ++i) {
        const GenerationResult res = generate(reqs[i], provider);
        double sum = 0.0;
        for (const auto& rec : res.per_token) sum += rec.wall_ms;
        best[i] = std::min(best[i], sum / static_cast<double>(res.per_token.size()));
      }
    }
    BenchReport rep;
    for (std::size_t i = 0; i < reqs.size(); ++i) rep.rows.push_back({args.iterations[i], best[i]});

    std::vector<double> xs, ys;
    for (const auto& row : rep.rows) {
      xs.push_back(static_cast<double>(row.iterations));
      ys.push_back(row.ms_per_token);
    }
    if (rep.rows.size() >= 2) rep.r_squared = linear_fit_r2(xs, ys);

    std::ostringstream csv;
    csv << "T,ms_per_token\n";
    for (const auto& row : rep.rows) {
      csv << row.iterations << ',' << std::setprecision(9) << row.ms_per_token << '\n';
    }
    if (!args.csv_path.empty()) {
      std::ofstream file(args.csv_path);
      if (!file) throw Error(ErrorKind::Io, "cannot write " + args.csv_path);
      file << csv.str();
    }
    out << csv.str();
    if (rep.r_squared) out << "linear fit R^2: " << std::setprecision(6) << *rep.r_squared << '\n';
    if (report) *report = rep;
    return kExitOk;
  });
}

int cmd_train_toy(const TrainToyArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.out_path.empty()) throw UsageError("--out is required");
    if (args.order < 1 || args.order > 5) throw UsageError("--order must be in [1, 5]");
    if (!(args.smoothing > 0.0)) throw UsageError("--smoothing must be > 0");
    if (!std::filesystem::exists(args.corpus_path)) {
      throw UsageError("corpus file not found: " + args.corpus_path);
    }
    const NGramModel model = train_ngram(read_file(args.corpus_path), args.order, args.smoothing);
    model.save(args.out_path);
    out << "trained order-" << model.order() << " model, vocabulary " << model.vocab().size()
        << ", " << model.counts().size() << " windows -> " << args.out_path << '\n';
    return kExitOk;
  });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.report_path.empty()) throw UsageError("--report is required");
    if (args.judge_url.empty()) throw UsageError("--judge-url is required");
    json report;
    try {
      report = json::parse(read_file(args.report_path));
    } catch (const json::exception& e) {
      throw UsageError(std::string("malformed report: ") + e.what());
    }

    std::vector<std::string> systems;
    for (const auto& m : report.at("meta").at("methods")) systems.push_back(m.at("label"));
    std::map<std::string, std::size_t> system_index;
    for (std::size_t i = 0; i < systems.size(); ++i) system_index[systems[i]] = i;

    // prompt_id -> label -> generation, in report order
    std::vector<std::string> prompt_order;
    std::map<std::string, std::map<std::string, json>> by_prompt;
    for (const auto& g : report.at("generations")) {
      const std::string pid = g.at("prompt_id");
      if (!by_prompt.count(pid)) prompt_order.push_back(pid);
      by_prompt[pid][g.at("method").get<std::string>()] = g;
    }

    struct Slot {
      JudgeTask task;
      std::optional<std::size_t> judged;  // index into tasks, or identity tie
    };
    std::vector<Slot> slots;
    std::vector<JudgeTask> tasks;
    for (const auto& pid : prompt_order) {
      const auto& gens = by_prompt[pid];
      for (std::size_t a = 0; a < systems.size(); ++a) {
        for (std::size_t b = a + 1; b < systems.size(); ++b) {
          if (!gens.count(systems[a]) || !gens.count(systems[b])) continue;
          const json& ga = gens.at(systems[a]);
          const json& gb = gens.at(systems[b]);
          JudgeTask t;
          t.system_a = systems[a];
          t.system_b = systems[b];
          t.instance_id = pid;
          t.question = ga.value("question", ga.value("base_prompt", args.question));
          t.preference = ga.value("preference", ga.value("pref_prompt", std::string()));
          if (t.question.empty()) t.question = args.question;
          if (t.preference.empty()) t.preference = args.preference;
          t.text_a = ga.at("text");
          t.text_b = gb.at("text");
          Slot slot{t, std::nullopt};
          if (t.text_a != t.text_b) {
            slot.judged = tasks.size();
            tasks.push_back(t);
          }
          slots.push_back(std::move(slot));
        }
      }
    }
    if (slots.empty()) throw UsageError("report contains no comparable pairs");

    HttpJudgeOptions jo;
    jo.url = args.judge_url;
    jo.model = args.judge_model;
    jo.timeout = std::chrono::milliseconds(args.timeout_ms);
    HttpChatClient judge(jo);
    RetryPolicy retry{args.retry_attempts, std::chrono::milliseconds(args.retry_backoff_ms)};
    const auto judged = judge_all(tasks, judge, args.jobs, retry);

    std::unique_ptr<VerdictLog> log;
    if (!args.verdicts_path.empty()) log = std::make_unique<VerdictLog>(args.verdicts_path);

    OutcomeMatrix matrix(systems.size());
    std::vector<PairVerdict> verdicts;
    for (const auto& slot : slots) {
      DebiasedJudgment j;
      if (slot.judged) {
        j = judged[*slot.judged];
      } else {
        j.outcome = Outcome::Tie;
        j.a_first = j.b_first = JudgeVerdict{Verdict::Tie, "tie by identity"};
      }
      if (log) log->append(slot.task, j);
      matrix.record(system_index[slot.task.system_a], system_index[slot.task.system_b], j.outcome);
      verdicts.push_back({slot.task.system_a, slot.task.system_b, slot.task.instance_id, j.outcome});
    }

    out << "pair                                      n    win%    tie%   lose%\n";
    for (const auto& row : win_rate_table(verdicts)) {
      std::ostringstream pair;
      pair << row.system_a << " vs " << row.system_b;
      out << std::left << std::setw(40) << pair.str() << std::right << std::setw(4) << row.count
          << std::fixed << std::setprecision(1) << std::setw(8) << row.win_pct << std::setw(8)
          << row.tie_pct << std::setw(8) << row.lose_pct << '\n';
    }
    const BTScores bt = bt_scores(matrix);
    out << "Bradley-Terry scores" << (bt.regularized ? " (regularized)" : "") << ":\n";
    for (std::size_t i = 0; i < systems.size(); ++i) {
      out << "  " << std::left << std::setw(24) << systems[i] << std::right << std::fixed
          << std::setprecision(6) << bt.scores[i] << '\n';
    }
    return kExitOk;
  });
}

}  // namespace amulet::cli
