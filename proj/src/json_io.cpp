#include "amulet/json_io.hpp"

#include "amulet/error.hpp"

namespace amulet::json_io {

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::InvalidArgument, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

json to_json(const SamplingStrategy& s) {
  static const char* kNames[] = {"greedy", "temperature", "top_k", "top_p"};
  return {{"kind", kNames[static_cast<int>(s.kind)]},
          {"temperature", s.temperature},
          {"k", s.k},
          {"p", s.p},
          {"seed", s.seed}};
}

SamplingStrategy sampling_from_json(const json& j, SamplingStrategy s) {
  const std::string kind = get_or<std::string>(j, "kind", "");
  if (kind == "greedy") s.kind = SamplingKind::Greedy;
  else if (kind == "temperature") s.kind = SamplingKind::Temperature;
  else if (kind == "top_k") s.kind = SamplingKind::TopK;
  else if (kind == "top_p") s.kind = SamplingKind::TopP;
  else if (!kind.empty()) throw Error(ErrorKind::InvalidArgument, "unknown sampling kind " + kind);
  s.temperature = get_or(j, "temperature", s.temperature);
  s.k = get_or(j, "k", s.k);
  s.p = get_or(j, "p", s.p);
  s.seed = get_or(j, "seed", s.seed);
  s.validate();
  return s;
}

json to_json(const Method& m) {
  json j = {{"method", method_name(m)}};
  if (const auto* la = std::get_if<method::LinearAlign>(&m)) j["beta"] = la->beta;
  if (const auto* am = std::get_if<method::Amulet>(&m)) {
    j["alpha"] = am->params.alpha;
    j["lambda"] = am->params.lambda;
    j["eta"] = am->params.eta;
    j["iterations"] = am->params.iterations;
    j["early_stop_tol"] = am->params.early_stop_tol;
  }
  return j;
}

Method method_from_json(const json& j, const Method& base) {
  const std::string name = get_or<std::string>(j, "method", method_name(base));
  Method out;
  if (name == "base") {
    out = method::Base{};
  } else if (name == "pref") {
    out = method::Pref{};
  } else if (name == "la") {
    method::LinearAlign la;
    if (const auto* b = std::get_if<method::LinearAlign>(&base)) la = *b;
    la.beta = get_or(j, "beta", la.beta);
    out = la;
  } else if (name == "amulet") {
    method::Amulet am;
    if (const auto* b = std::get_if<method::Amulet>(&base)) am = *b;
    am.params.alpha = get_or(j, "alpha", am.params.alpha);
    am.params.lambda = get_or(j, "lambda", am.params.lambda);
    am.params.eta = get_or(j, "eta", am.params.eta);
    am.params.iterations = get_or(j, "iterations", am.params.iterations);
    am.params.early_stop_tol = get_or(j, "early_stop_tol", am.params.early_stop_tol);
    out = am;
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown method " + name);
  }
  validate(out);
  return out;
}

json to_json(const StepRecord& r, bool include_trace) {
  json diag = {{"iters_run", r.iters_run}, {"final_kl_step", r.final_kl_step}};
  diag["kl_pi1_to_base"] = r.kl_pi1_to_base ? json(*r.kl_pi1_to_base) : json(nullptr);
  json j = {{"index", r.index},
            {"token_id", r.token.id},
            {"token_text", r.token.text},
            {"method", r.method},
            {"diag", std::move(diag)},
            {"wall_ms", r.wall_ms},
            {"fingerprint", r.fingerprint}};
  if (include_trace) {
    json trace = json::array();
    for (const auto& d : r.trace) {
      trace.push_back({{"step_kl", d.step_kl},
                       {"utility_linf", d.utility_linf},
                       {"kl_to_pi1", d.kl_to_pi1}});
    }
    j["trace"] = std::move(trace);
  }
  return j;
}

GenerationRequest request_from_json(const json& j, const GenerationRequest& base) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "request body must be an object");
  GenerationRequest r = base;
  r.base_prompt = get_or(j, "base_prompt", r.base_prompt);
  r.pref_prompt = get_or(j, "pref_prompt", r.pref_prompt);
  r.method = method_from_json(j, r.method);
  r.max_new_tokens = get_or(j, "max_new_tokens", r.max_new_tokens);
  r.stop_on_eos = get_or(j, "stop_on_eos", r.stop_on_eos);
  if (j.contains("sampling")) r.sampling = sampling_from_json(j.at("sampling"), r.sampling);
  r.validate();
  return r;
}

json to_json(const GenerationRequest& r) {
  json j = to_json(r.method);
  j["base_prompt"] = r.base_prompt;
  j["pref_prompt"] = r.pref_prompt;
  j["max_new_tokens"] = r.max_new_tokens;
  j["stop_on_eos"] = r.stop_on_eos;
  j["sampling"] = to_json(r.sampling);
  return j;
}

}  // namespace amulet::json_io
