#include "amulet/decoder.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "amulet/error.hpp"

namespace amulet {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string method_name(const Method& m) {
  return std::visit(overloaded{
                        [](const method::Base&) { return std::string("base"); },
                        [](const method::Pref&) { return std::string("pref"); },
                        [](const method::LinearAlign&) { return std::string("la"); },
                        [](const method::Amulet&) { return std::string("amulet"); },
                    },
                    m);
}

std::string method_label(const Method& m) {
  std::ostringstream os;
  os.precision(17);
  std::visit(overloaded{
                 [&](const method::Base&) { os << "base"; },
                 [&](const method::Pref&) { os << "pref"; },
                 [&](const method::LinearAlign& la) { os << "la(beta=" << la.beta << ")"; },
                 [&](const method::Amulet& a) {
                   os << "amulet(alpha=" << a.params.alpha << ",lambda=" << a.params.lambda
                      << ",eta=" << a.params.eta << ",T=" << a.params.iterations;
                   if (a.params.early_stop_tol > 0.0) os << ",tol=" << a.params.early_stop_tol;
                   os << ")";
                 },
             },
             m);
  return os.str();
}

void validate(const Method& m) {
  if (const auto* la = std::get_if<method::LinearAlign>(&m); la && !std::isfinite(la->beta)) {
    throw Error(ErrorKind::InvalidArgument, "beta must be finite");
  }
  if (const auto* am = std::get_if<method::Amulet>(&m)) am->params.validate();
}

std::string to_string(FinishReason r) {
  switch (r) {
    case FinishReason::Length: return "length";
    case FinishReason::Eos: return "eos";
    case FinishReason::Cancelled: return "cancelled";
  }
  return "unknown";
}

void GenerationRequest::validate() const {
  if (max_new_tokens < 1) throw Error(ErrorKind::InvalidArgument, "max_new_tokens must be >= 1");
  amulet::validate(method);
  sampling.validate();
}

LogDist linear_align_step(const LogDist& log_pi_pref, const LogDist& log_pi_base, double beta) {
  require_same_size(log_pi_pref.size(), log_pi_base.size(), "linear_align_step");
  std::vector<double> raw(log_pi_pref.size());
  for (std::size_t a = 0; a < raw.size(); ++a) {
    raw[a] = log_pi_pref[a] + beta * (log_pi_pref[a] - log_pi_base[a]);
  }
  return normalize_log(raw);
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

Decoder::Decoder(std::shared_ptr<const LogprobProvider> provider, const GenerationRequest& request)
    : provider_(std::move(provider)),
      max_new_tokens_(request.max_new_tokens),
      stop_on_eos_(request.stop_on_eos),
      method_(request.method),
      pref_text_(request.pref_prompt),
      ctx_({}, {}),
      sampler_(request.sampling) {
  request.validate();
  Context base = provider_->tokenize(request.base_prompt);
  if (base.empty()) throw Error(ErrorKind::InvalidArgument, "base prompt tokenizes to nothing");
  ctx_ = DualContext(std::move(base), provider_->tokenize(pref_text_));
}

void Decoder::set_method(Method m) {
  amulet::validate(m);
  method_ = std::move(m);
}

void Decoder::set_pref_prompt(const std::string& pref_prompt) {
  ctx_ = ctx_.with_pref_prompt(provider_->tokenize(pref_prompt));
  pref_text_ = pref_prompt;
}

std::string Decoder::fingerprint() const {
  const std::size_t h = std::hash<std::string>{}(method_label(method_) + '\x1f' + pref_text_);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016zx", h);
  return buf;
}

void Decoder::cancel() {
  if (!finish_) {
    finish_ = FinishReason::Cancelled;
    result_.finish_reason = FinishReason::Cancelled;
  }
}

LogDist Decoder::step_distribution(StepRecord& rec) const {
  auto pref = [&] { return provider_->next_logprobs(ctx_.pref_context()); };
  auto base = [&] { return provider_->next_logprobs(ctx_.base_context()); };

  return std::visit(
      overloaded{
          [&](const method::Base&) { return base(); },
          [&](const method::Pref&) { return pref(); },
          [&](const method::LinearAlign& la) {
            const LogDist p1 = pref();
            const LogDist pb = base();
            rec.kl_pi1_to_base = kl_divergence(p1, pb);
            return linear_align_step(p1, pb, la.beta);
          },
          [&](const method::Amulet& am) {
            const LogDist p1 = pref();
            const LogDist pb = base();
            rec.kl_pi1_to_base = kl_divergence(p1, pb);
            OptResult opt = optimize(p1, pb, am.params);
            rec.iters_run = opt.iterations_run;
            if (!opt.trace.empty()) rec.final_kl_step = opt.trace.back().step_kl;
            rec.trace = std::move(opt.trace);
            return std::move(opt.final);
          },
      },
      method_);
}

std::optional<StepRecord> Decoder::step() {
  if (finish_) return std::nullopt;
  if (result_.tokens.size() >= max_new_tokens_) {
    finish_ = FinishReason::Length;
    result_.finish_reason = *finish_;
    return std::nullopt;
  }

  const auto start = std::chrono::steady_clock::now();
  StepRecord rec;
  rec.index = result_.tokens.size();
  rec.method = method_name(method_);
  rec.fingerprint = fingerprint();

  std::size_t chosen = 0;
  try {
    const LogDist d = step_distribution(rec);
    chosen = sampler_.draw(d);
  } catch (const Error& e) {
    throw Error(e.kind(), "token " + std::to_string(rec.index) + ": " + e.what());
  }

  const auto eos = provider_->eos_id();
  if (stop_on_eos_ && eos && chosen == *eos) {
    finish_ = FinishReason::Eos;
    result_.finish_reason = *finish_;
    return std::nullopt;
  }

  rec.token = provider_->token(static_cast<TokenId>(chosen));
  ctx_ = advance(ctx_, rec.token);
  result_.text += rec.token.text;
  result_.tokens.push_back(rec.token);
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  result_.per_token.push_back(rec);

  if (result_.tokens.size() >= max_new_tokens_) {
    finish_ = FinishReason::Length;
    result_.finish_reason = *finish_;
  }
  return rec;
}

GenerationResult generate(const GenerationRequest& request,
                          std::shared_ptr<const LogprobProvider> provider, std::stop_token stop) {
  Decoder dec(std::move(provider), request);
  while (!dec.finished()) {
    if (stop.stop_requested()) {
      dec.cancel();
      break;
    }
    dec.step();
  }
  return dec.take_result();
}

}  // namespace amulet
