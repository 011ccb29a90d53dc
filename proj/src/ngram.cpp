#include "amulet/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "amulet/error.hpp"
#include "json.hpp"

namespace amulet {

using json = nlohmann::json;

std::vector<std::string> printable_ascii_vocab() {
  std::vector<std::string> out;
  for (char c = 0x20; c < 0x7f; ++c) out.emplace_back(1, c);
  return out;
}

std::vector<std::string> split_utf8(std::string_view text) {
  static const std::string kReplacement = "\xEF\xBF\xBD";
  std::vector<std::string> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    else if (lead >= 0x80) len = 0;  // stray continuation byte

    bool ok = len > 0 && i + len <= text.size();
    for (std::size_t j = 1; ok && j < len; ++j) {
      ok = (static_cast<unsigned char>(text[i + j]) & 0xC0) == 0x80;
    }
    if (!ok) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    if (!(len == 1 && text[i] == '\r')) out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> chars) {
  std::set<std::string> seen;
  for (auto& c : chars) {
    if (c == kEosText) continue;
    if (seen.insert(c).second) texts_.push_back(std::move(c));
  }
  texts_.emplace_back(kEosText);
  for (std::size_t i = 0; i < texts_.size(); ++i) {
    index_.emplace(texts_[i], static_cast<TokenId>(i));
  }
}

const std::string& Vocabulary::text(TokenId id) const {
  if (id >= texts_.size()) {
    throw Error(ErrorKind::InvalidArgument, "token id " + std::to_string(id) +
                                                " outside vocabulary of size " +
                                                std::to_string(texts_.size()));
  }
  return texts_[id];
}

bool Vocabulary::contains(std::string_view piece) const {
  return index_.find(piece) != index_.end();
}

TokenId Vocabulary::id(std::string_view piece) const {
  auto it = index_.find(piece);
  if (it == index_.end()) {
    throw Error(ErrorKind::InvalidArgument,
                "character '" + std::string(piece) + "' not in vocabulary");
  }
  return it->second;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& piece : split_utf8(text)) ids.push_back(id(piece));
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += text(id);
  return out;
}

// ---------------------------------------------------------------------------
// NGramModel
// ---------------------------------------------------------------------------

NGramModel::NGramModel(int order, double smoothing, Vocabulary vocab,
                       std::map<std::string, std::vector<std::uint64_t>> counts)
    : order_(order), smoothing_(smoothing), vocab_(std::move(vocab)), counts_(std::move(counts)) {
  if (order_ < 1 || order_ > 5) {
    throw Error(ErrorKind::InvalidArgument, "order must be in [1, 5], got " +
                                                std::to_string(order_));
  }
  if (!(smoothing_ > 0.0) || !std::isfinite(smoothing_)) {
    throw Error(ErrorKind::InvalidArgument, "smoothing must be > 0");
  }
  if (vocab_.size() < 2) {
    throw Error(ErrorKind::DegenerateVocabulary, "degenerate vocabulary");
  }
  for (const auto& [window, row] : counts_) {
    if (row.size() != vocab_.size()) {
      throw Error(ErrorKind::LengthMismatch, "count row for window '" + window +
                                                 "' has wrong length");
    }
    std::uint64_t total = 0;
    for (auto c : row) total += c;
    totals_[window] = total;
  }
}

std::string NGramModel::window_key(std::span<const TokenId> context) const {
  const std::size_t width = std::min<std::size_t>(order_ - 1, context.size());
  return vocab_.decode(context.subspan(context.size() - width));
}

LogDist NGramModel::next_logprobs(std::span<const TokenId> context) const {
  const std::size_t v = vocab_.size();
  std::vector<double> raw(v, std::log(smoothing_));
  auto it = counts_.find(window_key(context));
  if (it != counts_.end()) {
    for (std::size_t a = 0; a < v; ++a) {
      raw[a] = std::log(static_cast<double>(it->second[a]) + smoothing_);
    }
  }
  return normalize_log(raw);
}

std::string NGramModel::to_json() const {
  json counts = json::object();
  for (const auto& [window, row] : counts_) counts[window] = row;
  json doc = {{"order", order_},
              {"smoothing", smoothing_},
              {"vocab", vocab_.texts()},
              {"counts", std::move(counts)}};
  return doc.dump();
}

NGramModel NGramModel::from_json(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
    auto texts = doc.at("vocab").get<std::vector<std::string>>();
    if (texts.empty() || texts.back() != kEosText) {
      throw Error(ErrorKind::InvalidArgument, "vocab must end with the EOS token");
    }
    texts.pop_back();
    std::map<std::string, std::vector<std::uint64_t>> counts;
    for (const auto& [window, row] : doc.at("counts").items()) {
      counts.emplace(window, row.get<std::vector<std::uint64_t>>());
    }
    return NGramModel(doc.at("order").get<int>(), doc.at("smoothing").get<double>(),
                      Vocabulary(std::move(texts)), std::move(counts));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed model JSON: ") + e.what());
  }
}

void NGramModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << to_json() << '\n';
}

NGramModel NGramModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

NGramModel train_ngram(std::string_view corpus, int order, double smoothing) {
  if (order < 1 || order > 5) {
    throw Error(ErrorKind::InvalidArgument, "order must be in [1, 5], got " +
                                                std::to_string(order));
  }
  if (!(smoothing > 0.0)) throw Error(ErrorKind::InvalidArgument, "smoothing must be > 0");

  const auto pieces = split_utf8(corpus);
  std::vector<std::string> distinct;
  {
    std::set<std::string> seen;
    for (const auto& p : pieces) {
      if (p != kEosText && seen.insert(p).second) distinct.push_back(p);
    }
  }
  if (distinct.empty()) {
    return NGramModel(1, smoothing, Vocabulary(printable_ascii_vocab()), {});
  }
  if (distinct.size() == 1) {
    throw Error(ErrorKind::DegenerateVocabulary, "degenerate vocabulary");
  }
  std::sort(distinct.begin(), distinct.end());

  Vocabulary vocab(std::move(distinct));
  std::vector<TokenId> ids;
  ids.reserve(pieces.size());
  for (const auto& p : pieces) ids.push_back(vocab.id(p));

  std::map<std::string, std::vector<std::uint64_t>> counts;
  const std::size_t width = static_cast<std::size_t>(order - 1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t w = std::min(width, i);
    std::string key = vocab.decode(std::span<const TokenId>(ids).subspan(i - w, w));
    auto& row = counts[key];
    if (row.empty()) row.assign(vocab.size(), 0);
    ++row[ids[i]];
  }
  return NGramModel(order, smoothing, std::move(vocab), std::move(counts));
}

}  // namespace amulet
