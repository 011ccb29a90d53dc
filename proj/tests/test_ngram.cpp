#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "amulet/error.hpp"
#include "amulet/ngram.hpp"
#include "amulet/provider.hpp"
#include "test_support.hpp"

namespace amulet {
namespace {

double total_mass(const LogDist& d) {
  double s = 0.0;
  for (double p : d.probs()) s += p;
  return s;
}

TEST(TrainNgram, BigramCountsWithEos) {
  const NGramModel m = train_ngram("abab", 2, 1.0);
  ASSERT_EQ(m.vocab().size(), 3u);  // a, b, end-of-sequence
  const auto a = m.vocab().id("a");
  const auto b = m.vocab().id("b");
  const TokenId ctx[] = {a};
  const LogDist d = m.next_logprobs(ctx);
  EXPECT_NEAR(std::exp(d[b]), 0.6, 1e-12);
  EXPECT_NEAR(std::exp(d[a]), 0.2, 1e-12);
  EXPECT_EQ(argmax(d.log_probs()), b);
}

TEST(TrainNgram, UnigramCountArithmetic) {
  for (double k : {0.1, 0.5, 1.0, 3.0}) {
    const NGramModel m = train_ngram("aab", 1, k);
    const LogDist d = m.next_logprobs({});
    EXPECT_NEAR(std::exp(d[m.vocab().id("a")]), (2 + k) / (3 + 3 * k), 1e-12);
    EXPECT_NEAR(std::exp(d[m.vocab().id("b")]), (1 + k) / (3 + 3 * k), 1e-12);
  }
}

TEST(TrainNgram, UnseenWindowIsUniform) {
  const NGramModel m = train_ngram("abcabd", 3, 0.5);
  const auto c = m.vocab().id("c");
  const auto d = m.vocab().id("d");
  const TokenId ctx[] = {c, d};  // "cd" never occurs
  const LogDist dist = m.next_logprobs(ctx);
  const double uniform = -std::log(static_cast<double>(m.vocab().size()));
  for (double v : dist.log_probs()) EXPECT_NEAR(v, uniform, 1e-12);
}

TEST(TrainNgram, EveryConditionalSumsToOne) {
  const NGramModel& m = testing::toy_model();
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<TokenId> tok(0, static_cast<TokenId>(m.vocab().size() - 1));
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<TokenId> ctx(trial % 7);
    for (auto& t : ctx) t = tok(rng);
    EXPECT_NEAR(total_mass(m.next_logprobs(ctx)), 1.0, 1e-12);
  }
  for (const auto& [key, row] : m.counts()) {
    std::uint64_t total = 0;
    for (auto c : row) total += c;
    EXPECT_GE(total, 1u) << "window '" << key << "'";
  }
}

TEST(TrainNgram, EmptyCorpusFallsBackToUniformUnigram) {
  const NGramModel m = train_ngram("", 3, 0.1);
  EXPECT_EQ(m.order(), 1);
  EXPECT_EQ(m.vocab().size(), 96u);  // 95 printable ASCII + end-of-sequence
  const TokenId ctx[] = {3, 4, 5};
  const LogDist d = m.next_logprobs(ctx);
  for (double v : d.log_probs()) EXPECT_NEAR(v, -std::log(96.0), 1e-12);
}

TEST(TrainNgram, SingleCharacterCorpusIsDegenerate) {
  try {
    train_ngram("aaaa", 2, 1.0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateVocabulary);
    EXPECT_STREQ(e.what(), "degenerate vocabulary");
  }
}

TEST(TrainNgram, RejectsBadHyperparameters) {
  EXPECT_THROW(train_ngram("abc", 0, 1.0), Error);
  EXPECT_THROW(train_ngram("abc", 6, 1.0), Error);
  EXPECT_THROW(train_ngram("abc", 2, 0.0), Error);
  EXPECT_THROW(train_ngram("abc", 2, -1.0), Error);
}

TEST(TrainNgram, DeterministicAcrossCalls) {
  const NGramModel& m = testing::toy_model();
  const auto ctx = m.vocab().encode("the red ");
  EXPECT_EQ(m.next_logprobs(ctx), m.next_logprobs(ctx));
}

TEST(NGramModel, JsonRoundTripPreservesPredictions) {
  const NGramModel& m = testing::toy_model();
  const NGramModel back = NGramModel::from_json(m.to_json());
  EXPECT_EQ(back.order(), m.order());
  EXPECT_EQ(back.smoothing(), m.smoothing());
  EXPECT_EQ(back.vocab().texts(), m.vocab().texts());
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<TokenId> tok(0, static_cast<TokenId>(m.vocab().size() - 1));
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TokenId> ctx(1 + trial % 6);
    for (auto& t : ctx) t = tok(rng);
    EXPECT_EQ(back.next_logprobs(ctx), m.next_logprobs(ctx));
  }
}

TEST(NGramModel, JsonDocumentShape) {
  const auto j = nlohmann::json::parse(train_ngram("abab", 2, 1.0).to_json());
  EXPECT_EQ(j.at("order"), 2);
  EXPECT_EQ(j.at("smoothing"), 1.0);
  EXPECT_EQ(j.at("vocab"), nlohmann::json::array({"a", "b", "\n"}));
  EXPECT_EQ(j.at("counts").at("a"), nlohmann::json::array({0, 2, 0}));
}

TEST(NGramModel, MalformedJsonIsRejected) {
  EXPECT_THROW(NGramModel::from_json("{}"), Error);
  EXPECT_THROW(NGramModel::from_json("not json"), Error);
  EXPECT_THROW(NGramModel::from_json(
                   R"({"order":2,"smoothing":1,"vocab":["a","b","\n"],"counts":{"a":[1]}})"),
               Error);
}

TEST(Vocabulary, EncodeDecodeRoundTrip) {
  const Vocabulary& v = testing::toy_model().vocab();
  const std::string text = "the OLD dog.\n";
  EXPECT_EQ(v.decode(v.encode(text)), text);
  EXPECT_THROW(v.encode("~"), Error);
}

TEST(SplitUtf8, KeepsMultibyteCharactersTogether) {
  const auto parts = split_utf8("a\xc3\xa9\xe2\x82\xac" "b\r\n");
  ASSERT_EQ(parts.size(), 5u);
  EXPECT_EQ(parts[1], "\xc3\xa9");
  EXPECT_EQ(parts[2], "\xe2\x82\xac");
  EXPECT_EQ(parts[4], "\n");
}

TEST(DualContext, AdvanceAppendsToBothSides) {
  const DualContext start({1, 2}, {7});
  const DualContext one = advance(start, Token{5, "x"});
  const DualContext two = advance(one, Token{9, "y"});
  EXPECT_EQ(two.pref_context(), (Context{1, 2, 7, 5, 9}));
  EXPECT_EQ(two.base_context(), (Context{1, 2, 5, 9}));
  EXPECT_EQ(two.suffix(), (Context{5, 9}));
  EXPECT_TRUE(start.suffix().empty());
}

TEST(DualContext, LengthsStayConsistent) {
  DualContext dc({3}, {4, 4});
  for (TokenId id = 0; id < 20; ++id) {
    dc = advance(dc, Token{id, ""});
    EXPECT_EQ(dc.pref_context().size(), dc.base_context().size() + 2);
    EXPECT_EQ(dc.pref_context().back(), id);
    EXPECT_EQ(dc.base_context().back(), id);
  }
  const DualContext swapped = dc.with_pref_prompt({8});
  EXPECT_EQ(swapped.suffix(), dc.suffix());
  EXPECT_EQ(swapped.pref_context().size(), swapped.base_context().size() + 1);
}

}  // namespace
}  // namespace amulet
