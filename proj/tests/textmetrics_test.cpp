#include <gtest/gtest.h>

#include "forge/mock_providers.hpp"
#include "forge/textmetrics.hpp"
#include "oracles.hpp"

using namespace forge;
using text::TokenizeMode;
using text::TokenSeq;

namespace {

std::vector<std::string> toks(const TokenSeq &s) { return s.tokens(); }

// 120 whitespace-separated words with no punctuation attached mid-word.
const std::string kParagraph120 =
    "I am Layla and I live in Amman with my parents and my younger brother in a small flat near the market "
    "Every morning I walk to the clinic where I work as a nurse and I usually start my shift at seven "
    "During lunch I read the news on my phone and reply to messages from my cousins who live abroad "
    "In the evening I help my mother cook dinner and then I watch a short film with my brother "
    "On weekends I visit my grandmother and we drink tea on her balcony while the neighbours chat below "
    "I am saving money for a course next spring and I hope to finish my first module before the summer holidays";

} // namespace

TEST(Tokenize, SplitsOnPunctuationAndLowercases) {
  EXPECT_EQ(toks(text::tokenize("Travel, Transport")), (std::vector<std::string>{"travel", "transport"}));
  EXPECT_TRUE(text::tokenize("").empty());
  EXPECT_TRUE(text::tokenize(" ,.;!? ").empty());
}

TEST(Tokenize, KeepsContractionsTogether) {
  EXPECT_EQ(toks(text::tokenize("I've learned it's fine.")),
            (std::vector<std::string>{"i've", "learned", "it's", "fine"}));
  EXPECT_EQ(toks(text::tokenize("'quoted' word")), (std::vector<std::string>{"quoted", "word"}));
}

TEST(Tokenize, ArabicDiacriticsNormalizeAway) {
  // "ذَهَبَ أَحْمَدُ إِلَى المَدْرَسَةِ" vs its undiacritized spelling with bare alef and heh.
  const std::string voweled = "ذَهَبَ أَحْمَدُ إِلَى المَدْرَسَةِ";
  const std::string bare = "ذهب احمد الى المدرسه";
  EXPECT_EQ(text::tokenize(voweled, TokenizeMode::wer_normalized), text::tokenize(bare, TokenizeMode::wer_normalized));
  // word_split keeps the orthography distinct
  EXPECT_NE(text::tokenize(voweled), text::tokenize(bare));
  // Arabic comma and question mark are boundaries
  EXPECT_EQ(text::tokenize("نعم، لماذا؟").size(), 2u);
}

TEST(Wer, FixedCases) {
  const auto abc = TokenSeq::of({"a", "b", "c"});
  EXPECT_DOUBLE_EQ(text::wer(abc, abc), 0.0);
  EXPECT_DOUBLE_EQ(text::wer(abc, TokenSeq::of({"a", "x", "c"})), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(text::wer(abc, TokenSeq{}), 1.0);
  EXPECT_DOUBLE_EQ(text::wer(TokenSeq::of({"a"}), TokenSeq::of({"x", "y", "z"})), 3.0);
}

TEST(Wer, EmptyReferenceIsAnError) {
  EXPECT_THROW(text::wer(TokenSeq{}, TokenSeq::of({"a"})), Error);
}

TEST(Wer, OneSubstitutionInTenTokens) {
  EXPECT_DOUBLE_EQ(text::wer("one two three four five six seven eight nine ten",
                             "one two three four five six seven eight nine zzz"),
                   0.1);
}

TEST(Wer, MatchesExhaustiveOracleOnShortSequences) {
  Rng rng(7);
  const std::vector<std::string> vocab{"a", "b", "c", "d"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> ref(1 + rng.index(5)), hyp(rng.index(6));
    for (auto &t : ref) t = rng.pick(vocab);
    for (auto &t : hyp) t = rng.pick(vocab);
    EXPECT_DOUBLE_EQ(text::wer(TokenSeq::of(ref), TokenSeq::of(hyp)), oracle::wer(ref, hyp));
  }
}

TEST(Wer, IdentityUnderNormalizedRetokenization) {
  const std::string s = "ذَهَبَ أَحْمَدُ إِلَى المَدْرَسَةِ، ثم عاد.";
  const auto t = text::tokenize(s, TokenizeMode::wer_normalized);
  EXPECT_DOUBLE_EQ(text::wer(t, t), 0.0);
  EXPECT_DOUBLE_EQ(text::wer(s, "ذهب احمد الى المدرسه ثم عاد"), 0.0);
}

TEST(Jaccard, SetSemantics) {
  const auto abc = TokenSeq::of({"a", "b", "c"});
  EXPECT_DOUBLE_EQ(text::jaccard(abc, abc), 1.0);
  EXPECT_DOUBLE_EQ(text::jaccard(abc, TokenSeq::of({"b", "c", "d"})), 0.5);
  EXPECT_DOUBLE_EQ(text::jaccard(abc, TokenSeq::of({"x", "y"})), 0.0);
  EXPECT_DOUBLE_EQ(text::jaccard(TokenSeq{}, TokenSeq{}), 0.0);
  // duplicates collapse
  EXPECT_DOUBLE_EQ(text::jaccard(TokenSeq::of({"a", "a", "b"}), TokenSeq::of({"a", "b"})), 1.0);
}

TEST(Jaccard, SymmetricAndMatchesOracle) {
  Rng rng(11);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> a(rng.index(6)), b(rng.index(6));
    for (auto &t : a) t = rng.pick(vocab);
    for (auto &t : b) t = rng.pick(vocab);
    const auto ta = TokenSeq::of(a), tb = TokenSeq::of(b);
    EXPECT_DOUBLE_EQ(text::jaccard(ta, tb), text::jaccard(tb, ta));
    EXPECT_DOUBLE_EQ(text::jaccard(ta, tb), oracle::jaccard(a, b));
    if (!a.empty() || !b.empty()) {
      EXPECT_EQ(text::jaccard(ta, tb) == 1.0, ta.as_set() == tb.as_set());
    }
  }
}

TEST(Cosine, ClosedForms) {
  const EmbeddingVector v({0.3, -0.2, 0.9});
  EXPECT_NEAR(text::cosine(v, v), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(text::cosine(EmbeddingVector({1, 0}), EmbeddingVector({0, 1})), 0.0);
  EXPECT_NEAR(text::cosine(EmbeddingVector({1 / std::sqrt(2.0), 1 / std::sqrt(2.0)}), EmbeddingVector({1, 0})),
              0.70710678118654752, 1e-12);
  EXPECT_THROW(text::cosine(EmbeddingVector({1, 0}), EmbeddingVector({1, 0, 0})), Error);
  EXPECT_THROW(text::cosine(EmbeddingVector({0, 0}), EmbeddingVector({1, 0})), Error);
}

TEST(Cosine, SymmetricAndBounded) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> a(8), b(8);
    for (auto &x : a) x = rng.uniform_real(-1, 1);
    for (auto &x : b) x = rng.uniform_real(-1, 1);
    const EmbeddingVector va(a), vb(b);
    EXPECT_DOUBLE_EQ(text::cosine(va, vb), text::cosine(vb, va));
    EXPECT_LE(std::abs(text::cosine(va, vb)), 1.0 + 1e-9);
  }
}

TEST(CountWords, Basics) {
  EXPECT_EQ(text::count_words("one two three"), 3u);
  EXPECT_EQ(text::count_words(""), 0u);
  EXPECT_EQ(oracle::whitespace_words(kParagraph120), 120u);
  EXPECT_EQ(text::count_words(kParagraph120), 120u);
}
