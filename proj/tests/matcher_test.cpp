#include <gtest/gtest.h>

#include <atomic>

#include "forge/matcher.hpp"
#include "forge/mock_providers.hpp"
#include "oracles.hpp"

using namespace forge;
using namespace forge::matcher;

namespace {

class FixedEmbedder final : public Embedder {
public:
  std::map<std::string, std::vector<double>> table;
  std::size_t calls = 0;
  EmbeddingVector embed(const std::string &t) override {
    ++calls;
    return EmbeddingVector(table.at(t));
  }
  [[nodiscard]] std::size_t dim() const override { return 2; }
};

scenario::Scenario scen(std::string id, std::string text) {
  scenario::Scenario s;
  s.scenario_id = std::move(id);
  s.text = std::move(text);
  return s;
}

persona::PersonaSummary summ(std::string id, std::string text) { return {std::move(id), std::move(text), 0}; }

} // namespace

TEST(HybridScore, IdenticalTexts) {
  mock::HashEmbedder emb;
  const auto s = hybrid_score("I rent cars in Cairo", "I rent cars in Cairo", emb);
  EXPECT_NEAR(s.s_emb, 1.0, 1e-12);
  EXPECT_EQ(s.s_jac, 1.0);
  EXPECT_NEAR(s.s_hyb, 1.0, 1e-12);
}

TEST(HybridScore, LinearBlend) {
  FixedEmbedder emb;
  emb.table["alpha beta gamma delta e f g h i j"] = {1, 0};
  emb.table["alpha x1 x2 x3 x4 x5 x6 x7 x8 x9"] = {0.3, std::sqrt(1 - 0.09)};
  const auto s = hybrid_score("alpha beta gamma delta e f g h i j", "alpha x1 x2 x3 x4 x5 x6 x7 x8 x9", emb);
  EXPECT_NEAR(s.s_emb, 0.3, 1e-12);
  EXPECT_NEAR(s.s_jac, 1.0 / 19.0, 1e-12);
  EXPECT_NEAR(s.s_hyb, 0.5 * 0.3 + 0.5 / 19.0, 1e-12);
}

TEST(HybridScore, PointThreeAndPointOneGivePointTwo) {
  EXPECT_NEAR(blend(0.3, 0.1, 0.5), 0.2, 1e-12);
}

TEST(HybridScore, DisjointAndOrthogonal) {
  FixedEmbedder emb;
  emb.table["red apple"] = {1, 0};
  emb.table["blue sky"] = {0, 1};
  const auto s = hybrid_score("red apple", "blue sky", emb);
  EXPECT_EQ(s.s_emb, 0.0);
  EXPECT_EQ(s.s_jac, 0.0);
  EXPECT_EQ(s.s_hyb, 0.0);
}

TEST(HybridScore, EmptyTextIsError) {
  mock::HashEmbedder emb;
  EXPECT_THROW(hybrid_score("", "x", emb), Error);
}

TEST(MatchAll, ThresholdIsInclusive) {
  FixedEmbedder emb;
  emb.table["p"] = {1, 0};
  emb.table["at"] = {0.1, std::sqrt(1 - 0.01)};   // s_hyb 0.05
  emb.table["below"] = {0.098, std::sqrt(1 - 0.098 * 0.098)}; // s_hyb 0.049
  MatchConfig cfg;
  cfg.keep_all = true;
  const auto recs = match_all({summ("p1", "p")}, {scen("s-at", "at"), scen("s-below", "below")}, emb, cfg);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_NEAR(recs[0].s_hyb, 0.05, 1e-15);
  EXPECT_TRUE(recs[0].kept);
  EXPECT_NEAR(recs[1].s_hyb, 0.049, 1e-15);
  EXPECT_FALSE(recs[1].kept);
  EXPECT_EQ(match_all({summ("p1", "p")}, {scen("s-at", "at"), scen("s-below", "below")}, emb).size(), 1u);
}

TEST(MatchAll, CardinalityAndCaching) {
  mock::HashEmbedder inner;
  struct Counting final : Embedder {
    Embedder &e;
    std::atomic<int> calls{0};
    explicit Counting(Embedder &x) : e(x) {}
    EmbeddingVector embed(const std::string &t) override {
      ++calls;
      return e.embed(t);
    }
    [[nodiscard]] std::size_t dim() const override { return e.dim(); }
  } emb(inner);
  std::vector<persona::PersonaSummary> ps{summ("a", "I cook daily"), summ("b", "I drive to work"), summ("c", "I cook daily")};
  std::vector<scenario::Scenario> ss{scen("1", "cook a meal"), scen("2", "rent a car"), scen("3", "book a flight"),
                                     scen("4", "pay a bill")};
  MatchConfig cfg;
  cfg.keep_all = true;
  EXPECT_EQ(match_all(ps, ss, emb, cfg).size(), 12u);
  EXPECT_EQ(emb.calls.load(), 6);
}

TEST(MatchAll, EqualsBruteForceOracle) {
  mock::HashEmbedder emb;
  std::vector<persona::PersonaSummary> ps;
  std::vector<scenario::Scenario> ss;
  const char *words[] = {"car", "rent", "cairo", "flight", "cook", "bank", "loan", "tea", "doctor", "school", "bus", "phone"};
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    std::string a, b;
    for (int k = 0; k < 6; ++k) a += std::string(k ? " " : "") + words[rng.index(12)];
    for (int k = 0; k < 5; ++k) b += std::string(k ? " " : "") + words[rng.index(12)];
    ps.push_back(summ("p" + std::to_string(i), "I like " + a));
    ss.push_back(scen("s" + std::to_string(i), "A user wants " + b));
  }
  MatchConfig cfg;
  cfg.keep_all = true;
  const auto recs = match_all(ps, ss, emb, cfg);
  ASSERT_EQ(recs.size(), 400u);
  std::size_t idx = 0;
  for (const auto &p : ps)
    for (const auto &s : ss) {
      const auto &r = recs[idx++];
      const double e = text::cosine(emb.embed(p.text), emb.embed(s.text));
      const double j = oracle::jaccard(text::tokenize(p.text).tokens(), text::tokenize(s.text).tokens());
      EXPECT_EQ(r.s_emb, e);
      EXPECT_EQ(r.s_jac, j);
      EXPECT_EQ(r.s_hyb, 0.5 * e + 0.5 * j);
      EXPECT_EQ(r.kept, r.s_hyb >= 0.05);
    }
}

TEST(MatchAll, EmbedderFailureAbortsPairOnly) {
  FixedEmbedder emb;
  emb.table["p"] = {1, 0};
  emb.table["ok"] = {1, 0};
  std::vector<MatchRecord> recs;
  const auto summary = match_stream({summ("p1", "p")}, {scen("1", "ok"), scen("2", "missing")}, emb, {},
                                    [&](const MatchRecord &r) { recs.push_back(r); });
  EXPECT_EQ(summary.errors, 1u);
  EXPECT_EQ(summary.scored, 1u);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].scenario_id, "1");
}

TEST(MatchAll, ParallelismDoesNotChangeResults) {
  mock::HashEmbedder emb;
  std::vector<persona::PersonaSummary> ps{summ("a", "I cook daily at home"), summ("b", "I drive to work in Cairo")};
  std::vector<scenario::Scenario> ss{scen("1", "cook a meal at home"), scen("2", "rent a car in Cairo")};
  MatchConfig one, many;
  one.max_in_flight = 1;
  many.max_in_flight = 8;
  one.keep_all = many.keep_all = true;
  EXPECT_EQ(match_all(ps, ss, emb, one), match_all(ps, ss, emb, many));
}

TEST(Select, CapAboveAvailableTakesAll) {
  std::vector<MatchRecord> recs{{"p", "1", 0, 0, 0.3, true}, {"p", "2", 0, 0, 0.2, true}, {"p", "3", 0, 0, 0.1, true},
                                {"p", "4", 0, 0, 0.01, false}};
  const auto a = select_pairs_for_generation(recs, 5, 1);
  EXPECT_EQ(a.size(), 3u);
}

TEST(Select, DeterministicAndOrderIndependent) {
  std::vector<MatchRecord> recs;
  for (int i = 0; i < 20; ++i) recs.push_back({"p" + std::to_string(i % 4), std::to_string(i), 0, 0, 0.05 + i * 0.01, true});
  const auto a = select_pairs_for_generation(recs, 2, 9);
  std::reverse(recs.begin(), recs.end());
  EXPECT_EQ(select_pairs_for_generation(recs, 2, 9), a);
  EXPECT_EQ(a.size(), 8u);
}

TEST(Select, FrequenciesFollowWeights) {
  std::vector<MatchRecord> recs{{"p", "a", 0, 0, 0.6, true}, {"p", "b", 0, 0, 0.3, true}, {"p", "c", 0, 0, 0.1, true}};
  std::map<std::string, int> freq;
  for (std::uint64_t s = 0; s < 10000; ++s) ++freq[select_pairs_for_generation(recs, 1, s).at(0).scenario_id];
  EXPECT_GT(freq["a"], freq["b"]);
  EXPECT_GT(freq["b"], freq["c"]);
  EXPECT_NEAR(freq["a"] / 10000.0, 0.6, 0.03);
  EXPECT_NEAR(freq["c"] / 10000.0, 0.1, 0.02);
}
