#include <gtest/gtest.h>

#include "fixtures/pqi_fixtures.hpp"
#include "forge/desk_chat.hpp"
#include "forge/dialogue.hpp"
#include "forge/judge.hpp"
#include "forge/mock_providers.hpp"
#include "forge/scenario.hpp"

using namespace forge;
using nlohmann::json;

namespace {

dialogue::LanguageRules rules() {
  return dialogue::LanguageRules::from_json(io::read_json(std::string(FORGE_DATA_DIR) + "/dialect_blocklist.json"));
}

scenario::DomainPath path() { return {"task-service", {"Task / Service", "Travel & Mobility", "Flight Booking"}}; }

} // namespace

TEST(DeskChat, SummariesScoreFullyCompliant) {
  const auto inv = fixtures::inventories();
  pqi::Scorer scorer(fixtures::lexicons(), inv);
  mock::DeskChat chat;
  Rng rng(3);
  std::size_t compliant = 0, flagged = 0;
  const std::size_t n = 200;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = persona::sample_persona(std::nullopt, inv, rng);
    const auto s = persona::summarize(p, chat);
    ASSERT_FALSE(s.failed) << s.failure;
    const auto r = scorer.score(s.summary.text, p);
    compliant += r.compliant;
    flagged += !r.flags.empty();
    if (!r.compliant) ADD_FAILURE() << s.summary.text << "\n" << json(r).dump();
    if (i > 5 && compliant < i / 2) break;
  }
  EXPECT_EQ(compliant, n);
  EXPECT_LT(flagged, n / 2);
}

TEST(DeskChat, TopicsAndScenariosParse) {
  mock::DeskChat chat;
  auto topics = scenario::generate_topics(path(), chat, 4);
  ASSERT_FALSE(topics.failed) << topics.error;
  EXPECT_EQ(topics.items.size(), 4u);
  auto scen = scenario::generate_scenarios(path(), topics.items[0], chat, 5);
  ASSERT_FALSE(scen.failed) << scen.error;
  mock::HashEmbedder emb;
  EXPECT_EQ(scenario::dedup_items(scen.items, emb).size(), 5u);
  EXPECT_EQ(scenario::dedup_items(topics.items, emb).size(), 4u);
}

TEST(DeskChat, DialoguesAreCleanMsaWithMixedInitiation) {
  mock::DeskChat chat;
  const auto inv = fixtures::inventories();
  const auto lang = rules();
  Rng rng(8);
  std::size_t user_first = 0;
  const std::size_t n = 300;
  for (std::size_t i = 0; i < n; ++i) {
    dialogue::GenerationInput in;
    in.persona = persona::sample_persona(std::nullopt, inv, rng);
    in.summary = "summary";
    in.scenario.scenario_id = "s" + std::to_string(i);
    in.scenario.text = "A user wants something " + std::to_string(i);
    const auto out = dialogue::generate_conversation(in, chat, lang);
    ASSERT_TRUE(out.conversation) << out.failure->error;
    EXPECT_TRUE(out.conversation->violations.empty());
    EXPECT_EQ(out.conversation->attempts, 1u);
    user_first += out.conversation->initiator == "user";
  }
  const double share = static_cast<double>(user_first) / n;
  EXPECT_GT(share, 0.45);
  EXPECT_LT(share, 0.65);
}

TEST(DeskChat, JudgeAndRatingFormats) {
  mock::DeskChat chat;
  judge::EvalSession s;
  s.profile_memory = "memory";
  s.scenario = "scenario";
  judge::Candidate c{1, {}, {{"user", "question"}}, "answer"};
  EXPECT_TRUE(judge::judge_turn(s, c, chat).verdict);
  const int r = judge::rate_answer("q", "ref", "gen", chat);
  EXPECT_GE(r, 1);
  EXPECT_LE(r, 10);
  EXPECT_THROW(chat.complete(ChatRequest{"unknown", "request", {}, {}}), Error);
}
