#include <gtest/gtest.h>

#include <cmath>
#include <deque>

#include "forge/jsonl.hpp"
#include "forge/mock_providers.hpp"
#include "forge/persona.hpp"

using namespace forge;
using namespace forge::persona;
using nlohmann::json;

namespace {

const Inventories &inventories() {
  static const Inventories inv = io::read_json(std::string(FORGE_DATA_DIR) + "/inventories.json").get<Inventories>();
  return inv;
}

const WvsTable &wvs() {
  static const WvsTable t = io::read_json(std::string(FORGE_DATA_DIR) + "/wvs.json").get<WvsTable>();
  return t;
}

refbank::SpeakerProfile speaker(std::string id, std::string country, std::string gender, std::optional<int> age = {}) {
  refbank::SpeakerProfile s;
  s.speaker_id = std::move(id);
  s.country = std::move(country);
  s.gender = std::move(gender);
  s.mother_tongue = "Arabic (" + s.country + ")";
  s.age = age;
  return s;
}

bool contains(const std::vector<std::string> &v, const std::string &x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

// Embeds by persona name so tests can pin exact vectors.
class NameEmbedder final : public Embedder {
public:
  std::map<std::string, std::vector<double>> table;
  EmbeddingVector embed(const std::string &text) override {
    const auto pos = text.find("persona_name: ");
    const auto end = text.find('\n', pos);
    const auto name = text.substr(pos + 14, end - pos - 14);
    return EmbeddingVector(table.at(name));
  }
  [[nodiscard]] std::size_t dim() const override { return 2; }
};

PersonaProfile named(std::string name) {
  Rng rng(fnv1a(name));
  auto p = sample_persona(speaker("spk", "Egypt", "male"), inventories(), rng);
  p.persona_name = std::move(name);
  return p;
}

} // namespace

TEST(SamplePersona, DeterministicForFixedSeed) {
  const auto seed = speaker("spk-1", "Morocco", "female");
  Rng a(42), b(42);
  const json ja = sample_persona(seed, inventories(), a);
  const json jb = sample_persona(seed, inventories(), b);
  EXPECT_EQ(ja.dump(), jb.dump());
}

TEST(SamplePersona, SeedFieldsTakePrecedence) {
  auto seed = speaker("spk-7", "Iraq", "female", 52);
  seed.education_level = "doctorate";
  seed.mother_tongue = "Arabic (Iraq)";
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(s);
    const auto p = sample_persona(seed, inventories(), rng);
    EXPECT_EQ(p.country, "Iraq");
    EXPECT_EQ(p.gender, "female");
    EXPECT_EQ(p.age, 52);
    EXPECT_EQ(p.education_level, "doctorate");
    EXPECT_EQ(p.mother_tongue, "Arabic (Iraq)");
    EXPECT_EQ(p.seed_speaker_id, "spk-7");
    EXPECT_TRUE(contains(inventories().professions.at("41+"), p.profession));
  }
}

TEST(SamplePersona, FieldsComeFromInventories) {
  const auto &inv = inventories();
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto p = sample_persona(std::nullopt, inv, rng);
    EXPECT_GE(p.age, 18);
    EXPECT_LE(p.age, 40);
    EXPECT_TRUE(contains(inv.names.at(p.country).at(p.gender), p.persona_name));
    EXPECT_TRUE(contains(inv.cities.at(p.country), p.city));
    EXPECT_TRUE(contains(inv.professions.at(inv.bucket_for(p.age).label), p.profession));
    EXPECT_TRUE(contains(inv.marital_statuses, p.marital_status));
    EXPECT_TRUE(contains(inv.household_types, p.household_type));
    EXPECT_TRUE(contains(inv.ai_competence_levels, p.digital_access.ai_competence_level));
    ASSERT_EQ(p.ai_use_cases.size(), 2u);
    EXPECT_NE(p.ai_use_cases[0], p.ai_use_cases[1]);
    for (double t : p.ocean) {
      EXPECT_GE(t, 0.0);
      EXPECT_LE(t, 1.0);
      EXPECT_LE(std::abs(t - 0.5), 0.15 + 1e-12);
    }
  }
}

TEST(SamplePersona, AgeIsUniformOverRange) {
  constexpr int kSamples = 10000;
  std::array<int, 23> counts{};
  Rng rng(2024);
  for (int i = 0; i < kSamples; ++i) ++counts.at(sample_persona(std::nullopt, inventories(), rng).age - 18);
  const double expected = kSamples / 23.0;
  double chi2 = 0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 40.289); // chi-square critical value, df = 22, alpha = 0.01
}

TEST(SamplePersona, MissingCountryInventoryIsError) {
  Rng rng(1);
  try {
    sample_persona(speaker("s", "Atlantis", "male"), inventories(), rng);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_found);
    EXPECT_NE(std::string(e.what()).find("Atlantis"), std::string::npos);
  }
}

TEST(SamplePersona, JsonRoundTrip) {
  Rng rng(9);
  auto p = ground_wvs(sample_persona(speaker("s", "UAE", "male"), inventories(), rng), wvs());
  const json j = p;
  EXPECT_EQ(j.get<PersonaProfile>(), p);
}

TEST(GroundWvs, SingleBandRowIsCopiedVerbatim) {
  WvsTable t;
  t.rows.push_back({"Qatar", "all", {{"secular", 0.3}, {"trust", "low"}}});
  PersonaProfile p;
  p.country = "Qatar";
  p.age = 33;
  const auto g = ground_wvs(p, t);
  EXPECT_EQ(g.wvs_profile.at("secular"), 0.3);
  EXPECT_EQ(g.wvs_profile.at("trust"), "low");
}

TEST(GroundWvs, AgeSelectsBand) {
  WvsTable t;
  t.bands = {{"18-29", 18, 29}, {"30+", 30, 200}};
  t.rows.push_back({"Jordan", "18-29", {{"secular", 0.1}}});
  t.rows.push_back({"Jordan", "30+", {{"secular", -0.4}, {"trust", "medium"}}});
  PersonaProfile p;
  p.country = "Jordan";
  p.age = 22;
  const auto g = ground_wvs(p, t);
  EXPECT_EQ(g.wvs_profile.at("secular"), 0.1);
  EXPECT_TRUE(g.wvs_profile.at("trust").is_null());
  p.age = 30;
  EXPECT_EQ(ground_wvs(p, t).wvs_profile.at("secular"), -0.4);
}

TEST(GroundWvs, UnknownCountryNamesCountry) {
  PersonaProfile p;
  p.country = "Narnia";
  p.age = 25;
  try {
    ground_wvs(p, wvs());
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_found);
    EXPECT_NE(std::string(e.what()).find("Narnia"), std::string::npos);
  }
}

TEST(GroundWvs, ShippedTableCoversEveryInventoryCountry) {
  const auto countries = wvs().countries();
  for (const auto &c : inventories().countries()) EXPECT_TRUE(countries.count(c)) << c;
}

TEST(CanonicalText, SortedAndWithoutIdentifiers) {
  const auto p = named("Omar");
  const auto text = canonical_text(p);
  EXPECT_EQ(text.find("persona_id"), std::string::npos);
  EXPECT_EQ(text.find("seed_speaker_id"), std::string::npos);
  std::vector<std::string> keys;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) keys.push_back(line.substr(0, line.find(':')));
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  EXPECT_EQ(canonical_text(p), text);
}

TEST(ExpandSeeds, ThresholdIsStrict) {
  NameEmbedder emb;
  emb.table["A"] = {5, 0};
  emb.table["AtBoundary"] = {4, 3};   // cosine exactly 0.80 with A
  emb.table["Close"] = {0.85, std::sqrt(1 - 0.85 * 0.85)};
  emb.table["Far"] = {0, 1};
  std::deque<std::string> queue{"Close", "AtBoundary", "Far"};
  CandidateFactory factory = [&](const PersonaProfile &, Rng &) {
    auto name = queue.front();
    queue.pop_front();
    return named(name);
  };
  const auto res = expand_seeds({named("A")}, emb, factory, 1, {.target_count = 3, .batch_size = 1});
  ASSERT_EQ(res.accepted.size(), 3u);
  EXPECT_EQ(res.accepted[1].persona_name, "AtBoundary");
  EXPECT_EQ(res.accepted[2].persona_name, "Far");
  EXPECT_EQ(res.rejected, 1u);
  EXPECT_FALSE(res.budget_exhausted);
}

TEST(ExpandSeeds, BudgetExhaustionReturnsPartialSet) {
  NameEmbedder emb;
  emb.table["A"] = {1, 0};
  emb.table["Clone"] = {1, 0.01};
  CandidateFactory factory = [&](const PersonaProfile &, Rng &) { return named("Clone"); };
  const auto res = expand_seeds({named("A")}, emb, factory, 1, {.target_count = 5, .attempt_budget = 12});
  EXPECT_EQ(res.accepted.size(), 1u);
  EXPECT_TRUE(res.budget_exhausted);
  EXPECT_EQ(res.attempts, 12u);
  EXPECT_NE(res.diagnostic.find("1/5"), std::string::npos);
}

TEST(ExpandSeeds, AcceptedSetSatisfiesPairwiseBound) {
  mock::HashEmbedder emb;
  const auto &inv = inventories();
  std::vector<PersonaProfile> seeds;
  const char *countries[] = {"Egypt", "Morocco", "Iraq", "Saudi Arabia", "Lebanon"};
  for (int i = 0; i < 5; ++i) {
    Rng rng(100 + i);
    seeds.push_back(ground_wvs(sample_persona(speaker("spk" + std::to_string(i), countries[i], i % 2 ? "female" : "male"), inv, rng), wvs()));
  }
  CandidateFactory factory = [&](const PersonaProfile &anchor, Rng &rng) {
    return ground_wvs(derive_candidate(anchor, inv, rng), wvs());
  };
  const auto res = expand_seeds(seeds, emb, factory, 77, {.target_count = 40, .reject_threshold = 0.80});
  ASSERT_GT(res.accepted.size(), 5u);
  std::vector<EmbeddingVector> vecs;
  for (const auto &p : res.accepted) vecs.push_back(emb.embed(canonical_text(p)));
  for (std::size_t i = 0; i < vecs.size(); ++i)
    for (std::size_t j = i + 1; j < vecs.size(); ++j) EXPECT_LE(text::cosine(vecs[i], vecs[j]), 0.80);
  for (std::size_t i = 5; i < res.accepted.size(); ++i) {
    EXPECT_GE(res.accepted[i].age, 18);
    EXPECT_LE(res.accepted[i].age, 40);
  }
}

TEST(ExpandSeeds, DeterministicAcrossConcurrency) {
  mock::HashEmbedder emb;
  const auto &inv = inventories();
  std::vector<PersonaProfile> seeds{named("Karim")};
  CandidateFactory factory = [&](const PersonaProfile &a, Rng &rng) { return derive_candidate(a, inv, rng); };
  const auto serial = expand_seeds(seeds, emb, factory, 5, {.target_count = 15, .max_in_flight = 1});
  const auto parallel = expand_seeds(seeds, emb, factory, 5, {.target_count = 15, .max_in_flight = 8});
  ASSERT_EQ(serial.accepted.size(), parallel.accepted.size());
  for (std::size_t i = 0; i < serial.accepted.size(); ++i) EXPECT_EQ(serial.accepted[i], parallel.accepted[i]);
}

TEST(Summarize, CompliantObjectIsStoredWithRecomputedCount) {
  mock::FunctionChat chat([](const ChatRequest &) {
    return R"({"summary_first_person":"I am Omar, 29, from Cairo. I usually walk to work."})";
  });
  const auto r = summarize(named("Omar"), chat);
  ASSERT_FALSE(r.failed);
  EXPECT_EQ(r.summary.word_count, 11u);
  EXPECT_EQ(r.attempts, 1u);
}

TEST(Summarize, FencedJsonIsParseErrorInStrictMode) {
  const std::string fenced = "```json\n{\"summary_first_person\":\"I am Omar.\"}\n```";
  EXPECT_EQ(parse_summary(fenced).error, ParseError::fenced);
  EXPECT_TRUE(parse_summary(fenced, ParseMode::lenient).text.has_value());
  mock::FunctionChat chat([&](const ChatRequest &) { return fenced; });
  const auto r = summarize(named("Omar"), chat, 2);
  EXPECT_TRUE(r.failed);
  EXPECT_EQ(r.attempts, 3u);
  EXPECT_EQ(r.failure, "parse:fenced");
}

TEST(Summarize, EmptySummaryIsDeclaredFailure) {
  int calls = 0;
  mock::FunctionChat chat([&](const ChatRequest &) {
    ++calls;
    return R"({"summary_first_person":""})";
  });
  const auto r = summarize(named("Omar"), chat);
  EXPECT_TRUE(r.failed);
  EXPECT_EQ(r.failure, "declared-failure");
  EXPECT_EQ(calls, 1);
}

TEST(Summarize, ExtraKeysAndProseRejected) {
  EXPECT_EQ(parse_summary(R"({"summary_first_person":"x","note":"y"})").error, ParseError::wrong_key);
  EXPECT_EQ(parse_summary(R"(Sure! {"summary_first_person":"x"})").error, ParseError::extra_text);
  EXPECT_EQ(parse_summary(R"(["x"])").error, ParseError::wrong_shape);
}

TEST(Summarize, RetriesThenSucceeds) {
  int calls = 0;
  mock::FunctionChat chat([&](const ChatRequest &) {
    return ++calls < 3 ? std::string("not json") : std::string(R"({"summary_first_person":"I am Omar."})");
  });
  const auto r = summarize(named("Omar"), chat);
  EXPECT_FALSE(r.failed);
  EXPECT_EQ(r.attempts, 3u);
}

TEST(Summarize, PromptCarriesProfileJson) {
  const auto p = named("Omar");
  const auto req = summary_request(p);
  EXPECT_NE(req.user_prompt.find("\"persona_name\": \"Omar\""), std::string::npos);
  EXPECT_NE(req.system_prompt.find("summary_first_person"), std::string::npos);
  EXPECT_EQ(req.user_prompt.find("persona_id"), std::string::npos);
}

TEST(PersonaSummary, RoundTripKeepsTextAndRecomputesCount) {
  PersonaSummary s{"p-1", "I am Salma and I usually cook.", 999};
  const json j = s;
  const auto back = j.get<PersonaSummary>();
  EXPECT_EQ(back.text, s.text);
  EXPECT_EQ(back.word_count, 7u);
}
