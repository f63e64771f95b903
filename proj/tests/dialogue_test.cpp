#include <gtest/gtest.h>

#include "forge/dialogue.hpp"
#include "forge/jsonl.hpp"
#include "forge/mock_providers.hpp"

using namespace forge;
using namespace forge::dialogue;
using nlohmann::json;

namespace {

const LanguageRules &rules() {
  static const LanguageRules r =
      LanguageRules::from_json(io::read_json(std::string(FORGE_DATA_DIR) + "/dialect_blocklist.json"));
  return r;
}

GenerationInput input() {
  GenerationInput in;
  auto &p = in.persona;
  p.persona_id = "p-1";
  p.persona_name = "Salma";
  p.age = 27;
  p.gender = "female";
  p.city = "Rabat";
  p.country = "Morocco";
  p.speaker_nationality = "Moroccan";
  p.education_level = "master's degree";
  p.profession = "pharmacist";
  p.marital_status = "single";
  p.household_type = "lives with parents";
  p.digital_access = {"smartphone", "mobile data only", "beginner"};
  p.ai_use_cases = {"translation", "recipe ideas"};
  p.wvs_profile = {{"trust", "low"}};
  in.summary = "I am Salma, 27, a Moroccan pharmacist in Rabat.";
  in.scenario = {"s-1", "t-1", "Task/Service > Travel & Mobility > Car Rental", "Airport pickup",
                 "A traveler wants to rent a small car at the airport for a weekend trip.", ""};
  return in;
}

const std::string kClean =
    R"({"messages":[{"role":"user","content":"أريد استئجار سيارة صغيرة من المطار."},{"role":"assistant","content":"حسنًا، متى تصل رحلتك؟"}]})";

std::string conv(std::vector<std::pair<std::string, std::string>> msgs) {
  json arr = json::array();
  for (auto &[r, c] : msgs) arr.push_back({{"role", r}, {"content", c}});
  return json{{"messages", arr}}.dump();
}

} // namespace

TEST(BuildPrompts, ContainsPersonaAndScenario) {
  const auto p = build_prompts(input(), 8);
  EXPECT_NE(p.user.find("- Name: Salma"), std::string::npos);
  EXPECT_NE(p.user.find("rent a small car at the airport"), std::string::npos);
  EXPECT_NE(p.user.find("- Max Messages: 8"), std::string::npos);
  EXPECT_NE(p.system.find("PURE Arabic"), std::string::npos);
  EXPECT_NE(p.system.find(R"({"messages":[{"role":"user")"), std::string::npos);
}

TEST(BuildPrompts, MissingReligionRendersNull) {
  EXPECT_NE(build_prompts(input(), 8).user.find("- Religion: null"), std::string::npos);
}

TEST(BuildPrompts, UnknownPlaceholderIsListed) {
  try {
    build_prompts(input(), 8, prompts::kDialogueSystem, "Hello {user_name} from {planet}");
    FAIL();
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("{planet}"), std::string::npos);
  }
}

TEST(ParseConversation, ValidTwoMessages) {
  const auto r = parse_conversation(R"({"messages":[{"role":"user","content":"..."},{"role":"assistant","content":"..."}]})", 8);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.messages.size(), 2u);
}

TEST(ParseConversation, ProsePrefixRejectedInStrictMode) {
  EXPECT_EQ(parse_conversation("Here is the dialogue: " + kClean, 8).error, ParseError::extra_text);
  EXPECT_EQ(parse_conversation("```json\n" + kClean + "\n```", 8).error, ParseError::fenced);
  EXPECT_TRUE(parse_conversation("```json\n" + kClean + "\n```", 8, ParseMode::lenient).ok());
}

TEST(ParseConversation, AssistantMayInitiate) {
  const auto r = parse_conversation(conv({{"assistant", "مرحبًا"}, {"user", "أهلًا"}}), 8);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.messages[0].role, "assistant");
}

TEST(ParseConversation, CategorizedErrors) {
  EXPECT_EQ(parse_conversation(conv({{"user", "a"}, {"user", "b"}}), 8).error, ParseError::non_alternating);
  EXPECT_EQ(parse_conversation(conv({{"system", "a"}, {"user", "b"}}), 8).error, ParseError::bad_role);
  EXPECT_EQ(parse_conversation(conv({{"user", "a"}}), 8).error, ParseError::too_short);
  EXPECT_EQ(parse_conversation(conv({{"user", "a"}, {"assistant", "b"}, {"user", "c"}}), 2).error, ParseError::over_length);
  EXPECT_EQ(parse_conversation(conv({{"user", " "}, {"assistant", "b"}}), 8).error, ParseError::empty_content);
  EXPECT_EQ(parse_conversation(R"({"messages":[],"meta":1})", 8).error, ParseError::wrong_key);
  EXPECT_EQ(parse_conversation(R"({"messages":[{"role":"user","content":"a","lang":"ar"}]})", 8).error, ParseError::wrong_key);
  EXPECT_EQ(parse_conversation(R"({"messages":[{"role":"user","content":5}]})", 8).error, ParseError::bad_type);
  EXPECT_EQ(parse_conversation(R"([1,2])", 8).error, ParseError::wrong_shape);
  EXPECT_EQ(parse_conversation("", 8).error, ParseError::empty);
}

TEST(ParseConversation, FuzzedInputsNeverCrash) {
  Rng rng(1234);
  const std::string alphabet = "{}[]\":,\\ aeu0123456789-.truefalsnl\n\t";
  const std::vector<std::string> seeds{kClean, conv({{"assistant", "x"}, {"user", "y"}, {"assistant", "z"}}),
                                       R"({"messages":[]})", "[[[[[[[[[[", "\"messages\""};
  std::size_t ok = 0;
  for (int i = 0; i < 5000; ++i) {
    std::string s = rng.pick(seeds);
    const auto edits = rng.uniform_int(1, 6);
    for (int e = 0; e < edits; ++e) {
      const auto op = rng.uniform_int(0, 3);
      const auto pos = s.empty() ? 0 : rng.index(s.size());
      if (op == 0 && !s.empty()) s.erase(pos, 1);
      else if (op == 1) s.insert(pos, 1, alphabet[rng.index(alphabet.size())]);
      else if (op == 2 && !s.empty()) s[pos] = static_cast<char>(rng.uniform_int(0, 255));
      else s = s.substr(0, pos);
    }
    const auto r = parse_conversation(s, 8);
    if (r.ok()) {
      ++ok;
      EXPECT_FALSE(schema_error(r.messages, 8).has_value());
    } else {
      EXPECT_TRUE(r.messages.empty());
    }
  }
  EXPECT_EQ(parse_conversation(std::string(100000, '['), 8).error, ParseError::too_deep);
}

TEST(ValidateLanguage, DialectTokenFlagged) {
  const std::vector<Message> m{{"user", "شو رأيك في السيارة؟"}, {"assistant", "حسنًا."}};
  const auto v = validate_language(m, "MSA", rules());
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, "dialect-token");
  EXPECT_EQ(v[0].message_index, 0u);
}

TEST(ValidateLanguage, DiacritizedDialectTokenStillFlagged) {
  const std::vector<Message> m{{"assistant", "بدّي أن أساعدك"}, {"user", "شكرًا"}};
  EXPECT_EQ(validate_language(m, "MSA", rules()).size(), 1u);
}

TEST(ValidateLanguage, LatinRunInUserMessageIsForeignScript) {
  const std::vector<Message> m{{"user", "أريد تحميل app جديد"}, {"assistant", "حسنًا"}};
  const auto v = validate_language(m, "MSA", rules());
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, "foreign-script");
  EXPECT_EQ(v[0].matched_token, "app");
}

TEST(ValidateLanguage, CleanFixtureAndEnglishMode) {
  EXPECT_TRUE(validate_language(parse_conversation(kClean, 8).messages, "MSA", rules()).empty());
  const std::vector<Message> en{{"user", "I need a car, يعني soon"}, {"assistant", "Sure."}};
  const auto v = validate_language(en, "English", rules());
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, "foreign-script");
}

TEST(ValidateLanguage, DeterministicAndIdempotent) {
  const std::vector<Message> m{{"user", "شو هذا app"}, {"assistant", "مش واضح"}};
  EXPECT_EQ(validate_language(m, "MSA", rules()), validate_language(m, "MSA", rules()));
}

TEST(ValidateLanguage, TransliterationSuspectsFromConfig) {
  auto r = LanguageRules::from_json(json{{"dialect_tokens", json::array()}, {"transliteration_suspects", {"موبايل"}}});
  const std::vector<Message> m{{"user", "هاتفي الموبايل معطل"}, {"assistant", "موبايل"}};
  const auto v = validate_language(m, "MSA", r);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].message_index, 1u);
}

TEST(Generate, CompliantMockStored) {
  mock::FunctionChat chat([](const ChatRequest &) { return kClean; });
  const auto out = generate_conversation(input(), chat, rules());
  ASSERT_TRUE(out.conversation);
  EXPECT_TRUE(out.conversation->violations.empty());
  EXPECT_EQ(out.conversation->initiator, "user");
  EXPECT_EQ(out.conversation->attempts, 1u);
  EXPECT_EQ(out.conversation->topic_id, "t-1");
}

TEST(Generate, ViolationRejectedThenRetried) {
  int calls = 0;
  mock::FunctionChat chat([&](const ChatRequest &) {
    return ++calls == 1 ? conv({{"user", "وين المطار؟"}, {"assistant", "في الشمال."}}) : kClean;
  });
  const auto out = generate_conversation(input(), chat, rules());
  ASSERT_TRUE(out.conversation);
  EXPECT_EQ(out.conversation->attempts, 2u);
}

TEST(Generate, ViolationKeptWithFlagsWhenPolicyAllows) {
  mock::FunctionChat chat([](const ChatRequest &) { return conv({{"user", "وين المطار؟"}, {"assistant", "في الشمال."}}); });
  Policy policy;
  policy.reject_on_violation = false;
  const auto out = generate_conversation(input(), chat, rules(), policy);
  ASSERT_TRUE(out.conversation);
  EXPECT_EQ(out.conversation->violations.size(), 1u);
}

TEST(Generate, AlwaysMalformedFailsAfterFourAttempts) {
  int calls = 0;
  mock::FunctionChat chat([&](const ChatRequest &) {
    ++calls;
    return std::string("Sure! Here you go.");
  });
  const auto out = generate_conversation(input(), chat, rules());
  ASSERT_TRUE(out.failure);
  EXPECT_FALSE(out.conversation);
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(out.failure->attempts, 4u);
  EXPECT_EQ(out.failure->last_raw, "Sure! Here you go.");
}

TEST(Conversation, EnvelopeRoundTripRevalidates) {
  mock::FunctionChat chat([](const ChatRequest &) { return kClean; });
  const auto c = *generate_conversation(input(), chat, rules()).conversation;
  json j = c;
  EXPECT_EQ(j["conversation"]["messages"].size(), 2u);
  const auto back = j.get<Conversation>();
  EXPECT_EQ(back.messages, c.messages);
  j["conversation"]["messages"][1]["role"] = "user";
  EXPECT_THROW(j.get<Conversation>(), Error);
}

TEST(Initiation, CountsAndBand) {
  std::vector<Conversation> cs(10);
  for (int i = 0; i < 10; ++i) {
    cs[i].initiator = i < 6 ? "user" : "assistant";
    cs[i].messages.resize(i % 2 ? 4 : 6);
  }
  const auto r = initiation_report(cs);
  EXPECT_DOUBLE_EQ(r.user_start, 0.6);
  EXPECT_DOUBLE_EQ(r.assistant_start, 0.4);
  EXPECT_TRUE(r.in_target_band);
  EXPECT_EQ(r.message_histogram.at(4), 5u);
  const auto empty = initiation_report({});
  EXPECT_EQ(empty.user_start, 0.0);
  EXPECT_TRUE(empty.warning.has_value());
}
