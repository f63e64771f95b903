#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/persona.hpp"
#include "forge/prompts.hpp"
#include "forge/providers.hpp"
#include "forge/rng.hpp"
#include "forge/scenario.hpp"
#include "forge/strict_json.hpp"
#include "forge/template.hpp"
#include "forge/textmetrics.hpp"
#include "forge/utf8.hpp"

namespace forge::dialogue {

using nlohmann::json;

struct Message {
  std::string role;
  std::string content;
  friend bool operator==(const Message &, const Message &) = default;
};

struct LanguageViolation {
  std::size_t message_index = 0;
  std::string kind; // dialect-token | foreign-script | transliteration-suspect
  std::string matched_token;
  friend bool operator==(const LanguageViolation &, const LanguageViolation &) = default;
};

struct Conversation {
  std::string conv_id;
  std::string persona_id;
  std::string scenario_id;
  std::string domain_path;
  std::string topic_id;
  std::string language;
  std::string initiator;
  std::size_t max_messages = 8;
  std::vector<Message> messages;
  std::vector<LanguageViolation> violations;
  std::size_t attempts = 1;
};

inline void to_json(json &j, const Message &m) { j = json{{"role", m.role}, {"content", m.content}}; }
inline void from_json(const json &j, Message &m) {
  m.role = j.at("role").get<std::string>();
  m.content = j.at("content").get<std::string>();
}
inline void to_json(json &j, const LanguageViolation &v) {
  j = json{{"message_index", v.message_index}, {"kind", v.kind}, {"matched_token", v.matched_token}};
}
inline void from_json(const json &j, LanguageViolation &v) {
  v.message_index = j.at("message_index").get<std::size_t>();
  v.kind = j.at("kind").get<std::string>();
  v.matched_token = j.at("matched_token").get<std::string>();
}

/// Structural contract every stored conversation satisfies.
inline std::optional<std::string> schema_error(const std::vector<Message> &messages, std::size_t max_messages) {
  if (messages.size() < 2) return "fewer than 2 messages";
  if (messages.size() > max_messages) return "more than " + std::to_string(max_messages) + " messages";
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto &m = messages[i];
    if (m.role != "user" && m.role != "assistant") return "message " + std::to_string(i) + ": bad role";
    if (is_blank(m.content)) return "message " + std::to_string(i) + ": empty content";
    if (i > 0 && m.role == messages[i - 1].role) return "message " + std::to_string(i) + ": roles do not alternate";
  }
  return std::nullopt;
}

inline void to_json(json &j, const Conversation &c) {
  j = json{{"conv_id", c.conv_id},
           {"persona_id", c.persona_id},
           {"scenario_id", c.scenario_id},
           {"domain_path", c.domain_path},
           {"topic_id", c.topic_id},
           {"language", c.language},
           {"initiator", c.initiator},
           {"max_messages", c.max_messages},
           {"attempts", c.attempts},
           {"violations", c.violations},
           {"conversation", {{"messages", c.messages}}}};
}

/// Re-validates the structural contract on read.
inline void from_json(const json &j, Conversation &c) {
  c.conv_id = j.at("conv_id").get<std::string>();
  c.persona_id = j.at("persona_id").get<std::string>();
  c.scenario_id = j.at("scenario_id").get<std::string>();
  c.domain_path = j.value("domain_path", "");
  c.topic_id = j.value("topic_id", "");
  c.language = j.at("language").get<std::string>();
  c.initiator = j.at("initiator").get<std::string>();
  c.max_messages = j.value("max_messages", std::size_t{8});
  c.attempts = j.value("attempts", std::size_t{1});
  c.violations = j.value("violations", std::vector<LanguageViolation>{});
  c.messages = j.at("conversation").at("messages").get<std::vector<Message>>();
  if (auto err = schema_error(c.messages, c.max_messages))
    throw Error(ErrorKind::schema, "conversation " + c.conv_id + ": " + *err);
  if (c.initiator != c.messages.front().role)
    throw Error(ErrorKind::schema, "conversation " + c.conv_id + ": initiator differs from first message role");
}

struct ConversationParse {
  std::vector<Message> messages;
  ParseError error = ParseError::none;
  std::string detail;
  [[nodiscard]] bool ok() const { return error == ParseError::none; }
};

/// Exactly one object {"messages": [{"role", "content"}, ...]} with strict
/// alternation and 2..max_messages items.
inline ConversationParse parse_conversation(std::string_view raw, std::size_t max_messages,
                                            ParseMode mode = ParseMode::strict) {
  ConversationParse out;
  auto fail = [&](ParseError e, std::string detail) {
    out.messages.clear();
    out.error = e;
    out.detail = std::move(detail);
    return out;
  };
  auto j = parse_json_response(raw, mode);
  if (!j.ok()) return fail(j.error, "");
  if (!j.value.is_object()) return fail(ParseError::wrong_shape, "top level is not an object");
  if (j.value.size() != 1 || !j.value.contains("messages")) return fail(ParseError::wrong_key, "expected only \"messages\"");
  const auto &arr = j.value["messages"];
  if (!arr.is_array()) return fail(ParseError::wrong_shape, "\"messages\" is not an array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto &m = arr[i];
    const auto at = "message " + std::to_string(i);
    if (!m.is_object()) return fail(ParseError::wrong_shape, at + " is not an object");
    if (m.size() != 2 || !m.contains("role") || !m.contains("content"))
      return fail(ParseError::wrong_key, at + " must have exactly role and content");
    if (!m["role"].is_string() || !m["content"].is_string()) return fail(ParseError::bad_type, at);
    const auto role = m["role"].get<std::string>();
    if (role != "user" && role != "assistant") return fail(ParseError::bad_role, at + ": " + role);
    if (is_blank(m["content"].get<std::string>())) return fail(ParseError::empty_content, at);
    if (i > 0 && role == out.messages.back().role) return fail(ParseError::non_alternating, at);
    out.messages.push_back({role, m["content"].get<std::string>()});
  }
  if (out.messages.size() < 2) return fail(ParseError::too_short, std::to_string(out.messages.size()) + " messages");
  if (out.messages.size() > max_messages)
    return fail(ParseError::over_length, std::to_string(out.messages.size()) + " > " + std::to_string(max_messages));
  return out;
}

struct LanguageRules {
  std::set<std::string> dialect_tokens;          // wer-normalized
  std::set<std::string> transliteration_suspects; // wer-normalized

  static LanguageRules from_json(const json &j) {
    LanguageRules r;
    auto norm = [](const std::string &s) {
      auto t = text::tokenize(s, text::TokenizeMode::wer_normalized);
      return t.empty() ? std::string{} : t[0];
    };
    for (const auto &t : j.at("dialect_tokens")) r.dialect_tokens.insert(norm(t.get<std::string>()));
    for (const auto &t : j.value("transliteration_suspects", json::array()))
      r.transliteration_suspects.insert(norm(t.get<std::string>()));
    r.dialect_tokens.erase("");
    r.transliteration_suspects.erase("");
    return r;
  }
};

inline bool is_arabic_language(const std::string &language) {
  return language == "MSA" || language == "Arabic" || language == "ar";
}

/// Script runs of one kind inside a text ("app", "wifi2").
inline std::vector<std::string> script_runs(const std::string &content, bool latin) {
  std::vector<std::string> out;
  std::string cur;
  for (char32_t c : utf8::decode(content)) {
    const bool hit = latin ? utf8::is_latin_letter(c) : utf8::is_arabic_letter(c);
    if (hit) {
      utf8::append(cur, c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::vector<LanguageViolation> validate_language(const std::vector<Message> &messages,
                                                        const std::string &language, const LanguageRules &rules) {
  std::vector<LanguageViolation> out;
  const bool arabic = is_arabic_language(language);
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto &m = messages[i];
    if (arabic) {
      for (const auto &t : text::tokenize(m.content, text::TokenizeMode::wer_normalized)) {
        if (rules.dialect_tokens.count(t)) out.push_back({i, "dialect-token", t});
        if (rules.transliteration_suspects.count(t)) out.push_back({i, "transliteration-suspect", t});
      }
      if (m.role == "user")
        for (auto &run : script_runs(m.content, true)) out.push_back({i, "foreign-script", run});
    } else if (m.role == "user") {
      for (auto &run : script_runs(m.content, false)) out.push_back({i, "foreign-script", run});
    }
  }
  return out;
}

/// Name substituted into the prompt's {language} slot.
inline std::string language_display(const std::string &language) {
  return is_arabic_language(language) ? "Arabic" : language;
}

struct PromptPair {
  std::string system;
  std::string user;
};

struct GenerationInput {
  persona::PersonaProfile persona;
  std::string summary;
  scenario::Scenario scenario;
  std::string language = "MSA";
};

inline std::string join(const std::vector<std::string> &v, const std::string &sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

inline PromptPair build_prompts(const GenerationInput &in, std::size_t max_messages,
                                const std::string &system_template = prompts::kDialogueSystem,
                                const std::string &user_template = prompts::kDialogueUser) {
  const auto &p = in.persona;
  const auto lang = language_display(in.language);
  const json digital{{"device", p.digital_access.device},
                     {"connectivity", p.digital_access.connectivity},
                     {"ai_competence_level", p.digital_access.ai_competence_level}};
  const std::map<std::string, std::string> slots{
      {"user_name", p.persona_name},
      {"user_age", std::to_string(p.age)},
      {"user_nationality", p.speaker_nationality},
      {"language", lang},
      {"user_gender", p.gender},
      {"user_city", p.city},
      {"user_education_level", p.education_level},
      {"user_profession", p.profession},
      {"user_marital_status", p.marital_status},
      {"user_household_type", p.household_type},
      {"user_religion", p.religion.value_or("null")},
      {"user_digital_access", digital.dump()},
      {"user_ai_use_cases", join(p.ai_use_cases, ", ")},
      {"user_wvs_profile", json(p.wvs_profile).dump()},
      {"summary", in.summary},
      {"domain", in.scenario.domain_path},
      {"topic", in.scenario.topic},
      {"scenario", in.scenario.text},
      {"max_messages", std::to_string(max_messages)},
  };
  return {PromptTemplate(system_template).render({{"language", lang}}), PromptTemplate(user_template).render(slots)};
}

struct Policy {
  std::size_t max_messages = 8;
  std::size_t retries = 3;
  bool reject_on_violation = true;
  ParseMode mode = ParseMode::strict;
  std::string system_template = prompts::kDialogueSystem;
  std::string user_template = prompts::kDialogueUser;
};

struct FailureRecord {
  std::string conv_id;
  std::string persona_id;
  std::string scenario_id;
  std::string error;
  std::size_t attempts = 0;
  std::string last_raw;
  std::vector<LanguageViolation> violations;
};

inline void to_json(json &j, const FailureRecord &f) {
  j = json{{"conv_id", f.conv_id},   {"persona_id", f.persona_id}, {"scenario_id", f.scenario_id},
           {"error", f.error},       {"attempts", f.attempts},     {"last_raw", f.last_raw},
           {"violations", f.violations}};
}

struct Outcome {
  std::optional<Conversation> conversation;
  std::optional<FailureRecord> failure;
};

inline std::string conversation_id(const std::string &persona_id, const std::string &scenario_id,
                                   const std::string &language) {
  return "c-" + hex64(fnv1a(persona_id + '\x1f' + scenario_id + '\x1f' + language));
}

/// build, call, parse, validate; retries on malformed output and, if the
/// policy says so, on language violations.
inline Outcome generate_conversation(const GenerationInput &in, ChatProvider &chat, const LanguageRules &rules,
                                     const Policy &policy = {}) {
  const auto prompts = build_prompts(in, policy.max_messages, policy.system_template, policy.user_template);
  ChatRequest req;
  req.system_prompt = prompts.system;
  req.user_prompt = prompts.user;
  FailureRecord failure{conversation_id(in.persona.persona_id, in.scenario.scenario_id, in.language),
                        in.persona.persona_id, in.scenario.scenario_id, "", 0, "", {}};
  for (std::size_t attempt = 0; attempt <= policy.retries; ++attempt) {
    ++failure.attempts;
    std::string raw;
    try {
      raw = chat.complete(req);
    } catch (const Error &e) {
      failure.error = "provider:" + std::string(to_string(e.kind()));
      continue;
    }
    failure.last_raw = raw;
    auto parsed = parse_conversation(raw, policy.max_messages, policy.mode);
    if (!parsed.ok()) {
      failure.error = "parse:" + std::string(to_string(parsed.error));
      continue;
    }
    auto violations = validate_language(parsed.messages, in.language, rules);
    if (!violations.empty() && policy.reject_on_violation) {
      failure.error = "language:" + violations.front().kind;
      failure.violations = std::move(violations);
      continue;
    }
    Conversation c;
    c.conv_id = failure.conv_id;
    c.persona_id = in.persona.persona_id;
    c.scenario_id = in.scenario.scenario_id;
    c.domain_path = in.scenario.domain_path;
    c.topic_id = in.scenario.topic_id;
    c.language = in.language;
    c.max_messages = policy.max_messages;
    c.messages = std::move(parsed.messages);
    c.initiator = c.messages.front().role;
    c.violations = std::move(violations);
    c.attempts = failure.attempts;
    return {std::move(c), std::nullopt};
  }
  return {std::nullopt, std::move(failure)};
}

struct InitiationReport {
  std::size_t n = 0;
  double user_start = 0.0;
  double assistant_start = 0.0;
  std::map<std::size_t, std::size_t> message_histogram;
  bool in_target_band = false; // user-start within [0.5, 0.6]
  std::optional<std::string> warning;
};

inline InitiationReport initiation_report(const std::vector<Conversation> &convs) {
  InitiationReport r;
  r.n = convs.size();
  if (convs.empty()) {
    r.warning = "empty corpus";
    return r;
  }
  std::size_t user = 0;
  for (const auto &c : convs) {
    user += c.initiator == "user";
    ++r.message_histogram[c.messages.size()];
  }
  r.user_start = static_cast<double>(user) / static_cast<double>(r.n);
  r.assistant_start = 1.0 - r.user_start;
  r.in_target_band = r.user_start >= 0.5 && r.user_start <= 0.6;
  return r;
}

inline void to_json(json &j, const InitiationReport &r) {
  json hist = json::object();
  for (const auto &[k, v] : r.message_histogram) hist[std::to_string(k)] = v;
  j = json{{"n", r.n},
           {"user_start", r.user_start},
           {"assistant_start", r.assistant_start},
           {"message_histogram", hist},
           {"in_target_band", r.in_target_band},
           {"warning", r.warning ? json(*r.warning) : json(nullptr)}};
}

} // namespace forge::dialogue
