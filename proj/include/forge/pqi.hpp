#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/persona.hpp"
#include "forge/textmetrics.hpp"
#include "forge/utf8.hpp"

namespace forge::pqi {

using nlohmann::json;

inline constexpr std::array<const char *, 5> kStaticChecks{
    "S1_unsupported_numerals", "S2_unsupported_proper_nouns", "S3_value_leakage", "S4_religion_policy",
    "S5_attribute_contradiction"};

inline constexpr std::array<const char *, 7> kNarrativeChecks{
    "N1_first_person", "N2_length", "N3_grounded_opening", "N4_single_paragraph",
    "N5_show_dont_tell", "N6_routine_marker", "N7_grounded_ending"};

inline constexpr std::array<const char *, 6> kFlags{"unsupported-content", "first-person", "length",
                                                    "religion-policy", "value-leakage", "consistency"};

using Phrase = std::vector<std::string>;

struct ConsistencyRule {
  std::string field;
  std::set<std::string> values;
  std::string other_field;
  std::set<std::string> other_values;
  std::vector<Phrase> summary_phrases;
  std::string label;
};

struct Lexicons {
  int version = 0;
  std::set<std::string> first_person;
  double first_person_min_density = 0.03;
  double audit_first_person_min_density = 0.05;
  std::size_t min_words = 90, max_words = 180;
  std::size_t audit_min_words = 100, audit_max_words = 170;
  std::vector<Phrase> leakage, audit_leakage;
  std::vector<Phrase> religion, audit_religion;
  std::vector<Phrase> traits;
  std::set<std::string> trait_intensifiers;
  std::vector<Phrase> routine_markers;
  std::vector<Phrase> moral_phrases;
  std::set<std::string> proper_noun_whitelist;
  // field -> value -> phrases asserting that value
  std::map<std::string, std::map<std::string, std::vector<Phrase>>> contradictions;
  std::vector<ConsistencyRule> consistency_rules;
};

inline Phrase phrase(std::string_view s) { return text::tokenize(s).tokens(); }

inline std::vector<Phrase> phrases(const json &arr) {
  std::vector<Phrase> out;
  for (const auto &s : arr) {
    auto p = phrase(s.get<std::string>());
    if (!p.empty()) out.push_back(std::move(p));
  }
  return out;
}

inline void from_json(const json &j, Lexicons &lx) {
  lx.version = j.value("version", 0);
  for (const auto &s : j.at("first_person")) lx.first_person.insert(s.get<std::string>());
  lx.first_person_min_density = j.value("first_person_min_density", 0.03);
  lx.audit_first_person_min_density = j.value("audit_first_person_min_density", 0.05);
  if (j.contains("length")) {
    lx.min_words = j["length"].at("min").get<std::size_t>();
    lx.max_words = j["length"].at("max").get<std::size_t>();
  }
  if (j.contains("audit_length")) {
    lx.audit_min_words = j["audit_length"].at("min").get<std::size_t>();
    lx.audit_max_words = j["audit_length"].at("max").get<std::size_t>();
  }
  lx.leakage = phrases(j.at("leakage_phrases"));
  lx.audit_leakage = phrases(j.value("audit_leakage_phrases", json::array()));
  lx.religion = phrases(j.at("religion_terms"));
  lx.audit_religion = phrases(j.value("audit_religion_terms", json::array()));
  lx.traits = phrases(j.at("trait_terms"));
  for (const auto &s : j.value("trait_intensifiers", json::array())) lx.trait_intensifiers.insert(s.get<std::string>());
  lx.routine_markers = phrases(j.at("routine_markers"));
  lx.moral_phrases = phrases(j.at("moral_phrases"));
  for (const auto &s : j.at("proper_noun_whitelist")) lx.proper_noun_whitelist.insert(s.get<std::string>());
  const json contradictions = j.value("contradictions", json::object());
  for (const auto &[field, values] : contradictions.items())
    for (const auto &[value, list] : values.items()) lx.contradictions[field][value] = phrases(list);
  for (const auto &r : j.value("consistency_rules", json::array())) {
    ConsistencyRule rule;
    rule.field = r.at("field").get<std::string>();
    for (const auto &v : r.at("values")) rule.values.insert(v.get<std::string>());
    rule.other_field = r.value("other_field", "");
    for (const auto &v : r.value("other_values", json::array())) rule.other_values.insert(v.get<std::string>());
    rule.summary_phrases = phrases(r.value("summary_phrases", json::array()));
    rule.label = r.value("label", rule.field);
    lx.consistency_rules.push_back(std::move(rule));
  }
}

/// A word with its surface casing and sentence position.
struct Word {
  std::string lower;
  bool capitalized = false;
  bool sentence_initial = false;
  std::size_t sentence = 0;
};

struct Scan {
  std::vector<Word> words;
  std::vector<std::vector<std::string>> sentences; // lowercase tokens per sentence
  std::size_t arabic_letters = 0;
  std::size_t latin_letters = 0;
};

inline Scan scan(std::string_view text) {
  Scan out;
  const auto cps = utf8::decode(text);
  std::string cur;
  bool cur_cap = false;
  bool at_sentence_start = true;
  std::size_t sentence = 0;
  out.sentences.emplace_back();
  auto flush = [&] {
    if (cur.empty()) return;
    out.words.push_back({cur, cur_cap, at_sentence_start, sentence});
    out.sentences.back().push_back(cur);
    at_sentence_start = false;
    cur.clear();
  };
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i];
    if (c == 0x0640) continue;
    if (utf8::is_arabic_letter(c)) ++out.arabic_letters;
    if (utf8::is_latin_letter(c)) ++out.latin_letters;
    if (utf8::is_word_char(c)) {
      if (cur.empty()) cur_cap = utf8::is_upper(c);
      utf8::append(cur, utf8::to_lower(c));
      continue;
    }
    if ((c == U'\'' || c == 0x2019) && !cur.empty() && i + 1 < cps.size() && utf8::is_word_char(cps[i + 1])) {
      cur.push_back('\'');
      continue;
    }
    flush();
    const bool terminal = c == U'.' || c == U'!' || c == U'?' || c == 0x061F || c == 0x2026;
    const bool boundary = i + 1 >= cps.size() || utf8::is_space(cps[i + 1]) || cps[i + 1] == U'"';
    if ((terminal && boundary) || c == U'\n') {
      if (!out.sentences.back().empty()) {
        ++sentence;
        out.sentences.emplace_back();
      }
      at_sentence_start = true;
    }
  }
  flush();
  if (out.sentences.size() > 1 && out.sentences.back().empty()) out.sentences.pop_back();
  return out;
}

inline bool contains_phrase(const std::vector<std::string> &tokens, const Phrase &p) {
  if (p.empty() || p.size() > tokens.size()) return false;
  return std::search(tokens.begin(), tokens.end(), p.begin(), p.end()) != tokens.end();
}

inline bool contains_any(const std::vector<std::string> &tokens, const std::vector<Phrase> &ps) {
  return std::any_of(ps.begin(), ps.end(), [&](const Phrase &p) { return contains_phrase(tokens, p); });
}

inline std::vector<std::string> all_tokens(const Scan &s) {
  std::vector<std::string> out;
  out.reserve(s.words.size());
  for (const auto &w : s.words) out.push_back(w.lower);
  return out;
}

inline bool is_digit_token(const std::string &t) {
  for (char32_t c : utf8::decode(t))
    if (utf8::is_digit(c)) return true;
  return false;
}

/// Digit runs in a token, normalized to ASCII ("29th" -> "29").
inline std::vector<std::string> digit_runs(const std::string &t) {
  std::vector<std::string> out;
  std::string cur;
  for (char32_t c : utf8::decode(t)) {
    if (utf8::is_digit(c)) {
      cur.push_back(static_cast<char>('0' + utf8::ascii_digit(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Categorical field values as rendered for grounding (excludes ids and numeric value/trait vectors).
inline std::map<std::string, std::string> field_values(const persona::PersonaProfile &p) {
  std::map<std::string, std::string> f{
      {"persona_name", p.persona_name},
      {"age", std::to_string(p.age)},
      {"gender", p.gender},
      {"city", p.city},
      {"country", p.country},
      {"speaker_nationality", p.speaker_nationality},
      {"mother_tongue", p.mother_tongue},
      {"education_level", p.education_level},
      {"profession", p.profession},
      {"marital_status", p.marital_status},
      {"household_type", p.household_type},
      {"device", p.digital_access.device},
      {"connectivity", p.digital_access.connectivity},
      {"ai_competence_level", p.digital_access.ai_competence_level},
  };
  if (p.religion) f["religion"] = *p.religion;
  for (std::size_t i = 0; i < p.ai_use_cases.size(); ++i) f["ai_use_case_" + std::to_string(i)] = p.ai_use_cases[i];
  return f;
}

inline std::set<std::string> value_tokens(const persona::PersonaProfile &p) {
  std::set<std::string> out;
  for (const auto &[_, v] : field_values(p))
    for (const auto &t : text::tokenize(v)) out.insert(t);
  return out;
}

struct PqiReport {
  std::string persona_id;
  bool auditable = true;
  std::array<bool, 5> static_checks{};
  std::array<bool, 7> narrative_checks{};
  int pqi_s = 0;
  int pqi_n = 0;
  int pqi = 0;
  bool compliant = false;
  std::vector<std::string> flags;
  std::vector<std::string> flag_details;
};

/// Builds a report from raw check outcomes. Sums are always derived here.
inline PqiReport assemble(std::array<bool, 5> s, std::array<bool, 7> n, std::vector<std::string> flags = {}) {
  PqiReport r;
  r.static_checks = s;
  r.narrative_checks = n;
  r.pqi_s = static_cast<int>(std::count(s.begin(), s.end(), true));
  r.pqi_n = static_cast<int>(std::count(n.begin(), n.end(), true));
  r.pqi = r.pqi_s + r.pqi_n;
  r.compliant = r.pqi == 12;
  r.flags = std::move(flags);
  return r;
}

inline void to_json(json &j, const PqiReport &r) {
  json s = json::object(), n = json::object();
  for (std::size_t i = 0; i < 5; ++i) s[kStaticChecks[i]] = r.static_checks[i];
  for (std::size_t i = 0; i < 7; ++i) n[kNarrativeChecks[i]] = r.narrative_checks[i];
  j = json{{"persona_id", r.persona_id}, {"auditable", r.auditable}, {"static_checks", s},
           {"narrative_checks", n},      {"pqi_s", r.pqi_s},           {"pqi_n", r.pqi_n},
           {"pqi", r.pqi},               {"compliant", r.compliant},   {"flags", r.flags},
           {"flag_details", r.flag_details}};
}

inline void from_json(const json &j, PqiReport &r) {
  std::array<bool, 5> s{};
  std::array<bool, 7> n{};
  for (std::size_t i = 0; i < 5; ++i) s[i] = j.at("static_checks").at(kStaticChecks[i]).get<bool>();
  for (std::size_t i = 0; i < 7; ++i) n[i] = j.at("narrative_checks").at(kNarrativeChecks[i]).get<bool>();
  r = assemble(s, n, j.value("flags", std::vector<std::string>{}));
  r.persona_id = j.value("persona_id", "");
  r.auditable = j.value("auditable", true);
  r.flag_details = j.value("flag_details", std::vector<std::string>{});
}

class Scorer {
public:
  Scorer(Lexicons lexicons, std::set<std::string> inventory_tokens)
      : lx_(std::move(lexicons)), inventory_tokens_(std::move(inventory_tokens)) {}

  Scorer(Lexicons lexicons, const persona::Inventories &inv) : lx_(std::move(lexicons)) {
    for (const auto &v : inv.all_values())
      for (const auto &t : text::tokenize(v)) inventory_tokens_.insert(t);
  }

  [[nodiscard]] const Lexicons &lexicons() const { return lx_; }

  [[nodiscard]] std::array<bool, 5> score_static(const std::string &summary, const persona::PersonaProfile &p) const {
    const auto s = scan(summary);
    if (s.words.empty()) return {};
    const auto tokens = all_tokens(s);
    const auto values = value_tokens(p);
    return {numerals_supported(s, p), proper_nouns_supported(s, values, true), !contains_any(tokens, lx_.leakage) && !axis_leak(tokens, p),
            p.religion.has_value() || !contains_any(tokens, lx_.religion), contradictions(tokens, p).empty()};
  }

  [[nodiscard]] std::array<bool, 7> score_narrative(const std::string &summary,
                                                     const persona::PersonaProfile &p) const {
    const auto s = scan(summary);
    if (s.words.empty()) return {};
    const auto tokens = all_tokens(s);
    const auto name = text::tokenize(p.persona_name).tokens();
    const std::size_t words = text::count_words(summary);

    bool first_person = first_person_density(s) >= lx_.first_person_min_density;
    if (!name.empty())
      for (std::size_t i = 1; i < s.sentences.size(); ++i)
        if (contains_phrase(s.sentences[i], {name.front()})) first_person = false;

    const auto &opening = s.sentences.front();
    const bool grounded_opening =
        !name.empty() && contains_phrase(opening, name) && contains_phrase(opening, {std::to_string(p.age)});

    const auto &last = s.sentences.back();
    std::string trimmed = summary;
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) trimmed.pop_back();
    const bool ellipsis = trimmed.ends_with("...") || trimmed.ends_with("\xE2\x80\xA6");

    return {first_person,
            words >= lx_.min_words && words <= lx_.max_words,
            grounded_opening,
            single_paragraph(summary),
            !self_ascribes_trait(tokens),
            contains_any(tokens, lx_.routine_markers),
            !contains_any(last, lx_.moral_phrases) && !ellipsis};
  }

  /// Independent, stricter heuristics. May fire on summaries with PQI 12.
  [[nodiscard]] std::vector<std::string> audit_flags(const std::string &summary, const persona::PersonaProfile &p,
                                                     std::vector<std::string> *details = nullptr) const {
    std::vector<std::string> flags;
    auto flag = [&](const char *label, const std::string &detail) {
      if (std::find(flags.begin(), flags.end(), label) == flags.end()) flags.emplace_back(label);
      if (details) details->push_back(std::string(label) + ": " + detail);
    };
    for (const auto &rule : lx_.consistency_rules)
      if (!rule.other_field.empty() && rule.values.count(field(p, rule.field)) &&
          rule.other_values.count(field(p, rule.other_field)))
        flag("consistency", rule.label);
    const auto s = scan(summary);
    if (s.words.empty()) {
      flag("length", "empty summary");
      return flags;
    }
    const auto tokens = all_tokens(s);
    const auto values = value_tokens(p);
    if (!numerals_supported(s, p) || !proper_nouns_supported(s, values, false))
      flag("unsupported-content", "token outside profile values");
    if (first_person_density(s) < lx_.audit_first_person_min_density) flag("first-person", "low pronoun density");
    const std::size_t words = text::count_words(summary);
    if (words < lx_.audit_min_words || words > lx_.audit_max_words)
      flag("length", std::to_string(words) + " words");
    if (!p.religion && (contains_any(tokens, lx_.religion) || contains_any(tokens, lx_.audit_religion)))
      flag("religion-policy", "religious reference without religion field");
    if (contains_any(tokens, lx_.leakage) || contains_any(tokens, lx_.audit_leakage) || axis_leak(tokens, p))
      flag("value-leakage", "value terminology");
    for (const auto &c : contradictions(tokens, p)) flag("consistency", c);
    for (const auto &rule : lx_.consistency_rules)
      if (!rule.summary_phrases.empty() && rule.values.count(field(p, rule.field)) &&
          contains_any(tokens, rule.summary_phrases))
        flag("consistency", rule.label);
    return flags;
  }

  [[nodiscard]] PqiReport score(const std::string &summary, const persona::PersonaProfile &p) const {
    const auto s = scan(summary);
    if (!s.words.empty() && s.arabic_letters > s.latin_letters) {
      PqiReport r;
      r.persona_id = p.persona_id;
      r.auditable = false;
      return r;
    }
    std::vector<std::string> details;
    auto flags = audit_flags(summary, p, &details);
    auto r = assemble(score_static(summary, p), score_narrative(summary, p), std::move(flags));
    r.flag_details = std::move(details);
    r.persona_id = p.persona_id;
    return r;
  }

private:
  static std::string field(const persona::PersonaProfile &p, const std::string &name) {
    const auto f = field_values(p);
    auto it = f.find(name);
    return it == f.end() ? std::string{} : it->second;
  }

  [[nodiscard]] double first_person_density(const Scan &s) const {
    if (s.words.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto &w : s.words) n += lx_.first_person.count(w.lower);
    return static_cast<double>(n) / static_cast<double>(s.words.size());
  }

  static bool numerals_supported(const Scan &s, const persona::PersonaProfile &p) {
    std::set<std::string> supported;
    for (const auto &[_, v] : field_values(p))
      for (const auto &t : text::tokenize(v))
        for (auto &run : digit_runs(t)) supported.insert(run);
    for (const auto &w : s.words)
      if (is_digit_token(w.lower))
        for (const auto &run : digit_runs(w.lower))
          if (!supported.count(run)) return false;
    return true;
  }

  [[nodiscard]] bool proper_nouns_supported(const Scan &s, const std::set<std::string> &values,
                                            bool allow_inventory) const {
    for (const auto &w : s.words) {
      if (!w.capitalized || w.sentence_initial) continue;
      if (values.count(w.lower) || lx_.proper_noun_whitelist.count(w.lower)) continue;
      if (allow_inventory && inventory_tokens_.count(w.lower)) continue;
      return false;
    }
    return true;
  }

  static bool axis_leak(const std::vector<std::string> &tokens, const persona::PersonaProfile &p) {
    for (const auto &[axis, _] : p.wvs_profile) {
      const auto ph = phrase(axis);
      if (ph.size() >= 2 && contains_phrase(tokens, ph)) return true;
    }
    return false;
  }

  [[nodiscard]] std::vector<std::string> contradictions(const std::vector<std::string> &tokens,
                                                        const persona::PersonaProfile &p) const {
    std::vector<std::string> out;
    for (const auto &[fname, values] : lx_.contradictions) {
      const auto actual = field(p, fname);
      if (actual.empty()) continue;
      for (const auto &[value, ps] : values)
        if (value != actual && contains_any(tokens, ps)) out.push_back(fname + " asserted as '" + value + "'");
    }
    return out;
  }

  static bool single_paragraph(const std::string &summary) {
    std::string trimmed = summary;
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) trimmed.pop_back();
    std::size_t start = 0;
    while (start < trimmed.size() && std::isspace(static_cast<unsigned char>(trimmed[start]))) ++start;
    if (trimmed.find('\n', start) != std::string::npos) return false;
    if (trimmed.find("\xE2\x80\xA2") != std::string::npos) return false; // bullet
    const std::string_view head(trimmed.data() + start, trimmed.size() - start);
    if (head.starts_with("- ") || head.starts_with("* ")) return false;
    std::size_t d = 0;
    while (d < head.size() && std::isdigit(static_cast<unsigned char>(head[d]))) ++d;
    if (d > 0 && d + 1 < head.size() && (head[d] == '.' || head[d] == ')') && head[d + 1] == ' ') return false;
    return true;
  }

  [[nodiscard]] bool self_ascribes_trait(const std::vector<std::string> &tokens) const {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      std::size_t j;
      if (tokens[i] == "i'm")
        j = i + 1;
      else if (tokens[i] == "i" && i + 1 < tokens.size() && tokens[i + 1] == "am")
        j = i + 2;
      else
        continue;
      for (std::size_t skipped = 0; j < tokens.size() && skipped < 3 && lx_.trait_intensifiers.count(tokens[j]);
           ++skipped)
        ++j;
      const std::vector<std::string> rest(tokens.begin() + static_cast<std::ptrdiff_t>(std::min(j, tokens.size())),
                                          tokens.end());
      for (const auto &t : lx_.traits)
        if (rest.size() >= t.size() && std::equal(t.begin(), t.end(), rest.begin())) return true;
    }
    return false;
  }

  Lexicons lx_;
  std::set<std::string> inventory_tokens_;
};

struct CorpusReport {
  std::size_t n = 0;
  std::size_t not_auditable = 0;
  double mean = 0.0;
  double median = 0.0;
  double fraction_compliant = 0.0;
  double fraction_ge10 = 0.0;
  std::map<std::string, double> check_pass_rates;
  std::map<std::string, double> flag_rates;
  double any_flag_rate = 0.0;
  std::map<int, std::size_t> histogram;
};

inline CorpusReport corpus_report(const std::vector<PqiReport> &reports) {
  CorpusReport c;
  std::vector<int> scores;
  std::size_t any_flag = 0;
  std::map<std::string, std::size_t> check_pass, flag_count;
  for (const auto &r : reports) {
    if (!r.auditable) {
      ++c.not_auditable;
      continue;
    }
    scores.push_back(r.pqi);
    ++c.histogram[r.pqi];
    for (std::size_t i = 0; i < 5; ++i) check_pass[kStaticChecks[i]] += r.static_checks[i];
    for (std::size_t i = 0; i < 7; ++i) check_pass[kNarrativeChecks[i]] += r.narrative_checks[i];
    for (const auto &f : r.flags) ++flag_count[f];
    any_flag += !r.flags.empty();
  }
  c.n = scores.size();
  for (const auto *name : kStaticChecks) c.check_pass_rates[name] = 0.0;
  for (const auto *name : kNarrativeChecks) c.check_pass_rates[name] = 0.0;
  for (const auto *name : kFlags) c.flag_rates[name] = 0.0;
  if (scores.empty()) return c;
  const double n = static_cast<double>(c.n);
  double sum = 0;
  for (int s : scores) sum += s;
  c.mean = sum / n;
  std::sort(scores.begin(), scores.end());
  c.median = c.n % 2 ? scores[c.n / 2] : (scores[c.n / 2 - 1] + scores[c.n / 2]) / 2.0;
  c.fraction_compliant = static_cast<double>(std::count(scores.begin(), scores.end(), 12)) / n;
  c.fraction_ge10 = static_cast<double>(std::count_if(scores.begin(), scores.end(), [](int s) { return s >= 10; })) / n;
  for (const auto &[k, v] : check_pass) c.check_pass_rates[k] = static_cast<double>(v) / n;
  for (const auto &[k, v] : flag_count) c.flag_rates[k] = static_cast<double>(v) / n;
  c.any_flag_rate = static_cast<double>(any_flag) / n;
  return c;
}

inline void to_json(json &j, const CorpusReport &c) {
  json hist = json::object();
  for (const auto &[k, v] : c.histogram) hist[std::to_string(k)] = v;
  j = json{{"n", c.n},
           {"not_auditable", c.not_auditable},
           {"mean", c.mean},
           {"median", c.median},
           {"fraction_compliant", c.fraction_compliant},
           {"fraction_ge10", c.fraction_ge10},
           {"check_pass_rates", c.check_pass_rates},
           {"flag_rates", c.flag_rates},
           {"any_flag_rate", c.any_flag_rate},
           {"histogram", hist}};
}

} // namespace forge::pqi
