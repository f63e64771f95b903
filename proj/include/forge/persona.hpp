#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/concurrency.hpp"
#include "forge/dedup.hpp"
#include "forge/prompts.hpp"
#include "forge/providers.hpp"
#include "forge/refbank.hpp"
#include "forge/rng.hpp"
#include "forge/strict_json.hpp"
#include "forge/template.hpp"
#include "forge/textmetrics.hpp"

namespace forge::persona {

using nlohmann::json;

inline constexpr std::array<const char *, 5> kOceanTraits{"openness", "conscientiousness", "extraversion",
                                                          "agreeableness", "neuroticism"};

struct DigitalAccess {
  std::string device;
  std::string connectivity;
  std::string ai_competence_level;
  friend bool operator==(const DigitalAccess &, const DigitalAccess &) = default;
};

struct PersonaProfile {
  std::string persona_id;
  std::optional<std::string> seed_speaker_id;
  std::string persona_name;
  int age = 0;
  std::string gender; // male | female
  std::string city;
  std::string country;
  std::string speaker_nationality;
  std::string mother_tongue;
  std::string education_level;
  std::string profession;
  std::string marital_status;
  std::string household_type;
  std::optional<std::string> religion;
  DigitalAccess digital_access;
  std::vector<std::string> ai_use_cases;
  std::map<std::string, json> wvs_profile; // axis -> number, category or null
  std::array<double, 5> ocean{0.5, 0.5, 0.5, 0.5, 0.5};

  friend bool operator==(const PersonaProfile &, const PersonaProfile &) = default;
};

inline json opt(const std::optional<std::string> &v) { return v ? json(*v) : json(nullptr); }

inline void to_json(json &j, const PersonaProfile &p) {
  json ocean = json::object();
  for (std::size_t i = 0; i < kOceanTraits.size(); ++i) ocean[kOceanTraits[i]] = p.ocean[i];
  j = json{{"persona_id", p.persona_id},
           {"seed_speaker_id", opt(p.seed_speaker_id)},
           {"persona_name", p.persona_name},
           {"age", p.age},
           {"gender", p.gender},
           {"city", p.city},
           {"country", p.country},
           {"speaker_nationality", p.speaker_nationality},
           {"mother_tongue", p.mother_tongue},
           {"education_level", p.education_level},
           {"profession", p.profession},
           {"marital_status", p.marital_status},
           {"household_type", p.household_type},
           {"religion", opt(p.religion)},
           {"digital_access",
            {{"device", p.digital_access.device},
             {"connectivity", p.digital_access.connectivity},
             {"ai_competence_level", p.digital_access.ai_competence_level}}},
           {"ai_use_cases", p.ai_use_cases},
           {"wvs_profile", p.wvs_profile},
           {"ocean", ocean}};
}

inline void from_json(const json &j, PersonaProfile &p) {
  auto opt_str = [&](const char *k) -> std::optional<std::string> {
    if (!j.contains(k) || j[k].is_null()) return std::nullopt;
    return j[k].get<std::string>();
  };
  p.persona_id = j.at("persona_id").get<std::string>();
  p.seed_speaker_id = opt_str("seed_speaker_id");
  p.persona_name = j.at("persona_name").get<std::string>();
  p.age = j.at("age").get<int>();
  p.gender = j.at("gender").get<std::string>();
  p.city = j.value("city", "");
  p.country = j.at("country").get<std::string>();
  p.speaker_nationality = j.value("speaker_nationality", "");
  p.mother_tongue = j.value("mother_tongue", "");
  p.education_level = j.value("education_level", "");
  p.profession = j.value("profession", "");
  p.marital_status = j.value("marital_status", "");
  p.household_type = j.value("household_type", "");
  p.religion = opt_str("religion");
  const auto &da = j.at("digital_access");
  p.digital_access = {da.value("device", ""), da.value("connectivity", ""), da.value("ai_competence_level", "")};
  p.ai_use_cases = j.at("ai_use_cases").get<std::vector<std::string>>();
  p.wvs_profile.clear();
  if (j.contains("wvs_profile"))
    for (const auto &[k, v] : j["wvs_profile"].items()) p.wvs_profile[k] = v;
  if (j.contains("ocean"))
    for (std::size_t i = 0; i < kOceanTraits.size(); ++i) p.ocean[i] = j["ocean"].at(kOceanTraits[i]).get<double>();
}

struct AgeBucket {
  std::string label;
  int min = 0;
  int max = 200; // inclusive
};

/// Editable categorical inventories persona sampling draws from.
struct Inventories {
  std::map<std::string, std::map<std::string, std::vector<std::string>>> names; // country -> gender -> names
  std::map<std::string, std::vector<std::string>> cities;
  std::map<std::string, std::string> nationalities;
  std::map<std::string, std::string> mother_tongues;
  std::vector<AgeBucket> age_buckets;
  std::map<std::string, std::vector<std::string>> professions; // bucket label -> list
  std::vector<std::string> education_levels;
  std::vector<std::string> marital_statuses;
  std::vector<std::string> household_types;
  std::vector<std::string> devices;
  std::vector<std::string> connectivity;
  std::vector<std::string> ai_competence_levels; // ordinal, low to high
  std::vector<std::string> ai_use_cases;

  [[nodiscard]] std::vector<std::string> countries() const {
    std::vector<std::string> out;
    for (const auto &[c, _] : names) out.push_back(c);
    return out;
  }

  [[nodiscard]] const AgeBucket &bucket_for(int age) const {
    for (const auto &b : age_buckets)
      if (age >= b.min && age <= b.max) return b;
    throw Error(ErrorKind::not_found, "no age bucket covers age " + std::to_string(age));
  }

  /// Every string value in the inventories; used as the proper-noun allowlist.
  [[nodiscard]] std::set<std::string> all_values() const {
    std::set<std::string> out;
    for (const auto &[c, g] : names) {
      out.insert(c);
      for (const auto &[_, list] : g) out.insert(list.begin(), list.end());
    }
    for (const auto &[c, list] : cities) out.insert(list.begin(), list.end());
    for (const auto &[c, v] : nationalities) out.insert(v);
    for (const auto &[c, v] : mother_tongues) out.insert(v);
    for (const auto &[b, list] : professions) out.insert(list.begin(), list.end());
    for (const auto *list : {&education_levels, &marital_statuses, &household_types, &devices, &connectivity,
                             &ai_competence_levels, &ai_use_cases})
      out.insert(list->begin(), list->end());
    return out;
  }
};

inline void from_json(const json &j, AgeBucket &b) {
  b.label = j.at("label").get<std::string>();
  b.min = j.at("min").get<int>();
  b.max = j.contains("max") && !j["max"].is_null() ? j["max"].get<int>() : 200;
}

inline void from_json(const json &j, Inventories &inv) {
  j.at("names").get_to(inv.names);
  j.at("cities").get_to(inv.cities);
  j.at("nationalities").get_to(inv.nationalities);
  j.at("mother_tongues").get_to(inv.mother_tongues);
  j.at("age_buckets").get_to(inv.age_buckets);
  j.at("professions").get_to(inv.professions);
  j.at("education_levels").get_to(inv.education_levels);
  j.at("marital_statuses").get_to(inv.marital_statuses);
  j.at("household_types").get_to(inv.household_types);
  j.at("devices").get_to(inv.devices);
  j.at("connectivity").get_to(inv.connectivity);
  j.at("ai_competence_levels").get_to(inv.ai_competence_levels);
  j.at("ai_use_cases").get_to(inv.ai_use_cases);
  if (inv.ai_use_cases.size() < 2) throw Error(ErrorKind::schema, "inventories: need at least 2 ai_use_cases");
}

struct SamplingConfig {
  int min_age = 18;
  int max_age = 40;
  double ocean_base = 0.5;
  double ocean_radius = 0.15;
  std::size_t use_case_count = 2;
};

/// Sample a persona. Seed fields (country, gender, mother tongue, and age and
/// education when present) are copied; everything else is drawn uniformly
/// from the inventories.
inline PersonaProfile sample_persona(const std::optional<refbank::SpeakerProfile> &seed, const Inventories &inv,
                                     Rng &rng, const SamplingConfig &cfg = {}) {
  PersonaProfile p;
  const auto countries = inv.countries();
  require(!countries.empty(), "inventories: no countries");
  p.country = seed && !seed->country.empty() ? seed->country : rng.pick(countries);
  const auto names_it = inv.names.find(p.country);
  const auto cities_it = inv.cities.find(p.country);
  if (names_it == inv.names.end() || cities_it == inv.cities.end() || cities_it->second.empty())
    throw Error(ErrorKind::not_found, "inventory missing for country '" + p.country + "'");

  static const std::vector<std::string> genders{"male", "female"};
  p.gender = seed && !seed->gender.empty() ? seed->gender : rng.pick(genders);
  p.age = seed && seed->age ? *seed->age : static_cast<int>(rng.uniform_int(cfg.min_age, cfg.max_age));
  if (seed) p.seed_speaker_id = seed->speaker_id;

  const auto g = names_it->second.find(p.gender);
  if (g == names_it->second.end() || g->second.empty())
    throw Error(ErrorKind::not_found, "name inventory missing for (" + p.country + ", " + p.gender + ")");
  p.persona_name = rng.pick(g->second);
  p.city = rng.pick(cities_it->second);
  if (auto it = inv.nationalities.find(p.country); it != inv.nationalities.end()) p.speaker_nationality = it->second;
  if (seed && !seed->mother_tongue.empty())
    p.mother_tongue = seed->mother_tongue;
  else if (auto it = inv.mother_tongues.find(p.country); it != inv.mother_tongues.end())
    p.mother_tongue = it->second;

  const auto &bucket = inv.bucket_for(p.age);
  const auto prof = inv.professions.find(bucket.label);
  if (prof == inv.professions.end() || prof->second.empty())
    throw Error(ErrorKind::not_found, "profession inventory missing for age bucket '" + bucket.label + "'");
  p.profession = rng.pick(prof->second);
  p.education_level = seed && seed->education_level ? *seed->education_level : rng.pick(inv.education_levels);
  p.marital_status = rng.pick(inv.marital_statuses);
  p.household_type = rng.pick(inv.household_types);
  p.digital_access.device = rng.pick(inv.devices);
  p.digital_access.connectivity = rng.pick(inv.connectivity);
  p.digital_access.ai_competence_level = rng.pick(inv.ai_competence_levels);
  for (auto i : rng.sample_indices(inv.ai_use_cases.size(), cfg.use_case_count))
    p.ai_use_cases.push_back(inv.ai_use_cases[i]);
  for (auto &trait : p.ocean)
    trait = std::clamp(cfg.ocean_base + rng.uniform_real(-cfg.ocean_radius, cfg.ocean_radius), 0.0, 1.0);
  p.persona_id = "p-" + hex64(rng.next());
  return p;
}

/// Expansion candidate anchored to an accepted persona's speaker: keeps the
/// voice-relevant fields (speaker, country, nationality, mother tongue,
/// gender) and resamples the rest with a synthetic age.
inline PersonaProfile derive_candidate(const PersonaProfile &anchor, const Inventories &inv, Rng &rng,
                                       const SamplingConfig &cfg = {}) {
  refbank::SpeakerProfile seed;
  seed.speaker_id = anchor.seed_speaker_id.value_or("");
  seed.country = anchor.country;
  seed.gender = anchor.gender;
  seed.mother_tongue = anchor.mother_tongue;
  auto p = sample_persona(seed, inv, rng, cfg);
  p.seed_speaker_id = anchor.seed_speaker_id;
  p.religion = anchor.religion;
  return p;
}

struct AgeBand {
  std::string label;
  int min = 0;
  int max = 200;
};

inline const std::vector<AgeBand> &default_age_bands() {
  static const std::vector<AgeBand> v{{"18-29", 18, 29}, {"30-49", 30, 49}, {"50+", 50, 200}};
  return v;
}

/// Country-level value aggregates keyed by (country, age band).
struct WvsTable {
  struct Row {
    std::string country;
    std::string age_band; // "all" matches any age
    std::map<std::string, json> values;
  };
  std::vector<AgeBand> bands = default_age_bands();
  std::vector<Row> rows;

  [[nodiscard]] std::set<std::string> axes() const {
    std::set<std::string> out;
    for (const auto &r : rows)
      for (const auto &[k, _] : r.values) out.insert(k);
    return out;
  }

  [[nodiscard]] std::set<std::string> countries() const {
    std::set<std::string> out;
    for (const auto &r : rows) out.insert(r.country);
    return out;
  }
};

inline void from_json(const json &j, WvsTable &t) {
  if (j.contains("age_bands")) {
    t.bands.clear();
    for (const auto &b : j["age_bands"])
      t.bands.push_back({b.at("label").get<std::string>(), b.at("min").get<int>(),
                         b.contains("max") && !b["max"].is_null() ? b["max"].get<int>() : 200});
  }
  for (const auto &r : j.at("rows")) {
    WvsTable::Row row;
    row.country = r.at("country").get<std::string>();
    row.age_band = r.value("age_band", "all");
    for (const auto &[k, v] : r.at("values").items()) row.values[k] = v;
    t.rows.push_back(std::move(row));
  }
}

/// Copy the (country, age band) row into wvs_profile; axes the row lacks are null.
inline PersonaProfile ground_wvs(PersonaProfile p, const WvsTable &table) {
  std::vector<const WvsTable::Row *> rows;
  for (const auto &r : table.rows)
    if (r.country == p.country) rows.push_back(&r);
  if (rows.empty()) throw Error(ErrorKind::not_found, "WVS table has no row for country '" + p.country + "'");
  const WvsTable::Row *chosen = nullptr;
  if (rows.size() == 1) {
    chosen = rows.front();
  } else {
    std::string band;
    for (const auto &b : table.bands)
      if (p.age >= b.min && p.age <= b.max) band = b.label;
    for (const auto *r : rows)
      if (r->age_band == band) chosen = r;
    if (!chosen)
      for (const auto *r : rows)
        if (r->age_band == "all") chosen = r;
    if (!chosen)
      throw Error(ErrorKind::not_found,
                  "WVS table has no age band for country '" + p.country + "' and age " + std::to_string(p.age));
  }
  p.wvs_profile.clear();
  for (const auto &axis : table.axes()) {
    auto it = chosen->values.find(axis);
    p.wvs_profile[axis] = it == chosen->values.end() ? json(nullptr) : it->second;
  }
  return p;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Deterministic "field: value" rendering, one line per field, sorted by
/// field name. Identifiers are excluded.
inline std::string canonical_text(const PersonaProfile &p) {
  std::map<std::string, std::string> fields{
      {"age", std::to_string(p.age)},
      {"ai_competence_level", p.digital_access.ai_competence_level},
      {"city", p.city},
      {"connectivity", p.digital_access.connectivity},
      {"country", p.country},
      {"device", p.digital_access.device},
      {"education_level", p.education_level},
      {"gender", p.gender},
      {"household_type", p.household_type},
      {"marital_status", p.marital_status},
      {"mother_tongue", p.mother_tongue},
      {"persona_name", p.persona_name},
      {"profession", p.profession},
      {"religion", p.religion.value_or("null")},
      {"speaker_nationality", p.speaker_nationality},
  };
  std::string uses;
  for (const auto &u : p.ai_use_cases) uses += (uses.empty() ? "" : ", ") + u;
  fields["ai_use_cases"] = uses;
  std::string ocean;
  for (std::size_t i = 0; i < kOceanTraits.size(); ++i)
    ocean += std::string(i ? ", " : "") + kOceanTraits[i] + "=" + format_number(p.ocean[i]);
  fields["ocean"] = ocean;
  std::string wvs;
  for (const auto &[k, v] : p.wvs_profile)
    wvs += (wvs.empty() ? "" : ", ") + k + "=" + (v.is_number() ? format_number(v.get<double>()) : v.is_string() ? v.get<std::string>() : v.dump());
  fields["wvs_profile"] = wvs;
  std::string out;
  for (const auto &[k, v] : fields) out += k + ": " + v + "\n";
  return out;
}

struct ExpansionConfig {
  std::size_t target_count = 0;
  double reject_threshold = 0.80;
  std::size_t attempt_budget = 0; // 0 -> 20 x target
  std::size_t batch_size = 32;
  std::size_t max_in_flight = 4;
};

struct ExpansionResult {
  std::vector<PersonaProfile> accepted;
  std::size_t attempts = 0;
  std::size_t rejected = 0;
  bool budget_exhausted = false;
  std::string diagnostic;
};

/// Builds a complete candidate from an accepted anchor persona.
using CandidateFactory = std::function<PersonaProfile(const PersonaProfile &anchor, Rng &rng)>;

/// Greedy expansion with near-duplicate rejection. Seeds pass through the
/// same admission point first, then candidates derived from random seeds are
/// embedded in parallel batches and admitted serially in generation order.
inline ExpansionResult expand_seeds(const std::vector<PersonaProfile> &seeds, Embedder &embedder,
                                    const CandidateFactory &factory, std::uint64_t rng_seed,
                                    const ExpansionConfig &cfg) {
  require(!seeds.empty(), "expand_seeds: no seeds");
  ExpansionResult out;
  DedupIndex index(cfg.reject_threshold);
  const std::size_t budget = cfg.attempt_budget ? cfg.attempt_budget : 20 * std::max<std::size_t>(cfg.target_count, 1);
  auto admit_batch = [&](std::vector<PersonaProfile> &batch) {
    std::vector<EmbeddingVector> vecs(batch.size());
    parallel_for(batch.size(), cfg.max_in_flight,
                 [&](std::size_t i) { vecs[i] = embedder.embed(canonical_text(batch[i])); });
    for (std::size_t i = 0; i < batch.size() && out.accepted.size() < cfg.target_count; ++i) {
      ++out.attempts;
      if (index.admit(vecs[i]))
        out.accepted.push_back(std::move(batch[i]));
      else
        ++out.rejected;
    }
  };
  std::vector<PersonaProfile> seed_batch(seeds);
  admit_batch(seed_batch);

  Rng rng(rng_seed);
  while (out.accepted.size() < cfg.target_count && out.attempts < budget) {
    const std::size_t n = std::min(cfg.batch_size, budget - out.attempts);
    std::vector<PersonaProfile> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) batch.push_back(factory(rng.pick(seeds), rng));
    admit_batch(batch);
  }
  if (out.accepted.size() < cfg.target_count) {
    out.budget_exhausted = true;
    out.diagnostic = "attempt budget of " + std::to_string(budget) + " exhausted with " +
                     std::to_string(out.accepted.size()) + "/" + std::to_string(cfg.target_count) +
                     " personas accepted (" + std::to_string(out.rejected) + " near-duplicates rejected)";
  }
  return out;
}

struct PersonaSummary {
  std::string persona_id;
  std::string text;
  std::size_t word_count = 0;
};

inline void to_json(json &j, const PersonaSummary &s) {
  j = json{{"persona_id", s.persona_id}, {"text", s.text}, {"word_count", s.word_count}};
}

inline void from_json(const json &j, PersonaSummary &s) {
  s.persona_id = j.at("persona_id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  s.word_count = text::count_words(s.text); // never trusted from storage
}

/// Attribute object sent to the summary prompt (field names follow the
/// prompt's schema; identifiers are left out).
inline json summary_input(const PersonaProfile &p) {
  json ocean = json::object();
  for (std::size_t i = 0; i < kOceanTraits.size(); ++i) ocean[kOceanTraits[i]] = p.ocean[i];
  return json{{"persona_name", p.persona_name},
               {"speaker_age", p.age},
               {"gender", p.gender},
               {"speaker_mother_tongue", p.mother_tongue},
               {"city", p.city},
               {"speaker_nationality", p.speaker_nationality},
               {"marital_status", p.marital_status},
               {"household_type", p.household_type},
               {"education_level", p.education_level},
               {"profession", p.profession},
               {"digital_access",
                {{"device", p.digital_access.device},
                 {"connectivity", p.digital_access.connectivity},
                 {"ai_competence_level", p.digital_access.ai_competence_level}}},
               {"ai_use_case", p.ai_use_cases},
               {"religion", opt(p.religion)},
               {"wvs_profile", p.wvs_profile},
               {"ocean", ocean}};
}

inline ChatRequest summary_request(const PersonaProfile &p, const std::string &system_template = prompts::kPersonaSummarySystem,
                                   const std::string &user_template = prompts::kPersonaSummaryUser) {
  ChatRequest req;
  req.system_prompt = PromptTemplate(system_template).render({});
  req.user_prompt = PromptTemplate(user_template).render({{"json_object", summary_input(p).dump(2)}});
  return req;
}

struct SummaryParse {
  std::optional<std::string> text;
  ParseError error = ParseError::none;
};

/// Strict: exactly one JSON object whose only key is summary_first_person.
inline SummaryParse parse_summary(std::string_view raw, ParseMode mode = ParseMode::strict) {
  SummaryParse out;
  auto j = parse_json_response(raw, mode);
  if (!j.ok()) {
    out.error = j.error;
    return out;
  }
  if (!j.value.is_object()) {
    out.error = ParseError::wrong_shape;
    return out;
  }
  if (j.value.size() != 1 || !j.value.contains("summary_first_person")) {
    out.error = ParseError::wrong_key;
    return out;
  }
  if (!j.value["summary_first_person"].is_string()) {
    out.error = ParseError::bad_type;
    return out;
  }
  out.text = j.value["summary_first_person"].get<std::string>();
  return out;
}

struct SummaryResult {
  PersonaSummary summary;
  bool failed = false;
  std::string failure; // "declared-failure", "parse:<kind>", "provider:<kind>"
  std::size_t attempts = 0;
  std::string last_raw;
};

/// Generate a first-person summary. Malformed output is retried; the
/// provider's own empty-summary signal is a terminal, flagged failure.
inline SummaryResult summarize(const PersonaProfile &p, ChatProvider &chat, std::size_t retries = 3,
                               ParseMode mode = ParseMode::strict) {
  SummaryResult out;
  out.summary.persona_id = p.persona_id;
  const auto req = summary_request(p);
  for (std::size_t attempt = 0; attempt <= retries; ++attempt) {
    ++out.attempts;
    std::string raw;
    try {
      raw = chat.complete(req);
    } catch (const Error &e) {
      out.failure = "provider:" + std::string(to_string(e.kind()));
      continue;
    }
    out.last_raw = raw;
    auto parsed = parse_summary(raw, mode);
    if (!parsed.text) {
      out.failure = "parse:" + std::string(to_string(parsed.error));
      continue;
    }
    if (is_blank(*parsed.text)) {
      out.failed = true;
      out.failure = "declared-failure";
      return out;
    }
    out.summary.text = *parsed.text;
    out.summary.word_count = text::count_words(out.summary.text);
    out.failure.clear();
    return out;
  }
  out.failed = true;
  return out;
}

} // namespace forge::persona
