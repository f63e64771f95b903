#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/concurrency.hpp"
#include "forge/persona.hpp"
#include "forge/providers.hpp"
#include "forge/rng.hpp"
#include "forge/scenario.hpp"
#include "forge/textmetrics.hpp"

namespace forge::matcher {

using nlohmann::json;

struct Scores {
  double s_emb = 0.0;
  double s_jac = 0.0;
  double s_hyb = 0.0;
};

inline double blend(double s_emb, double s_jac, double w) { return w * s_emb + (1.0 - w) * s_jac; }

inline Scores hybrid_score(const std::string &summary, const std::string &scenario_text, Embedder &embedder,
                           double w = 0.5) {
  if (is_blank(summary) || is_blank(scenario_text))
    throw Error(ErrorKind::precondition, "hybrid_score: empty text");
  Scores s;
  s.s_emb = text::cosine(embedder.embed(summary), embedder.embed(scenario_text));
  s.s_jac = text::jaccard(text::tokenize(summary), text::tokenize(scenario_text));
  s.s_hyb = blend(s.s_emb, s.s_jac, w);
  return s;
}

struct MatchRecord {
  std::string persona_id;
  std::string scenario_id;
  double s_emb = 0.0;
  double s_jac = 0.0;
  double s_hyb = 0.0;
  bool kept = false;
  std::optional<std::string> error;
  friend bool operator==(const MatchRecord &, const MatchRecord &) = default;
};

inline void to_json(json &j, const MatchRecord &m) {
  j = json{{"persona_id", m.persona_id}, {"scenario_id", m.scenario_id}, {"s_emb", m.s_emb},
           {"s_jac", m.s_jac},           {"s_hyb", m.s_hyb},             {"kept", m.kept}};
  if (m.error) j["error"] = *m.error;
}

inline void from_json(const json &j, MatchRecord &m) {
  m.persona_id = j.at("persona_id").get<std::string>();
  m.scenario_id = j.at("scenario_id").get<std::string>();
  m.s_emb = j.at("s_emb").get<double>();
  m.s_jac = j.at("s_jac").get<double>();
  m.s_hyb = j.at("s_hyb").get<double>();
  m.kept = j.at("kept").get<bool>();
  if (j.contains("error")) m.error = j["error"].get<std::string>();
}

struct MatchConfig {
  double w = 0.5;
  double tau = 0.05;
  bool keep_all = false; // emit dropped pairs too
  std::size_t max_in_flight = 4;
};

/// Inclusive threshold; 1e-12 absorbs rounding in the blend.
inline bool keep(double s_hyb, double tau) { return s_hyb >= tau - 1e-12; }

struct MatchSummary {
  std::size_t scored = 0;
  std::size_t kept = 0;
  std::size_t errors = 0;
};

/// Scores every persona x scenario pair. Each distinct text is embedded and
/// tokenized once. Records reach the sink persona by persona, in input order.
inline MatchSummary match_stream(const std::vector<persona::PersonaSummary> &personas,
                                 const std::vector<scenario::Scenario> &scenarios, Embedder &embedder,
                                 const MatchConfig &cfg, const std::function<void(const MatchRecord &)> &sink) {
  require(!personas.empty() && !scenarios.empty(), "match_all: empty persona or scenario set");
  struct Entry {
    std::optional<EmbeddingVector> vec;
    std::string error;
    text::TokenSeq tokens;
  };
  std::map<std::string, Entry> cache;
  for (const auto &p : personas) cache.try_emplace(p.text);
  for (const auto &s : scenarios) cache.try_emplace(s.text);
  std::vector<std::pair<const std::string *, Entry *>> slots;
  for (auto &[k, v] : cache) slots.emplace_back(&k, &v);
  parallel_for(slots.size(), cfg.max_in_flight, [&](std::size_t i) {
    auto &e = *slots[i].second;
    e.tokens = text::tokenize(*slots[i].first);
    try {
      if (is_blank(*slots[i].first)) throw Error(ErrorKind::precondition, "empty text");
      e.vec = embedder.embed(*slots[i].first);
    } catch (const std::exception &err) {
      e.error = err.what();
    }
  });

  MatchSummary summary;
  std::vector<MatchRecord> row(scenarios.size());
  for (const auto &p : personas) {
    const auto &pe = cache.at(p.text);
    parallel_for(scenarios.size(), cfg.max_in_flight, [&](std::size_t j) {
      const auto &se = cache.at(scenarios[j].text);
      MatchRecord r;
      r.persona_id = p.persona_id;
      r.scenario_id = scenarios[j].scenario_id;
      if (!pe.vec || !se.vec) {
        r.error = !pe.vec ? pe.error : se.error;
      } else {
        try {
          r.s_emb = text::cosine(*pe.vec, *se.vec);
          r.s_jac = text::jaccard(pe.tokens, se.tokens);
          r.s_hyb = blend(r.s_emb, r.s_jac, cfg.w);
          r.kept = keep(r.s_hyb, cfg.tau);
        } catch (const Error &err) {
          r.error = err.what();
        }
      }
      row[j] = std::move(r);
    });
    for (const auto &r : row) {
      if (r.error) {
        ++summary.errors;
        continue;
      }
      ++summary.scored;
      summary.kept += r.kept;
      if (r.kept || cfg.keep_all) sink(r);
    }
  }
  return summary;
}

inline std::vector<MatchRecord> match_all(const std::vector<persona::PersonaSummary> &personas,
                                          const std::vector<scenario::Scenario> &scenarios, Embedder &embedder,
                                          const MatchConfig &cfg = {}) {
  std::vector<MatchRecord> out;
  match_stream(personas, scenarios, embedder, cfg, [&](const MatchRecord &r) { out.push_back(r); });
  return out;
}

struct Assignment {
  std::string persona_id;
  std::string scenario_id;
  double s_hyb = 0.0;
  friend bool operator==(const Assignment &, const Assignment &) = default;
};

inline void to_json(json &j, const Assignment &a) {
  j = json{{"persona_id", a.persona_id}, {"scenario_id", a.scenario_id}, {"s_hyb", a.s_hyb}};
}
inline void from_json(const json &j, Assignment &a) {
  a.persona_id = j.at("persona_id").get<std::string>();
  a.scenario_id = j.at("scenario_id").get<std::string>();
  a.s_hyb = j.at("s_hyb").get<double>();
}

/// Up to `cap` kept pairs per persona, sampled without replacement with
/// probability proportional to s_hyb (exponential-key method). Each persona
/// draws from its own seed stream, so the result does not depend on input order.
inline std::vector<Assignment> select_pairs_for_generation(const std::vector<MatchRecord> &records,
                                                           std::size_t cap, std::uint64_t seed) {
  std::map<std::string, std::vector<const MatchRecord *>> by_persona;
  for (const auto &r : records)
    if (r.kept && !r.error) by_persona[r.persona_id].push_back(&r);
  std::vector<Assignment> out;
  for (auto &[pid, list] : by_persona) {
    std::sort(list.begin(), list.end(),
              [](const MatchRecord *a, const MatchRecord *b) { return a->scenario_id < b->scenario_id; });
    Rng rng(mix_seed(seed, pid));
    std::vector<std::pair<double, const MatchRecord *>> keyed;
    for (const auto *r : list) {
      const double u = std::max(rng.unit(), 1e-300);
      const double w = std::max(r->s_hyb, 1e-12);
      keyed.emplace_back(std::log(u) / w, r);
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto &a, const auto &b) { return a.first > b.first; });
    const std::size_t take = std::min(cap, keyed.size());
    std::vector<const MatchRecord *> chosen;
    for (std::size_t i = 0; i < take; ++i) chosen.push_back(keyed[i].second);
    std::sort(chosen.begin(), chosen.end(),
              [](const MatchRecord *a, const MatchRecord *b) { return a->scenario_id < b->scenario_id; });
    for (const auto *r : chosen) out.push_back({r->persona_id, r->scenario_id, r->s_hyb});
  }
  return out;
}

} // namespace forge::matcher
