#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/concurrency.hpp"
#include "forge/dialogue.hpp"
#include "forge/error.hpp"
#include "forge/jsonl.hpp"
#include "forge/rng.hpp"
#include "forge/speechgen.hpp"

namespace forge::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

inline const std::vector<std::string> kSplits{"train", "dev", "test"};

struct SplitItem {
  std::string conv_id;
  std::string persona_id;
  std::string scenario_id;
};

inline std::vector<SplitItem> items_of(const std::vector<dialogue::Conversation> &convs) {
  std::vector<SplitItem> out;
  out.reserve(convs.size());
  for (const auto &c : convs) out.push_back({c.conv_id, c.persona_id, c.scenario_id});
  return out;
}

struct SplitConfig {
  double test_frac = 0.123;
  double dev_frac = 0.10;
  std::uint64_t rng_seed = 0;
  std::size_t small_stratum = 10; // strata below this use a per-conversation coin
  bool profile_disjoint_dev = false;
};

struct SplitManifest {
  std::vector<std::string> test_profile_ids;
  std::vector<std::string> dev_profile_ids; // only in profile-disjoint mode
  std::map<std::string, std::string> split_of;
  double test_frac = 0.123;
  double dev_frac = 0.10;
  double achieved_test = 0.0;
  double achieved_dev = 0.0;
  std::uint64_t rng_seed = 0;
  std::size_t small_stratum = 10;
  bool profile_disjoint_dev = false;
  std::map<std::string, std::map<std::string, std::size_t>> scenario_distribution; // split -> scenario -> count

  [[nodiscard]] std::map<std::string, std::size_t> counts() const {
    std::map<std::string, std::size_t> c{{"train", 0}, {"dev", 0}, {"test", 0}};
    for (const auto &[id, s] : split_of) ++c[s];
    return c;
  }
};

inline void to_json(json &j, const SplitManifest &m) {
  j = json{{"test_profile_ids", m.test_profile_ids},
           {"dev_profile_ids", m.dev_profile_ids},
           {"split_of", m.split_of},
           {"fractions", {{"test", m.test_frac}, {"dev_of_remainder", m.dev_frac}}},
           {"achieved", {{"test", m.achieved_test}, {"dev_of_remainder", m.achieved_dev}}},
           {"counts", m.counts()},
           {"rng_seed", m.rng_seed},
           {"small_stratum_threshold", m.small_stratum},
           {"profile_disjoint_dev", m.profile_disjoint_dev},
           {"scenario_distribution", m.scenario_distribution}};
}

inline void from_json(const json &j, SplitManifest &m) {
  m.test_profile_ids = j.at("test_profile_ids").get<std::vector<std::string>>();
  m.dev_profile_ids = j.value("dev_profile_ids", std::vector<std::string>{});
  m.split_of = j.at("split_of").get<std::map<std::string, std::string>>();
  m.test_frac = j.at("fractions").at("test").get<double>();
  m.dev_frac = j.at("fractions").at("dev_of_remainder").get<double>();
  m.achieved_test = j.at("achieved").at("test").get<double>();
  m.achieved_dev = j.at("achieved").at("dev_of_remainder").get<double>();
  m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  m.small_stratum = j.value("small_stratum_threshold", std::size_t{10});
  m.profile_disjoint_dev = j.value("profile_disjoint_dev", false);
  m.scenario_distribution =
      j.value("scenario_distribution", std::map<std::string, std::map<std::string, std::size_t>>{});
}

namespace detail {

inline std::map<std::string, std::vector<const SplitItem *>> by_persona(const std::vector<SplitItem> &items) {
  std::map<std::string, std::vector<const SplitItem *>> out;
  for (const auto &it : items) out[it.persona_id].push_back(&it);
  return out;
}

/// Shuffle profile ids with the given stream, then take whole profiles until
/// the running conversation count first reaches `target`.
inline std::vector<std::string> greedy_profiles(std::vector<std::string> ids,
                                                const std::map<std::string, std::vector<const SplitItem *>> &groups,
                                                double target, std::uint64_t seed, std::string_view stream) {
  Rng rng(mix_seed(seed, stream));
  rng.shuffle(ids);
  std::vector<std::string> out;
  std::size_t total = 0;
  for (const auto &id : ids) {
    if (static_cast<double>(total) >= target) break;
    out.push_back(id);
    total += groups.at(id).size();
  }
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace detail

/// Profile-level test reservation, then a 90/10 train/dev split stratified by scenario.
inline SplitManifest split(const std::vector<SplitItem> &items, const std::set<std::string> &personas,
                           const SplitConfig &cfg = {}) {
  require(!items.empty(), "split: no conversations");
  require(cfg.test_frac > 0 && cfg.test_frac < 1 && cfg.dev_frac >= 0 && cfg.dev_frac < 1,
          "split: fractions must lie in (0, 1)");
  std::set<std::string> seen;
  for (const auto &it : items) {
    if (!personas.count(it.persona_id))
      throw Error(ErrorKind::not_found, "conversation " + it.conv_id + " references unknown persona " + it.persona_id);
    if (!seen.insert(it.conv_id).second) throw Error(ErrorKind::schema, "duplicate conversation id " + it.conv_id);
  }
  const auto groups = detail::by_persona(items);
  if (groups.size() < 2)
    throw Error(ErrorKind::precondition, "split: a single-profile corpus cannot yield disjoint test and train sets");

  std::vector<std::string> ids;
  for (const auto &[id, g] : groups) ids.push_back(id);
  const double n = static_cast<double>(items.size());

  SplitManifest m;
  m.test_frac = cfg.test_frac;
  m.dev_frac = cfg.dev_frac;
  m.rng_seed = cfg.rng_seed;
  m.small_stratum = cfg.small_stratum;
  m.profile_disjoint_dev = cfg.profile_disjoint_dev;
  m.test_profile_ids = detail::greedy_profiles(ids, groups, cfg.test_frac * n, cfg.rng_seed, "test-profiles");
  if (m.test_profile_ids.size() == groups.size())
    throw Error(ErrorKind::precondition, "split: test reservation consumed every profile");

  const std::set<std::string> test(m.test_profile_ids.begin(), m.test_profile_ids.end());
  std::vector<const SplitItem *> rest;
  for (const auto &it : items) {
    if (test.count(it.persona_id))
      m.split_of[it.conv_id] = "test";
    else
      rest.push_back(&it);
  }
  std::sort(rest.begin(), rest.end(), [](auto *a, auto *b) { return a->conv_id < b->conv_id; });

  if (cfg.profile_disjoint_dev) {
    std::vector<std::string> remaining;
    for (const auto &id : ids)
      if (!test.count(id)) remaining.push_back(id);
    m.dev_profile_ids = detail::greedy_profiles(remaining, groups, cfg.dev_frac * static_cast<double>(rest.size()),
                                                cfg.rng_seed, "dev-profiles");
    if (m.dev_profile_ids.size() == remaining.size() && cfg.dev_frac > 0) m.dev_profile_ids.pop_back();
    const std::set<std::string> dev(m.dev_profile_ids.begin(), m.dev_profile_ids.end());
    for (const auto *it : rest) m.split_of[it->conv_id] = dev.count(it->persona_id) ? "dev" : "train";
  } else {
    std::map<std::string, std::vector<const SplitItem *>> strata;
    for (const auto *it : rest) strata[it->scenario_id].push_back(it);
    std::vector<const SplitItem *> small;
    for (auto &[scenario, list] : strata) {
      if (list.size() < cfg.small_stratum) {
        small.insert(small.end(), list.begin(), list.end());
        continue;
      }
      Rng rng(mix_seed(cfg.rng_seed, "stratum:" + scenario));
      rng.shuffle(list);
      const auto n_dev = static_cast<std::size_t>(std::llround(cfg.dev_frac * static_cast<double>(list.size())));
      for (std::size_t i = 0; i < list.size(); ++i) m.split_of[list[i]->conv_id] = i < n_dev ? "dev" : "train";
    }
    std::sort(small.begin(), small.end(), [](auto *a, auto *b) { return a->conv_id < b->conv_id; });
    Rng coin(mix_seed(cfg.rng_seed, "small-strata"));
    for (const auto *it : small) m.split_of[it->conv_id] = coin.bernoulli(cfg.dev_frac) ? "dev" : "train";
  }

  for (const auto &s : kSplits) m.scenario_distribution[s];
  for (const auto &it : items) ++m.scenario_distribution[m.split_of.at(it.conv_id)][it.scenario_id];
  const auto c = m.counts();
  m.achieved_test = static_cast<double>(c.at("test")) / n;
  m.achieved_dev = rest.empty() ? 0.0 : static_cast<double>(c.at("dev")) / static_cast<double>(rest.size());
  return m;
}

/// Total-variation distance between two count histograms, as distributions.
inline double tv_distance(const std::map<std::string, std::size_t> &a, const std::map<std::string, std::size_t> &b) {
  double na = 0, nb = 0;
  for (const auto &[k, v] : a) na += static_cast<double>(v);
  for (const auto &[k, v] : b) nb += static_cast<double>(v);
  if (na == 0 || nb == 0) return na == nb ? 0.0 : 1.0;
  std::set<std::string> keys;
  for (const auto &[k, v] : a) keys.insert(k);
  for (const auto &[k, v] : b) keys.insert(k);
  double d = 0;
  for (const auto &k : keys) {
    const double pa = a.count(k) ? static_cast<double>(a.at(k)) / na : 0.0;
    const double pb = b.count(k) ? static_cast<double>(b.at(k)) / nb : 0.0;
    d += std::abs(pa - pb);
  }
  return d / 2;
}

struct VerifyReport {
  std::vector<std::string> leakage;   // one entry per offending conversation
  std::vector<std::string> partition; // unassigned, unknown or mislabeled conversations
  double test_deviation = 0.0;        // achieved minus target
  double dev_deviation = 0.0;
  double tv_train_dev = 0.0;
  std::map<std::string, std::size_t> counts;

  [[nodiscard]] bool ok() const { return leakage.empty() && partition.empty(); }
};

inline void to_json(json &j, const VerifyReport &r) {
  j = json{{"leakage_violations", r.leakage.size()},
           {"leakage", r.leakage},
           {"partition_violations", r.partition},
           {"test_fraction_deviation", r.test_deviation},
           {"dev_fraction_deviation", r.dev_deviation},
           {"tv_distance_train_dev", r.tv_train_dev},
           {"counts", r.counts},
           {"ok", r.ok()}};
}

/// Recompute every split invariant from the conversations themselves.
inline VerifyReport verify_manifest(const SplitManifest &m, const std::vector<SplitItem> &items) {
  if (m.split_of.empty()) throw Error(ErrorKind::precondition, "verify_manifest: empty manifest");
  VerifyReport r;
  const std::set<std::string> test(m.test_profile_ids.begin(), m.test_profile_ids.end());
  const std::set<std::string> dev_profiles(m.dev_profile_ids.begin(), m.dev_profile_ids.end());
  std::map<std::string, std::map<std::string, std::size_t>> dist;
  std::map<std::string, std::set<std::string>> persona_splits;
  std::set<std::string> ids;
  for (const auto &it : items) {
    ids.insert(it.conv_id);
    auto found = m.split_of.find(it.conv_id);
    if (found == m.split_of.end()) {
      r.partition.push_back(it.conv_id + ": not assigned");
      continue;
    }
    const auto &s = found->second;
    if (s != "train" && s != "dev" && s != "test") {
      r.partition.push_back(it.conv_id + ": unknown split '" + s + "'");
      continue;
    }
    ++r.counts[s];
    ++dist[s][it.scenario_id];
    persona_splits[it.persona_id].insert(s);
    if ((s == "test") != (test.count(it.persona_id) > 0))
      r.leakage.push_back(it.conv_id + ": persona " + it.persona_id + " is " +
                          (test.count(it.persona_id) ? "a test profile" : "not a test profile") + " but conversation is in " + s);
    else if (m.profile_disjoint_dev && s != "test" && (s == "dev") != (dev_profiles.count(it.persona_id) > 0))
      r.leakage.push_back(it.conv_id + ": persona " + it.persona_id + " crosses train and dev");
  }
  for (const auto &[id, s] : m.split_of)
    if (!ids.count(id)) r.partition.push_back(id + ": not in corpus");
  const double n = static_cast<double>(items.size());
  const double test_n = static_cast<double>(r.counts["test"]);
  const double rest = n - test_n;
  r.test_deviation = (n > 0 ? test_n / n : 0.0) - m.test_frac;
  r.dev_deviation = (rest > 0 ? static_cast<double>(r.counts["dev"]) / rest : 0.0) - m.dev_frac;
  r.tv_train_dev = tv_distance(dist["train"], dist["dev"]);
  r.counts.try_emplace("train", 0);
  r.counts.try_emplace("dev", 0);
  return r;
}

struct ExportConfig {
  std::size_t shard_size = 1000;
  std::size_t max_in_flight = 4;
};

struct ExportReport {
  std::map<std::string, std::vector<std::string>> shards; // split -> file names
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> audio_missing;
};

inline void to_json(json &j, const ExportReport &r) {
  j = json{{"shards", r.shards},
           {"counts", r.counts},
           {"audio_missing", r.audio_missing.size()},
           {"audio_missing_ids", r.audio_missing}};
}

inline std::string shard_name(const std::string &split, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return split + "-" + buf + ".jsonl";
}

/// Write <split>-<index>.jsonl shards ordered by conv_id. A conversation whose
/// user turns are not all covered by an ok utterance carries audio_missing.
inline ExportReport export_splits(const fs::path &dir, const SplitManifest &m,
                                  const std::vector<dialogue::Conversation> &convs,
                                  const std::vector<speechgen::SynthUtterance> &utterances,
                                  const ExportConfig &cfg = {}) {
  require(cfg.shard_size > 0, "export: shard_size must be positive");
  std::map<std::string, std::vector<const speechgen::SynthUtterance *>> audio;
  for (const auto &u : utterances) audio[u.conv_id].push_back(&u);
  for (auto &[id, list] : audio)
    std::sort(list.begin(), list.end(), [](auto *a, auto *b) { return a->turn_index < b->turn_index; });

  std::vector<const dialogue::Conversation *> sorted;
  for (const auto &c : convs) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(), [](auto *a, auto *b) { return a->conv_id < b->conv_id; });

  ExportReport r;
  std::map<std::string, std::vector<json>> rows;
  for (const auto *c : sorted) {
    auto s = m.split_of.find(c->conv_id);
    if (s == m.split_of.end()) throw Error(ErrorKind::not_found, "export: conversation " + c->conv_id + " has no split");
    std::set<std::size_t> voiced;
    json clips = json::array();
    if (auto a = audio.find(c->conv_id); a != audio.end())
      for (const auto *u : a->second) {
        clips.push_back(*u);
        if (u->status == "ok") voiced.insert(u->turn_index);
      }
    bool missing = false;
    for (std::size_t i = 0; i < c->messages.size(); ++i)
      if (c->messages[i].role == "user" && !voiced.count(i)) missing = true;
    if (missing) r.audio_missing.push_back(c->conv_id);
    rows[s->second].push_back(json{{"conv_id", c->conv_id},
                                   {"split", s->second},
                                   {"conversation", *c},
                                   {"audio", clips},
                                   {"audio_missing", missing}});
  }

  struct Job {
    fs::path path;
    std::vector<json> rows;
  };
  std::vector<Job> jobs;
  for (const auto &s : kSplits) {
    auto &list = rows[s];
    r.counts[s] = list.size();
    for (std::size_t start = 0, idx = 0; start < list.size(); start += cfg.shard_size, ++idx) {
      const auto end = std::min(list.size(), start + cfg.shard_size);
      const auto name = shard_name(s, idx);
      r.shards[s].push_back(name);
      jobs.push_back({dir / name, std::vector<json>(list.begin() + static_cast<std::ptrdiff_t>(start),
                                                    list.begin() + static_cast<std::ptrdiff_t>(end))});
    }
  }
  fs::create_directories(dir);
  parallel_for(jobs.size(), cfg.max_in_flight, [&](std::size_t i) { io::write_jsonl(jobs[i].path, jobs[i].rows); });
  return r;
}

} // namespace forge::dataset
