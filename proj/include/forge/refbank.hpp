#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/concurrency.hpp"
#include "forge/providers.hpp"
#include "forge/rng.hpp"
#include "forge/textmetrics.hpp"

namespace forge::refbank {

using nlohmann::json;

inline const std::vector<std::string> &default_variants() {
  static const std::vector<std::string> v{"MSA", "English", "Gulf", "Egyptian", "North African", "Levantine", "other"};
  return v;
}

struct SpeakerProfile {
  std::string speaker_id;
  std::string country;
  std::string mother_tongue;
  std::string gender;
  std::optional<int> age;
  std::optional<std::string> education_level;
  std::set<std::string> variants;
};

struct UtteranceRecord {
  std::string utterance_id;
  std::string speaker_id;
  std::string variant;
  double duration = 0.0;
  std::optional<std::string> transcript;
  std::string audio; // payload reference (path or uri)
  std::string source;
  std::optional<double> wer;
  /// Manual override for dialect verification: true/false pins the verdict,
  /// unset defers to the classifier hook when one is configured.
  std::optional<bool> dialect_verified;

  [[nodiscard]] AudioClip clip() const {
    AudioClip c;
    c.uri = audio;
    c.duration = duration;
    c.speaker = speaker_id;
    return c;
  }
};

inline void to_json(json &j, const SpeakerProfile &s) {
  j = json{{"speaker_id", s.speaker_id},
           {"country", s.country},
           {"mother_tongue", s.mother_tongue},
           {"gender", s.gender},
           {"age", s.age ? json(*s.age) : json(nullptr)},
           {"education_level", s.education_level ? json(*s.education_level) : json(nullptr)},
           {"variants", s.variants}};
}

inline void from_json(const json &j, SpeakerProfile &s) {
  s.speaker_id = j.at("speaker_id").get<std::string>();
  s.country = j.value("country", "");
  s.mother_tongue = j.value("mother_tongue", "");
  s.gender = j.value("gender", "");
  s.age.reset();
  if (j.contains("age") && !j["age"].is_null()) s.age = j["age"].get<int>();
  s.education_level.reset();
  if (j.contains("education_level") && !j["education_level"].is_null())
    s.education_level = j["education_level"].get<std::string>();
  s.variants.clear();
  if (j.contains("variants")) s.variants = j["variants"].get<std::set<std::string>>();
}

inline void to_json(json &j, const UtteranceRecord &r) {
  j = json{{"utterance_id", r.utterance_id},
           {"speaker_id", r.speaker_id},
           {"variant", r.variant},
           {"duration", r.duration},
           {"transcript", r.transcript ? json(*r.transcript) : json(nullptr)},
           {"audio", r.audio},
           {"source", r.source},
           {"wer", r.wer ? json(*r.wer) : json(nullptr)}};
  if (r.dialect_verified) j["dialect_verified"] = *r.dialect_verified;
}

inline void from_json(const json &j, UtteranceRecord &r) {
  r.utterance_id = j.at("utterance_id").get<std::string>();
  r.speaker_id = j.at("speaker_id").get<std::string>();
  r.variant = j.at("variant").get<std::string>();
  r.duration = j.at("duration").get<double>();
  r.transcript.reset();
  if (j.contains("transcript") && !j["transcript"].is_null()) r.transcript = j["transcript"].get<std::string>();
  r.audio = j.value("audio", "");
  r.source = j.value("source", "");
  r.wer.reset();
  if (j.contains("wer") && !j["wer"].is_null()) r.wer = j["wer"].get<double>();
  r.dialect_verified.reset();
  if (j.contains("dialect_verified") && !j["dialect_verified"].is_null())
    r.dialect_verified = j["dialect_verified"].get<bool>();
}

/// Declared column mapping for one input source. Keys of `columns` are record
/// fields, values are the source's column names.
struct SourceConfig {
  std::string source;
  std::map<std::string, std::string> columns{{"utterance_id", "utterance_id"}, {"speaker_id", "speaker_id"},
                                             {"variant", "variant"},           {"duration", "duration"},
                                             {"transcript", "transcript"},     {"audio", "audio"}};
  std::optional<std::string> default_variant;
  std::string audio_root; // prefixed to relative audio references
  std::vector<std::string> variants = default_variants();
};

struct RowError {
  std::size_t row = 0;
  std::string reason;
};

struct IngestResult {
  std::vector<UtteranceRecord> records;
  std::vector<RowError> errors;
};

namespace detail {

inline std::optional<std::string> cell(const json &row, const SourceConfig &cfg, const std::string &field) {
  auto it = cfg.columns.find(field);
  const std::string col = it == cfg.columns.end() ? field : it->second;
  if (!row.contains(col) || row[col].is_null()) return std::nullopt;
  const auto &v = row[col];
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (is_blank(s)) return std::nullopt;
  return s;
}

inline std::optional<double> to_number(const std::string &s) {
  try {
    std::size_t used = 0;
    double d = std::stod(s, &used);
    if (s.find_first_not_of(" \t", used) != std::string::npos) return std::nullopt;
    return d;
  } catch (...) {
    return std::nullopt;
  }
}

} // namespace detail

/// Normalize raw source rows into records. Row-level problems are collected,
/// never thrown; later rows reusing an accepted utterance_id are conflicts.
inline IngestResult ingest(const std::vector<json> &rows, const SourceConfig &cfg,
                           const std::set<std::string> &already_seen = {}) {
  IngestResult out;
  std::set<std::string> seen = already_seen;
  const std::set<std::string> variants(cfg.variants.begin(), cfg.variants.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto &row = rows[i];
    auto fail = [&](std::string why) { out.errors.push_back({i, std::move(why)}); };
    if (!row.is_object()) {
      fail("row is not an object");
      continue;
    }
    auto id = detail::cell(row, cfg, "utterance_id");
    auto spk = detail::cell(row, cfg, "speaker_id");
    auto dur = detail::cell(row, cfg, "duration");
    auto variant = detail::cell(row, cfg, "variant");
    if (!variant) variant = cfg.default_variant;
    if (!id) {
      fail("missing utterance_id");
      continue;
    }
    if (!spk) {
      fail("missing speaker_id");
      continue;
    }
    if (!dur) {
      fail("missing duration");
      continue;
    }
    auto seconds = detail::to_number(*dur);
    if (!seconds || !(*seconds > 0.0) || !std::isfinite(*seconds)) {
      fail("duration must be a positive number");
      continue;
    }
    if (!variant || !variants.count(*variant)) {
      fail("variant '" + variant.value_or("") + "' not in configured inventory");
      continue;
    }
    if (seen.count(*id)) {
      fail("conflict: duplicate utterance_id '" + *id + "'");
      continue;
    }
    UtteranceRecord r;
    r.utterance_id = *id;
    r.speaker_id = *spk;
    r.variant = *variant;
    r.duration = *seconds;
    r.transcript = detail::cell(row, cfg, "transcript");
    r.audio = detail::cell(row, cfg, "audio").value_or("");
    if (!r.audio.empty() && !cfg.audio_root.empty() && r.audio.front() != '/' &&
        r.audio.find("://") == std::string::npos)
      r.audio = cfg.audio_root + "/" + r.audio;
    r.source = cfg.source;
    seen.insert(r.utterance_id);
    out.records.push_back(std::move(r));
  }
  return out;
}

struct SpeakerIngest {
  std::vector<SpeakerProfile> speakers;
  std::vector<RowError> errors;
};

inline SpeakerIngest ingest_speakers(const std::vector<json> &rows) {
  SpeakerIngest out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      SpeakerProfile s = rows[i].get<SpeakerProfile>();
      if (s.speaker_id.empty()) throw Error(ErrorKind::schema, "empty speaker_id");
      if (s.age && *s.age <= 0) throw Error(ErrorKind::schema, "age must be positive");
      if (!seen.insert(s.speaker_id).second) throw Error(ErrorKind::schema, "duplicate speaker_id '" + s.speaker_id + "'");
      out.speakers.push_back(std::move(s));
    } catch (const std::exception &e) {
      out.errors.push_back({i, e.what()});
    }
  }
  return out;
}

struct Exclusion {
  std::string utterance_id;
  std::string reason; // no-reference | unverified | wer-above-threshold | dialect-rejected
  std::optional<double> wer;
};

struct FilterResult {
  std::vector<UtteranceRecord> retained;
  std::vector<Exclusion> excluded;
};

/// Language hint passed to the transcriber for a bank variant.
inline std::string language_hint(const std::string &variant) { return variant == "English" ? "English" : variant; }

/// Keep records whose transcription WER against the reference transcript is
/// at most max_wer (inclusive). Transcription failures exclude the record.
inline FilterResult filter_by_wer(std::vector<UtteranceRecord> records, Transcriber &transcriber,
                                  double max_wer = 0.05, std::size_t max_in_flight = 4) {
  struct Outcome {
    std::optional<double> wer;
    std::string reason;
  };
  std::vector<Outcome> outcomes(records.size());
  parallel_for(records.size(), max_in_flight, [&](std::size_t i) {
    const auto &r = records[i];
    if (!r.transcript || text::tokenize(*r.transcript, text::TokenizeMode::wer_normalized).empty()) {
      outcomes[i].reason = "no-reference";
      return;
    }
    try {
      const auto hyp = transcriber.transcribe(r.clip(), language_hint(r.variant));
      outcomes[i].wer = text::wer(*r.transcript, hyp);
    } catch (const std::exception &) {
      outcomes[i].reason = "unverified";
    }
  });
  FilterResult out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto &r = records[i];
    const auto &o = outcomes[i];
    if (!o.wer) {
      out.excluded.push_back({r.utterance_id, o.reason, std::nullopt});
      continue;
    }
    r.wer = o.wer;
    if (*o.wer <= max_wer + 1e-12)
      out.retained.push_back(std::move(r));
    else
      out.excluded.push_back({r.utterance_id, "wer-above-threshold", o.wer});
  }
  return out;
}

/// Optional dialect verification hook. Manual overrides on the record win.
using DialectClassifier = std::function<bool(const UtteranceRecord &)>;

inline FilterResult verify_dialect(std::vector<UtteranceRecord> records, const DialectClassifier &classifier) {
  FilterResult out;
  for (auto &r : records) {
    const bool ok = r.dialect_verified ? *r.dialect_verified : (!classifier || classifier(r));
    if (ok)
      out.retained.push_back(std::move(r));
    else
      out.excluded.push_back({r.utterance_id, "dialect-rejected", r.wer});
  }
  return out;
}

struct SegmentSelection {
  std::vector<UtteranceRecord> selected;
  bool shortfall = false;
  std::size_t qualifying = 0;
};

/// Uniformly sample n in-range segments (inclusive bounds) of a single
/// speaker without replacement. Candidates are ordered by id first, so the
/// result depends only on the record set and the seed.
inline SegmentSelection select_segments(const std::vector<UtteranceRecord> &records, std::size_t n = 10,
                                        double min_duration = 5.0, double max_duration = 8.0,
                                        std::uint64_t rng_seed = 0) {
  SegmentSelection out;
  if (records.empty()) {
    out.shortfall = n > 0;
    return out;
  }
  for (const auto &r : records)
    require(r.speaker_id == records.front().speaker_id, "select_segments: records span several speakers");
  std::vector<UtteranceRecord> pool;
  for (const auto &r : records)
    if (r.duration >= min_duration && r.duration <= max_duration) pool.push_back(r);
  std::sort(pool.begin(), pool.end(),
            [](const auto &a, const auto &b) { return a.utterance_id < b.utterance_id; });
  out.qualifying = pool.size();
  if (pool.size() <= n) {
    out.shortfall = pool.size() < n;
    out.selected = std::move(pool);
    return out;
  }
  Rng rng(rng_seed);
  for (auto i : rng.sample_indices(pool.size(), n)) out.selected.push_back(pool[i]);
  return out;
}

struct VariantStats {
  std::size_t speakers = 0;
  std::size_t utterances = 0;
  double utterances_per_speaker = 0.0;
  double mean_duration = 0.0;
  double total_seconds = 0.0;
};

struct MotherTongueStats {
  std::size_t speakers = 0;
  std::size_t utterances = 0;
};

struct BankStatistics {
  std::map<std::string, VariantStats> per_variant;
  std::map<std::string, MotherTongueStats> per_mother_tongue;
  std::map<std::string, std::size_t> age_groups;
  std::size_t unique_speakers = 0;
  std::size_t variant_speaker_entries = 0; // sum of per-variant speaker counts
  std::size_t utterances = 0;
  double total_hours = 0.0;
};

inline const std::vector<std::string> &age_group_labels() {
  static const std::vector<std::string> v{"<20", "20-29", "30-39", "40-49", "50-59", "60+", "unknown"};
  return v;
}

inline std::string age_group(std::optional<int> age) {
  if (!age) return "unknown";
  if (*age < 20) return "<20";
  if (*age >= 60) return "60+";
  const int lo = (*age / 10) * 10;
  return std::to_string(lo) + "-" + std::to_string(lo + 9);
}

/// Deterministic, order-independent aggregation of the bank. Speakers are
/// counted when they have at least one utterance; the age histogram covers
/// every listed speaker profile.
inline BankStatistics bank_statistics(const std::vector<UtteranceRecord> &records,
                                      const std::vector<SpeakerProfile> &speakers) {
  BankStatistics st;
  for (const auto &label : age_group_labels()) st.age_groups[label] = 0;
  std::map<std::string, std::set<std::string>> variant_speakers;
  std::map<std::string, const SpeakerProfile *> by_id;
  for (const auto &s : speakers) by_id[s.speaker_id] = &s;
  std::map<std::string, std::set<std::string>> tongue_speakers;
  std::set<std::string> all_speakers;
  double total_seconds = 0.0;
  for (const auto &r : records) {
    auto &vs = st.per_variant[r.variant];
    ++vs.utterances;
    vs.total_seconds += r.duration;
    variant_speakers[r.variant].insert(r.speaker_id);
    all_speakers.insert(r.speaker_id);
    total_seconds += r.duration;
    auto it = by_id.find(r.speaker_id);
    const std::string tongue = it == by_id.end() || it->second->mother_tongue.empty() ? "unknown" : it->second->mother_tongue;
    ++st.per_mother_tongue[tongue].utterances;
    tongue_speakers[tongue].insert(r.speaker_id);
  }
  for (auto &[variant, vs] : st.per_variant) {
    vs.speakers = variant_speakers[variant].size();
    vs.utterances_per_speaker = vs.speakers ? static_cast<double>(vs.utterances) / vs.speakers : 0.0;
    vs.mean_duration = vs.utterances ? vs.total_seconds / vs.utterances : 0.0;
    st.variant_speaker_entries += vs.speakers;
  }
  for (auto &[tongue, ms] : st.per_mother_tongue) ms.speakers = tongue_speakers[tongue].size();
  for (const auto &s : speakers) ++st.age_groups[age_group(s.age)];
  st.unique_speakers = all_speakers.size();
  st.utterances = records.size();
  st.total_hours = total_seconds / 3600.0;
  return st;
}

inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

inline json to_json(const BankStatistics &st) {
  json j;
  j["rounding"] = "averages and durations rounded to one decimal";
  j["unique_speakers"] = st.unique_speakers;
  j["variant_speaker_entries"] = st.variant_speaker_entries;
  j["utterances"] = st.utterances;
  j["total_hours"] = round1(st.total_hours);
  json pv = json::object();
  for (const auto &[k, v] : st.per_variant)
    pv[k] = {{"speakers", v.speakers},
             {"utterances", v.utterances},
             {"utterances_per_speaker", round1(v.utterances_per_speaker)},
             {"mean_duration_s", round1(v.mean_duration)}};
  j["per_variant"] = pv;
  json pm = json::object();
  for (const auto &[k, v] : st.per_mother_tongue) pm[k] = {{"speakers", v.speakers}, {"utterances", v.utterances}};
  j["per_mother_tongue"] = pm;
  json ag = json::object();
  for (const auto &[k, v] : st.age_groups) ag[k] = v;
  j["age_groups"] = ag;
  return j;
}

inline std::string format_table(const BankStatistics &st) {
  std::string out = "# averages and durations rounded to one decimal\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %6s %8s %9s %10s\n", "Lang/Dial", "#Spk", "#Utt", "Utt/Spk", "Dur/Utt(s)");
  out += line;
  for (const auto &[k, v] : st.per_variant) {
    std::snprintf(line, sizeof line, "%-16s %6zu %8zu %9.1f %10.1f\n", k.c_str(), v.speakers, v.utterances,
                  v.utterances_per_speaker, v.mean_duration);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-16s %6zu %8zu %9s %10s\n", "Total", st.variant_speaker_entries, st.utterances,
                "-", "-");
  out += line;
  std::snprintf(line, sizeof line, "unique speakers: %zu  total hours: %.1f\n\n", st.unique_speakers, st.total_hours);
  out += line;
  std::snprintf(line, sizeof line, "%-24s %6s %8s\n", "Mother tongue", "#Spk", "#Utt");
  out += line;
  for (const auto &[k, v] : st.per_mother_tongue) {
    std::snprintf(line, sizeof line, "%-24s %6zu %8zu\n", k.c_str(), v.speakers, v.utterances);
    out += line;
  }
  out += "\n";
  std::snprintf(line, sizeof line, "%-10s %6s\n", "Age group", "#Spk");
  out += line;
  for (const auto &label : age_group_labels()) {
    std::snprintf(line, sizeof line, "%-10s %6zu\n", label.c_str(), st.age_groups.at(label));
    out += line;
  }
  return out;
}

} // namespace forge::refbank
