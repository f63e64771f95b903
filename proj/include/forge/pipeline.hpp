#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/csv.hpp"
#include "forge/dataset.hpp"
#include "forge/desk_chat.hpp"
#include "forge/dialogue.hpp"
#include "forge/http_providers.hpp"
#include "forge/judge.hpp"
#include "forge/jsonl.hpp"
#include "forge/matcher.hpp"
#include "forge/mock_providers.hpp"
#include "forge/persona.hpp"
#include "forge/pqi.hpp"
#include "forge/refbank.hpp"
#include "forge/scenario.hpp"
#include "forge/speechgen.hpp"
#include "forge/workspace.hpp"

#ifndef FORGE_DATA_DIR
#define FORGE_DATA_DIR "data"
#endif

namespace forge::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline const std::vector<std::string> &stage_names() {
  static const std::vector<std::string> v{"refbank",   "personas", "pqi",   "scenarios", "match",
                                          "dialogues", "speech",   "split", "evaluate",  "report"};
  return v;
}

inline json default_config() {
  const std::string data = FORGE_DATA_DIR;
  return json::parse(R"({
    "seed": 1,
    "language": "MSA",
    "max_in_flight": 4,
    "parse_mode": "strict",
    "data": {},
    "providers": {"kind": "mock"},
    "refbank": {"sources": [], "speakers": "", "max_wer": 0.05, "segments_per_speaker": 10,
                "min_duration": 5.0, "max_duration": 8.0},
    "personas": {"target_count": 30, "reject_threshold": 0.80, "attempt_budget": 0, "batch_size": 32,
                 "summary_retries": 3, "min_age": 18, "max_age": 40},
    "pqi": {},
    "scenarios": {"paths": [], "max_paths": 0, "num_topics": 10, "num_scenarios": 10, "scenario_batches": 1,
                  "retries": 3, "dedup_threshold": 0.85},
    "match": {"w": 0.5, "tau": 0.05, "keep_all": false, "pairs_per_persona": 2},
    "dialogues": {"max_messages": 8, "retries": 3, "reject_on_violation": true},
    "speech": {"qa_per_speaker": 100, "donor_speakers": []},
    "split": {"test_frac": 0.123, "dev_frac": 0.10, "small_stratum": 10, "profile_disjoint_dev": false,
              "shard_size": 1000},
    "evaluate": {"split": "test", "initiator": "assistant", "modalities": ["audio", "stt", "text"],
                 "model_name": "mock-voice-assistant", "gold_history": false, "max_sessions": 0,
                 "judge_retries": 3,
                 "required_rubrics": ["relevance", "completeness", "specificity_actionability", "coherence",
                                      "context_tracking", "calibration", "language_tone_match",
                                      "safety_appropriateness"]},
    "report": {}
  })")
      .patch(json::array({{{"op", "replace"}, {"path", "/data"},
                           {"value", {{"inventories", data + "/inventories.json"},
                                      {"wvs", data + "/wvs.json"},
                                      {"taxonomy", data + "/taxonomy.json"},
                                      {"pqi_lexicons", data + "/pqi_lexicons.json"},
                                      {"dialect_blocklist", data + "/dialect_blocklist.json"}}}}}));
}

namespace detail {

inline void resolve_path(json &node, const fs::path &base) {
  if (!node.is_string()) return;
  const auto s = node.get<std::string>();
  if (s.empty()) return;
  const fs::path p(s);
  if (p.is_relative()) node = (base / p).lexically_normal().string();
}

inline void resolve_paths(json &cfg, const fs::path &base) {
  for (auto &[k, v] : cfg["data"].items()) resolve_path(v, base);
  auto &rb = cfg["refbank"];
  resolve_path(rb["speakers"], base);
  for (auto &src : rb["sources"]) {
    if (src.contains("path")) resolve_path(src["path"], base);
    if (src.contains("audio_root")) resolve_path(src["audio_root"], base);
  }
  for (auto &[role, p] : cfg["providers"].items())
    if (p.is_object() && p.contains("script")) resolve_path(p["script"], base);
}

} // namespace detail

/// defaults < config file < --set overrides < --seed. Relative paths resolve
/// against the config file's directory (the working directory without one).
inline json load_config(const std::optional<fs::path> &file, const std::vector<std::string> &overrides = {},
                        std::optional<std::uint64_t> seed = std::nullopt) {
  json cfg = default_config();
  fs::path base = fs::current_path();
  if (file) {
    if (!fs::exists(*file)) throw Error(ErrorKind::config, "config file not found: " + file->string());
    json user;
    try {
      user = io::read_json(*file);
    } catch (const std::exception &e) {
      throw Error(ErrorKind::config, std::string("config: ") + e.what());
    }
    if (!user.is_object()) throw Error(ErrorKind::config, "config: top level must be an object");
    cfg.merge_patch(user);
    base = fs::absolute(*file).parent_path();
  }
  for (const auto &o : overrides) ws::apply_override(cfg, o);
  if (seed) cfg["seed"] = *seed;
  detail::resolve_paths(cfg, base);
  return cfg;
}

// ---------------------------------------------------------------- providers

class Providers {
public:
  explicit Providers(json cfg) : cfg_(std::move(cfg)) {}

  [[nodiscard]] json role(const std::string &name) const {
    json r = cfg_.contains(name) && cfg_[name].is_object() ? cfg_[name] : json::object();
    if (!r.contains("type")) r["type"] = cfg_.value("kind", "mock");
    return r;
  }

  std::shared_ptr<ChatProvider> chat(const std::string &name) {
    const auto r = role(name);
    const auto type = r["type"].get<std::string>();
    if (type == "mock") return std::make_shared<mock::DeskChat>(r.value("user_start_percent", 55));
    if (type == "scripted") {
      const auto path = r.value("script", "");
      if (path.empty()) throw Error(ErrorKind::config, "providers." + name + ": scripted chat needs a script");
      return std::make_shared<mock::ScriptedChat>(mock::ScriptedChat::from_file(path));
    }
    if (type == "openai")
      return std::make_shared<RetryingChat>(
          std::make_shared<http::OpenAiChat>(http::Endpoint::from_json(r, "/v1/chat/completions")));
    throw Error(ErrorKind::config, "providers." + name + ": unknown type '" + type + "'");
  }

  std::shared_ptr<Embedder> embedder() {
    const auto r = role("embedder");
    const auto type = r["type"].get<std::string>();
    if (type == "mock") return std::make_shared<mock::HashEmbedder>(r.value("dim", std::size_t{384}));
    if (type == "openai")
      return std::make_shared<RetryingEmbedder>(
          std::make_shared<http::OpenAiEmbedder>(http::Endpoint::from_json(r, "/v1/embeddings")));
    throw Error(ErrorKind::config, "providers.embedder: unknown type '" + type + "'");
  }

  std::shared_ptr<Transcriber> transcriber() {
    const auto r = role("transcriber");
    const auto type = r["type"].get<std::string>();
    if (type == "mock") return std::make_shared<mock::MockTranscriber>(r.value("substitute_every", std::size_t{0}));
    if (type == "http") return std::make_shared<http::HttpTranscriber>(http::Endpoint::from_json(r, "/transcribe"));
    throw Error(ErrorKind::config, "providers.transcriber: unknown type '" + type + "'");
  }

  std::shared_ptr<Synthesizer> synthesizer() {
    const auto r = role("synthesizer");
    const auto type = r["type"].get<std::string>();
    if (type == "mock") return std::make_shared<mock::MockSynthesizer>(r.value("seconds_per_char", 0.06));
    if (type == "http") return std::make_shared<http::HttpSynthesizer>(http::Endpoint::from_json(r, "/synthesize"));
    throw Error(ErrorKind::config, "providers.synthesizer: unknown type '" + type + "'");
  }

  std::shared_ptr<SpeakerEmbedder> speaker_embedder() {
    const auto r = role("speaker_embedder");
    const auto type = r["type"].get<std::string>();
    if (type == "mock") return std::make_shared<mock::MockSpeakerEmbedder>(r.value("dim", std::size_t{192}));
    if (type == "http")
      return std::make_shared<http::HttpSpeakerEmbedder>(http::Endpoint::from_json(r, "/speaker-embedding"));
    throw Error(ErrorKind::config, "providers.speaker_embedder: unknown type '" + type + "'");
  }

  std::shared_ptr<QualityPredictor> quality() {
    const auto r = role("quality");
    const auto type = r["type"].get<std::string>();
    if (type == "mock") return std::make_shared<mock::ConstantQuality>(r.value("score", 3.6));
    if (type == "http") return std::make_shared<http::HttpQuality>(http::Endpoint::from_json(r, "/quality"));
    throw Error(ErrorKind::config, "providers.quality: unknown type '" + type + "'");
  }

private:
  json cfg_;
};

// ---------------------------------------------------------------- stages

struct Context {
  fs::path workspace;
  json config;
  bool force = false;
  std::function<void(const std::string &)> log = [](const std::string &) {};
};

struct StageRun {
  const Context &ctx;
  std::string name;
  fs::path dir;
  std::uint64_t seed = 0;
  json stats = json::object();

  [[nodiscard]] const json &cfg() const { return ctx.config; }
  [[nodiscard]] const json &section() const { return ctx.config.at(name); }
  [[nodiscard]] fs::path upstream(const std::string &stage, const std::string &file) const {
    return ctx.workspace / stage / file;
  }
  [[nodiscard]] std::size_t max_in_flight() const { return cfg().value("max_in_flight", std::size_t{4}); }
  [[nodiscard]] ParseMode mode() const {
    return cfg().value("parse_mode", "strict") == "lenient" ? ParseMode::lenient : ParseMode::strict;
  }
  [[nodiscard]] std::string language() const { return cfg().value("language", "MSA"); }
  Providers providers() const { return Providers(cfg().at("providers")); }
};

namespace detail {

template <typename T> std::vector<json> rows_of(const std::vector<T> &v) {
  std::vector<json> out;
  out.reserve(v.size());
  for (const auto &x : v) out.emplace_back(x);
  return out;
}

template <typename T> std::vector<T> load_rows(const fs::path &p) {
  std::vector<T> out;
  for (const auto &j : io::read_jsonl(p)) out.push_back(j.get<T>());
  return out;
}

inline std::string data_path(const json &cfg, const std::string &key) {
  const auto &d = cfg.at("data");
  if (!d.contains(key) || !d[key].is_string() || d[key].get<std::string>().empty())
    throw Error(ErrorKind::config, "data." + key + " is not set");
  return d[key].get<std::string>();
}

inline json exclusion_json(const refbank::Exclusion &e) {
  json j{{"utterance_id", e.utterance_id}, {"reason", e.reason}};
  j["wer"] = e.wer ? json(*e.wer) : json(nullptr);
  return j;
}

inline std::vector<json> load_source(const fs::path &p) {
  if (p.extension() == ".csv") return io::parse_csv(io::read_file(p));
  return io::read_jsonl(p);
}

} // namespace detail

inline void run_refbank(StageRun &r) {
  const auto &c = r.section();
  const json sources = c.at("sources");
  if (!sources.is_array() || sources.empty()) throw Error(ErrorKind::config, "refbank.sources is empty");
  const auto speakers_path = c.value("speakers", "");
  if (speakers_path.empty()) throw Error(ErrorKind::config, "refbank.speakers is not set");

  std::vector<refbank::UtteranceRecord> records;
  std::vector<json> ingest_errors;
  std::set<std::string> seen;
  for (const auto &src : sources) {
    const fs::path path = src.at("path").get<std::string>();
    refbank::SourceConfig sc;
    sc.source = src.value("source", path.stem().string());
    const json columns = src.value("columns", json::object());
    for (const auto &[field, col] : columns.items()) sc.columns[field] = col.get<std::string>();
    if (src.contains("default_variant")) sc.default_variant = src["default_variant"].get<std::string>();
    sc.audio_root = src.value("audio_root", "");
    if (src.contains("variants")) sc.variants = src["variants"].get<std::vector<std::string>>();
    auto res = refbank::ingest(detail::load_source(path), sc, seen);
    for (auto &rec : res.records) {
      seen.insert(rec.utterance_id);
      records.push_back(std::move(rec));
    }
    for (const auto &e : res.errors)
      ingest_errors.push_back({{"source", sc.source}, {"row", e.row}, {"reason", e.reason}});
  }
  auto spk = refbank::ingest_speakers(io::read_jsonl(speakers_path));
  for (const auto &e : spk.errors)
    ingest_errors.push_back({{"source", "speakers"}, {"row", e.row}, {"reason", e.reason}});
  std::set<std::string> known;
  for (const auto &s : spk.speakers) known.insert(s.speaker_id);

  std::vector<json> exclusions;
  std::vector<refbank::UtteranceRecord> candidates;
  for (auto &rec : records) {
    if (known.count(rec.speaker_id))
      candidates.push_back(std::move(rec));
    else
      exclusions.push_back({{"utterance_id", rec.utterance_id}, {"reason", "unknown-speaker"}, {"wer", nullptr}});
  }

  auto transcriber = r.providers().transcriber();
  auto by_wer = refbank::filter_by_wer(std::move(candidates), *transcriber, c.value("max_wer", 0.05),
                                       r.max_in_flight());
  auto by_dialect = refbank::verify_dialect(std::move(by_wer.retained), nullptr);
  for (const auto &e : by_wer.excluded) exclusions.push_back(detail::exclusion_json(e));
  for (const auto &e : by_dialect.excluded) exclusions.push_back(detail::exclusion_json(e));
  auto &bank = by_dialect.retained;
  std::sort(bank.begin(), bank.end(), [](const auto &a, const auto &b) { return a.utterance_id < b.utterance_id; });

  std::map<std::string, std::vector<refbank::UtteranceRecord>> per_speaker;
  for (const auto &rec : bank) per_speaker[rec.speaker_id].push_back(rec);
  std::vector<refbank::UtteranceRecord> segments;
  json shortfall = json::object();
  const auto n = c.value("segments_per_speaker", std::size_t{10});
  for (const auto &[id, list] : per_speaker) {
    auto sel = refbank::select_segments(list, n, c.value("min_duration", 5.0), c.value("max_duration", 8.0),
                                        mix_seed(r.seed, id));
    if (sel.shortfall) shortfall[id] = sel.qualifying;
    for (auto &s : sel.selected) segments.push_back(std::move(s));
  }

  io::write_jsonl(r.dir / "bank.jsonl", detail::rows_of(bank));
  io::write_jsonl(r.dir / "segments.jsonl", detail::rows_of(segments));
  io::write_jsonl(r.dir / "speakers.jsonl", detail::rows_of(spk.speakers));
  io::write_jsonl(r.dir / "exclusions.jsonl", exclusions);
  io::write_jsonl(r.dir / "ingest_errors.jsonl", ingest_errors);
  const auto st = refbank::bank_statistics(bank, spk.speakers);
  io::write_json(r.dir / "stats.json", json{{"bank", refbank::to_json(st)},
                                            {"segments", refbank::to_json(refbank::bank_statistics(segments, spk.speakers))},
                                            {"segment_shortfall", shortfall}});
  io::write_file(r.dir / "stats.txt", refbank::format_table(st));
  r.stats = {{"ingested", records.size()}, {"ingest_errors", ingest_errors.size()}, {"retained", bank.size()},
             {"excluded", exclusions.size()}, {"segments", segments.size()}, {"speakers", spk.speakers.size()}};
}

inline void run_personas(StageRun &r) {
  const auto &c = r.section();
  const auto inv = io::read_json(detail::data_path(r.cfg(), "inventories")).get<persona::Inventories>();
  const auto wvs = io::read_json(detail::data_path(r.cfg(), "wvs")).get<persona::WvsTable>();
  const auto speakers = detail::load_rows<refbank::SpeakerProfile>(r.upstream("refbank", "speakers.jsonl"));
  const auto segments = detail::load_rows<refbank::UtteranceRecord>(r.upstream("refbank", "segments.jsonl"));
  const auto variant = speechgen::variant_for_language(r.language());
  std::set<std::string> voiced;
  for (const auto &s : segments)
    if (s.variant == variant) voiced.insert(s.speaker_id);

  persona::SamplingConfig sc;
  sc.min_age = c.value("min_age", 18);
  sc.max_age = c.value("max_age", 40);
  std::vector<persona::PersonaProfile> seeds;
  std::vector<json> failures;
  for (const auto &s : speakers) {
    if (!voiced.count(s.speaker_id)) continue;
    Rng rng(mix_seed(r.seed, "seed:" + s.speaker_id));
    try {
      seeds.push_back(persona::ground_wvs(persona::sample_persona(s, inv, rng, sc), wvs));
    } catch (const Error &e) {
      failures.push_back({{"speaker_id", s.speaker_id}, {"stage", "seed"}, {"error", e.what()}});
    }
  }
  if (seeds.empty()) throw Error(ErrorKind::precondition, "personas: no seed speaker has a reference segment");

  auto embedder = r.providers().embedder();
  persona::ExpansionConfig ec;
  ec.target_count = c.value("target_count", std::size_t{30});
  ec.reject_threshold = c.value("reject_threshold", 0.80);
  ec.attempt_budget = c.value("attempt_budget", std::size_t{0});
  ec.batch_size = c.value("batch_size", std::size_t{32});
  ec.max_in_flight = r.max_in_flight();
  const persona::CandidateFactory factory = [&](const persona::PersonaProfile &anchor, Rng &rng) {
    return persona::ground_wvs(persona::derive_candidate(anchor, inv, rng, sc), wvs);
  };
  const auto ex = persona::expand_seeds(seeds, *embedder, factory, mix_seed(r.seed, "expansion"), ec);
  if (ex.budget_exhausted) r.ctx.log("personas: " + ex.diagnostic);

  auto chat = r.providers().chat("chat");
  std::vector<persona::SummaryResult> results(ex.accepted.size());
  const auto retries = c.value("summary_retries", std::size_t{3});
  parallel_for(results.size(), r.max_in_flight(),
               [&](std::size_t i) { results[i] = persona::summarize(ex.accepted[i], *chat, retries, r.mode()); });
  std::vector<json> summaries;
  for (const auto &res : results) {
    if (res.failed)
      failures.push_back({{"persona_id", res.summary.persona_id}, {"stage", "summary"}, {"error", res.failure},
                          {"attempts", res.attempts}, {"last_raw", res.last_raw}});
    else
      summaries.emplace_back(res.summary);
  }

  io::write_jsonl(r.dir / "personas.jsonl", detail::rows_of(ex.accepted));
  io::write_jsonl(r.dir / "summaries.jsonl", summaries);
  io::write_jsonl(r.dir / "failures.jsonl", failures);
  io::write_json(r.dir / "expansion.json",
                 json{{"seeds", seeds.size()}, {"accepted", ex.accepted.size()}, {"attempts", ex.attempts},
                      {"rejected", ex.rejected}, {"budget_exhausted", ex.budget_exhausted},
                      {"diagnostic", ex.diagnostic}, {"target_count", ec.target_count}});
  r.stats = {{"personas", ex.accepted.size()}, {"summaries", summaries.size()}, {"failures", failures.size()}};
}

inline void run_pqi(StageRun &r) {
  const auto inv = io::read_json(detail::data_path(r.cfg(), "inventories")).get<persona::Inventories>();
  const auto lex = io::read_json(detail::data_path(r.cfg(), "pqi_lexicons")).get<pqi::Lexicons>();
  const pqi::Scorer scorer(lex, inv);
  std::map<std::string, persona::PersonaProfile> personas;
  for (auto &p : detail::load_rows<persona::PersonaProfile>(r.upstream("personas", "personas.jsonl")))
    personas.emplace(p.persona_id, std::move(p));
  std::vector<pqi::PqiReport> reports;
  for (const auto &s : detail::load_rows<persona::PersonaSummary>(r.upstream("personas", "summaries.jsonl"))) {
    const auto it = personas.find(s.persona_id);
    if (it == personas.end())
      throw Error(ErrorKind::schema, "pqi: summary for unknown persona " + s.persona_id);
    reports.push_back(scorer.score(s.text, it->second));
  }
  io::write_jsonl(r.dir / "pqi.jsonl", detail::rows_of(reports));
  const auto corpus = pqi::corpus_report(reports);
  io::write_json(r.dir / "corpus.json", json(corpus));
  r.stats = {{"scored", reports.size()}, {"mean", corpus.mean}, {"fraction_compliant", corpus.fraction_compliant}};
}

inline std::vector<scenario::DomainPath> selected_paths(const json &c, const scenario::Taxonomy &tax) {
  std::vector<scenario::DomainPath> out;
  const json paths = c.value("paths", json::array());
  for (const auto &p : paths) {
    auto found = tax.find(p.get<std::string>());
    if (!found) throw Error(ErrorKind::config, "scenarios: unknown taxonomy path '" + p.get<std::string>() + "'");
    out.push_back(*found);
  }
  if (out.empty()) {
    out = tax.leaves();
    const auto cap = c.value("max_paths", std::size_t{0});
    if (cap > 0 && out.size() > cap) out.resize(cap);
  }
  return out;
}

inline void run_scenarios(StageRun &r) {
  const auto &c = r.section();
  const auto tax = scenario::Taxonomy::load(detail::data_path(r.cfg(), "taxonomy"));
  const auto paths = selected_paths(c, tax);
  scenario::ExpansionConfig ec;
  ec.num_topics = c.value("num_topics", std::size_t{10});
  ec.num_scenarios = c.value("num_scenarios", std::size_t{10});
  ec.scenario_batches = c.value("scenario_batches", std::size_t{1});
  ec.retries = c.value("retries", std::size_t{3});
  ec.dedup_threshold = c.value("dedup_threshold", 0.85);
  ec.max_in_flight = r.max_in_flight();
  ec.mode = r.mode();
  auto p = r.providers();
  auto chat = p.chat("chat");
  auto embedder = p.embedder();
  const auto ex = scenario::expand(paths, *chat, *embedder, ec);
  const auto dangling = scenario::dangling_references(ex.topics, ex.scenarios, tax);
  if (!dangling.empty()) throw Error(ErrorKind::schema, "scenarios: dangling reference " + dangling.front());
  io::write_jsonl(r.dir / "topics.jsonl", detail::rows_of(ex.topics));
  io::write_jsonl(r.dir / "scenarios.jsonl", detail::rows_of(ex.scenarios));
  io::write_jsonl(r.dir / "failed.jsonl", detail::rows_of(ex.failed));
  json path_list = json::array();
  for (const auto &d : paths) path_list.push_back(d.path_string());
  io::write_json(r.dir / "expansion.json",
                 json{{"paths", path_list}, {"topics", ex.topics.size()}, {"scenarios", ex.scenarios.size()},
                      {"failed_cells", ex.failed.size()}, {"topics_dropped", ex.topics_dropped},
                      {"scenarios_dropped", ex.scenarios_dropped}, {"scenarios_generated", ex.scenarios_generated}});
  r.stats = {{"paths", paths.size()}, {"topics", ex.topics.size()}, {"scenarios", ex.scenarios.size()},
             {"failed_cells", ex.failed.size()}};
}

inline void run_match(StageRun &r) {
  const auto &c = r.section();
  const auto summaries = detail::load_rows<persona::PersonaSummary>(r.upstream("personas", "summaries.jsonl"));
  const auto scenarios = detail::load_rows<scenario::Scenario>(r.upstream("scenarios", "scenarios.jsonl"));
  matcher::MatchConfig mc;
  mc.w = c.value("w", 0.5);
  mc.tau = c.value("tau", 0.05);
  mc.keep_all = c.value("keep_all", false);
  mc.max_in_flight = r.max_in_flight();
  auto embedder = r.providers().embedder();
  std::vector<matcher::MatchRecord> records;
  std::vector<json> rows;
  const auto summary = matcher::match_stream(summaries, scenarios, *embedder, mc, [&](const matcher::MatchRecord &m) {
    records.push_back(m);
    if (m.kept || mc.keep_all || m.error) rows.emplace_back(m);
  });
  const auto pairs = c.value("pairs_per_persona", std::size_t{2});
  const auto assignments = matcher::select_pairs_for_generation(records, pairs, r.seed);
  io::write_jsonl(r.dir / "matches.jsonl", rows);
  io::write_jsonl(r.dir / "assignments.jsonl", detail::rows_of(assignments));
  io::write_json(r.dir / "summary.json",
                 json{{"personas", summaries.size()}, {"scenarios", scenarios.size()}, {"scored", summary.scored},
                      {"kept", summary.kept}, {"errors", summary.errors}, {"tau", mc.tau}, {"w", mc.w},
                      {"pairs_per_persona", pairs}, {"assignments", assignments.size()}});
  r.stats = {{"scored", summary.scored}, {"kept", summary.kept}, {"assignments", assignments.size()}};
}

inline void run_dialogues(StageRun &r) {
  const auto &c = r.section();
  const auto assignments = detail::load_rows<matcher::Assignment>(r.upstream("match", "assignments.jsonl"));
  std::map<std::string, persona::PersonaProfile> personas;
  for (auto &p : detail::load_rows<persona::PersonaProfile>(r.upstream("personas", "personas.jsonl")))
    personas.emplace(p.persona_id, std::move(p));
  std::map<std::string, std::string> summaries;
  for (auto &s : detail::load_rows<persona::PersonaSummary>(r.upstream("personas", "summaries.jsonl")))
    summaries.emplace(s.persona_id, s.text);
  std::map<std::string, scenario::Scenario> scenarios;
  for (auto &s : detail::load_rows<scenario::Scenario>(r.upstream("scenarios", "scenarios.jsonl")))
    scenarios.emplace(s.scenario_id, std::move(s));
  const auto rules = dialogue::LanguageRules::from_json(io::read_json(detail::data_path(r.cfg(), "dialect_blocklist")));

  dialogue::Policy policy;
  policy.max_messages = c.value("max_messages", std::size_t{8});
  policy.retries = c.value("retries", std::size_t{3});
  policy.reject_on_violation = c.value("reject_on_violation", true);
  policy.mode = r.mode();
  auto chat = r.providers().chat("chat");
  std::vector<dialogue::Outcome> outcomes(assignments.size());
  parallel_for(assignments.size(), r.max_in_flight(), [&](std::size_t i) {
    const auto &a = assignments[i];
    const auto p = personas.find(a.persona_id);
    const auto s = summaries.find(a.persona_id);
    const auto sc = scenarios.find(a.scenario_id);
    if (p == personas.end() || s == summaries.end() || sc == scenarios.end()) {
      dialogue::FailureRecord f;
      f.conv_id = dialogue::conversation_id(a.persona_id, a.scenario_id, r.language());
      f.persona_id = a.persona_id;
      f.scenario_id = a.scenario_id;
      f.error = "not_found: unresolved persona, summary or scenario";
      outcomes[i].failure = f;
      return;
    }
    outcomes[i] = dialogue::generate_conversation({p->second, s->second, sc->second, r.language()}, *chat, rules,
                                                  policy);
  });
  std::vector<dialogue::Conversation> convs;
  std::vector<json> failures;
  std::size_t violations = 0;
  for (auto &o : outcomes) {
    if (o.conversation) {
      violations += o.conversation->violations.size();
      convs.push_back(std::move(*o.conversation));
    } else if (o.failure) {
      failures.emplace_back(*o.failure);
    }
  }
  io::write_jsonl(r.dir / "conversations.jsonl", detail::rows_of(convs));
  io::write_jsonl(r.dir / "failures.jsonl", failures);
  io::write_json(r.dir / "initiation.json", json(dialogue::initiation_report(convs)));
  r.stats = {{"conversations", convs.size()}, {"failures", failures.size()}, {"language_violations", violations}};
}

inline void run_speech(StageRun &r) {
  const auto &c = r.section();
  const auto convs = detail::load_rows<dialogue::Conversation>(r.upstream("dialogues", "conversations.jsonl"));
  std::map<std::string, persona::PersonaProfile> personas;
  for (auto &p : detail::load_rows<persona::PersonaProfile>(r.upstream("personas", "personas.jsonl")))
    personas.emplace(p.persona_id, std::move(p));
  const auto segments = detail::load_rows<refbank::UtteranceRecord>(r.upstream("refbank", "segments.jsonl"));
  speechgen::ReferenceConfig rc;
  rc.donor_speakers = c.value("donor_speakers", std::vector<std::string>{});
  auto p = r.providers();
  auto synth = p.synthesizer();

  struct Job {
    std::optional<speechgen::ReferenceChoice> ref;
    speechgen::ConversationAudio audio;
    std::string error;
  };
  std::vector<Job> jobs(convs.size());
  parallel_for(convs.size(), r.max_in_flight(), [&](std::size_t i) {
    auto &job = jobs[i];
    try {
      const auto it = personas.find(convs[i].persona_id);
      if (it == personas.end()) throw Error(ErrorKind::not_found, "unknown persona " + convs[i].persona_id);
      job.ref = speechgen::select_reference(it->second, convs[i].language, segments, rc);
      job.audio = speechgen::synthesize_conversation(convs[i], *synth, job.ref->utterance);
    } catch (const std::exception &e) {
      job.error = e.what();
    }
  });

  std::vector<speechgen::SynthUtterance> utterances;
  std::vector<json> references;
  std::map<std::string, AudioClip> ref_clips;
  std::size_t failed_convs = 0, donor = 0;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    auto &job = jobs[i];
    json ref{{"conv_id", convs[i].conv_id}, {"persona_id", convs[i].persona_id}};
    if (job.ref) {
      ref["utterance_id"] = job.ref->utterance.utterance_id;
      ref["speaker_id"] = job.ref->utterance.speaker_id;
      ref["donor_fallback"] = job.ref->donor_fallback;
      ref["reason"] = job.ref->reason;
      donor += job.ref->donor_fallback;
      ref_clips[job.ref->utterance.utterance_id] = job.ref->utterance.clip();
    }
    if (!job.error.empty()) ref["error"] = job.error;
    if (!job.error.empty() || job.audio.all_failed) ++failed_convs;
    references.push_back(std::move(ref));
    for (auto &u : job.audio.utterances) {
      speechgen::store_audio(r.dir, u);
      utterances.push_back(std::move(u));
    }
  }
  io::write_jsonl(r.dir / "utterances.jsonl", detail::rows_of(utterances));
  io::write_jsonl(r.dir / "references.jsonl", references);

  const auto sample = speechgen::qa_sample(utterances, c.value("qa_per_speaker", std::size_t{100}), r.seed);
  json qa;
  if (sample.items.empty()) {
    qa = {{"sample_size", 0}, {"skipped", "no synthesized utterances"}};
  } else {
    auto transcriber = p.transcriber();
    auto spk = p.speaker_embedder();
    auto quality = p.quality();
    const auto root = r.dir;
    const auto report = speechgen::qa_metrics(sample, ref_clips, {transcriber.get(), spk.get(), quality.get()},
                                              r.max_in_flight(), [root](const AudioClip &a) {
                                                AudioClip out = a;
                                                if (!a.uri.empty() && fs::path(a.uri).is_relative())
                                                  out.uri = (root / a.uri).string();
                                                return out;
                                              });
    qa = report;
  }
  io::write_json(r.dir / "qa.json", qa);
  std::size_t ok = 0;
  for (const auto &u : utterances) ok += u.status == "ok";
  r.stats = {{"conversations", convs.size()}, {"utterances", utterances.size()}, {"ok", ok},
             {"failed_conversations", failed_convs}, {"donor_fallbacks", donor}};
}

inline void run_split(StageRun &r) {
  const auto &c = r.section();
  const auto convs = detail::load_rows<dialogue::Conversation>(r.upstream("dialogues", "conversations.jsonl"));
  auto utterances = detail::load_rows<speechgen::SynthUtterance>(r.upstream("speech", "utterances.jsonl"));
  for (auto &u : utterances)
    if (!u.audio.uri.empty() && fs::path(u.audio.uri).is_relative()) u.audio.uri = "speech/" + u.audio.uri;
  std::set<std::string> personas;
  for (const auto &j : io::read_jsonl(r.upstream("personas", "personas.jsonl")))
    personas.insert(j.at("persona_id").get<std::string>());
  dataset::SplitConfig sc;
  sc.test_frac = c.value("test_frac", 0.123);
  sc.dev_frac = c.value("dev_frac", 0.10);
  sc.rng_seed = r.seed;
  sc.small_stratum = c.value("small_stratum", std::size_t{10});
  sc.profile_disjoint_dev = c.value("profile_disjoint_dev", false);
  const auto items = dataset::items_of(convs);
  const auto m = dataset::split(items, personas, sc);
  const auto v = dataset::verify_manifest(m, items);
  dataset::ExportConfig ec;
  ec.shard_size = c.value("shard_size", std::size_t{1000});
  ec.max_in_flight = r.max_in_flight();
  const auto ex = dataset::export_splits(r.dir / "shards", m, convs, utterances, ec);
  io::write_json(r.dir / "split.json", json(m));
  io::write_json(r.dir / "verify.json", json(v));
  io::write_json(r.dir / "export.json", json(ex));
  if (!v.ok()) throw Error(ErrorKind::schema, "split: verification failed, see " + (r.dir / "verify.json").string());
  r.stats = {{"counts", m.counts()}, {"audio_missing", ex.audio_missing.size()}};
}

inline void run_evaluate(StageRun &r) {
  const auto &c = r.section();
  const auto m = io::read_json(r.upstream("split", "split.json")).get<dataset::SplitManifest>();
  const auto convs = detail::load_rows<dialogue::Conversation>(r.upstream("dialogues", "conversations.jsonl"));
  const auto utterances = detail::load_rows<speechgen::SynthUtterance>(r.upstream("speech", "utterances.jsonl"));
  std::map<std::string, std::string> summaries;
  for (auto &s : detail::load_rows<persona::PersonaSummary>(r.upstream("personas", "summaries.jsonl")))
    summaries.emplace(s.persona_id, s.text);
  std::map<std::string, std::string> scenarios;
  for (auto &s : detail::load_rows<scenario::Scenario>(r.upstream("scenarios", "scenarios.jsonl")))
    scenarios.emplace(s.scenario_id, s.text);

  const auto target = c.value("split", "test");
  const auto initiator = c.value("initiator", "assistant");
  std::map<std::string, std::map<std::size_t, AudioClip>> audio;
  for (const auto &u : utterances) {
    if (u.status != "ok") continue;
    AudioClip clip = u.audio;
    if (fs::path(clip.uri).is_relative()) clip.uri = (r.ctx.workspace / "speech" / clip.uri).string();
    audio[u.conv_id][u.turn_index] = clip;
  }

  std::vector<judge::EvalSession> sessions;
  std::size_t no_audio = 0;
  for (const auto &cv : convs) {
    const auto it = m.split_of.find(cv.conv_id);
    if (it == m.split_of.end() || it->second != target) continue;
    if (initiator != "any" && cv.initiator != initiator) continue;
    judge::EvalSession s;
    s.conversation = cv;
    s.profile_memory = summaries.count(cv.persona_id) ? summaries.at(cv.persona_id) : "";
    s.scenario = scenarios.count(cv.scenario_id) ? scenarios.at(cv.scenario_id) : "";
    if (const auto a = audio.find(cv.conv_id); a != audio.end()) s.user_audio = a->second;
    std::size_t user_turns = 0;
    for (const auto &msg : cv.messages) user_turns += msg.role == "user";
    if (s.user_audio.size() < user_turns) ++no_audio;
    sessions.push_back(std::move(s));
  }
  std::sort(sessions.begin(), sessions.end(),
            [](const auto &a, const auto &b) { return a.conversation.conv_id < b.conversation.conv_id; });
  const auto cap = c.value("max_sessions", std::size_t{0});
  if (cap > 0 && sessions.size() > cap) sessions.resize(cap);

  auto p = r.providers();
  auto model = p.chat("model");
  auto judge_chat = p.chat("judge");
  std::shared_ptr<Transcriber> transcriber;
  const auto req = judge::RequiredSet::of(c.value("required_rubrics", std::vector<std::string>{judge::kRubrics.begin(), judge::kRubrics.end()}));
  std::vector<json> verdict_rows, session_rows;
  std::vector<judge::SessionResult> all;
  for (const auto &name : c.value("modalities", std::vector<std::string>{"audio", "stt", "text"})) {
    const auto modality = judge::modality_from(name);
    std::vector<judge::EvalSession> usable;
    for (const auto &s : sessions) {
      std::size_t user_turns = 0;
      for (const auto &msg : s.conversation.messages) user_turns += msg.role == "user";
      if (modality == judge::Modality::text || s.user_audio.size() >= user_turns) usable.push_back(s);
    }
    if (usable.empty()) continue;
    judge::EvalConfig ec;
    ec.model_name = c.value("model_name", "model");
    ec.protocol.modality = modality;
    ec.protocol.gold_history = c.value("gold_history", false);
    ec.protocol.language_hint = r.language();
    if (modality == judge::Modality::stt) {
      if (!transcriber) transcriber = p.transcriber();
      ec.protocol.transcriber = transcriber.get();
    }
    ec.judge.retries = c.value("judge_retries", 3);
    ec.judge.mode = r.mode();
    ec.max_in_flight = r.max_in_flight();
    auto results = judge::evaluate(usable, *model, *judge_chat, ec);
    for (std::size_t i = 0; i < results.size(); ++i) {
      for (const auto &t : results[i].turns) verdict_rows.push_back(judge::record_json(t, req));
      session_rows.push_back({{"conv_id", usable[i].conversation.conv_id}, {"model", ec.model_name},
                              {"modality", name}, {"complete", results[i].complete}, {"error", results[i].error}});
      all.push_back(std::move(results[i]));
    }
  }
  const auto cells = judge::report_cells(all, req);
  json cell_rows = json::array();
  for (const auto &cell : cells) cell_rows.push_back(judge::cell_json(cell));
  io::write_jsonl(r.dir / "verdicts.jsonl", verdict_rows);
  io::write_jsonl(r.dir / "sessions.jsonl", session_rows);
  io::write_json(r.dir / "cells.json",
                 json{{"split", target}, {"initiator", initiator}, {"required_rubrics", req.names()},
                      {"sessions", sessions.size()}, {"sessions_missing_audio", no_audio}, {"cells", cell_rows}});
  io::write_file(r.dir / "table.md", judge::format_table(cells));
  r.stats = {{"sessions", sessions.size()}, {"turns", verdict_rows.size()}, {"cells", cells.size()}};
}

// ---------------------------------------------------------------- report

namespace detail {

inline std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

inline bool stage_ran(const fs::path &ws, const std::string &stage) {
  return fs::exists(ws / stage / ws::kManifestName);
}

} // namespace detail

struct ReportSection {
  std::string title;
  bool ran = false;
  std::string body;
  json data;
};

/// Seven sections, every number recomputed from the persisted stage files.
inline std::vector<ReportSection> build_report(const fs::path &ws) {
  using detail::fmt;
  std::vector<ReportSection> out;
  auto section = [&](std::string title, const std::vector<std::string> &needs, auto &&fill) {
    ReportSection s;
    s.title = std::move(title);
    s.ran = std::all_of(needs.begin(), needs.end(), [&](const auto &n) { return detail::stage_ran(ws, n); });
    if (s.ran)
      fill(s);
    else {
      std::string missing;
      for (const auto &n : needs)
        if (!detail::stage_ran(ws, n)) missing += (missing.empty() ? "" : ", ") + n;
      s.body = "not run (missing stage: " + missing + ")\n";
      s.data = {{"status", "not run"}};
    }
    out.push_back(std::move(s));
  };

  section("Reference speech bank", {"refbank"}, [&](ReportSection &s) {
    const auto bank = detail::load_rows<refbank::UtteranceRecord>(ws / "refbank/bank.jsonl");
    const auto speakers = detail::load_rows<refbank::SpeakerProfile>(ws / "refbank/speakers.jsonl");
    const auto segments = io::read_jsonl(ws / "refbank/segments.jsonl");
    std::map<std::string, std::size_t> reasons;
    for (const auto &e : io::read_jsonl(ws / "refbank/exclusions.jsonl")) ++reasons[e.at("reason").get<std::string>()];
    const auto st = refbank::bank_statistics(bank, speakers);
    s.body = refbank::format_table(st) + "\nRetained utterances: " + std::to_string(bank.size()) +
             "; reference segments: " + std::to_string(segments.size()) + "\n";
    for (const auto &[k, v] : reasons) s.body += "Excluded (" + k + "): " + std::to_string(v) + "\n";
    s.data = {{"statistics", refbank::to_json(st)}, {"segments", segments.size()}, {"exclusions", reasons}};
  });

  section("Persona quality (PQI)", {"pqi"}, [&](ReportSection &s) {
    const auto reports = detail::load_rows<pqi::PqiReport>(ws / "pqi/pqi.jsonl");
    const auto c = pqi::corpus_report(reports);
    s.body = "Summaries scored: " + std::to_string(c.n) + "\nMean PQI: " + fmt(c.mean, 2) +
             "\nMedian PQI: " + fmt(c.median, 2) + "\nCompliant (PQI = 12): " + fmt(c.fraction_compliant) +
             "\nPQI >= 10: " + fmt(c.fraction_ge10) + "\nAny flag: " + fmt(c.any_flag_rate) + "\n\n| PQI | Count |\n|---|---|\n";
    for (const auto &[k, v] : c.histogram) s.body += "| " + std::to_string(k) + " | " + std::to_string(v) + " |\n";
    s.data = c;
  });

  section("Persona-scenario matching", {"match"}, [&](ReportSection &s) {
    const auto summary = io::read_json(ws / "match/summary.json");
    std::size_t kept = 0, errors = 0;
    for (const auto &m : io::read_jsonl(ws / "match/matches.jsonl")) {
      kept += m.value("kept", false);
      errors += m.contains("error");
    }
    const auto assignments = io::read_jsonl(ws / "match/assignments.jsonl");
    const auto scored = summary.at("scored").get<std::size_t>();
    s.body = "Pairs scored: " + std::to_string(scored) + "\nPairs kept (s_hyb >= " + fmt(summary.at("tau").get<double>(), 2) +
             "): " + std::to_string(kept) + "\nScoring errors: " + std::to_string(errors) +
             "\nPairs selected for generation: " + std::to_string(assignments.size()) + "\n";
    s.data = {{"scored", scored}, {"kept", kept}, {"errors", errors}, {"assignments", assignments.size()}};
  });

  section("Dialogue initiation", {"dialogues"}, [&](ReportSection &s) {
    const auto convs = detail::load_rows<dialogue::Conversation>(ws / "dialogues/conversations.jsonl");
    const auto rep = dialogue::initiation_report(convs);
    std::size_t violations = 0;
    for (const auto &c : convs) violations += c.violations.size();
    const auto failures = io::read_jsonl(ws / "dialogues/failures.jsonl");
    s.body = "Conversations: " + std::to_string(rep.n) + "\nUser-initiated: " + fmt(rep.user_start) +
             "\nAssistant-initiated: " + fmt(rep.assistant_start) + "\nLanguage violations: " +
             std::to_string(violations) + "\nGeneration failures: " + std::to_string(failures.size()) +
             "\n\n| Messages | Conversations |\n|---|---|\n";
    for (const auto &[k, v] : rep.message_histogram)
      s.body += "| " + std::to_string(k) + " | " + std::to_string(v) + " |\n";
    s.data = rep;
    s.data["language_violations"] = violations;
    s.data["failures"] = failures.size();
  });

  section("Audio QA", {"speech"}, [&](ReportSection &s) {
    const auto qa = io::read_json(ws / "speech/qa.json");
    const auto utts = io::read_jsonl(ws / "speech/utterances.jsonl");
    std::size_t ok = 0;
    for (const auto &u : utts) ok += u.value("status", "") == "ok";
    s.body = "Synthesized user turns: " + std::to_string(ok) + "/" + std::to_string(utts.size()) + "\n";
    if (qa.contains("skipped")) {
      s.body += "QA skipped: " + qa["skipped"].get<std::string>() + "\n";
    } else {
      s.body += "QA sample: " + std::to_string(qa.at("sample_size").get<std::size_t>()) + " (effective " +
                std::to_string(qa.at("effective").get<std::size_t>()) + ")\n\n| WER (%) | SpkCos | MOS |\n|---|---|---|\n| " +
                fmt(qa.at("wer_mean_percent").get<double>(), 2) + " | " + fmt(qa.at("spkcos_mean").get<double>(), 3) +
                " | " + fmt(qa.at("quality_mean").get<double>(), 2) + " |\n";
    }
    s.data = qa;
    s.data["synthesized_ok"] = ok;
  });

  section("Split verification", {"split", "dialogues"}, [&](ReportSection &s) {
    const auto m = io::read_json(ws / "split/split.json").get<dataset::SplitManifest>();
    const auto convs = detail::load_rows<dialogue::Conversation>(ws / "dialogues/conversations.jsonl");
    const auto v = dataset::verify_manifest(m, dataset::items_of(convs));
    const auto counts = m.counts();
    std::size_t total = 0;
    for (const auto &[k, n] : counts) total += n;
    s.body = "| Split | Conversations | Fraction |\n|---|---|---|\n";
    for (const auto &name : dataset::kSplits) {
      const auto n = counts.count(name) ? counts.at(name) : 0;
      s.body += "| " + std::string(name) + " | " + std::to_string(n) + " | " +
                fmt(total ? static_cast<double>(n) / static_cast<double>(total) : 0.0) + " |\n";
    }
    s.body += "\nProfile leakage: " + std::to_string(v.leakage.size()) + "\nPartition errors: " +
              std::to_string(v.partition.size()) + "\nTest deviation: " + fmt(v.test_deviation) +
              "\nTrain/dev scenario TV distance: " + fmt(v.tv_train_dev) + "\nVerified: " + (v.ok() ? "yes" : "no") + "\n";
    s.data = v;
  });

  section("Evaluation (APR/ARS)", {"evaluate"}, [&](ReportSection &s) {
    const auto meta = io::read_json(ws / "evaluate/cells.json");
    const auto req = judge::RequiredSet::of(meta.at("required_rubrics").get<std::vector<std::string>>());
    std::vector<judge::SessionResult> results;
    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
    for (const auto &row : io::read_jsonl(ws / "evaluate/sessions.jsonl")) {
      judge::SessionResult sr;
      sr.complete = row.at("complete").get<bool>();
      index[{row.at("conv_id").get<std::string>(), row.at("model").get<std::string>(),
             row.at("modality").get<std::string>()}] = results.size();
      results.push_back(std::move(sr));
    }
    for (const auto &row : io::read_jsonl(ws / "evaluate/verdicts.jsonl")) {
      judge::TurnRecord t;
      t.conv_id = row.at("conv_id").get<std::string>();
      t.model = row.at("model").get<std::string>();
      t.modality = row.at("modality").get<std::string>();
      t.turn_index = row.at("turn_index").get<std::size_t>();
      if (row.contains("verdict")) {
        auto parsed = judge::parse_verdict(row["verdict"].dump(), ParseMode::strict);
        if (!parsed.verdict) throw Error(ErrorKind::schema, "report: unreadable verdict for " + t.conv_id);
        t.verdict = parsed.verdict;
      } else {
        t.exclusion = row.value("exclusion", "");
      }
      const auto it = index.find({t.conv_id, t.model, t.modality});
      if (it == index.end()) throw Error(ErrorKind::schema, "report: verdict without session " + t.conv_id);
      results[it->second].turns.push_back(std::move(t));
    }
    const auto cells = judge::report_cells(results, req);
    s.body = "Sessions (" + meta.at("split").get<std::string>() + " split, " +
             meta.at("initiator").get<std::string>() + "-initiated): " +
             std::to_string(meta.at("sessions").get<std::size_t>()) + "\n\n" + judge::format_table(cells);
    s.data = json::array();
    for (const auto &c : cells) s.data.push_back(judge::cell_json(c));
  });
  return out;
}

inline std::string render_report(const std::vector<ReportSection> &sections) {
  std::string md = "# Forge run report\n";
  for (std::size_t i = 0; i < sections.size(); ++i)
    md += "\n## " + std::to_string(i + 1) + ". " + sections[i].title + "\n\n" + sections[i].body;
  return md;
}

inline void run_report(StageRun &r) {
  const auto sections = build_report(r.ctx.workspace);
  io::write_file(r.dir / "report.md", render_report(sections));
  json j = json::array();
  for (const auto &s : sections) j.push_back({{"title", s.title}, {"ran", s.ran}, {"data", s.data}});
  io::write_json(r.dir / "report.json", j);
  std::size_t ran = 0;
  for (const auto &s : sections) ran += s.ran;
  r.stats = {{"sections", sections.size()}, {"sections_run", ran}};
}

// ---------------------------------------------------------------- driver

struct StageSpec {
  std::string name;
  std::vector<std::string> upstream;
  std::vector<std::string> data_keys;
  std::function<void(StageRun &)> run;
  bool optional_upstream = false;
};

inline const std::vector<StageSpec> &stage_specs() {
  static const std::vector<StageSpec> specs{
      {"refbank", {}, {}, run_refbank},
      {"personas", {"refbank"}, {"inventories", "wvs"}, run_personas},
      {"pqi", {"personas"}, {"inventories", "pqi_lexicons"}, run_pqi},
      {"scenarios", {}, {"taxonomy"}, run_scenarios},
      {"match", {"personas", "scenarios"}, {}, run_match},
      {"dialogues", {"match", "personas", "scenarios"}, {"dialect_blocklist"}, run_dialogues},
      {"speech", {"dialogues", "personas", "refbank"}, {}, run_speech},
      {"split", {"dialogues", "personas", "speech"}, {}, run_split},
      {"evaluate", {"split", "dialogues", "speech", "personas", "scenarios"}, {}, run_evaluate},
      {"report", {"refbank", "pqi", "match", "dialogues", "speech", "split", "evaluate"}, {}, run_report, true},
  };
  return specs;
}

inline const StageSpec &stage_spec(const std::string &name) {
  for (const auto &s : stage_specs())
    if (s.name == name) return s;
  throw Error(ErrorKind::config, "unknown stage '" + name + "'");
}

/// Config slice that determines a stage's output; other sections can change
/// without invalidating it.
inline json stage_config(const json &cfg, const StageSpec &spec) {
  json data = json::object();
  for (const auto &k : spec.data_keys) data[k] = cfg.at("data").value(k, "");
  json out{{"seed", cfg.at("seed")},
           {"language", cfg.value("language", "MSA")},
           {"parse_mode", cfg.value("parse_mode", "strict")},
           {"providers", cfg.at("providers")},
           {"data", data}};
  if (cfg.contains(spec.name)) out[spec.name] = cfg[spec.name];
  return out;
}

struct StageResult {
  std::string stage;
  bool up_to_date = false;
  json stats;
};

inline std::map<std::string, std::string> upstream_inputs(const Context &ctx, const StageSpec &spec) {
  std::map<std::string, std::string> inputs;
  for (const auto &up : spec.upstream) {
    const auto dir = ctx.workspace / up;
    const auto m = ws::read_manifest(dir);
    if (!m) {
      if (spec.optional_upstream) continue;
      throw Error(ErrorKind::not_found,
                  "stage '" + spec.name + "' needs the outputs of '" + up + "'; run `forge " + up + "` first");
    }
    const auto bad = ws::verify_outputs(dir, *m);
    if (!bad.empty())
      throw Error(ErrorKind::digest, "digest mismatch in upstream artifact " + bad.front() +
                                         "; rerun `forge " + up + " --force`");
    for (const auto &[rel, d] : m->outputs) inputs[up + "/" + rel] = d;
  }
  for (const auto &k : spec.data_keys) {
    const auto p = ctx.config.at("data").value(k, "");
    if (p.empty() || !fs::exists(p)) throw Error(ErrorKind::not_found, "data file for '" + k + "' not found: " + p);
    inputs[p] = ws::sha256_file(p);
  }
  if (spec.name == "refbank") {
    const auto &rb = ctx.config.at("refbank");
    std::vector<std::string> files;
    if (rb.value("speakers", "") != "") files.push_back(rb["speakers"].get<std::string>());
    for (const auto &src : rb.at("sources")) files.push_back(src.at("path").get<std::string>());
    for (const auto &f : files) {
      if (!fs::exists(f)) throw Error(ErrorKind::not_found, "refbank input not found: " + f);
      inputs[f] = ws::sha256_file(f);
    }
  }
  return inputs;
}

/// Run one stage. The caller holds the workspace lock.
inline StageResult run_stage(const Context &ctx, const std::string &name) {
  const auto &spec = stage_spec(name);
  const auto dir = ctx.workspace / name;
  const auto inputs = upstream_inputs(ctx, spec);
  const json snapshot = stage_config(ctx.config, spec);
  const auto fingerprint = ws::sha256_text(json{{"stage", name}, {"version", ws::kToolVersion}, {"config", snapshot}}.dump());

  if (!ctx.force) {
    if (const auto m = ws::read_manifest(dir);
        m && m->fingerprint == fingerprint && m->inputs == inputs && ws::verify_outputs(dir, *m).empty()) {
      ctx.log(name + ": up-to-date (use --force to rerun)");
      return {name, true, m->stats};
    }
  }

  fs::remove_all(dir);
  fs::create_directories(dir);
  ws::Manifest m;
  m.stage = name;
  m.config = ctx.config;
  m.fingerprint = fingerprint;
  m.inputs = inputs;
  m.started_at = ws::utc_now();
  StageRun run{ctx, name, dir, mix_seed(ctx.config.at("seed").get<std::uint64_t>(), name)};
  try {
    spec.run(run);
  } catch (...) {
    // a partial directory without a manifest is never mistaken for output
    std::error_code ec;
    fs::remove(dir / ws::kManifestName, ec);
    throw;
  }
  m.outputs = ws::digest_tree(dir);
  m.finished_at = ws::utc_now();
  m.stats = run.stats;
  io::write_json(dir / ws::kManifestName, json(m));
  ctx.log(name + ": done " + run.stats.dump());
  return {name, false, run.stats};
}

/// Runs stages in order under the workspace lock.
inline std::vector<StageResult> run_stages(const Context &ctx, const std::vector<std::string> &names) {
  ws::WorkspaceLock lock(ctx.workspace);
  std::vector<StageResult> out;
  for (const auto &n : names) out.push_back(run_stage(ctx, n));
  return out;
}

struct VerifyLine {
  std::string stage;
  std::string status; // ok | not run | mismatch
  std::vector<std::string> bad;
};

inline std::vector<VerifyLine> verify_workspace(const fs::path &workspace) {
  std::vector<VerifyLine> out;
  for (const auto &name : stage_names()) {
    const auto dir = workspace / name;
    const auto m = ws::read_manifest(dir);
    if (!m) {
      out.push_back({name, "not run", {}});
      continue;
    }
    auto bad = ws::verify_outputs(dir, *m);
    out.push_back({name, bad.empty() ? "ok" : "mismatch", std::move(bad)});
  }
  return out;
}

} // namespace forge::pipeline
