#pragma once

#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/concurrency.hpp"
#include "forge/dialogue.hpp"
#include "forge/prompts.hpp"
#include "forge/providers.hpp"
#include "forge/strict_json.hpp"
#include "forge/template.hpp"

namespace forge::judge {

using nlohmann::json;

inline constexpr std::array<const char *, 8> kRubrics{
    "relevance",   "completeness",        "specificity_actionability", "coherence",
    "context_tracking", "calibration", "language_tone_match",       "safety_appropriateness"};

inline std::size_t rubric_index(const std::string &name) {
  for (std::size_t i = 0; i < kRubrics.size(); ++i)
    if (name == kRubrics[i]) return i;
  throw Error(ErrorKind::not_found, "unknown rubric '" + name + "'");
}

/// Rubrics that must all hold for a turn to pass.
struct RequiredSet {
  std::array<bool, 8> mask{true, true, true, true, true, true, true, true};

  static RequiredSet of(const std::vector<std::string> &names) {
    require(!names.empty(), "required rubric set is empty");
    RequiredSet r;
    r.mask.fill(false);
    for (const auto &n : names) r.mask[rubric_index(n)] = true;
    return r;
  }
  [[nodiscard]] std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < 8; ++i)
      if (mask[i]) out.emplace_back(kRubrics[i]);
    return out;
  }
};

struct RubricVerdict {
  std::array<bool, 8> checks{};
  std::string rationale;

  [[nodiscard]] bool pass(const RequiredSet &req = {}) const {
    for (std::size_t i = 0; i < 8; ++i)
      if (req.mask[i] && !checks[i]) return false;
    return true;
  }
  [[nodiscard]] double fraction() const {
    std::size_t n = 0;
    for (bool b : checks) n += b;
    return static_cast<double>(n) / 8.0;
  }
};

inline json verdict_json(const RubricVerdict &v) {
  json j = json::object();
  for (std::size_t i = 0; i < 8; ++i) j[kRubrics[i]] = v.checks[i];
  if (!v.rationale.empty()) j["rationale"] = v.rationale;
  return j;
}

struct VerdictParse {
  std::optional<RubricVerdict> verdict;
  ParseError error = ParseError::none;
  std::string detail;
};

/// Exactly the eight rubric booleans, plus an optional string "rationale".
inline VerdictParse parse_verdict(std::string_view raw, ParseMode mode = ParseMode::strict) {
  VerdictParse out;
  auto p = parse_json_response(raw, mode);
  if (!p.ok()) {
    out.error = p.error;
    return out;
  }
  if (!p.value.is_object()) {
    out.error = ParseError::wrong_shape;
    return out;
  }
  RubricVerdict v;
  std::set<std::string> seen;
  for (const auto &[k, val] : p.value.items()) {
    if (k == "rationale") {
      if (!val.is_string()) {
        out.error = ParseError::bad_type;
        out.detail = k;
        return out;
      }
      v.rationale = val.get<std::string>();
      continue;
    }
    std::size_t idx = 8;
    for (std::size_t i = 0; i < 8; ++i)
      if (k == kRubrics[i]) idx = i;
    if (idx == 8) {
      out.error = ParseError::wrong_key;
      out.detail = "unexpected key " + k;
      return out;
    }
    if (!val.is_boolean()) {
      out.error = ParseError::bad_type;
      out.detail = k;
      return out;
    }
    v.checks[idx] = val.get<bool>();
    seen.insert(k);
  }
  if (seen.size() != 8) {
    out.error = ParseError::wrong_key;
    for (const auto *r : kRubrics)
      if (!seen.count(r)) {
        out.detail = std::string("missing key ") + r;
        break;
      }
    return out;
  }
  out.verdict = v;
  return out;
}

enum class Modality { audio, stt, text };

inline std::string to_string(Modality m) {
  switch (m) {
  case Modality::audio: return "audio";
  case Modality::stt: return "stt";
  case Modality::text: return "text";
  }
  return "unknown";
}

inline Modality modality_from(const std::string &s) {
  if (s == "audio") return Modality::audio;
  if (s == "stt") return Modality::stt;
  if (s == "text") return Modality::text;
  throw Error(ErrorKind::config, "unknown input modality '" + s + "' (audio, stt, text)");
}

struct EvalSession {
  dialogue::Conversation conversation;
  std::map<std::size_t, AudioClip> user_audio; // message index -> clip
  std::string profile_memory;
  std::string scenario;
};

struct ProtocolConfig {
  Modality modality = Modality::audio;
  bool gold_history = false; // prior assistant turns from the conversation instead of the model
  Transcriber *transcriber = nullptr;
  std::string language_hint = "MSA";
  Decoding decoding{0.0, 512};
  std::string system_template = prompts::kAssistantUnderTestSystem;
};

struct Candidate {
  std::size_t turn_index = 0;       // index of the user message answered
  std::vector<ChatMessage> context; // exactly what the model received
  std::vector<dialogue::Message> transcript; // text view of the context for the judge
  std::string response;
};

struct ProtocolResult {
  std::vector<Candidate> candidates;
  bool complete = true;
  std::string error;
};

/// Every user turn is answered in order; the context for user turn k holds all
/// messages before it (with prior assistant turns from the model unless
/// gold_history) and the turn itself, never anything later.
inline ProtocolResult run_protocol(const EvalSession &s, ChatProvider &model, const ProtocolConfig &cfg = {}) {
  const auto &msgs = s.conversation.messages;
  std::vector<std::size_t> user_turns;
  for (std::size_t i = 0; i < msgs.size(); ++i)
    if (msgs[i].role == "user") user_turns.push_back(i);
  require(!user_turns.empty(), "run_protocol: conversation " + s.conversation.conv_id + " has no user turn");
  if (cfg.modality != Modality::text)
    for (auto i : user_turns)
      require(s.user_audio.count(i), "run_protocol: user turn " + std::to_string(i) + " of " +
                                         s.conversation.conv_id + " has no audio");
  require(cfg.modality != Modality::stt || cfg.transcriber, "run_protocol: stt modality needs a transcriber");

  ChatRequest req;
  req.system_prompt = PromptTemplate(cfg.system_template)
                          .render({{"profile_memory", s.profile_memory}, {"scenario", s.scenario}});
  req.decoding = cfg.decoding;

  ProtocolResult out;
  std::vector<ChatMessage> history;
  std::vector<dialogue::Message> transcript;
  std::size_t next = 0; // next conversation message not yet in history
  try {
    for (auto k : user_turns) {
      for (; next < k; ++next) {
        // Only assistant messages before the first user turn or gold history are copied;
        // otherwise the model's previous answer already stands in for them.
        const auto &m = msgs[next];
        if (m.role == "assistant" && (cfg.gold_history || out.candidates.empty())) {
          history.push_back({"assistant", m.content, std::nullopt});
          transcript.push_back(m);
        }
      }
      ChatMessage user{"user", msgs[k].content, std::nullopt};
      if (cfg.modality == Modality::audio) {
        user.content.clear();
        user.audio = s.user_audio.at(k);
      } else if (cfg.modality == Modality::stt) {
        user.content = cfg.transcriber->transcribe(s.user_audio.at(k), cfg.language_hint);
      }
      history.push_back(user);
      transcript.push_back(msgs[k]);
      next = k + 1;

      req.messages = history;
      Candidate c;
      c.turn_index = k;
      c.context = history;
      c.transcript = transcript;
      c.response = model.complete(req);
      if (is_blank(c.response)) throw Error(ErrorKind::empty_completion, "model returned an empty turn");
      if (!cfg.gold_history) {
        history.push_back({"assistant", c.response, std::nullopt});
        transcript.push_back({"assistant", c.response});
      }
      out.candidates.push_back(std::move(c));
    }
  } catch (const Error &e) {
    out.complete = false;
    out.error = e.what();
  }
  return out;
}

inline std::string render_transcript(const std::vector<dialogue::Message> &msgs) {
  std::string out;
  for (const auto &m : msgs) out += (m.role == "user" ? "USER: " : "ASSISTANT: ") + m.content + "\n";
  return out;
}

struct JudgeConfig {
  int retries = 3;
  ParseMode mode = ParseMode::strict;
  std::string system_template = prompts::kJudgeSystem;
  std::string user_template = prompts::kJudgeUser;
  Decoding decoding{0.0, 512};
};

struct JudgeOutcome {
  std::optional<RubricVerdict> verdict;
  int attempts = 0;
  std::string error; // "parse:<kind>" or "provider:<kind>" of the last attempt
  std::string last_raw;
};

inline JudgeOutcome judge_turn(const EvalSession &s, const Candidate &c, ChatProvider &judge,
                               const JudgeConfig &cfg = {}) {
  ChatRequest req;
  req.system_prompt = PromptTemplate(cfg.system_template).render({});
  req.user_prompt = PromptTemplate(cfg.user_template)
                        .render({{"profile_memory", s.profile_memory},
                                 {"scenario", s.scenario},
                                 {"transcript", render_transcript(c.transcript)},
                                 {"candidate", c.response}});
  req.decoding = cfg.decoding;
  JudgeOutcome out;
  for (int a = 0; a < std::max(1, cfg.retries); ++a) {
    ++out.attempts;
    try {
      out.last_raw = judge.complete(req);
    } catch (const Error &e) {
      out.error = "provider:" + std::string(forge::to_string(e.kind()));
      continue;
    }
    auto p = parse_verdict(out.last_raw, cfg.mode);
    if (p.verdict) {
      out.verdict = p.verdict;
      out.error.clear();
      return out;
    }
    out.error = "parse:" + std::string(forge::to_string(p.error));
  }
  return out;
}

struct CorpusScore {
  double apr = 0.0;
  double ars = 0.0;
  std::size_t n_turns = 0;
};

inline CorpusScore aggregate(const std::vector<RubricVerdict> &verdicts, const RequiredSet &req = {}) {
  require(!verdicts.empty(), "aggregate: no judged turns");
  CorpusScore s;
  s.n_turns = verdicts.size();
  double passes = 0, fractions = 0;
  for (const auto &v : verdicts) {
    passes += v.pass(req);
    fractions += v.fraction();
  }
  s.apr = passes / static_cast<double>(s.n_turns);
  s.ars = fractions / static_cast<double>(s.n_turns);
  return s;
}

struct TurnRecord {
  std::string conv_id;
  std::string model;
  std::string modality;
  std::size_t turn_index = 0;
  std::string candidate;
  std::optional<RubricVerdict> verdict;
  std::string exclusion; // judge failure reason when verdict is absent
  int attempts = 0;
};

inline json record_json(const TurnRecord &r, const RequiredSet &req = {}) {
  json j{{"conv_id", r.conv_id}, {"model", r.model},         {"modality", r.modality},
         {"turn_index", r.turn_index}, {"candidate", r.candidate}, {"attempts", r.attempts}};
  if (r.verdict) {
    j["verdict"] = verdict_json(*r.verdict);
    j["pass"] = r.verdict->pass(req);
    j["rubric_fraction"] = r.verdict->fraction();
  } else {
    j["excluded"] = true;
    j["exclusion"] = r.exclusion;
  }
  return j;
}

struct SessionResult {
  std::vector<TurnRecord> turns;
  bool complete = true;
  std::string error;
};

struct EvalConfig {
  std::string model_name = "model";
  ProtocolConfig protocol;
  JudgeConfig judge;
  std::size_t max_in_flight = 4;
};

/// Sessions run in parallel; turns within a session are sequential.
inline std::vector<SessionResult> evaluate(const std::vector<EvalSession> &sessions, ChatProvider &model,
                                           ChatProvider &judge, const EvalConfig &cfg) {
  std::vector<SessionResult> out(sessions.size());
  parallel_for(sessions.size(), cfg.max_in_flight, [&](std::size_t i) {
    const auto &s = sessions[i];
    auto proto = run_protocol(s, model, cfg.protocol);
    auto &r = out[i];
    r.complete = proto.complete;
    r.error = proto.error;
    for (const auto &c : proto.candidates) {
      auto j = judge_turn(s, c, judge, cfg.judge);
      r.turns.push_back({s.conversation.conv_id, cfg.model_name, to_string(cfg.protocol.modality), c.turn_index,
                         c.response, j.verdict, j.error, j.attempts});
    }
  });
  return out;
}

struct CellReport {
  std::string model;
  std::string modality;
  CorpusScore score;
  std::size_t excluded = 0;
  std::size_t incomplete_sessions = 0;
};

inline json cell_json(const CellReport &c) {
  return json{{"model", c.model},       {"modality", c.modality}, {"apr", c.score.apr},
              {"ars", c.score.ars},     {"n_turns", c.score.n_turns}, {"excluded", c.excluded},
              {"incomplete_sessions", c.incomplete_sessions}};
}

/// One row per (model, modality) cell; excluded turns shrink n_turns.
inline std::vector<CellReport> report_cells(const std::vector<SessionResult> &results, const RequiredSet &req = {}) {
  std::map<std::pair<std::string, std::string>, std::vector<RubricVerdict>> verdicts;
  std::map<std::pair<std::string, std::string>, CellReport> cells;
  for (const auto &s : results) {
    std::set<std::pair<std::string, std::string>> touched;
    for (const auto &t : s.turns) {
      const auto key = std::make_pair(t.model, t.modality);
      auto &cell = cells[key];
      cell.model = t.model;
      cell.modality = t.modality;
      touched.insert(key);
      if (t.verdict)
        verdicts[key].push_back(*t.verdict);
      else
        ++cell.excluded;
    }
    if (!s.complete)
      for (const auto &k : touched) ++cells[k].incomplete_sessions;
  }
  std::vector<CellReport> out;
  for (auto &[key, cell] : cells) {
    if (!verdicts[key].empty()) cell.score = aggregate(verdicts[key], req);
    out.push_back(cell);
  }
  return out;
}

inline std::string format_table(const std::vector<CellReport> &cells) {
  std::string out = "| Model | Input | APR | ARS | Turns | Excluded |\n|---|---|---|---|---|---|\n";
  char buf[256];
  for (const auto &c : cells) {
    std::snprintf(buf, sizeof buf, "| %s | %s | %.3f | %.3f | %zu | %zu |\n", c.model.c_str(), c.modality.c_str(),
                  c.score.apr, c.score.ars, c.score.n_turns, c.excluded);
    out += buf;
  }
  return out;
}

/// First "Rating: [[X]]" occurrence; X must be an integer in [1, 10].
inline int parse_rating(const std::string &response) {
  static const std::regex pattern(R"(Rating:\s*\[\[([^\]]*)\]\])");
  std::smatch m;
  if (!std::regex_search(response, m, pattern)) throw Error(ErrorKind::parse, "no 'Rating: [[X]]' in judge response");
  const std::string body = m[1].str();
  static const std::regex integer(R"(\s*(\d{1,3})\s*)");
  std::smatch n;
  if (!std::regex_match(body, n, integer)) throw Error(ErrorKind::parse, "rating '" + body + "' is not an integer");
  const int x = std::stoi(n[1].str());
  if (x < 1 || x > 10) throw Error(ErrorKind::parse, "rating " + std::to_string(x) + " outside 1-10");
  return x;
}

inline int rate_answer(const std::string &question, const std::string &reference, const std::string &generated,
                       ChatProvider &judge) {
  require(!is_blank(question) && !is_blank(reference) && !is_blank(generated), "rate_answer: empty text");
  ChatRequest req;
  req.system_prompt = PromptTemplate(prompts::kRatingSystem).render({});
  req.user_prompt = PromptTemplate(prompts::kRatingUser)
                        .render({{"question", question}, {"reference_answer", reference}, {"generated_answer", generated}});
  req.decoding = {0.0, 256};
  return parse_rating(judge.complete(req));
}

} // namespace forge::judge
