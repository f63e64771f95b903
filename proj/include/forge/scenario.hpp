#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/concurrency.hpp"
#include "forge/dedup.hpp"
#include "forge/prompts.hpp"
#include "forge/providers.hpp"
#include "forge/rng.hpp"
#include "forge/strict_json.hpp"
#include "forge/template.hpp"

namespace forge::scenario {

using nlohmann::json;

inline constexpr const char *kSeparator = " > ";

struct DomainPath {
  std::string branch; // slug of the top-level label, e.g. task-service
  std::vector<std::string> segments; // top-level label first

  [[nodiscard]] std::string path_string() const {
    std::string out;
    for (const auto &s : segments) out += (out.empty() ? "" : kSeparator) + s;
    return out;
  }
  [[nodiscard]] const std::string &leaf() const { return segments.back(); }
  friend bool operator==(const DomainPath &, const DomainPath &) = default;
};

inline std::string slug(std::string_view label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    else if (!out.empty() && out.back() != '-')
      out.push_back('-');
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

/// Taxonomy file layout: {"branches": [node, ...]} where a node is either a
/// leaf label string or {"name": label, "children": [node, ...]}.
class Taxonomy {
public:
  static Taxonomy from_json(const json &j) {
    if (!j.is_object() || !j.contains("branches") || !j["branches"].is_array() || j["branches"].empty())
      throw Error(ErrorKind::schema, "taxonomy: expected an object with a non-empty \"branches\" array");
    Taxonomy t;
    std::set<std::string> seen;
    for (const auto &b : j["branches"]) {
      if (!b.is_object() || !b.contains("name"))
        throw Error(ErrorKind::schema, "taxonomy: branch must be an object with a name");
      const auto name = b["name"].get<std::string>();
      const std::size_t before = t.leaves_.size();
      t.walk(b, {}, slug(name), seen);
      if (t.leaves_.size() == before) throw Error(ErrorKind::schema, "taxonomy: branch '" + name + "' is empty");
    }
    return t;
  }

  static Taxonomy load(const std::string &path) {
    const auto content = [&] {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error(ErrorKind::not_found, "taxonomy file not found: " + path);
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    }();
    if (content.find_first_not_of(" \t\r\n") == std::string::npos)
      throw Error(ErrorKind::schema, "taxonomy: empty file " + path);
    json j;
    try {
      j = json::parse(content);
    } catch (const json::parse_error &e) {
      throw Error(ErrorKind::parse, "taxonomy: " + path + ": " + e.what());
    }
    return from_json(j);
  }

  [[nodiscard]] const std::vector<DomainPath> &leaves() const { return leaves_; }

  [[nodiscard]] std::optional<DomainPath> find(const std::string &path_string) const {
    for (const auto &l : leaves_)
      if (l.path_string() == path_string) return l;
    return std::nullopt;
  }

private:
  void walk(const json &node, std::vector<std::string> prefix, const std::string &branch, std::set<std::string> &seen) {
    if (node.is_string()) {
      prefix.push_back(node.get<std::string>());
      add(DomainPath{branch, std::move(prefix)}, seen);
      return;
    }
    if (!node.is_object() || !node.contains("name") || !node["name"].is_string())
      throw Error(ErrorKind::schema, "taxonomy: node must be a string or an object with a name");
    prefix.push_back(node["name"].get<std::string>());
    if (prefix.back().find(kSeparator) != std::string::npos)
      throw Error(ErrorKind::schema, "taxonomy: label contains the path separator: " + prefix.back());
    if (!node.contains("children") || node["children"].empty()) {
      if (prefix.size() == 1) return; // empty branch, reported by caller
      add(DomainPath{branch, std::move(prefix)}, seen);
      return;
    }
    for (const auto &c : node["children"]) walk(c, prefix, branch, seen);
  }

  void add(DomainPath p, std::set<std::string> &seen) {
    const auto s = p.path_string();
    if (!seen.insert(s).second) throw Error(ErrorKind::schema, "taxonomy: duplicate leaf '" + s + "'");
    leaves_.push_back(std::move(p));
  }

  std::vector<DomainPath> leaves_;
};

struct Topic {
  std::string topic_id;
  std::string domain_path;
  std::string text;
  std::string batch;
  friend bool operator==(const Topic &, const Topic &) = default;
};

struct Scenario {
  std::string scenario_id;
  std::string topic_id;
  std::string domain_path;
  std::string topic;
  std::string text;
  std::string batch;
  friend bool operator==(const Scenario &, const Scenario &) = default;
};

inline void to_json(json &j, const Topic &t) {
  j = json{{"topic_id", t.topic_id}, {"domain_path", t.domain_path}, {"text", t.text}, {"batch", t.batch}};
}
inline void from_json(const json &j, Topic &t) {
  t.topic_id = j.at("topic_id").get<std::string>();
  t.domain_path = j.at("domain_path").get<std::string>();
  t.text = j.at("text").get<std::string>();
  t.batch = j.value("batch", "");
}
inline void to_json(json &j, const Scenario &s) {
  j = json{{"scenario_id", s.scenario_id}, {"topic_id", s.topic_id}, {"domain_path", s.domain_path},
           {"topic", s.topic},             {"text", s.text},          {"batch", s.batch}};
}
inline void from_json(const json &j, Scenario &s) {
  s.scenario_id = j.at("scenario_id").get<std::string>();
  s.topic_id = j.at("topic_id").get<std::string>();
  s.domain_path = j.at("domain_path").get<std::string>();
  s.topic = j.at("topic").get<std::string>();
  s.text = j.at("text").get<std::string>();
  s.batch = j.value("batch", "");
}

inline std::string topic_id(const std::string &path, const std::string &text) {
  return "t-" + hex64(fnv1a(path + '\x1f' + text));
}
inline std::string scenario_id(const std::string &topic_id, const std::string &text) {
  return "s-" + hex64(fnv1a(topic_id + '\x1f' + text));
}

struct ListParse {
  std::vector<std::string> items;
  ParseError error = ParseError::none;
  [[nodiscard]] bool ok() const { return error == ParseError::none; }
};

inline ParseError string_array(const json &arr, std::size_t n, std::vector<std::string> &out) {
  for (const auto &e : arr) {
    if (!e.is_string()) return ParseError::bad_type;
    if (is_blank(e.get<std::string>())) return ParseError::empty_content;
    out.push_back(e.get<std::string>());
  }
  return out.size() == n ? ParseError::none : ParseError::count_mismatch;
}

/// {"topics": [n strings]}
inline ListParse parse_topics(std::string_view raw, std::size_t n, ParseMode mode = ParseMode::strict) {
  ListParse out;
  auto j = parse_json_response(raw, mode);
  if (!j.ok()) {
    out.error = j.error;
    return out;
  }
  if (!j.value.is_object()) {
    out.error = ParseError::wrong_shape;
    return out;
  }
  if (j.value.size() != 1 || !j.value.contains("topics")) {
    out.error = ParseError::wrong_key;
    return out;
  }
  if (!j.value["topics"].is_array()) {
    out.error = ParseError::wrong_shape;
    return out;
  }
  out.error = string_array(j.value["topics"], n, out.items);
  if (!out.ok()) out.items.clear();
  return out;
}

/// [n strings]
inline ListParse parse_scenarios(std::string_view raw, std::size_t n, ParseMode mode = ParseMode::strict) {
  ListParse out;
  auto j = parse_json_response(raw, mode);
  if (!j.ok()) {
    out.error = j.error;
    return out;
  }
  if (!j.value.is_array()) {
    out.error = ParseError::wrong_shape;
    return out;
  }
  out.error = string_array(j.value, n, out.items);
  if (!out.ok()) out.items.clear();
  return out;
}

inline ChatRequest topics_request(const DomainPath &d, std::size_t n, const std::string &tmpl = prompts::kTopics) {
  ChatRequest req;
  req.system_prompt = prompts::kGenericSystem;
  req.user_prompt =
      PromptTemplate(tmpl).render({{"domain_path", d.path_string()}, {"num_topics", std::to_string(n)}});
  return req;
}

inline ChatRequest scenarios_request(const DomainPath &d, const std::string &topic, std::size_t n,
                                     const std::string &tmpl = prompts::kScenarios) {
  ChatRequest req;
  req.system_prompt = prompts::kGenericSystem;
  req.user_prompt = PromptTemplate(tmpl).render(
      {{"domain_path", d.path_string()}, {"topic", topic}, {"num_scenarios", std::to_string(n)}});
  return req;
}

struct CellOutcome {
  std::vector<std::string> items;
  bool failed = false;
  std::string error;
  std::size_t attempts = 0;
  std::string last_raw;
};

template <typename Parser>
CellOutcome run_cell(ChatProvider &chat, const ChatRequest &req, std::size_t retries, Parser parse) {
  CellOutcome out;
  for (std::size_t attempt = 0; attempt <= retries; ++attempt) {
    ++out.attempts;
    try {
      out.last_raw = chat.complete(req);
    } catch (const Error &e) {
      out.error = "provider:" + std::string(to_string(e.kind()));
      continue;
    }
    auto parsed = parse(out.last_raw);
    if (parsed.ok()) {
      out.items = std::move(parsed.items);
      out.error.clear();
      return out;
    }
    out.error = "parse:" + std::string(to_string(parsed.error));
  }
  out.failed = true;
  return out;
}

inline CellOutcome generate_topics(const DomainPath &d, ChatProvider &chat, std::size_t n = 10,
                                   std::size_t retries = 3, ParseMode mode = ParseMode::strict) {
  return run_cell(chat, topics_request(d, n), retries, [&](const std::string &raw) { return parse_topics(raw, n, mode); });
}

inline CellOutcome generate_scenarios(const DomainPath &d, const std::string &topic, ChatProvider &chat,
                                      std::size_t n = 10, std::size_t retries = 3,
                                      ParseMode mode = ParseMode::strict) {
  return run_cell(chat, scenarios_request(d, topic, n), retries,
                  [&](const std::string &raw) { return parse_scenarios(raw, n, mode); });
}

/// Greedy first-wins dedup; returns indices of retained items in input order.
inline std::vector<std::size_t> dedup_items(const std::vector<std::string> &items, Embedder &embedder,
                                            double threshold = 0.85, std::size_t max_in_flight = 4) {
  std::vector<EmbeddingVector> vecs(items.size());
  parallel_for(items.size(), max_in_flight, [&](std::size_t i) { vecs[i] = embedder.embed(items[i]); });
  DedupIndex index(threshold);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (index.admit(vecs[i])) kept.push_back(i);
  return kept;
}

struct ExpansionConfig {
  std::size_t num_topics = 10;
  std::size_t num_scenarios = 10;
  std::size_t scenario_batches = 1;
  std::size_t retries = 3;
  double dedup_threshold = 0.85;
  bool dedup_topics = true;
  std::size_t max_in_flight = 4;
  ParseMode mode = ParseMode::strict;
};

struct FailedCell {
  std::string domain_path;
  std::optional<std::string> topic;
  std::string error;
  std::size_t attempts = 0;
  std::string last_raw;
};

inline void to_json(json &j, const FailedCell &f) {
  j = json{{"domain_path", f.domain_path},
           {"topic", f.topic ? json(*f.topic) : json(nullptr)},
           {"error", f.error},
           {"attempts", f.attempts},
           {"last_raw", f.last_raw}};
}

struct ExpansionResult {
  std::vector<Topic> topics;
  std::vector<Scenario> scenarios;
  std::vector<FailedCell> failed;
  std::size_t topics_dropped = 0;
  std::size_t scenarios_dropped = 0;
  std::size_t scenarios_generated = 0;
};

/// Topics per path, then scenarios per (path, topic); cells run in parallel,
/// output order follows taxonomy order.
inline ExpansionResult expand(const std::vector<DomainPath> &paths, ChatProvider &chat, Embedder &embedder,
                              const ExpansionConfig &cfg = {}) {
  ExpansionResult out;
  std::vector<CellOutcome> topic_cells(paths.size());
  parallel_for(paths.size(), cfg.max_in_flight, [&](std::size_t i) {
    topic_cells[i] = generate_topics(paths[i], chat, cfg.num_topics, cfg.retries, cfg.mode);
  });

  struct TopicRef {
    std::size_t path;
    Topic topic;
  };
  std::vector<TopicRef> refs;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto &cell = topic_cells[i];
    const auto ps = paths[i].path_string();
    if (cell.failed) {
      out.failed.push_back({ps, std::nullopt, cell.error, cell.attempts, cell.last_raw});
      continue;
    }
    std::vector<std::size_t> keep(cell.items.size());
    std::iota(keep.begin(), keep.end(), 0);
    if (cfg.dedup_topics) keep = dedup_items(cell.items, embedder, cfg.dedup_threshold, cfg.max_in_flight);
    out.topics_dropped += cell.items.size() - keep.size();
    std::set<std::string> ids;
    for (auto k : keep) {
      Topic t{topic_id(ps, cell.items[k]), ps, cell.items[k], "topics/" + std::to_string(cell.attempts)};
      if (!ids.insert(t.topic_id).second) continue;
      refs.push_back({i, t});
      out.topics.push_back(std::move(t));
    }
  }

  const std::size_t batches = std::max<std::size_t>(cfg.scenario_batches, 1);
  std::vector<CellOutcome> scen_cells(refs.size() * batches);
  parallel_for(scen_cells.size(), cfg.max_in_flight, [&](std::size_t c) {
    const auto &ref = refs[c / batches];
    scen_cells[c] = generate_scenarios(paths[ref.path], ref.topic.text, chat, cfg.num_scenarios, cfg.retries, cfg.mode);
  });

  for (std::size_t r = 0; r < refs.size(); ++r) {
    const auto &topic = refs[r].topic;
    std::vector<std::string> texts, batch_ids;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto &cell = scen_cells[r * batches + b];
      if (cell.failed) {
        out.failed.push_back({topic.domain_path, topic.text, cell.error, cell.attempts, cell.last_raw});
        continue;
      }
      for (const auto &s : cell.items) {
        texts.push_back(s);
        batch_ids.push_back("scenarios/" + std::to_string(b) + "/" + std::to_string(cell.attempts));
      }
    }
    out.scenarios_generated += texts.size();
    const auto keep = dedup_items(texts, embedder, cfg.dedup_threshold, cfg.max_in_flight);
    out.scenarios_dropped += texts.size() - keep.size();
    std::set<std::string> ids;
    for (auto k : keep) {
      Scenario s{scenario_id(topic.topic_id, texts[k]), topic.topic_id, topic.domain_path, topic.text, texts[k],
                 batch_ids[k]};
      if (ids.insert(s.scenario_id).second) out.scenarios.push_back(std::move(s));
    }
  }
  return out;
}

/// Every scenario's topic and path resolve.
inline std::vector<std::string> dangling_references(const std::vector<Topic> &topics,
                                                    const std::vector<Scenario> &scenarios,
                                                    const Taxonomy &taxonomy) {
  std::map<std::string, std::string> topic_path;
  for (const auto &t : topics) topic_path[t.topic_id] = t.domain_path;
  std::vector<std::string> out;
  for (const auto &t : topics)
    if (!taxonomy.find(t.domain_path)) out.push_back(t.topic_id + ": unknown domain path '" + t.domain_path + "'");
  for (const auto &s : scenarios) {
    auto it = topic_path.find(s.topic_id);
    if (it == topic_path.end())
      out.push_back(s.scenario_id + ": unknown topic " + s.topic_id);
    else if (it->second != s.domain_path)
      out.push_back(s.scenario_id + ": domain path differs from its topic");
  }
  return out;
}

} // namespace forge::scenario
