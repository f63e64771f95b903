#pragma once

#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/providers.hpp"
#include "forge/rng.hpp"
#include "forge/textmetrics.hpp"

namespace forge::mock {

/// Feature-hashing embedder: signed unigram and bigram counts plus one
/// whole-string feature, projected into `dim` buckets and normalized.
/// Texts sharing vocabulary get proportionally higher cosine, which makes it
/// a usable stand-in for a sentence encoder in dedup and matching tests.
class HashEmbedder final : public Embedder {
public:
  explicit HashEmbedder(std::size_t dim = 384, std::uint64_t seed = 0x5eedULL)
      : dim_(dim), seed_(seed) {
    require(dim >= 8, "HashEmbedder: dimension too small");
  }

  EmbeddingVector embed(const std::string &text) override {
    if (is_blank(text)) throw Error(ErrorKind::precondition, "embed: empty text");
    std::vector<double> v(dim_, 0.0);
    const auto toks = text::tokenize(text);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      add(v, "u\x1f" + toks[i], 1.0);
      if (i + 1 < toks.size()) add(v, "b\x1f" + toks[i] + "\x1f" + toks[i + 1], 0.5);
    }
    add(v, "s\x1f" + text, 0.25);
    return EmbeddingVector(std::move(v)).normalized();
  }

  [[nodiscard]] std::size_t dim() const override { return dim_; }

private:
  void add(std::vector<double> &v, const std::string &feature, double w) const {
    const std::uint64_t h = splitmix64(fnv1a(feature) ^ seed_);
    v[h % dim_] += (h >> 63) ? -w : w;
  }

  std::size_t dim_;
  std::uint64_t seed_;
};

/// Embedder returning fixed vectors for registered texts and delegating the
/// rest. Used to pin threshold boundaries exactly.
class TableEmbedder final : public Embedder {
public:
  TableEmbedder(std::size_t dim, std::shared_ptr<Embedder> fallback = nullptr)
      : dim_(dim), fallback_(std::move(fallback)) {}

  void set(const std::string &text, std::vector<double> values) {
    require(values.size() == dim_, "TableEmbedder: dimension mismatch");
    table_[text] = EmbeddingVector(std::move(values)).normalized();
  }

  EmbeddingVector embed(const std::string &text) override {
    if (is_blank(text)) throw Error(ErrorKind::precondition, "embed: empty text");
    if (auto it = table_.find(text); it != table_.end()) return it->second;
    if (!fallback_) throw Error(ErrorKind::not_found, "TableEmbedder: no vector for '" + text + "'");
    auto v = fallback_->embed(text);
    if (v.dim() != dim_) throw Error(ErrorKind::precondition, "embed: dimensionality mismatch");
    return v;
  }

  [[nodiscard]] std::size_t dim() const override { return dim_; }

private:
  std::size_t dim_;
  std::shared_ptr<Embedder> fallback_;
  std::map<std::string, EmbeddingVector> table_;
};

/// Chat mock backed by a callable.
class FunctionChat final : public ChatProvider {
public:
  using Fn = std::function<std::string(const ChatRequest &)>;
  explicit FunctionChat(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const ChatRequest &req) override {
    req.validate();
    auto out = fn_(req);
    if (out.empty()) throw Error(ErrorKind::empty_completion, "mock returned empty completion");
    return out;
  }

private:
  Fn fn_;
};

/// Chat mock driven by a JSONL script, one request/response pair per line:
///
///   {"system_prompt": "...", "user_prompt": "...", "response": "..."}
///   {"contains": "Persona Profiler", "response": "..."}
///   {"response": "..."}                      // unkeyed: served in order
///   {"contains": "x", "error": "timeout"}    // fault injection
///
/// Exact prompt matches win over substring matches, which win over unkeyed
/// lines. Several lines with the same key are served in sequence and the
/// last one repeats.
class ScriptedChat final : public ChatProvider {
public:
  struct Entry {
    std::string system_prompt, user_prompt, contains;
    std::string response;
    std::string error;
  };

  ScriptedChat() = default;
  explicit ScriptedChat(std::vector<Entry> entries) {
    for (auto &e : entries) add(std::move(e));
  }

  static ScriptedChat from_jsonl(std::istream &in) {
    ScriptedChat chat;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (is_blank(line)) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object())
        throw Error(ErrorKind::schema, "mock script line " + std::to_string(lineno) + " is not a JSON object");
      Entry e;
      e.system_prompt = j.value("system_prompt", "");
      e.user_prompt = j.value("user_prompt", "");
      e.contains = j.value("contains", "");
      e.response = j.value("response", "");
      e.error = j.value("error", "");
      if (e.response.empty() && e.error.empty())
        throw Error(ErrorKind::schema, "mock script line " + std::to_string(lineno) + " has neither response nor error");
      chat.add(std::move(e));
    }
    return chat;
  }

  static ScriptedChat from_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::config, "cannot open mock script " + path);
    return from_jsonl(in);
  }

  void add(Entry e) {
    if (!e.system_prompt.empty() || !e.user_prompt.empty())
      exact_[e.system_prompt + '\x1f' + e.user_prompt].entries.push_back(std::move(e));
    else if (!e.contains.empty()) {
      const auto key = e.contains;
      if (!contains_.count(key)) contains_order_.push_back(key);
      contains_[key].entries.push_back(std::move(e));
    } else
      sequential_.entries.push_back(std::move(e));
  }

  std::string complete(const ChatRequest &req) override {
    req.validate();
    std::lock_guard lock(*mu_);
    if (auto it = exact_.find(req.system_prompt + '\x1f' + req.user_prompt); it != exact_.end())
      return serve(it->second);
    const std::string haystack = req.system_prompt + "\n" + req.user_prompt;
    for (const auto &key : contains_order_)
      if (haystack.find(key) != std::string::npos) return serve(contains_[key]);
    if (!sequential_.entries.empty()) return serve(sequential_);
    throw Error(ErrorKind::not_found, "mock script has no response for this request");
  }

private:
  struct Queue {
    std::vector<Entry> entries;
    std::size_t cursor = 0;
  };

  static std::string serve(Queue &q) {
    const Entry &e = q.entries[std::min(q.cursor, q.entries.size() - 1)];
    ++q.cursor;
    if (e.error == "timeout" || e.error == "transport")
      throw Error(ErrorKind::transport, "scripted " + e.error);
    if (e.error == "rate_limit") throw Error(ErrorKind::rate_limit, "scripted rate limit");
    if (e.error == "empty" || (e.error.empty() && e.response.empty()))
      throw Error(ErrorKind::empty_completion, "scripted empty completion");
    if (!e.error.empty()) throw Error(ErrorKind::transport, "scripted error: " + e.error);
    return e.response;
  }

  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
  std::map<std::string, Queue> exact_;
  std::map<std::string, Queue> contains_;
  std::vector<std::string> contains_order_;
  Queue sequential_;
};

/// Inline payload format shared by the mock synthesizer and mock transcriber.
inline constexpr std::string_view kMockAudioMagic = "MOCKTTS\n";

inline std::string mock_audio_payload(const std::string &text) {
  return std::string(kMockAudioMagic) + text;
}

/// Read the clip payload (inline, else from the file at uri).
inline std::string load_payload(const AudioClip &clip) {
  if (!clip.payload.empty()) return clip.payload;
  std::ifstream in(clip.uri, std::ios::binary);
  if (!in) throw Error(ErrorKind::transport, "cannot read audio at " + clip.uri);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Returns the transcript embedded in mock payloads. With substitute_every = n,
/// every n-th token is replaced, giving a WER of 1/n on n-token texts.
class MockTranscriber final : public Transcriber {
public:
  explicit MockTranscriber(std::size_t substitute_every = 0,
                           std::set<std::string> languages = {"MSA", "Arabic", "English", "Gulf", "Egyptian",
                                                              "North African", "Levantine", "ar", "en"})
      : substitute_every_(substitute_every), languages_(std::move(languages)) {}

  std::string transcribe(const AudioClip &audio, const std::string &language_hint) override {
    require(audio.valid(), "transcribe: zero-duration clip");
    if (!languages_.empty() && !languages_.count(language_hint))
      throw Error(ErrorKind::precondition, "transcribe: unsupported language hint '" + language_hint + "'");
    const auto payload = load_payload(audio);
    if (payload.rfind(kMockAudioMagic, 0) != 0)
      throw Error(ErrorKind::parse, "mock transcriber: payload is not a mock clip: " + audio.uri);
    std::string text = payload.substr(kMockAudioMagic.size());
    if (substitute_every_ == 0) return text;
    std::istringstream ws(text);
    std::string word, out;
    std::size_t i = 0;
    while (ws >> word) {
      if (++i % substitute_every_ == 0) word = "zzz";
      if (!out.empty()) out += ' ';
      out += word;
    }
    return out;
  }

private:
  std::size_t substitute_every_;
  std::set<std::string> languages_;
};

/// Deterministic TTS stand-in: payload carries the text, duration scales with
/// character count, speaker label follows the reference.
class MockSynthesizer final : public Synthesizer {
public:
  using RefuseFn = std::function<bool(const std::string &)>;
  explicit MockSynthesizer(double seconds_per_char = 0.06, RefuseFn refuse = nullptr)
      : seconds_per_char_(seconds_per_char), refuse_(std::move(refuse)) {}

  AudioClip synthesize(const std::string &text, const AudioClip &reference) override {
    if (is_blank(text)) throw Error(ErrorKind::precondition, "synthesize: empty text");
    require(reference.valid(), "synthesize: invalid reference clip");
    if (refuse_ && refuse_(text)) throw Error(ErrorKind::refusal, "mock synthesizer refused text");
    AudioClip out;
    out.uri = "mock-tts://" + hex64(fnv1a(text + '\x1f' + reference.uri));
    const auto chars = utf8::decode(text).size();
    out.duration = std::max(0.5, seconds_per_char_ * static_cast<double>(chars));
    out.sample_rate = reference.sample_rate;
    out.speaker = reference.speaker;
    out.payload = mock_audio_payload(text);
    return out;
  }

private:
  double seconds_per_char_;
  RefuseFn refuse_;
};

/// Speaker embedding keyed on the clip's speaker label (uri when unlabeled).
class MockSpeakerEmbedder final : public SpeakerEmbedder {
public:
  explicit MockSpeakerEmbedder(std::size_t dim = 192) : dim_(dim) {}

  EmbeddingVector speaker_embed(const AudioClip &audio) override {
    require(audio.valid(), "speaker_embed: zero-duration clip");
    const std::string &key = audio.speaker.empty() ? audio.uri : audio.speaker;
    Rng rng(fnv1a(key));
    std::vector<double> v(dim_);
    for (auto &x : v) x = rng.uniform_real(-1.0, 1.0);
    return EmbeddingVector(std::move(v)).normalized();
  }

private:
  std::size_t dim_;
};

class ConstantQuality final : public QualityPredictor {
public:
  explicit ConstantQuality(double raw) : raw_(raw) {}
  double predict_quality(const AudioClip &audio) override {
    require(audio.valid(), "predict_quality: zero-duration clip");
    return std::clamp(raw_, 1.0, 5.0);
  }

private:
  double raw_;
};

} // namespace forge::mock
