#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "forge/providers.hpp"

namespace forge::http {

using nlohmann::json;

inline std::string base64_encode(const std::string &bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char *>(out.data()),
                                reinterpret_cast<const unsigned char *>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string base64_decode(const std::string &text) {
  if (text.empty()) return {};
  if (text.size() % 4 != 0) throw Error(ErrorKind::parse, "base64 payload has invalid length");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char *>(out.data()),
                                reinterpret_cast<const unsigned char *>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorKind::parse, "invalid base64 payload");
  std::size_t pad = 0;
  if (text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

/// One configured service endpoint. The key itself never appears in config;
/// api_key_env names the environment variable holding it.
struct Endpoint {
  std::string base_url; // scheme://host[:port]
  std::string path;
  std::string model;
  std::string api_key_env;
  double timeout_seconds = 60.0;
  std::size_t dim = 0; // expected embedding size, 0 = unchecked

  static Endpoint from_json(const json &j, const std::string &default_path) {
    Endpoint e;
    e.base_url = j.at("base_url").get<std::string>();
    e.path = j.value("path", default_path);
    e.model = j.value("model", "");
    e.api_key_env = j.value("api_key_env", "");
    e.timeout_seconds = j.value("timeout_seconds", 60.0);
    e.dim = j.value("dim", std::size_t{0});
    require(!e.base_url.empty(), "endpoint: empty base_url");
    return e;
  }
};

class JsonClient {
public:
  explicit JsonClient(Endpoint ep) : ep_(std::move(ep)) {
    if (!ep_.api_key_env.empty()) {
      const char *key = std::getenv(ep_.api_key_env.c_str());
      if (!key || !*key) throw Error(ErrorKind::config, "environment variable " + ep_.api_key_env + " is not set");
      key_ = key;
    }
  }

  [[nodiscard]] const Endpoint &endpoint() const { return ep_; }

  json post(const json &body) const {
    httplib::Client cli(ep_.base_url);
    const auto secs = static_cast<time_t>(ep_.timeout_seconds);
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);
    auto res = cli.Post(ep_.path, headers, body.dump(), "application/json");
    const std::string where = ep_.base_url + ep_.path;
    if (!res) throw Error(ErrorKind::transport, where + ": " + httplib::to_string(res.error()));
    if (res->status == 429) throw Error(ErrorKind::rate_limit, where + ": HTTP 429");
    if (res->status >= 500) throw Error(ErrorKind::transport, where + ": HTTP " + std::to_string(res->status));
    if (res->status == 401 || res->status == 403)
      throw Error(ErrorKind::config, where + ": HTTP " + std::to_string(res->status) + " (check credentials)");
    if (res->status >= 400)
      throw Error(ErrorKind::precondition, where + ": HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    auto j = json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::parse, where + ": response body is not JSON");
    return j;
  }

private:
  Endpoint ep_;
  std::string key_;
};

inline std::string clip_bytes(const AudioClip &clip) {
  if (!clip.payload.empty()) return clip.payload;
  std::ifstream in(clip.uri, std::ios::binary);
  if (!in) throw Error(ErrorKind::not_found, "cannot read audio at " + clip.uri);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// OpenAI-compatible chat completions. Audio user turns are sent as
/// input_audio content parts.
class OpenAiChat final : public ChatProvider {
public:
  explicit OpenAiChat(Endpoint ep) : client_(std::move(ep)) {}

  std::string complete(const ChatRequest &req) override {
    req.validate();
    json msgs = json::array({{{"role", "system"}, {"content", req.system_prompt}}});
    if (req.messages.empty()) {
      msgs.push_back({{"role", "user"}, {"content", req.user_prompt}});
    } else {
      for (const auto &m : req.messages) {
        if (m.audio) {
          json part{{"type", "input_audio"},
                    {"input_audio", {{"data", base64_encode(clip_bytes(*m.audio))}, {"format", "wav"}}}};
          msgs.push_back({{"role", m.role}, {"content", json::array({part})}});
        } else {
          msgs.push_back({{"role", m.role}, {"content", m.content}});
        }
      }
    }
    json body{{"messages", msgs},
              {"temperature", req.decoding.temperature},
              {"max_tokens", req.decoding.max_output_tokens}};
    if (!client_.endpoint().model.empty()) body["model"] = client_.endpoint().model;
    const auto r = client_.post(body);
    const auto choices = r.value("choices", json::array());
    if (!choices.is_array() || choices.empty()) throw Error(ErrorKind::parse, "chat response has no choices");
    const auto &content = choices[0].value("message", json::object()).value("content", json());
    if (!content.is_string() || is_blank(content.get<std::string>()))
      throw Error(ErrorKind::empty_completion, "chat response has empty content");
    return content.get<std::string>();
  }

private:
  JsonClient client_;
};

inline EmbeddingVector checked_embedding(const json &values, std::size_t dim, const std::string &what) {
  if (!values.is_array() || values.empty()) throw Error(ErrorKind::parse, what + ": missing embedding");
  std::vector<double> v;
  v.reserve(values.size());
  for (const auto &x : values) {
    if (!x.is_number()) throw Error(ErrorKind::parse, what + ": non-numeric embedding value");
    v.push_back(x.get<double>());
  }
  if (dim && v.size() != dim)
    throw Error(ErrorKind::schema, what + ": embedding has dimension " + std::to_string(v.size()) + ", expected " +
                                       std::to_string(dim));
  return EmbeddingVector(std::move(v)).normalized();
}

/// OpenAI-compatible /embeddings.
class OpenAiEmbedder final : public Embedder {
public:
  explicit OpenAiEmbedder(Endpoint ep) : client_(std::move(ep)) {}

  EmbeddingVector embed(const std::string &text) override {
    require(!is_blank(text), "embed: empty text");
    json body{{"input", text}};
    if (!client_.endpoint().model.empty()) body["model"] = client_.endpoint().model;
    const auto r = client_.post(body);
    const auto data = r.value("data", json::array());
    if (!data.is_array() || data.empty()) throw Error(ErrorKind::parse, "embedding response has no data");
    return checked_embedding(data[0].value("embedding", json()), client_.endpoint().dim, "embed");
  }
  [[nodiscard]] std::size_t dim() const override { return client_.endpoint().dim; }

private:
  JsonClient client_;
};

/// JSON audio services:
///   transcribe  {audio, language}            -> {text}
///   synthesize  {text, reference, speaker}   -> {audio, duration, sample_rate}
///   speaker     {audio}                      -> {embedding}
///   quality     {audio}                      -> {score}
/// Audio travels base64-encoded.
class HttpTranscriber final : public Transcriber {
public:
  explicit HttpTranscriber(Endpoint ep) : client_(std::move(ep)) {}
  std::string transcribe(const AudioClip &audio, const std::string &language_hint) override {
    require(audio.valid(), "transcribe: zero-duration clip");
    json body{{"audio", base64_encode(clip_bytes(audio))}, {"language", language_hint}};
    if (!client_.endpoint().model.empty()) body["model"] = client_.endpoint().model;
    const auto r = client_.post(body);
    if (!r.contains("text") || !r["text"].is_string()) throw Error(ErrorKind::parse, "transcribe: missing text");
    return r["text"].get<std::string>();
  }

private:
  JsonClient client_;
};

class HttpSynthesizer final : public Synthesizer {
public:
  explicit HttpSynthesizer(Endpoint ep) : client_(std::move(ep)) {}
  AudioClip synthesize(const std::string &text, const AudioClip &reference) override {
    require(!is_blank(text), "synthesize: empty text");
    require(reference.valid(), "synthesize: invalid reference clip");
    json body{{"text", text}, {"reference", base64_encode(clip_bytes(reference))}, {"speaker", reference.speaker}};
    if (!client_.endpoint().model.empty()) body["model"] = client_.endpoint().model;
    const auto r = client_.post(body);
    if (r.value("refused", false)) throw Error(ErrorKind::refusal, "synthesizer refused: " + r.value("reason", ""));
    AudioClip out;
    out.payload = base64_decode(r.value("audio", ""));
    out.duration = r.value("duration", 0.0);
    out.sample_rate = r.value("sample_rate", 16000);
    out.speaker = reference.speaker;
    if (out.payload.empty() || !out.valid()) throw Error(ErrorKind::parse, "synthesize: empty or zero-duration audio");
    return out;
  }

private:
  JsonClient client_;
};

class HttpSpeakerEmbedder final : public SpeakerEmbedder {
public:
  explicit HttpSpeakerEmbedder(Endpoint ep) : client_(std::move(ep)) {}
  EmbeddingVector speaker_embed(const AudioClip &audio) override {
    require(audio.valid(), "speaker_embed: zero-duration clip");
    const auto r = client_.post(json{{"audio", base64_encode(clip_bytes(audio))}});
    return checked_embedding(r.value("embedding", json()), client_.endpoint().dim, "speaker_embed");
  }

private:
  JsonClient client_;
};

class HttpQuality final : public QualityPredictor {
public:
  explicit HttpQuality(Endpoint ep) : client_(std::move(ep)) {}
  double predict_quality(const AudioClip &audio) override {
    require(audio.valid(), "predict_quality: zero-duration clip");
    const auto r = client_.post(json{{"audio", base64_encode(clip_bytes(audio))}});
    if (!r.contains("score") || !r["score"].is_number()) throw Error(ErrorKind::parse, "quality: missing score");
    return std::clamp(r["score"].get<double>(), 1.0, 5.0);
  }

private:
  JsonClient client_;
};

} // namespace forge::http
