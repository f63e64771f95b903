#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "forge/embedding.hpp"
#include "forge/error.hpp"

namespace forge {

struct Decoding {
  double temperature = 0.7;
  int max_output_tokens = 2048;
};

/// Opaque audio payload reference. `speaker` is a label carried alongside the
/// payload (the bank speaker id for reference clips); real providers ignore it.
struct AudioClip {
  std::string uri;
  double duration = 0.0; // seconds
  int sample_rate = 16000;
  std::string speaker;
  std::string payload; // raw bytes when the provider returns them inline

  [[nodiscard]] bool valid() const { return duration > 0.0; }
};

struct ChatMessage {
  std::string role; // "user" | "assistant"
  std::string content;
  std::optional<AudioClip> audio; // audio-capable providers read this instead of content
};

struct ChatRequest {
  std::string system_prompt;
  std::string user_prompt;
  /// Multi-turn history for model-under-test calls. When non-empty it replaces
  /// user_prompt as the conversational payload.
  std::vector<ChatMessage> messages;
  Decoding decoding;

  void validate() const {
    require(!system_prompt.empty(), "ChatRequest: empty system prompt");
    require(!user_prompt.empty() || !messages.empty(), "ChatRequest: empty user prompt");
    require(decoding.max_output_tokens >= 1, "ChatRequest: max_output_tokens < 1");
    require(decoding.temperature >= 0.0, "ChatRequest: negative temperature");
  }
};

class ChatProvider {
public:
  virtual ~ChatProvider() = default;
  /// Raw completion text; parsing is the caller's job.
  virtual std::string complete(const ChatRequest &req) = 0;
};

class Embedder {
public:
  virtual ~Embedder() = default;
  /// Unit-normalized embedding of non-empty text.
  virtual EmbeddingVector embed(const std::string &text) = 0;
  [[nodiscard]] virtual std::size_t dim() const = 0;
};

class Transcriber {
public:
  virtual ~Transcriber() = default;
  virtual std::string transcribe(const AudioClip &audio, const std::string &language_hint) = 0;
};

class Synthesizer {
public:
  virtual ~Synthesizer() = default;
  virtual AudioClip synthesize(const std::string &text, const AudioClip &reference) = 0;
};

class SpeakerEmbedder {
public:
  virtual ~SpeakerEmbedder() = default;
  virtual EmbeddingVector speaker_embed(const AudioClip &audio) = 0;
};

class QualityPredictor {
public:
  virtual ~QualityPredictor() = default;
  /// MOS-like score in [1, 5].
  virtual double predict_quality(const AudioClip &audio) = 0;
};

/// Full set of services a pipeline run needs.
struct ProviderSet {
  std::shared_ptr<ChatProvider> chat;
  std::shared_ptr<Embedder> embedder;
  std::shared_ptr<Transcriber> transcriber;
  std::shared_ptr<Synthesizer> synthesizer;
  std::shared_ptr<SpeakerEmbedder> speaker_embedder;
  std::shared_ptr<QualityPredictor> quality;
  std::shared_ptr<ChatProvider> judge;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  /// Replaced in tests to avoid real sleeps.
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

/// Run fn, retrying only retryable error categories with exponential backoff.
template <typename Fn> auto with_retry(const RetryPolicy &policy, Fn &&fn) -> decltype(fn()) {
  auto delay = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const Error &e) {
      if (!e.retryable() || attempt >= policy.attempts) throw;
      policy.sleep(delay);
      delay *= 2;
    }
  }
}

/// Decorators adding bounded retry to any provider.
class RetryingChat final : public ChatProvider {
public:
  RetryingChat(std::shared_ptr<ChatProvider> inner, RetryPolicy policy = {})
      : inner_(std::move(inner)), policy_(std::move(policy)) {}
  std::string complete(const ChatRequest &req) override {
    return with_retry(policy_, [&] { return inner_->complete(req); });
  }

private:
  std::shared_ptr<ChatProvider> inner_;
  RetryPolicy policy_;
};

class RetryingEmbedder final : public Embedder {
public:
  RetryingEmbedder(std::shared_ptr<Embedder> inner, RetryPolicy policy = {})
      : inner_(std::move(inner)), policy_(std::move(policy)) {}
  EmbeddingVector embed(const std::string &text) override {
    return with_retry(policy_, [&] { return inner_->embed(text); });
  }
  [[nodiscard]] std::size_t dim() const override { return inner_->dim(); }

private:
  std::shared_ptr<Embedder> inner_;
  RetryPolicy policy_;
};

inline bool is_blank(const std::string &s) {
  return s.find_first_not_of(" \t\r\n\v\f") == std::string::npos;
}

} // namespace forge
