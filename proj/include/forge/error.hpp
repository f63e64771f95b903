#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace forge {

enum class ErrorKind {
  transport,        // connection refused, timeout, 5xx
  rate_limit,       // 429 or provider throttling
  empty_completion, // provider answered with nothing
  precondition,     // caller violated an operation contract
  parse,            // provider output did not match the expected wire shape
  schema,           // input file rows or config do not match the declared schema
  not_found,        // unknown id / country / path
  config,           // missing configuration or credentials
  digest,           // artifact digest mismatch on resume
  budget_exhausted, // retries or attempt budget used up
  refusal,          // provider declined the request
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
  case ErrorKind::transport: return "transport";
  case ErrorKind::rate_limit: return "rate-limit";
  case ErrorKind::empty_completion: return "empty-completion";
  case ErrorKind::precondition: return "precondition";
  case ErrorKind::parse: return "parse";
  case ErrorKind::schema: return "schema";
  case ErrorKind::not_found: return "not-found";
  case ErrorKind::config: return "config";
  case ErrorKind::digest: return "digest";
  case ErrorKind::budget_exhausted: return "budget-exhausted";
  case ErrorKind::refusal: return "refusal";
  }
  return "unknown";
}

/// Single exception type for the toolkit. Callers branch on kind(), never on
/// the message text.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

  /// Transport failures and throttling are worth another attempt; everything
  /// else is deterministic and would fail again.
  [[nodiscard]] bool retryable() const noexcept {
    return kind_ == ErrorKind::transport || kind_ == ErrorKind::rate_limit;
  }

private:
  ErrorKind kind_;
};

inline void require(bool cond, const std::string &what) {
  if (!cond) throw Error(ErrorKind::precondition, what);
}

} // namespace forge
