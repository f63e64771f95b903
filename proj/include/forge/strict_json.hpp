#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace forge {

enum class ParseError {
  none,
  empty,           // blank response
  fenced,          // markdown code fence around the payload
  extra_text,      // prose before or after an otherwise valid JSON value
  not_json,        // nothing parseable
  too_deep,        // nesting beyond the accepted depth
  wrong_shape,     // JSON, but not the expected object/array layout
  wrong_key,       // missing, unexpected or extra keys
  bad_role,        // role outside {user, assistant}
  bad_type,        // field has the wrong JSON type
  empty_content,   // a message or item with blank text
  non_alternating, // two consecutive messages from the same role
  too_short,       // fewer items than the contract allows
  over_length,     // more items than the contract allows
  count_mismatch,  // item count differs from the requested count
  out_of_range,    // numeric value outside its allowed range
};

constexpr std::string_view to_string(ParseError e) {
  switch (e) {
  case ParseError::none: return "none";
  case ParseError::empty: return "empty";
  case ParseError::fenced: return "fenced";
  case ParseError::extra_text: return "extra-text";
  case ParseError::not_json: return "not-json";
  case ParseError::too_deep: return "too-deep";
  case ParseError::wrong_shape: return "wrong-shape";
  case ParseError::wrong_key: return "wrong-key";
  case ParseError::bad_role: return "bad-role";
  case ParseError::bad_type: return "bad-type";
  case ParseError::empty_content: return "empty-content";
  case ParseError::non_alternating: return "non-alternating";
  case ParseError::too_short: return "too-short";
  case ParseError::over_length: return "over-length";
  case ParseError::count_mismatch: return "count-mismatch";
  case ParseError::out_of_range: return "out-of-range";
  }
  return "unknown";
}

enum class ParseMode {
  strict,  // the whole response must be exactly one JSON value
  lenient, // tolerate a surrounding markdown code fence
};

struct JsonParse {
  nlohmann::json value;
  ParseError error = ParseError::none;
  [[nodiscard]] bool ok() const { return error == ParseError::none; }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Bracket depth ignoring brackets inside strings. Guards the recursive
/// parser against pathological nesting.
inline std::size_t max_depth(std::string_view s) {
  std::size_t depth = 0, best = 0;
  bool in_str = false, esc = false;
  for (char c : s) {
    if (in_str) {
      if (esc) esc = false;
      else if (c == '\\') esc = true;
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    else if (c == '{' || c == '[') best = std::max(best, ++depth);
    else if ((c == '}' || c == ']') && depth > 0) --depth;
  }
  return best;
}

inline std::string_view strip_fence(std::string_view s) {
  if (s.rfind("```", 0) != 0) return s;
  auto nl = s.find('\n');
  if (nl == std::string_view::npos) return s;
  auto body = s.substr(nl + 1);
  auto close = body.rfind("```");
  if (close == std::string_view::npos) return s;
  return trim(body.substr(0, close));
}

inline bool parses(std::string_view s) {
  return !nlohmann::json::parse(s.begin(), s.end(), nullptr, false).is_discarded();
}

} // namespace detail

inline constexpr std::size_t kMaxJsonDepth = 32;

/// Parse a provider response that must consist of a single JSON value.
/// Never throws; failures are categorized.
inline JsonParse parse_json_response(std::string_view raw, ParseMode mode = ParseMode::strict) {
  JsonParse out;
  auto body = detail::trim(raw);
  if (body.empty()) {
    out.error = ParseError::empty;
    return out;
  }
  if (detail::max_depth(body) > kMaxJsonDepth) {
    out.error = ParseError::too_deep;
    return out;
  }
  const bool fenced = body.rfind("```", 0) == 0;
  if (fenced) {
    if (mode == ParseMode::strict) {
      out.error = ParseError::fenced;
      return out;
    }
    body = detail::strip_fence(body);
  }
  auto j = nlohmann::json::parse(body.begin(), body.end(), nullptr, false);
  if (!j.is_discarded()) {
    out.value = std::move(j);
    return out;
  }
  // Distinguish "valid JSON wrapped in prose" from garbage.
  const auto open = body.find_first_of("{[");
  if (open != std::string_view::npos) {
    const char close_ch = body[open] == '{' ? '}' : ']';
    const auto close = body.find_last_of(close_ch);
    if (close != std::string_view::npos && close > open &&
        (open > 0 || close + 1 < body.size()) && detail::parses(body.substr(open, close - open + 1))) {
      out.error = body.find("```") != std::string_view::npos ? ParseError::fenced : ParseError::extra_text;
      return out;
    }
  }
  out.error = ParseError::not_json;
  return out;
}

} // namespace forge
