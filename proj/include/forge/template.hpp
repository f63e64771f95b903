#pragma once

#include <cctype>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "forge/error.hpp"

namespace forge {

/// Placeholder substitution with Python str.format brace rules: `{name}` is a
/// slot, `{{` and `}}` are literal braces. Every slot must be bound and every
/// binding name must be a valid identifier.
class PromptTemplate {
public:
  explicit PromptTemplate(std::string text) : text_(std::move(text)) {}

  [[nodiscard]] const std::string &text() const { return text_; }

  /// Distinct slot names.
  [[nodiscard]] std::set<std::string> slots() const {
    std::set<std::string> out;
    scan([&](std::string_view name) { out.insert(std::string(name)); }, [](char) {});
    return out;
  }

  [[nodiscard]] std::string render(const std::map<std::string, std::string> &values) const {
    std::string out;
    std::string missing;
    scan(
        [&](std::string_view name) {
          auto it = values.find(std::string(name));
          if (it == values.end()) {
            if (missing.find("{" + std::string(name) + "}") == std::string::npos)
              missing += (missing.empty() ? "" : ", ") + ("{" + std::string(name) + "}");
          } else {
            out += it->second;
          }
        },
        [&](char c) { out.push_back(c); });
    if (!missing.empty()) throw Error(ErrorKind::precondition, "unfilled placeholder(s): " + missing);
    return out;
  }

private:
  template <typename OnSlot, typename OnChar> void scan(OnSlot on_slot, OnChar on_char) const {
    const std::string &s = text_;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const char c = s[i];
      if (c == '{') {
        if (i + 1 < s.size() && s[i + 1] == '{') {
          on_char('{');
          ++i;
          continue;
        }
        const auto close = s.find('}', i + 1);
        if (close == std::string::npos)
          throw Error(ErrorKind::precondition, "template: unmatched '{' at offset " + std::to_string(i));
        const std::string_view name(s.data() + i + 1, close - i - 1);
        if (!valid_name(name))
          throw Error(ErrorKind::precondition, "template: malformed placeholder '{" + std::string(name) + "}'");
        on_slot(name);
        i = close;
      } else if (c == '}') {
        if (i + 1 < s.size() && s[i + 1] == '}') ++i;
        on_char('}');
      } else {
        on_char(c);
      }
    }
  }

  static bool valid_name(std::string_view n) {
    if (n.empty()) return false;
    for (char c : n)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
  }

  std::string text_;
};

} // namespace forge
