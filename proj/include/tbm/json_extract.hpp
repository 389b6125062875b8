#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>

#include "tbm/util.hpp"

namespace tbm {

using ojson = nlohmann::ordered_json;

namespace detail {

// Scans from an opening bracket to its matching close, honoring strings and
// escapes. Returns one past the close, or npos when the text ends first.
inline size_t balanced_end(std::string_view s, size_t open) {
  char oc = s[open];
  char cc = oc == '[' ? ']' : '}';
  int depth = 0;
  bool in_str = false;
  bool esc = false;
  for (size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      if (esc) esc = false;
      else if (c == '\\') esc = true;
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    else if (c == oc) ++depth;
    else if (c == cc && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

inline std::string close_unbalanced(std::string_view s, size_t open) {
  // Truncated completion: append the closers the bracket stack still owes,
  // peeling one trailing token per failed parse. The peel order mirrors how
  // completions get cut mid-stream: separators, then a partial string or
  // literal, then a key left without its value.
  std::string out(s.substr(open));
  auto trim_tail = [](std::string& t) {
    while (!t.empty()) {
      char c = t.back();
      if (c == ',' || c == ':' || std::isspace(static_cast<unsigned char>(c))) t.pop_back();
      else break;
    }
  };
  for (int attempt = 0; attempt < 8 && !out.empty(); ++attempt) {
    trim_tail(out);
    std::string closers;
    bool in_str = false;
    bool esc = false;
    size_t str_start = std::string::npos;
    for (size_t i = 0; i < out.size(); ++i) {
      char c = out[i];
      if (in_str) {
        if (esc) esc = false;
        else if (c == '\\') esc = true;
        else if (c == '"') in_str = false;
        continue;
      }
      if (c == '"') {
        in_str = true;
        str_start = i;
      } else if (c == '[') {
        closers += ']';
      } else if (c == '{') {
        closers += '}';
      } else if ((c == ']' || c == '}') && !closers.empty()) {
        closers.pop_back();
      }
    }
    std::string candidate = out;
    if (in_str) candidate += '"';
    for (auto it = closers.rbegin(); it != closers.rend(); ++it) candidate += *it;
    if (!ojson::parse(candidate, nullptr, false).is_discarded()) return candidate;
    if (out.empty()) break;
    if (in_str || out.back() == '"') {
      // str_start is the opening quote of whichever string the scan saw
      // last; when the tail is a closed string that string ends the text.
      out.erase(str_start);
    } else {
      while (!out.empty()) {
        char c = out.back();
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '+' || c == '-')
          out.pop_back();
        else
          break;
      }
    }
  }
  return out;
}

}  // namespace detail

// First balanced JSON value of the wanted kind ('[' or '{') inside free-form
// completion text that also satisfies ok(). Tolerates code fences, prose,
// stop markers, and truncated tails. Returns nullopt when nothing qualifies.
template <typename Pred>
inline std::optional<ojson> extract_first_json_if(std::string_view text, char kind, Pred&& ok) {
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] != kind) continue;
    size_t end = detail::balanced_end(text, i);
    std::string body = end == std::string_view::npos
                           ? detail::close_unbalanced(text, i)
                           : std::string(text.substr(i, end - i));
    ojson parsed = ojson::parse(body, nullptr, false);
    if (!parsed.is_discarded() && ok(parsed)) return parsed;
    // Fall through and retry from the next bracket of this kind.
  }
  return std::nullopt;
}

inline std::optional<ojson> extract_first_json(std::string_view text, char kind) {
  return extract_first_json_if(text, kind, [](const ojson&) { return true; });
}

inline std::optional<ojson> extract_first_array(std::string_view text) {
  return extract_first_json(text, '[');
}

// For completions continuing a prompt that already ended with "{": scanning a
// copy with the brace restored covers both the continuation form and a
// self-contained object, since "{{" can never open valid JSON and the scan
// simply moves on to the next brace.
inline std::optional<ojson> extract_object_continuation(std::string_view text) {
  std::string restored = "{";
  restored += text;
  return extract_first_json(restored, '{');
}

// Same idea for prompts ending with "[", except a restored bracket CAN nest a
// self-contained array into [[...]], so the caller supplies a shape check and
// the raw text is preferred.
template <typename Pred>
inline std::optional<ojson> extract_array_continuation_if(std::string_view text, Pred&& ok) {
  if (auto v = extract_first_json_if(text, '[', ok)) return v;
  std::string restored = "[";
  restored += text;
  return extract_first_json_if(restored, '[', ok);
}

}  // namespace tbm
