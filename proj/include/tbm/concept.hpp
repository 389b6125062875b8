#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "tbm/canonical_json.hpp"
#include "tbm/errors.hpp"
#include "tbm/util.hpp"

namespace tbm {

constexpr int kMinScore = -3;
constexpr int kMaxScore = 3;
constexpr size_t kMinResponses = 2;
constexpr size_t kMaxResponses = 8;

// Mapping target for one response: an integer in [-3, 3], or the
// not-applicable sentinel (serialized as "na").
struct mapped_score {
  int value = 0;
  bool na = false;

  bool operator==(const mapped_score&) const = default;
};

enum class provenance { measured, parse_fallback, not_applicable };

inline const char* provenance_name(provenance p) {
  switch (p) {
    case provenance::measured: return "measured";
    case provenance::parse_fallback: return "parse_fallback";
    case provenance::not_applicable: return "not_applicable";
  }
  return "unknown";
}

inline provenance provenance_from_name(const std::string& s) {
  if (s == "measured") return provenance::measured;
  if (s == "parse_fallback") return provenance::parse_fallback;
  if (s == "not_applicable") return provenance::not_applicable;
  fail(errc::corrupt_document, "unknown provenance: " + s);
}

// value is 0 whenever provenance is parse_fallback or not_applicable.
struct concept_score {
  int value = 0;
  provenance origin = provenance::measured;

  bool operator==(const concept_score&) const = default;
};

struct concept_def {
  std::string name;
  std::string description;
  std::string question;
  std::vector<std::string> possible_responses;      // case-preserved, order fixed
  std::vector<std::string> response_guide;          // parallel to possible_responses
  std::vector<mapped_score> response_mapping;       // parallel to possible_responses

  const std::string* find_response(std::string_view answer) const {
    std::string key = norm_key(answer);
    for (const auto& r : possible_responses)
      if (norm_key(r) == key) return &r;
    return nullptr;
  }

  size_t response_index(const std::string& response) const {
    for (size_t i = 0; i < possible_responses.size(); ++i)
      if (&possible_responses[i] == &response || possible_responses[i] == response) return i;
    fail(errc::response_set_mismatch, "unknown response: " + response);
  }
};

inline ojson concept_to_json(const concept_def& c) {
  ojson guide = ojson::object();
  ojson mapping = ojson::object();
  for (size_t i = 0; i < c.possible_responses.size(); ++i) {
    guide[c.possible_responses[i]] = c.response_guide[i];
    if (c.response_mapping[i].na) mapping[c.possible_responses[i]] = "na";
    else mapping[c.possible_responses[i]] = c.response_mapping[i].value;
  }
  ojson out = ojson::object();
  out["name"] = c.name;
  out["description"] = c.description;
  out["question"] = c.question;
  out["possible_responses"] = c.possible_responses;
  out["response_guide"] = guide;
  out["response_mapping"] = mapping;
  return out;
}

inline bool concepts_equal(const concept_def& a, const concept_def& b) {
  return canonical_line(concept_to_json(a)) == canonical_line(concept_to_json(b));
}

// Stable content hash; the measurement cache keys on it so edits to any field
// invalidate cached scores.
inline std::string concept_hash(const concept_def& c) {
  return hex64(fnv1a64(canonical_line(concept_to_json(c))));
}

namespace detail {

// Generated concepts arrive with prompt-style keys ("Concept Name"); persisted
// ones use the canonical snake_case keys. Both are accepted on input.
inline const ojson* pick_field(const ojson& doc, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    auto it = doc.find(n);
    if (it != doc.end()) return &*it;
  }
  return nullptr;
}

inline const ojson& need_field(const ojson& doc, std::initializer_list<const char*> names) {
  const ojson* f = pick_field(doc, names);
  if (!f || f->is_null()) fail(errc::missing_field, std::string("missing field: ") + *names.begin());
  return *f;
}

inline mapped_score parse_mapping_value(const ojson& v, const std::string& response) {
  if (v.is_string()) {
    if (norm_key(v.get<std::string>()) == "na") return {0, true};
    fail(errc::invalid_score, "non-numeric mapping for '" + response + "': " + v.get<std::string>());
  }
  double d = 0;
  if (v.is_number_integer()) d = static_cast<double>(v.get<int64_t>());
  else if (v.is_number_float()) d = v.get<double>();
  else fail(errc::invalid_score, "mapping for '" + response + "' is not a number");
  int i = static_cast<int>(d);
  if (static_cast<double>(i) != d)
    fail(errc::invalid_score, "non-integer mapping for '" + response + "'");
  if (i < kMinScore || i > kMaxScore)
    fail(errc::invalid_score, "mapping for '" + response + "' outside [-3, 3]");
  return {i, false};
}

}  // namespace detail

// Parses and checks a raw concept document. Throws missing_field,
// response_set_mismatch, or invalid_score; never mutates input.
inline concept_def validate_concept(const ojson& doc) {
  if (!doc.is_object()) fail(errc::missing_field, "concept document is not an object");
  concept_def c;
  c.name = trim(detail::need_field(doc, {"name", "Concept Name"}).get<std::string>());
  c.description = detail::need_field(doc, {"description", "Concept Description"}).get<std::string>();
  c.question = detail::need_field(doc, {"question", "Concept Question"}).get<std::string>();
  if (c.name.empty()) fail(errc::missing_field, "empty concept name");

  const ojson& responses = detail::need_field(doc, {"possible_responses", "Possible Responses"});
  if (!responses.is_array()) fail(errc::response_set_mismatch, "possible_responses is not a list");
  std::map<std::string, size_t> seen;
  for (const auto& r : responses) {
    if (!r.is_string()) fail(errc::response_set_mismatch, "non-string response entry");
    std::string text = r.get<std::string>();
    std::string key = norm_key(text);
    if (key.empty()) fail(errc::response_set_mismatch, "blank response entry");
    if (seen.count(key)) fail(errc::response_set_mismatch, "duplicate response: " + text);
    seen[key] = c.possible_responses.size();
    c.possible_responses.push_back(text);
  }
  if (c.possible_responses.size() < kMinResponses)
    fail(errc::response_set_mismatch, "fewer than 2 possible responses");
  if (c.possible_responses.size() > kMaxResponses)
    fail(errc::response_set_mismatch, "more than 8 possible responses");

  const ojson& guide = detail::need_field(doc, {"response_guide", "Response Guide"});
  const ojson& mapping = detail::need_field(doc, {"response_mapping", "Response Mapping"});
  if (!guide.is_object() || !mapping.is_object())
    fail(errc::response_set_mismatch, "response guide/mapping is not an object");

  c.response_guide.assign(c.possible_responses.size(), "");
  c.response_mapping.assign(c.possible_responses.size(), {});
  std::vector<bool> guided(c.possible_responses.size(), false);
  std::vector<bool> mapped(c.possible_responses.size(), false);
  for (auto it = guide.begin(); it != guide.end(); ++it) {
    auto hit = seen.find(norm_key(it.key()));
    if (hit == seen.end())
      fail(errc::response_set_mismatch, "guide key not in possible_responses: " + it.key());
    if (!it.value().is_string()) fail(errc::response_set_mismatch, "non-string guide entry");
    c.response_guide[hit->second] = it.value().get<std::string>();
    guided[hit->second] = true;
  }
  for (auto it = mapping.begin(); it != mapping.end(); ++it) {
    auto hit = seen.find(norm_key(it.key()));
    if (hit == seen.end())
      fail(errc::response_set_mismatch, "mapping key not in possible_responses: " + it.key());
    c.response_mapping[hit->second] = detail::parse_mapping_value(it.value(), it.key());
    mapped[hit->second] = true;
  }
  for (size_t i = 0; i < c.possible_responses.size(); ++i) {
    if (!guided[i])
      fail(errc::response_set_mismatch, "response without guide entry: " + c.possible_responses[i]);
    if (!mapped[i])
      fail(errc::response_set_mismatch, "response without mapping entry: " + c.possible_responses[i]);
  }
  return c;
}

// Maps a raw answer string onto a numeric score. Total: unknown answers fall
// back to 0 instead of failing, so one bad cell never aborts a run.
inline concept_score resolve_score(const concept_def& c, std::string_view answer) {
  const std::string* r = c.find_response(answer);
  if (!r) return {0, provenance::parse_fallback};
  size_t i = c.response_index(*r);
  const mapped_score& m = c.response_mapping[i];
  if (m.na) return {0, provenance::not_applicable};
  if (m.value == 0 && norm_key(*r) == "not applicable") return {0, provenance::not_applicable};
  return {m.value, provenance::measured};
}

inline void save_concept(const concept_def& c, std::string& out) {
  ojson doc = ojson::object();
  doc["schema_version"] = kSchemaVersion;
  ojson body = concept_to_json(c);  // keep alive for items()
  for (auto& [k, v] : body.items()) doc[k] = v;
  out = canonical_dump(doc);
}

inline concept_def load_concept(const std::string& text) {
  ojson doc = ojson::parse(text, nullptr, false);
  if (doc.is_discarded()) fail(errc::corrupt_document, "concept file is not valid JSON");
  if (!doc.is_object() || !doc.contains("schema_version"))
    fail(errc::schema_version_mismatch, "concept file missing schema_version");
  if (doc["schema_version"] != kSchemaVersion)
    fail(errc::schema_version_mismatch, "unsupported concept schema_version");
  return validate_concept(doc);
}

}  // namespace tbm
