#pragma once

#include <fstream>
#include <future>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "tbm/canonical_json.hpp"
#include "tbm/concept.hpp"
#include "tbm/dataset.hpp"
#include "tbm/errors.hpp"
#include "tbm/gateway.hpp"
#include "tbm/json_extract.hpp"
#include "tbm/matrix.hpp"
#include "tbm/prompts.hpp"
#include "tbm/util.hpp"

namespace tbm {

constexpr int kSnippetWordLimit = 10;

// One measured (example, concept) cell. A record with parse_ok == false always
// carries score {0, parse_fallback} so downstream math never sees garbage.
struct measurement_record {
  std::string example_id;
  std::string concept_name;
  std::string answer;  // raw model answer, empty when parsing failed
  std::vector<std::string> snippets;
  std::string thoughts;
  concept_score score{0, provenance::parse_fallback};
  bool parse_ok = false;
  int overlong_snippets = 0;
};

inline ojson record_to_json(const measurement_record& r, const std::string& concept_hash) {
  ojson doc = ojson::object();
  doc["example_id"] = r.example_id;
  doc["concept_hash"] = concept_hash;
  doc["concept_name"] = r.concept_name;
  doc["answer"] = r.answer;
  doc["snippets"] = r.snippets;
  doc["thoughts"] = r.thoughts;
  doc["value"] = r.score.value;
  doc["provenance"] = provenance_name(r.score.origin);
  doc["parse_ok"] = r.parse_ok;
  doc["overlong_snippets"] = r.overlong_snippets;
  return doc;
}

inline measurement_record record_from_json(const ojson& doc, std::string* concept_hash) {
  measurement_record r;
  r.example_id = doc.at("example_id").get<std::string>();
  if (concept_hash) *concept_hash = doc.at("concept_hash").get<std::string>();
  r.concept_name = doc.at("concept_name").get<std::string>();
  r.answer = doc.at("answer").get<std::string>();
  for (const auto& s : doc.at("snippets")) r.snippets.push_back(s.get<std::string>());
  r.thoughts = doc.at("thoughts").get<std::string>();
  r.score.value = doc.at("value").get<int>();
  r.score.origin = provenance_from_name(doc.at("provenance").get<std::string>());
  r.parse_ok = doc.at("parse_ok").get<bool>();
  r.overlong_snippets = doc.at("overlong_snippets").get<int>();
  return r;
}

namespace detail {

inline const ojson* find_key(const ojson& obj, const char* wanted) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (norm_key(it.key()) == wanted) return &it.value();
  return nullptr;
}

}  // namespace detail

// Interprets one response item. Anything short of an object with a string
// answer is a fallback; snippets and thoughts are best-effort extras.
inline measurement_record parse_measurement_item(const ojson& item, const concept_def& c) {
  measurement_record r;
  r.concept_name = c.name;
  if (!item.is_object()) return r;
  const ojson* answer = detail::find_key(item, "answer");
  if (!answer || !answer->is_string()) return r;
  r.answer = answer->get<std::string>();
  r.score = resolve_score(c, r.answer);
  r.parse_ok = true;
  if (const ojson* snips = detail::find_key(item, "snippets")) {
    auto take = [&](const ojson& v) {
      if (!v.is_string()) return;
      std::string s = v.get<std::string>();
      if (word_count(s) > kSnippetWordLimit) ++r.overlong_snippets;
      r.snippets.push_back(std::move(s));
    };
    if (snips->is_object()) {
      for (const auto& [_, arr] : snips->items())
        if (arr.is_array())
          for (const auto& v : arr) take(v);
    } else if (snips->is_array()) {
      for (const auto& v : *snips) take(v);
    }
  }
  if (const ojson* thoughts = detail::find_key(item, "thoughts"))
    if (thoughts->is_string()) r.thoughts = thoughts->get<std::string>();
  return r;
}

// Aligns response items to texts by position. Missing or surplus items never
// throw: short arrays leave trailing fallbacks, long arrays are cut off.
inline std::vector<measurement_record> parse_measurement_response(const std::string& completion,
                                                                  const concept_def& c,
                                                                  size_t expected) {
  std::vector<measurement_record> out(expected);
  for (auto& r : out) r.concept_name = c.name;
  auto looks_like_records = [](const ojson& a) {
    return a.is_array() && (a.empty() || a.front().is_object());
  };
  auto arr = extract_array_continuation_if(completion, looks_like_records);
  if (!arr) return out;
  for (size_t i = 0; i < expected && i < arr->size(); ++i)
    out[i] = parse_measurement_item((*arr)[i], c);
  return out;
}

// Per-cell measurement store, keyed by (concept hash, example id) so cached
// scores survive batch regrouping and process restarts. All access happens on
// the coordinating thread; workers only produce records.
class measurement_cache {
 public:
  measurement_cache() = default;

  explicit measurement_cache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      ojson doc = ojson::parse(line, nullptr, false);
      if (doc.is_discarded() || !doc.is_object())
        fail(errc::corrupt_document,
             path_ + ":" + std::to_string(lineno) + ": unreadable cache line");
      std::string hash;
      measurement_record r = record_from_json(doc, &hash);
      map_[key(hash, r.example_id)] = std::move(r);
    }
  }

  const measurement_record* get(const std::string& concept_hash,
                                const std::string& example_id) const {
    auto it = map_.find(key(concept_hash, example_id));
    return it == map_.end() ? nullptr : &it->second;
  }

  void put(const std::string& concept_hash, const measurement_record& r) {
    std::string k = key(concept_hash, r.example_id);
    if (map_.count(k)) return;
    map_[k] = r;
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) fail(errc::data_error, "cannot append to " + path_);
    out << canonical_line(record_to_json(r, concept_hash)) << "\n";
  }

  size_t size() const { return map_.size(); }

 private:
  static std::string key(const std::string& hash, const std::string& id) {
    return hash + "\x1f" + id;
  }

  std::string path_;
  std::map<std::string, measurement_record> map_;
};

struct measurement_config {
  int batch_size = 4;
  int max_in_flight = 4;
  double fallback_warn_rate = 0.2;
};

struct measurement_stats {
  int backend_calls = 0;
  int fallbacks = 0;
  int cells = 0;
};

// Measures one concept over all examples, returning records in example order.
// Uncached cells are grouped into batches of batch_size in dataset order and
// dispatched in waves of max_in_flight; results merge and hit the cache in
// batch order, so reruns are deterministic regardless of thread scheduling.
inline std::vector<measurement_record> measure_concept(chat_client& client, const concept_def& c,
                                                       const std::vector<example>& examples,
                                                       measurement_cache* cache,
                                                       const measurement_config& cfg,
                                                       measurement_stats* stats = nullptr,
                                                       std::ostream* warnings = nullptr) {
  const std::string hash = concept_hash(c);
  std::vector<measurement_record> out(examples.size());
  std::vector<size_t> missing;
  for (size_t i = 0; i < examples.size(); ++i) {
    const measurement_record* hit = cache ? cache->get(hash, examples[i].id) : nullptr;
    if (hit) {
      out[i] = *hit;
    } else {
      missing.push_back(i);
    }
  }

  const size_t batch = cfg.batch_size < 1 ? 1 : static_cast<size_t>(cfg.batch_size);
  std::vector<std::vector<size_t>> batches;
  for (size_t p = 0; p < missing.size(); p += batch)
    batches.emplace_back(missing.begin() + p,
                         missing.begin() + std::min(missing.size(), p + batch));

  auto run_batch = [&](const std::vector<size_t>& rows) {
    std::vector<std::string> texts;
    for (size_t idx : rows) texts.push_back(examples[idx].text);
    chat_request req = build_measurement_prompt(c, texts, client.config().context_token_limit);
    std::string completion = client.complete(req);
    auto records = parse_measurement_response(completion, c, rows.size());
    for (size_t j = 0; j < records.size(); ++j) records[j].example_id = examples[rows[j]].id;
    return records;
  };

  std::vector<std::vector<measurement_record>> results(batches.size());
  const size_t in_flight = cfg.max_in_flight < 1 ? 1 : static_cast<size_t>(cfg.max_in_flight);
  for (size_t next = 0; next < batches.size();) {
    size_t wave = std::min(in_flight, batches.size() - next);
    std::vector<std::future<std::vector<measurement_record>>> pending;
    for (size_t w = 0; w < wave; ++w)
      pending.push_back(
          std::async(std::launch::async, [&, b = next + w] { return run_batch(batches[b]); }));
    for (size_t w = 0; w < wave; ++w) results[next + w] = pending[w].get();
    next += wave;
  }

  for (size_t b = 0; b < batches.size(); ++b)
    for (size_t j = 0; j < batches[b].size(); ++j) {
      out[batches[b][j]] = results[b][j];
      if (cache) cache->put(hash, results[b][j]);
    }

  int fallbacks = 0;
  for (const auto& r : out)
    if (r.score.origin == provenance::parse_fallback) ++fallbacks;
  if (stats) {
    stats->backend_calls += static_cast<int>(batches.size());
    stats->fallbacks += fallbacks;
    stats->cells += static_cast<int>(out.size());
  }
  if (warnings && !examples.empty() &&
      fallbacks > cfg.fallback_warn_rate * static_cast<double>(examples.size()))
    *warnings << "warning: concept \"" << c.name << "\" fell back on " << fallbacks << " of "
              << examples.size() << " examples\n";
  return out;
}

// Full score table for a concept set. Rows follow the example order, columns
// the concept order.
inline score_matrix measure_matrix(chat_client& client, const std::vector<concept_def>& concepts,
                                   const std::vector<example>& examples, measurement_cache* cache,
                                   const measurement_config& cfg,
                                   measurement_stats* stats = nullptr,
                                   std::ostream* warnings = nullptr) {
  score_matrix m;
  for (const auto& e : examples) m.row_ids.push_back(e.id);
  m.values = matrix(examples.size(), concepts.size());
  for (size_t j = 0; j < concepts.size(); ++j) {
    m.col_names.push_back(concepts[j].name);
    auto records = measure_concept(client, concepts[j], examples, cache, cfg, stats, warnings);
    for (size_t i = 0; i < records.size(); ++i)
      m.values(i, j) = static_cast<double>(records[i].score.value);
  }
  return m;
}

}  // namespace tbm
