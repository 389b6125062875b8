#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tbm/canonical_json.hpp"
#include "tbm/errors.hpp"
#include "tbm/util.hpp"

namespace tbm {

enum class task_kind { classification, regression };

inline const char* task_kind_name(task_kind t) {
  return t == task_kind::classification ? "classification" : "regression";
}

inline task_kind task_kind_from_name(const std::string& s) {
  if (s == "classification") return task_kind::classification;
  if (s == "regression") return task_kind::regression;
  fail(errc::data_error, "unknown task_kind: " + s);
}

// Label is a class name for classification, a numeric value for regression.
struct label_value {
  std::string cls;
  double num = 0.0;
  bool is_numeric = false;

  bool operator==(const label_value&) const = default;

  std::string display() const { return is_numeric ? fmt_real(num) : cls; }
};

struct example {
  std::string id;
  std::string text;
  label_value label;
};

struct dataset {
  std::string name;
  std::string description;
  // Ordered: for classification this fixes the class order used everywhere.
  std::vector<std::pair<std::string, std::string>> label_guide;
  task_kind kind = task_kind::classification;
  std::vector<example> train;
  std::vector<example> test;

  std::vector<std::string> class_order() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : label_guide) out.push_back(k);
    return out;
  }

  size_t class_index(const std::string& cls) const {
    for (size_t i = 0; i < label_guide.size(); ++i)
      if (label_guide[i].first == cls) return i;
    fail(errc::data_error, "label not in label_guide: " + cls);
  }
};

namespace detail {

inline std::vector<example> parse_examples_jsonl(std::istream& in, const std::string& origin,
                                                 size_t cap, bool require_label) {
  std::vector<example> out;
  std::string line;
  size_t lineno = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (cap > 0 && out.size() >= cap) break;
    ojson doc = ojson::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
      fail(errc::data_error, origin + ":" + std::to_string(lineno) + ": not a JSON object");
    if (!doc.contains("id") || !doc.contains("text"))
      fail(errc::data_error, origin + ":" + std::to_string(lineno) + ": needs id, text");
    if (require_label && !doc.contains("label"))
      fail(errc::data_error, origin + ":" + std::to_string(lineno) + ": needs id, text, label");
    example ex;
    ex.id = doc["id"].is_string() ? doc["id"].get<std::string>() : doc["id"].dump();
    ex.text = doc["text"].get<std::string>();
    if (doc.contains("label")) {
      const ojson& lab = doc["label"];
      if (lab.is_string()) {
        ex.label.cls = lab.get<std::string>();
      } else if (lab.is_number()) {
        ex.label.num = lab.get<double>();
        ex.label.is_numeric = true;
      } else {
        fail(errc::data_error, origin + ":" + std::to_string(lineno) + ": label must be string or number");
      }
    }
    if (!ids.insert(ex.id).second)
      fail(errc::data_error, origin + ":" + std::to_string(lineno) + ": duplicate id " + ex.id);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace detail

inline std::vector<example> load_examples_jsonl(const std::string& path, size_t cap = 0,
                                                bool require_label = true) {
  std::ifstream in(path);
  if (!in) fail(errc::data_error, "cannot open " + path);
  return detail::parse_examples_jsonl(in, path, cap, require_label);
}

inline void save_examples_jsonl(const std::vector<example>& v, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::data_error, "cannot write " + path);
  for (const auto& ex : v) {
    ojson doc = ojson::object();
    doc["id"] = ex.id;
    doc["text"] = ex.text;
    if (ex.label.is_numeric) doc["label"] = ex.label.num;
    else doc["label"] = ex.label.cls;
    out << canonical_line(doc) << "\n";
  }
}

inline ojson dataset_meta_to_json(const dataset& d) {
  ojson guide = ojson::object();
  for (const auto& [k, v] : d.label_guide) guide[k] = v;
  ojson doc = ojson::object();
  doc["schema_version"] = kSchemaVersion;
  doc["name"] = d.name;
  doc["description"] = d.description;
  doc["label_guide"] = guide;
  doc["task_kind"] = task_kind_name(d.kind);
  return doc;
}

inline void check_dataset(const dataset& d) {
  std::set<std::string> train_ids;
  for (const auto& ex : d.train) train_ids.insert(ex.id);
  for (const auto& ex : d.test)
    if (train_ids.count(ex.id))
      fail(errc::data_error, "example id in both splits: " + ex.id);
  for (const auto* split : {&d.train, &d.test}) {
    for (const auto& ex : *split) {
      if (d.kind == task_kind::regression) {
        if (!ex.label.is_numeric)
          fail(errc::data_error, "regression label not numeric for " + ex.id);
      } else {
        if (ex.label.is_numeric)
          fail(errc::data_error, "classification label not a string for " + ex.id);
        d.class_index(ex.label.cls);  // must appear in the guide
      }
    }
  }
}

// Loads sidecar metadata plus both JSONL splits; caps are applied in file
// order, mirroring how large corpora are subsampled.
inline dataset load_dataset(const std::string& meta_path, const std::string& train_path,
                            const std::string& test_path, size_t train_cap = 0,
                            size_t test_cap = 0) {
  std::ifstream in(meta_path);
  if (!in) fail(errc::data_error, "cannot open " + meta_path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ojson doc = ojson::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    fail(errc::data_error, meta_path + ": not a JSON object");
  if (!doc.contains("schema_version") || doc["schema_version"] != kSchemaVersion)
    fail(errc::schema_version_mismatch, meta_path + ": missing or unsupported schema_version");
  dataset d;
  for (const char* field : {"name", "description", "label_guide", "task_kind"})
    if (!doc.contains(field)) fail(errc::data_error, meta_path + ": missing " + std::string(field));
  d.name = doc["name"].get<std::string>();
  d.description = doc["description"].get<std::string>();
  d.kind = task_kind_from_name(doc["task_kind"].get<std::string>());
  for (auto it = doc["label_guide"].begin(); it != doc["label_guide"].end(); ++it)
    d.label_guide.emplace_back(it.key(), it.value().get<std::string>());
  if (!train_path.empty()) d.train = load_examples_jsonl(train_path, train_cap);
  if (!test_path.empty()) d.test = load_examples_jsonl(test_path, test_cap);
  check_dataset(d);
  return d;
}

}  // namespace tbm
