#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "tbm/canonical_json.hpp"
#include "tbm/concept.hpp"
#include "tbm/dataset.hpp"
#include "tbm/errors.hpp"
#include "tbm/predictor.hpp"
#include "tbm/util.hpp"

namespace tbm {

enum class rejection { none, below_threshold, invalid_json, duplicate_name };

inline const char* rejection_name(rejection r) {
  switch (r) {
    case rejection::none: return "";
    case rejection::below_threshold: return "below_threshold";
    case rejection::invalid_json: return "invalid_json";
    case rejection::duplicate_name: return "duplicate_name";
  }
  return "";
}

inline rejection rejection_from_name(const std::string& s) {
  if (s.empty()) return rejection::none;
  if (s == "below_threshold") return rejection::below_threshold;
  if (s == "invalid_json") return rejection::invalid_json;
  if (s == "duplicate_name") return rejection::duplicate_name;
  fail(errc::corrupt_document, "unknown rejection reason: " + s);
}

// One generation iteration. rejection_reason is none exactly when accepted.
struct learning_curve_point {
  int iteration = 0;  // 1-based
  std::string candidate_concept_name;
  bool accepted = false;
  rejection rejection_reason = rejection::none;
  double eval_metric_value = 0.0;
  // Importance per accepted concept after this iteration, bottleneck order.
  std::vector<std::pair<std::string, double>> weight_snapshot;
};

struct tbm_model {
  std::vector<concept_def> concepts;
  // Regression uses weights[0] and intercepts[0]; classification one row and
  // intercept per class, class order fixed by the dataset label guide.
  std::vector<std::vector<double>> weights;
  std::vector<double> intercepts;
  std::vector<std::string> classes;  // empty for regression
  task_kind kind = task_kind::regression;
  std::vector<learning_curve_point> history;
  std::vector<concept_def> rejected_concepts;  // summarized in later prompts
  ojson config = ojson::object();

  std::vector<double> importances() const {
    if (kind == task_kind::regression) return importances_regression(weights.at(0));
    return importances_classification(weights);
  }

  classification_fit as_classification() const {
    classification_fit f;
    f.weights = weights;
    f.intercepts = intercepts;
    return f;
  }
};

inline ojson model_to_json(const tbm_model& m) {
  ojson doc = ojson::object();
  doc["schema_version"] = kSchemaVersion;
  ojson concepts = ojson::array();
  for (const auto& c : m.concepts) concepts.push_back(concept_to_json(c));
  doc["concepts"] = concepts;
  ojson weights = ojson::array();
  for (const auto& row : m.weights) {
    ojson r = ojson::array();
    for (double w : row) r.push_back(w);
    weights.push_back(r);
  }
  doc["weights"] = weights;
  ojson intercepts = ojson::array();
  for (double b : m.intercepts) intercepts.push_back(b);
  doc["intercepts"] = intercepts;
  doc["classes"] = m.classes;
  doc["task_kind"] = task_kind_name(m.kind);
  ojson history = ojson::array();
  for (const auto& p : m.history) {
    ojson h = ojson::object();
    h["iteration"] = p.iteration;
    h["candidate_concept_name"] = p.candidate_concept_name;
    h["accepted"] = p.accepted;
    if (p.accepted) h["rejection_reason"] = nullptr;
    else h["rejection_reason"] = rejection_name(p.rejection_reason);
    h["eval_metric_value"] = p.eval_metric_value;
    ojson snap = ojson::object();
    for (const auto& [name, v] : p.weight_snapshot) snap[name] = v;
    h["weight_snapshot"] = snap;
    history.push_back(h);
  }
  doc["history"] = history;
  ojson rejected = ojson::array();
  for (const auto& c : m.rejected_concepts) rejected.push_back(concept_to_json(c));
  doc["rejected_concepts"] = rejected;
  doc["config"] = m.config;
  return doc;
}

inline std::string save_model(const tbm_model& m) { return canonical_dump(model_to_json(m)); }

inline tbm_model load_model(const std::string& text) {
  ojson doc = ojson::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    fail(errc::corrupt_document, "model file is not a JSON object");
  if (!doc.contains("schema_version"))
    fail(errc::schema_version_mismatch, "model file missing schema_version");
  if (doc["schema_version"] != kSchemaVersion)
    fail(errc::schema_version_mismatch, "unsupported model schema_version");
  for (const char* field :
       {"concepts", "weights", "intercepts", "classes", "task_kind", "history"})
    if (!doc.contains(field))
      fail(errc::corrupt_document, std::string("model file missing ") + field);

  tbm_model m;
  for (const auto& c : doc["concepts"]) m.concepts.push_back(validate_concept(c));
  for (const auto& row : doc["weights"]) {
    std::vector<double> r;
    for (const auto& w : row) r.push_back(w.get<double>());
    if (r.size() != m.concepts.size())
      fail(errc::corrupt_document, "weight row length does not match concept count");
    m.weights.push_back(std::move(r));
  }
  for (const auto& b : doc["intercepts"]) m.intercepts.push_back(b.get<double>());
  for (const auto& c : doc["classes"]) m.classes.push_back(c.get<std::string>());
  m.kind = task_kind_from_name(doc["task_kind"].get<std::string>());
  if (m.weights.size() != m.intercepts.size() || m.weights.empty())
    fail(errc::corrupt_document, "weights and intercepts disagree");
  if (m.kind == task_kind::classification && m.classes.size() != m.weights.size())
    fail(errc::corrupt_document, "class list does not match weight rows");
  if (m.kind == task_kind::regression && m.weights.size() != 1)
    fail(errc::corrupt_document, "regression model must have exactly one weight row");

  for (const auto& h : doc["history"]) {
    learning_curve_point p;
    p.iteration = h.at("iteration").get<int>();
    p.candidate_concept_name = h.at("candidate_concept_name").get<std::string>();
    p.accepted = h.at("accepted").get<bool>();
    const ojson& rr = h.at("rejection_reason");
    p.rejection_reason = rr.is_null() ? rejection::none : rejection_from_name(rr.get<std::string>());
    if (p.accepted != (p.rejection_reason == rejection::none))
      fail(errc::corrupt_document, "rejection_reason inconsistent with accepted flag");
    p.eval_metric_value = h.at("eval_metric_value").get<double>();
    for (auto it = h.at("weight_snapshot").begin(); it != h.at("weight_snapshot").end(); ++it)
      p.weight_snapshot.emplace_back(it.key(), it.value().get<double>());
    m.history.push_back(std::move(p));
  }
  if (doc.contains("rejected_concepts"))
    for (const auto& c : doc["rejected_concepts"]) m.rejected_concepts.push_back(validate_concept(c));
  if (doc.contains("config")) m.config = doc["config"];
  return m;
}

// Learning curve rendered as CSV; the importance snapshot is a JSON object in
// the last column, quoted by csv_field.
inline std::string history_csv(const std::vector<learning_curve_point>& history) {
  std::string csv =
      "iteration,concept_name,accepted,rejection_reason,eval_metric,importance_snapshot\n";
  for (const auto& p : history) {
    ojson snap = ojson::object();
    for (const auto& [name, v] : p.weight_snapshot) snap[name] = v;
    csv += std::to_string(p.iteration) + "," + csv_field(p.candidate_concept_name) + ",";
    csv += p.accepted ? "true" : "false";
    csv += ",";
    csv += rejection_name(p.rejection_reason);
    csv += "," + fmt_real(p.eval_metric_value) + "," + csv_field(canonical_line(snap)) + "\n";
  }
  return csv;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::data_error, "cannot write " + path);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::data_error, "cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace tbm
