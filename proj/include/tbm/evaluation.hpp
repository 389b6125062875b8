#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tbm/canonical_json.hpp"
#include "tbm/concept.hpp"
#include "tbm/dataset.hpp"
#include "tbm/errors.hpp"
#include "tbm/gateway.hpp"
#include "tbm/json_extract.hpp"
#include "tbm/matrix.hpp"
#include "tbm/measurement.hpp"
#include "tbm/model.hpp"
#include "tbm/predictor.hpp"
#include "tbm/prompts.hpp"
#include "tbm/util.hpp"

namespace tbm {

// ---- scalar metrics --------------------------------------------------------

inline double mse(const std::vector<double>& pred, const std::vector<double>& actual) {
  if (pred.size() != actual.size()) fail(errc::length_mismatch, "prediction count mismatch");
  if (pred.empty()) fail(errc::data_error, "cannot score an empty set");
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - actual[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

inline double accuracy(const std::vector<std::string>& pred,
                       const std::vector<std::string>& actual) {
  if (pred.size() != actual.size()) fail(errc::length_mismatch, "prediction count mismatch");
  if (pred.empty()) fail(errc::data_error, "cannot score an empty set");
  size_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == actual[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// Undefined correlations (fewer than two points, or a constant input) come
// back empty rather than NaN so reports can show an explicit blank.
inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail(errc::length_mismatch, "correlation input mismatch");
  const size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0;
  double my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

inline double pearson_or_fail(const std::vector<double>& x, const std::vector<double>& y) {
  auto r = pearson(x, y);
  if (!r) fail(errc::zero_variance, "correlation undefined for a constant input");
  return *r;
}

// Strict majority only; anything short of more than half the votes is
// "uncertain", including an empty vote set.
inline std::string majority_vote(const std::vector<std::string>& votes) {
  std::map<std::string, size_t> counts;
  for (const auto& v : votes) ++counts[v];
  for (const auto& [v, c] : counts)
    if (2 * c > votes.size()) return v;
  return "uncertain";
}

// ---- annotator agreement ---------------------------------------------------

struct concept_agreement {
  std::string concept_name;
  size_t shared = 0;          // examples measured by both sides
  double exact_match = 0.0;   // fraction of shared examples with equal scores
  std::optional<double> score_pearson;  // needs >= 2 shared and some variance
};

// Compares two measurement passes concept by concept. Concepts follow their
// first appearance in `a`; a concept with no shared example at all is an
// error, since silence would read as perfect agreement.
inline std::vector<concept_agreement> agreement_report(const std::vector<measurement_record>& a,
                                                       const std::vector<measurement_record>& b) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, int>> left;
  std::map<std::string, std::map<std::string, int>> right;
  for (const auto& r : a) {
    if (!left.count(r.concept_name)) order.push_back(r.concept_name);
    left[r.concept_name][r.example_id] = r.score.value;
  }
  for (const auto& r : b) right[r.concept_name][r.example_id] = r.score.value;

  std::vector<concept_agreement> out;
  for (const auto& name : order) {
    concept_agreement ca;
    ca.concept_name = name;
    std::vector<double> xs;
    std::vector<double> ys;
    size_t matches = 0;
    auto it = right.find(name);
    if (it != right.end()) {
      for (const auto& [id, v] : left[name]) {
        auto f = it->second.find(id);
        if (f == it->second.end()) continue;
        ++ca.shared;
        if (f->second == v) ++matches;
        xs.push_back(static_cast<double>(v));
        ys.push_back(static_cast<double>(f->second));
      }
    }
    if (ca.shared == 0)
      fail(errc::no_overlap, "no shared measurements for concept " + name);
    ca.exact_match = static_cast<double>(matches) / static_cast<double>(ca.shared);
    if (ca.shared >= 2) ca.score_pearson = pearson(xs, ys);
    out.push_back(std::move(ca));
  }
  return out;
}

inline ojson agreement_to_json(const std::vector<concept_agreement>& report) {
  ojson doc = ojson::object();
  doc["schema_version"] = kSchemaVersion;
  ojson arr = ojson::array();
  for (const auto& ca : report) {
    ojson row = ojson::object();
    row["concept_name"] = ca.concept_name;
    row["shared"] = ca.shared;
    row["exact_match"] = ca.exact_match;
    if (ca.score_pearson) row["pearson"] = *ca.score_pearson;
    else row["pearson"] = nullptr;
    arr.push_back(row);
  }
  doc["concepts"] = arr;
  return doc;
}

// ---- concept quality audit -------------------------------------------------

struct audit_rating {
  int redundancy = 0;
  int relevance = 0;
  int leakage = 0;
  int objectivity = 0;
  int difficulty = 0;
};

inline std::optional<audit_rating> parse_audit_rating(const std::string& completion) {
  auto obj = extract_object_continuation(completion);
  if (!obj || !obj->is_object()) return std::nullopt;
  audit_rating r;
  auto get = [&](const char* key, int lo, int hi, int& out) {
    for (auto it = obj->begin(); it != obj->end(); ++it) {
      if (norm_key(it.key()) != key) continue;
      if (!it.value().is_number_integer()) return false;
      int x = it.value().get<int>();
      if (x < lo || x > hi) return false;
      out = x;
      return true;
    }
    return false;
  };
  if (!get("redundancy", 1, 2, r.redundancy)) return std::nullopt;
  if (!get("relevance", 1, 2, r.relevance)) return std::nullopt;
  if (!get("leakage", 1, 2, r.leakage)) return std::nullopt;
  if (!get("objectivity", 1, 2, r.objectivity)) return std::nullopt;
  if (!get("difficulty", 1, 3, r.difficulty)) return std::nullopt;
  return r;
}

// Majority vote over integer ratings; ties resolve to the worse (larger)
// rating so disagreement never flatters a concept.
inline int majority_worse(const std::vector<int>& votes) {
  if (votes.empty()) fail(errc::data_error, "no votes to aggregate");
  std::map<int, size_t> counts;
  for (int v : votes) ++counts[v];
  int best = 0;
  size_t best_count = 0;
  for (const auto& [v, c] : counts)
    if (c > best_count || (c == best_count && v > best)) {
      best = v;
      best_count = c;
    }
  return best;
}

struct concept_audit {
  std::string concept_name;
  audit_rating rating;
  std::vector<std::string> flagged;  // binary aspects rated worse than 1
};

inline std::vector<concept_audit> quality_audit(chat_client& client, const dataset& meta,
                                                const std::vector<concept_def>& concepts,
                                                int n_raters = 3) {
  if (concepts.empty()) fail(errc::empty_concept_space, "no concepts to audit");
  if (n_raters < 1) fail(errc::config_error, "n_raters must be positive");
  std::vector<concept_audit> out;
  for (size_t i = 0; i < concepts.size(); ++i) {
    std::vector<concept_def> others;
    for (size_t j = 0; j < concepts.size(); ++j)
      if (j != i) others.push_back(concepts[j]);
    std::vector<audit_rating> samples;
    for (int r = 1; r <= n_raters; ++r) {
      chat_request req = build_audit_prompt(meta, concepts[i], others, r);
      if (auto parsed = parse_audit_rating(client.complete(req))) samples.push_back(*parsed);
    }
    if (samples.empty())
      fail(errc::data_error, "no usable audit ratings for concept " + concepts[i].name);
    concept_audit ca;
    ca.concept_name = concepts[i].name;
    auto tally = [&](int audit_rating::* member) {
      std::vector<int> votes;
      votes.reserve(samples.size());
      for (const auto& s : samples) votes.push_back(s.*member);
      return majority_worse(votes);
    };
    ca.rating.redundancy = tally(&audit_rating::redundancy);
    ca.rating.relevance = tally(&audit_rating::relevance);
    ca.rating.leakage = tally(&audit_rating::leakage);
    ca.rating.objectivity = tally(&audit_rating::objectivity);
    ca.rating.difficulty = tally(&audit_rating::difficulty);
    const std::pair<const char*, int> binary[] = {{"redundancy", ca.rating.redundancy},
                                                  {"relevance", ca.rating.relevance},
                                                  {"leakage", ca.rating.leakage},
                                                  {"objectivity", ca.rating.objectivity}};
    for (const auto& [aspect, value] : binary)
      if (value > 1) ca.flagged.push_back(aspect);
    out.push_back(std::move(ca));
  }
  return out;
}

inline ojson audit_to_json(const std::vector<concept_audit>& report) {
  ojson doc = ojson::object();
  doc["schema_version"] = kSchemaVersion;
  ojson arr = ojson::array();
  for (const auto& ca : report) {
    ojson row = ojson::object();
    row["concept_name"] = ca.concept_name;
    row["redundancy"] = ca.rating.redundancy;
    row["relevance"] = ca.rating.relevance;
    row["leakage"] = ca.rating.leakage;
    row["objectivity"] = ca.rating.objectivity;
    row["difficulty"] = ca.rating.difficulty;
    row["flagged"] = ca.flagged;
    arr.push_back(row);
  }
  doc["concepts"] = arr;
  return doc;
}

// ---- derived artifacts -----------------------------------------------------

// Pairwise score correlations as CSV. A blank cell means the correlation is
// undefined there (a constant column leaves even its own diagonal blank).
inline std::string concept_correlation_csv(const score_matrix& scores) {
  auto column = [&](size_t j) {
    std::vector<double> col(scores.values.rows);
    for (size_t i = 0; i < scores.values.rows; ++i) col[i] = scores.values(i, j);
    return col;
  };
  std::string csv = "concept";
  for (const auto& name : scores.col_names) csv += "," + csv_field(name);
  csv += "\n";
  for (size_t i = 0; i < scores.col_names.size(); ++i) {
    csv += csv_field(scores.col_names[i]);
    std::vector<double> xi = column(i);
    for (size_t j = 0; j < scores.col_names.size(); ++j) {
      csv += ",";
      if (auto r = pearson(xi, column(j))) csv += fmt_real(*r);
    }
    csv += "\n";
  }
  return csv;
}

// ---- model application -----------------------------------------------------

inline std::vector<double> predict_values(const tbm_model& m, const matrix& X) {
  if (m.kind != task_kind::regression)
    fail(errc::config_error, "model does not predict numeric values");
  std::vector<double> out(X.rows);
  for (size_t i = 0; i < X.rows; ++i)
    out[i] = predict_regression(m.weights.at(0), m.intercepts.at(0), X.row(i));
  return out;
}

inline std::vector<std::string> predict_classes(const tbm_model& m, const matrix& X) {
  if (m.kind != task_kind::classification)
    fail(errc::config_error, "model does not predict classes");
  classification_fit f = m.as_classification();
  std::vector<std::string> out(X.rows);
  for (size_t i = 0; i < X.rows; ++i) out[i] = m.classes.at(predict_class(f, X.row(i)));
  return out;
}

}  // namespace tbm
