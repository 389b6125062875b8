#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

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

struct generation_config {
  int iterations = 30;
  double gamma = 0.0;  // candidate must beat the current model by more than this
  int eval_subset_size = 100;
  int k_neighbors = 10;
  int n_hard_examples = 20;
  int min_examples_after_trim = 4;
  double truncation_factor = 0.8;
  int max_truncation_rounds = 10;
  uint64_t seed = 0;
};

inline void validate_generation_config(const generation_config& g) {
  if (g.iterations < 0) fail(errc::config_error, "iterations must be non-negative");
  if (g.eval_subset_size < 1) fail(errc::config_error, "eval_subset_size must be positive");
  if (g.k_neighbors < 1) fail(errc::config_error, "k_neighbors must be positive");
  if (g.n_hard_examples < 1) fail(errc::config_error, "n_hard_examples must be positive");
  if (g.min_examples_after_trim < 1)
    fail(errc::config_error, "min_examples_after_trim must be positive");
  if (!(g.truncation_factor > 0.0 && g.truncation_factor < 1.0))
    fail(errc::config_error, "truncation_factor must lie strictly between 0 and 1");
  if (g.max_truncation_rounds < 1)
    fail(errc::config_error, "max_truncation_rounds must be positive");
}

inline ojson generation_section_json(const generation_config& g) {
  ojson doc = ojson::object();
  doc["iterations"] = g.iterations;
  doc["gamma"] = g.gamma;
  doc["eval_subset_size"] = g.eval_subset_size;
  doc["k_neighbors"] = g.k_neighbors;
  doc["n_hard_examples"] = g.n_hard_examples;
  doc["min_examples_after_trim"] = g.min_examples_after_trim;
  doc["truncation_factor"] = g.truncation_factor;
  doc["max_truncation_rounds"] = g.max_truncation_rounds;
  doc["seed"] = g.seed;
  return doc;
}

inline ojson fit_section_json(const fit_config& f) {
  ojson doc = ojson::object();
  doc["l2_penalty"] = f.l2_penalty;
  doc["max_epochs"] = f.max_epochs;
  doc["learning_rate"] = f.learning_rate;
  doc["convergence_tol"] = f.convergence_tol;
  return doc;
}

inline ojson measurement_section_json(const measurement_config& m) {
  ojson doc = ojson::object();
  doc["batch_size"] = m.batch_size;
  doc["max_in_flight"] = m.max_in_flight;
  doc["fallback_warn_rate"] = m.fallback_warn_rate;
  return doc;
}

inline ojson generation_config_json(const generation_config& g, const fit_config& f,
                                    const measurement_config& m) {
  ojson doc = ojson::object();
  doc["generation"] = generation_section_json(g);
  doc["fit"] = fit_section_json(f);
  doc["measurement"] = measurement_section_json(m);
  return doc;
}

// ---- neighborhood loss -----------------------------------------------------

// Per-example difficulty of the current concept space. Each example gets a kNN
// prediction from its k nearest neighbors (squared Euclidean distance over
// concept scores, self excluded, distance ties broken by ascending index); the
// pointwise error is squared error for regression and 0/1 for classification.
// The loss of an example is the mean pointwise error over itself plus its
// neighbors, so dense pockets of misprediction light up together.
inline std::vector<double> neighborhood_loss(const matrix& scores,
                                             const std::vector<label_value>& labels,
                                             task_kind kind, int k) {
  const size_t n = scores.rows;
  if (scores.cols == 0)
    fail(errc::empty_concept_space, "neighborhood loss needs at least one concept");
  if (labels.size() != n) fail(errc::length_mismatch, "scores and labels disagree");
  if (n < 2) fail(errc::data_error, "neighborhood loss needs at least two examples");
  const size_t kk = std::min(static_cast<size_t>(k), n - 1);

  std::vector<std::vector<size_t>> nbrs(n);
  std::vector<std::pair<double, size_t>> order;
  for (size_t i = 0; i < n; ++i) {
    order.clear();
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (size_t c = 0; c < scores.cols; ++c) {
        double diff = scores(i, c) - scores(j, c);
        d2 += diff * diff;
      }
      order.emplace_back(d2, j);
    }
    std::partial_sort(order.begin(), order.begin() + kk, order.end());
    nbrs[i].reserve(kk);
    for (size_t t = 0; t < kk; ++t) nbrs[i].push_back(order[t].second);
  }

  std::map<std::string, size_t> global;
  if (kind == task_kind::classification)
    for (const auto& l : labels) ++global[l.cls];

  std::vector<double> err(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    if (kind == task_kind::regression) {
      double pred = 0.0;
      for (size_t j : nbrs[i]) pred += labels[j].num;
      pred /= static_cast<double>(kk);
      double diff = pred - labels[i].num;
      err[i] = diff * diff;
    } else {
      std::map<std::string, size_t> votes;
      for (size_t j : nbrs[i]) ++votes[labels[j].cls];
      // Vote ties go to the class more common overall, then alphabetical.
      std::string best;
      size_t best_votes = 0;
      size_t best_global = 0;
      bool have = false;
      for (const auto& [cls, v] : votes) {
        size_t g = global[cls];
        bool wins = !have || v > best_votes ||
                    (v == best_votes && (g > best_global || (g == best_global && cls < best)));
        if (wins) {
          best = cls;
          best_votes = v;
          best_global = g;
          have = true;
        }
      }
      err[i] = best == labels[i].cls ? 0.0 : 1.0;
    }
  }

  std::vector<double> loss(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double acc = err[i];
    for (size_t j : nbrs[i]) acc += err[j];
    loss[i] = acc / static_cast<double>(1 + kk);
  }
  return loss;
}

// ---- hard example selection ------------------------------------------------

struct hard_selection {
  std::vector<size_t> rows;   // indices into train, in prompt order
  std::vector<example> view;  // the same examples, texts possibly shortened
  int truncation_rounds = 0;
};

// Picks prompt exhibits: a seeded uniform sample before any concept exists,
// afterwards the highest-loss examples (loss ties broken by ascending index).
// While the assembled prompt exceeds the budget, the lowest-index member of
// the most represented label is dropped; once only min_examples_after_trim
// remain, selection restarts from the full pick with every text shortened by
// another factor of truncation_factor. cost_of sees the shortened view and
// returns the token estimate for the whole prompt.
template <typename CostFn>
inline hard_selection select_hard_examples(const std::vector<example>& train,
                                           const std::vector<double>* losses,
                                           const generation_config& cfg, int budget_tokens,
                                           CostFn&& cost_of, rng& r) {
  if (train.empty()) fail(errc::data_error, "cannot pick hard examples from an empty train split");
  const size_t want = std::min(static_cast<size_t>(cfg.n_hard_examples), train.size());

  std::vector<size_t> base;
  if (losses == nullptr) {
    base = r.sample_indices(train.size(), want);
  } else {
    if (losses->size() != train.size()) fail(errc::length_mismatch, "losses and train disagree");
    std::vector<size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
      if ((*losses)[a] != (*losses)[b]) return (*losses)[a] > (*losses)[b];
      return a < b;
    });
    base.assign(idx.begin(), idx.begin() + want);
  }

  const size_t floor_size = std::min(static_cast<size_t>(cfg.min_examples_after_trim), base.size());
  int rounds = 0;
  std::vector<size_t> cur = base;
  for (;;) {
    std::vector<example> view;
    view.reserve(cur.size());
    for (size_t idx : cur) {
      example e = train[idx];
      size_t keep = e.text.size();
      for (int t = 0; t < rounds; ++t)
        keep = std::max<size_t>(1, static_cast<size_t>(static_cast<double>(keep) *
                                                       cfg.truncation_factor));
      if (keep < e.text.size()) e.text.resize(keep);
      view.push_back(std::move(e));
    }
    if (cost_of(view) <= budget_tokens)
      return {std::move(cur), std::move(view), rounds};
    if (cur.size() <= floor_size) {
      ++rounds;
      if (rounds > cfg.max_truncation_rounds)
        fail(errc::budget_unreachable, "hard example prompt cannot fit the context budget");
      cur = base;
      continue;
    }
    std::map<std::string, size_t> counts;
    for (size_t idx : cur) ++counts[train[idx].label.display()];
    size_t top = 0;
    for (const auto& [_, c] : counts) top = std::max(top, c);
    size_t drop_pos = cur.size();
    size_t drop_idx = train.size();
    for (size_t p = 0; p < cur.size(); ++p)
      if (counts[train[cur[p]].label.display()] == top && cur[p] < drop_idx) {
        drop_idx = cur[p];
        drop_pos = p;
      }
    cur.erase(cur.begin() + drop_pos);
  }
}

// ---- candidate parsing -----------------------------------------------------

// The generation prompt ends with "Definition: {", so the completion usually
// continues an already opened object. Scans every brace in the restored text
// and keeps the first object that validates as a concept.
inline std::optional<concept_def> parse_candidate(const std::string& completion) {
  std::string restored = "{";
  restored += completion;
  std::optional<concept_def> found;
  extract_first_json_if(restored, '{', [&](const ojson& o) {
    try {
      found = validate_concept(o);
      return true;
    } catch (const error&) {
      return false;
    }
  });
  return found;
}

// Refinement responses wrap the result under a "New Concept" key; some
// completions skip the wrapper and emit the concept directly. Either form is
// accepted, whichever valid one appears first.
inline std::optional<concept_def> parse_refined(const std::string& completion) {
  std::string restored = "{";
  restored += completion;
  std::optional<concept_def> found;
  extract_first_json_if(restored, '{', [&](const ojson& o) {
    if (!o.is_object()) return false;
    for (auto it = o.begin(); it != o.end(); ++it)
      if (norm_key(it.key()) == "new concept") {
        try {
          found = validate_concept(it.value());
          return true;
        } catch (const error&) {
          return false;
        }
      }
    try {
      found = validate_concept(o);
      return true;
    } catch (const error&) {
      return false;
    }
  });
  return found;
}

struct refine_result {
  concept_def def;
  bool refine_applied = false;  // a valid, different refinement was adopted
};

inline refine_result apply_refinement(const concept_def& original, const std::string& completion) {
  refine_result out{original, false};
  if (auto refined = parse_refined(completion)) {
    out.refine_applied = !concepts_equal(*refined, original);
    out.def = *refined;
  }
  return out;
}

// ---- fitting helpers -------------------------------------------------------

namespace detail {

inline matrix take_rows(const matrix& X, const std::vector<size_t>& rows) {
  matrix out(rows.size(), X.cols);
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < X.cols; ++j) out(i, j) = X(rows[i], j);
  return out;
}

inline matrix with_column(const matrix& X, const std::vector<double>& col) {
  if (col.size() != X.rows) fail(errc::dimension_mismatch, "column length does not match matrix");
  matrix out(X.rows, X.cols + 1);
  for (size_t i = 0; i < X.rows; ++i) {
    for (size_t j = 0; j < X.cols; ++j) out(i, j) = X(i, j);
    out(i, X.cols) = col[i];
  }
  return out;
}

}  // namespace detail

struct prepared_labels {
  std::vector<double> num;                // regression targets, train order
  std::vector<size_t> idx;                // classification targets, train order
  std::vector<std::string> classes;       // fixed class order, empty for regression
};

inline prepared_labels prepare_labels(const dataset& ds) {
  prepared_labels out;
  if (ds.kind == task_kind::classification) {
    out.classes = ds.class_order();
    for (const auto& e : ds.train) out.idx.push_back(ds.class_index(e.label.cls));
  } else {
    for (const auto& e : ds.train) out.num.push_back(e.label.num);
  }
  return out;
}

struct layer {
  std::vector<std::vector<double>> weights;
  std::vector<double> intercepts;
};

// X holds the rows listed in `rows`, already sliced; `rows` indexes labels.
inline layer fit_layer(const matrix& X, const prepared_labels& y, const std::vector<size_t>& rows,
                       task_kind kind, const fit_config& fc) {
  if (kind == task_kind::regression) {
    std::vector<double> yy;
    yy.reserve(rows.size());
    for (size_t r : rows) yy.push_back(y.num[r]);
    regression_fit f = fit_regression(X, yy, fc);
    return {{f.weights}, {f.intercept}};
  }
  std::vector<size_t> yy;
  yy.reserve(rows.size());
  for (size_t r : rows) yy.push_back(y.idx[r]);
  classification_fit f = fit_classification(X, yy, y.classes.size(), fc);
  return {f.weights, f.intercepts};
}

// Accuracy for classification, negative mean squared error for regression, so
// larger is always better.
inline double layer_metric(const layer& f, const matrix& X, const prepared_labels& y,
                           const std::vector<size_t>& rows, task_kind kind) {
  if (X.rows == 0) fail(errc::data_error, "cannot score an empty evaluation set");
  if (kind == task_kind::regression) {
    double acc = 0.0;
    for (size_t i = 0; i < X.rows; ++i) {
      double d = predict_regression(f.weights[0], f.intercepts[0], X.row(i)) - y.num[rows[i]];
      acc += d * d;
    }
    return -(acc / static_cast<double>(X.rows));
  }
  classification_fit cf{f.weights, f.intercepts};
  size_t hits = 0;
  for (size_t i = 0; i < X.rows; ++i)
    if (predict_class(cf, X.row(i)) == y.idx[rows[i]]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(X.rows);
}

// ---- the generation loop ---------------------------------------------------

struct run_options {
  std::string run_dir;     // empty keeps everything in memory
  bool resume = false;     // continue from the run directory's model.json
  std::ostream* log = nullptr;
};

inline void write_transcript(const std::string& path, const chat_request& req,
                             const std::string& completion) {
  std::string out;
  out += "=== system ===\n";
  out += req.system_text;
  out += "\n=== user ===\n";
  out += req.user_text;
  out += "\n=== response ===\n";
  out += completion;
  out += "\n";
  write_file(path, out);
}

// Grows the concept bottleneck one candidate per iteration: pick hard
// examples, ask for a concept, refine it, measure it on a working subset, and
// keep it only if the refit layer beats the current one by more than gamma.
// Every iteration leaves model.json and history.csv on disk, so an
// interrupted run resumes at history.size() + 1 with measurements replayed
// from the cache.
inline tbm_model run_generation(chat_client& client, const dataset& ds,
                                const generation_config& gcfg, const fit_config& fcfg,
                                const measurement_config& mcfg, const run_options& opt = {}) {
  validate_generation_config(gcfg);
  if (ds.train.empty()) fail(errc::data_error, "train split is empty");
  const size_t n = ds.train.size();

  namespace fs = std::filesystem;
  std::string model_path;
  std::string history_path;
  std::string prompts_dir;
  std::unique_ptr<measurement_cache> cache;
  if (opt.run_dir.empty()) {
    cache = std::make_unique<measurement_cache>();
  } else {
    fs::create_directories(fs::path(opt.run_dir) / "prompts");
    model_path = (fs::path(opt.run_dir) / "model.json").string();
    history_path = (fs::path(opt.run_dir) / "history.csv").string();
    prompts_dir = (fs::path(opt.run_dir) / "prompts").string();
    cache = std::make_unique<measurement_cache>((fs::path(opt.run_dir) / "cache.jsonl").string());
  }

  prepared_labels labels = prepare_labels(ds);
  std::vector<label_value> raw_labels;
  raw_labels.reserve(n);
  for (const auto& e : ds.train) raw_labels.push_back(e.label);
  std::vector<size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), size_t{0});

  tbm_model model;
  int start = 1;
  if (opt.resume && !model_path.empty() && fs::exists(model_path)) {
    model = load_model(read_file(model_path));
    if (model.kind != ds.kind) fail(errc::config_error, "resumed model disagrees on task kind");
    start = static_cast<int>(model.history.size()) + 1;
  } else {
    model.kind = ds.kind;
    model.classes = labels.classes;
  }
  model.config = generation_config_json(gcfg, fcfg, mcfg);

  score_matrix train_scores =
      measure_matrix(client, model.concepts, ds.train, cache.get(), mcfg, nullptr, opt.log);

  auto refit_retained = [&]() {
    layer f = fit_layer(train_scores.values, labels, all_rows, ds.kind, fcfg);
    model.weights = f.weights;
    model.intercepts = f.intercepts;
    return f;
  };
  layer retained = refit_retained();

  auto persist = [&]() {
    if (opt.run_dir.empty()) return;
    write_file(model_path, save_model(model));
    write_file(history_path, history_csv(model.history));
  };
  persist();

  for (int iter = start; iter <= gcfg.iterations; ++iter) {
    rng iter_rng = rng(gcfg.seed).derive("iter:" + std::to_string(iter));

    std::vector<size_t> eval_rows;
    if (static_cast<size_t>(gcfg.eval_subset_size) >= n) {
      eval_rows = all_rows;
    } else {
      rng er = iter_rng.derive("eval");
      eval_rows = er.sample_indices(n, static_cast<size_t>(gcfg.eval_subset_size));
    }

    std::vector<double> losses;
    const std::vector<double>* loss_ptr = nullptr;
    if (!model.concepts.empty()) {
      losses = neighborhood_loss(train_scores.values, raw_labels, ds.kind, gcfg.k_neighbors);
      loss_ptr = &losses;
    }
    rng hard_rng = iter_rng.derive("hard");
    auto cost_of = [&](const std::vector<example>& view) {
      return estimate_tokens(
          build_generate_prompt(ds, view, model.concepts, model.rejected_concepts));
    };
    hard_selection hard = select_hard_examples(ds.train, loss_ptr, gcfg,
                                               client.config().context_token_limit, cost_of,
                                               hard_rng);

    auto record_point = [&](const std::string& name, bool accepted, rejection why) {
      learning_curve_point p;
      p.iteration = iter;
      p.candidate_concept_name = name;
      p.accepted = accepted;
      p.rejection_reason = why;
      matrix Xe = detail::take_rows(train_scores.values, eval_rows);
      p.eval_metric_value = layer_metric(retained, Xe, labels, eval_rows, ds.kind);
      std::vector<double> imp = model.importances();
      for (size_t j = 0; j < model.concepts.size(); ++j)
        p.weight_snapshot.emplace_back(model.concepts[j].name, imp[j]);
      model.history.push_back(std::move(p));
      persist();
      if (opt.log)
        *opt.log << "[iter " << iter << "/" << gcfg.iterations << "] "
                 << (accepted ? "accepted" : "rejected") << " \"" << name << "\""
                 << (accepted ? "" : std::string(" (") + rejection_name(why) + ")")
                 << ", eval metric " << model.history.back().eval_metric_value << "\n";
    };

    chat_request gen_req =
        build_generate_prompt(ds, hard.view, model.concepts, model.rejected_concepts);
    std::string gen_completion = client.complete(gen_req);
    if (!prompts_dir.empty())
      write_transcript(prompts_dir + "/iter_" + std::to_string(iter) + "_generate.txt", gen_req,
                       gen_completion);

    std::optional<concept_def> candidate = parse_candidate(gen_completion);
    if (!candidate) {
      record_point("", false, rejection::invalid_json);
      continue;
    }
    auto already_accepted = [&](const concept_def& c) {
      for (const auto& a : model.concepts)
        if (norm_key(a.name) == norm_key(c.name)) return true;
      return false;
    };
    if (already_accepted(*candidate)) {
      record_point(candidate->name, false, rejection::duplicate_name);
      continue;
    }

    chat_request ref_req = build_refine_prompt(concept_prompt_json(*candidate, true));
    std::string ref_completion = client.complete(ref_req);
    if (!prompts_dir.empty())
      write_transcript(prompts_dir + "/iter_" + std::to_string(iter) + "_refine.txt", ref_req,
                       ref_completion);
    concept_def cand = apply_refinement(*candidate, ref_completion).def;
    if (already_accepted(cand)) {
      record_point(cand.name, false, rejection::duplicate_name);
      continue;
    }

    std::vector<size_t> fit_rows = eval_rows;
    fit_rows.insert(fit_rows.end(), hard.rows.begin(), hard.rows.end());
    std::sort(fit_rows.begin(), fit_rows.end());
    fit_rows.erase(std::unique(fit_rows.begin(), fit_rows.end()), fit_rows.end());
    std::vector<example> fit_examples;
    fit_examples.reserve(fit_rows.size());
    for (size_t r : fit_rows) fit_examples.push_back(ds.train[r]);

    auto cand_records = measure_concept(client, cand, fit_examples, cache.get(), mcfg, nullptr,
                                        opt.log);
    std::vector<double> cand_col(fit_rows.size());
    for (size_t i = 0; i < cand_records.size(); ++i)
      cand_col[i] = static_cast<double>(cand_records[i].score.value);

    matrix Xbase = detail::take_rows(train_scores.values, fit_rows);
    matrix Xcand = detail::with_column(Xbase, cand_col);
    layer base_fit = fit_layer(Xbase, labels, fit_rows, ds.kind, fcfg);
    layer cand_fit = fit_layer(Xcand, labels, fit_rows, ds.kind, fcfg);
    double base_score = layer_metric(base_fit, Xbase, labels, fit_rows, ds.kind);
    double cand_score = layer_metric(cand_fit, Xcand, labels, fit_rows, ds.kind);

    if (cand_score - base_score > gcfg.gamma) {
      auto full_records =
          measure_concept(client, cand, ds.train, cache.get(), mcfg, nullptr, opt.log);
      std::vector<double> full_col(n);
      for (size_t i = 0; i < full_records.size(); ++i)
        full_col[i] = static_cast<double>(full_records[i].score.value);
      model.concepts.push_back(cand);
      train_scores.col_names.push_back(cand.name);
      train_scores.values = detail::with_column(train_scores.values, full_col);
      retained = refit_retained();
      record_point(cand.name, true, rejection::none);
    } else {
      model.rejected_concepts.push_back(cand);
      record_point(cand.name, false, rejection::below_threshold);
    }
  }

  return model;
}

}  // namespace tbm
