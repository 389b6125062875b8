#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tbm/canonical_json.hpp"
#include "tbm/concept.hpp"
#include "tbm/dataset.hpp"
#include "tbm/errors.hpp"
#include "tbm/evaluation.hpp"
#include "tbm/gateway.hpp"
#include "tbm/generation.hpp"
#include "tbm/http_backend.hpp"
#include "tbm/measurement.hpp"
#include "tbm/model.hpp"
#include "tbm/predictor.hpp"
#include "tbm/synthetic.hpp"

namespace tbm {

// ---- run configuration -----------------------------------------------------

struct run_config {
  std::string meta_path;
  std::string train_path;
  std::string test_path;
  size_t train_cap = 250;
  size_t test_cap = 250;
  backend_config backend;
  generation_config gen;
  fit_config fit;
  measurement_config meas;
};

namespace detail {

// Relative paths in a run config are resolved against the config file's own
// directory, so a bundle can be moved around as a unit.
inline std::string resolve_path(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path q(p);
  if (q.is_absolute()) return p;
  return (base / q).lexically_normal().string();
}

inline const ojson& config_section(const ojson& doc, const char* name) {
  static const ojson empty = ojson::object();
  auto it = doc.find(name);
  if (it == doc.end()) return empty;
  if (!it->is_object())
    fail(errc::config_error, std::string(name) + " section must be an object");
  return *it;
}

}  // namespace detail

inline run_config load_run_config(const std::string& path) {
  ojson doc = ojson::parse(read_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_object())
    fail(errc::config_error, path + ": not a JSON object");
  if (!doc.contains("schema_version") || doc["schema_version"] != kSchemaVersion)
    fail(errc::config_error, path + ": missing or unsupported schema_version");
  run_config rc;
  const auto base = std::filesystem::path(path).parent_path();

  {
    auto it = doc.find("dataset");
    if (it == doc.end() || !it->is_object())
      fail(errc::config_error, path + ": missing dataset section");
    rc.meta_path = detail::resolve_path(base, it->value("meta", ""));
    rc.train_path = detail::resolve_path(base, it->value("train", ""));
    rc.test_path = detail::resolve_path(base, it->value("test", ""));
    rc.train_cap = it->value("train_cap", 250);
    rc.test_cap = it->value("test_cap", 250);
    if (rc.meta_path.empty() || rc.train_path.empty())
      fail(errc::config_error, path + ": dataset section needs meta and train paths");
  }
  {
    const ojson& b = detail::config_section(doc, "backend");
    std::string kind = b.value("kind", "scripted");
    if (kind == "scripted") {
      rc.backend.kind = backend_kind::scripted;
    } else if (kind == "http") {
      rc.backend.kind = backend_kind::http;
    } else {
      fail(errc::config_error, "unknown backend kind: " + kind);
    }
    rc.backend.endpoint = b.value("endpoint", "");
    rc.backend.model = b.value("model", rc.backend.model);
    rc.backend.script_path = detail::resolve_path(base, b.value("script", ""));
    rc.backend.context_token_limit = b.value("context_token_limit", rc.backend.context_token_limit);
    rc.backend.max_retries = b.value("max_retries", rc.backend.max_retries);
    rc.backend.retry_backoff_ms = b.value("retry_backoff_ms", rc.backend.retry_backoff_ms);
    rc.backend.request_timeout_ms = b.value("request_timeout_ms", rc.backend.request_timeout_ms);
    rc.backend.max_in_flight = b.value("max_in_flight", rc.backend.max_in_flight);
  }
  {
    const ojson& g = detail::config_section(doc, "generation");
    rc.gen.iterations = g.value("iterations", rc.gen.iterations);
    rc.gen.gamma = g.value("gamma", rc.gen.gamma);
    rc.gen.eval_subset_size = g.value("eval_subset_size", rc.gen.eval_subset_size);
    rc.gen.k_neighbors = g.value("k_neighbors", rc.gen.k_neighbors);
    rc.gen.n_hard_examples = g.value("n_hard_examples", rc.gen.n_hard_examples);
    rc.gen.min_examples_after_trim =
        g.value("min_examples_after_trim", rc.gen.min_examples_after_trim);
    rc.gen.truncation_factor = g.value("truncation_factor", rc.gen.truncation_factor);
    rc.gen.max_truncation_rounds =
        g.value("max_truncation_rounds", rc.gen.max_truncation_rounds);
    rc.gen.seed = g.value("seed", rc.gen.seed);
  }
  {
    const ojson& f = detail::config_section(doc, "fit");
    rc.fit.l2_penalty = f.value("l2_penalty", rc.fit.l2_penalty);
    rc.fit.max_epochs = f.value("max_epochs", rc.fit.max_epochs);
    rc.fit.learning_rate = f.value("learning_rate", rc.fit.learning_rate);
    rc.fit.convergence_tol = f.value("convergence_tol", rc.fit.convergence_tol);
  }
  {
    const ojson& m = detail::config_section(doc, "measurement");
    rc.meas.batch_size = m.value("batch_size", rc.meas.batch_size);
    rc.meas.max_in_flight = m.value("max_in_flight", rc.meas.max_in_flight);
    rc.meas.fallback_warn_rate = m.value("fallback_warn_rate", rc.meas.fallback_warn_rate);
  }
  validate_generation_config(rc.gen);
  return rc;
}

inline ojson run_config_json(const run_config& rc) {
  ojson doc = ojson::object();
  doc["schema_version"] = kSchemaVersion;
  ojson ds = ojson::object();
  ds["meta"] = rc.meta_path;
  ds["train"] = rc.train_path;
  ds["test"] = rc.test_path;
  ds["train_cap"] = rc.train_cap;
  ds["test_cap"] = rc.test_cap;
  doc["dataset"] = ds;
  ojson b = ojson::object();
  b["kind"] = rc.backend.kind == backend_kind::http ? "http" : "scripted";
  b["endpoint"] = rc.backend.endpoint;
  b["model"] = rc.backend.model;
  b["script"] = rc.backend.script_path;
  b["context_token_limit"] = rc.backend.context_token_limit;
  b["max_retries"] = rc.backend.max_retries;
  b["retry_backoff_ms"] = rc.backend.retry_backoff_ms;
  b["request_timeout_ms"] = rc.backend.request_timeout_ms;
  b["max_in_flight"] = rc.backend.max_in_flight;
  doc["backend"] = b;
  doc["generation"] = generation_section_json(rc.gen);
  doc["fit"] = fit_section_json(rc.fit);
  doc["measurement"] = measurement_section_json(rc.meas);
  return doc;
}

inline std::shared_ptr<chat_backend> make_backend(const backend_config& bc) {
  if (bc.kind == backend_kind::scripted) {
    if (bc.script_path.empty())
      fail(errc::config_error, "scripted backend needs a script path");
    return std::make_shared<scripted_backend>(scripted_backend::load_rules(bc.script_path));
  }
  if (bc.endpoint.empty()) fail(errc::config_error, "http backend needs an endpoint");
  return std::make_shared<http_backend>(bc);
}

// ---- subcommands -----------------------------------------------------------

namespace detail {

inline void write_or_print(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  write_file(out_path, text);
}

inline std::vector<measurement_record> load_record_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::data_error, "cannot open " + path);
  std::vector<measurement_record> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    ojson doc = ojson::parse(line, nullptr, false);
    if (doc.is_discarded())
      fail(errc::corrupt_document, path + ":" + std::to_string(lineno) + ": bad JSON");
    out.push_back(record_from_json(doc, nullptr));
  }
  return out;
}

}  // namespace detail

inline int cmd_train(const run_config& rc, const std::string& out_dir, bool resume) {
  dataset ds = load_dataset(rc.meta_path, rc.train_path, rc.test_path, rc.train_cap, rc.test_cap);
  auto backend = make_backend(rc.backend);
  chat_client client(backend, rc.backend);

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  if (!resume) {
    // A fresh run invalidates model state but not measurements: the cache is
    // keyed per concept cell and stays correct across restarts.
    fs::remove(fs::path(out_dir) / "model.json");
    fs::remove(fs::path(out_dir) / "history.csv");
    fs::remove_all(fs::path(out_dir) / "prompts");
  }
  write_file((fs::path(out_dir) / "config.json").string(),
             canonical_dump(run_config_json(rc)));

  run_options opt;
  opt.run_dir = out_dir;
  opt.resume = resume;
  opt.log = &std::cerr;
  tbm_model model = run_generation(client, ds, rc.gen, rc.fit, rc.meas, opt);
  std::cerr << "done: " << model.concepts.size() << " concepts, model.json and history.csv in "
            << out_dir << "\n";
  return 0;
}

inline int cmd_predict(const run_config& rc, const std::string& model_path,
                       const std::string& input_path, const std::string& out_path) {
  tbm_model model = load_model(read_file(model_path));
  std::vector<example> inputs = load_examples_jsonl(input_path, 0, false);
  if (inputs.empty()) fail(errc::data_error, input_path + ": no examples");
  auto backend = make_backend(rc.backend);
  chat_client client(backend, rc.backend);
  score_matrix scores =
      measure_matrix(client, model.concepts, inputs, nullptr, rc.meas, nullptr, &std::cerr);

  std::string out;
  for (size_t i = 0; i < inputs.size(); ++i) {
    std::vector<double> x = scores.values.row(i);
    ojson doc = ojson::object();
    doc["id"] = inputs[i].id;
    size_t weight_row = 0;
    if (model.kind == task_kind::regression) {
      doc["prediction"] = predict_regression(model.weights[0], model.intercepts[0], x);
    } else {
      classification_fit f{model.weights, model.intercepts};
      weight_row = predict_class(f, x);
      doc["prediction"] = model.classes[weight_row];
    }
    // Additive local explanation: prediction (or the winning logit) equals
    // intercept plus the contribution sum.
    std::vector<double> con = contributions(model.weights[weight_row], x);
    ojson parts = ojson::object();
    for (size_t j = 0; j < con.size(); ++j) parts[model.concepts[j].name] = con[j];
    doc["intercept"] = model.intercepts[weight_row];
    doc["contributions"] = parts;
    out += canonical_line(doc) + "\n";
  }
  detail::write_or_print(out_path, out);
  return 0;
}

inline int cmd_eval(const run_config& rc, const std::string& model_path,
                    const std::string& curve_out, const std::string& correlation_out) {
  tbm_model model = load_model(read_file(model_path));
  dataset ds = load_dataset(rc.meta_path, rc.train_path, rc.test_path, rc.train_cap, rc.test_cap);
  if (ds.test.empty()) fail(errc::data_error, "test split is empty");
  if (model.kind != ds.kind) fail(errc::config_error, "model and dataset task kinds differ");
  auto backend = make_backend(rc.backend);
  chat_client client(backend, rc.backend);
  score_matrix scores =
      measure_matrix(client, model.concepts, ds.test, nullptr, rc.meas, nullptr, &std::cerr);

  ojson metrics = ojson::object();
  metrics["n_test"] = ds.test.size();
  metrics["n_concepts"] = model.concepts.size();
  if (model.kind == task_kind::regression) {
    std::vector<double> truth;
    for (const auto& e : ds.test) truth.push_back(e.label.num);
    std::vector<double> pred = predict_values(model, scores.values);
    metrics["mse"] = mse(pred, truth);
    auto r = pearson(pred, truth);
    if (r) metrics["pearson"] = *r;
    else metrics["pearson"] = nullptr;
  } else {
    std::vector<std::string> truth;
    for (const auto& e : ds.test) truth.push_back(e.label.cls);
    metrics["accuracy"] = accuracy(predict_classes(model, scores.values), truth);
  }
  std::cout << canonical_dump(metrics);

  if (!curve_out.empty()) write_file(curve_out, history_csv(model.history));
  if (!correlation_out.empty()) write_file(correlation_out, concept_correlation_csv(scores));
  return 0;
}

inline int cmd_agreement(const std::string& a_path, const std::string& b_path) {
  auto a = detail::load_record_file(a_path);
  auto b = detail::load_record_file(b_path);
  std::cout << canonical_dump(agreement_to_json(agreement_report(a, b)));
  return 0;
}

inline int cmd_audit(const run_config& rc, const std::string& model_path, int raters) {
  tbm_model model = load_model(read_file(model_path));
  dataset ds = load_dataset(rc.meta_path, "", "", 0, 0);
  auto backend = make_backend(rc.backend);
  chat_client client(backend, rc.backend);
  auto report = quality_audit(client, ds, model.concepts, raters);
  std::cout << canonical_dump(audit_to_json(report));
  return 0;
}

inline int cmd_synth(const std::string& preset, const std::string& spec_path,
                     const std::string& out_dir) {
  ojson spec;
  if (!spec_path.empty()) {
    spec = ojson::parse(read_file(spec_path), nullptr, false);
    if (spec.is_discarded() || !spec.is_object())
      fail(errc::config_error, spec_path + ": not a JSON object");
  } else if (preset == "classification") {
    spec = synthetic_classification_spec();
  } else if (preset == "regression") {
    spec = synthetic_regression_spec();
  } else {
    fail(errc::config_error, "synth needs --spec or --preset classification|regression");
  }
  ojson manifest = generate_synthetic(spec, out_dir);
  std::cerr << "bundle \"" << manifest["name"].get<std::string>() << "\" written to " << out_dir
            << "\n";
  return 0;
}

// ---- entry point -----------------------------------------------------------

inline int exit_code_for(errc c) {
  switch (c) {
    case errc::config_error:
      return 2;
    case errc::retries_exhausted:
    case errc::script_miss:
    case errc::budget_exceeded:
    case errc::budget_unreachable:
      return 3;
    default:
      return 4;
  }
}

namespace detail {

inline void print_error(const std::string& code_name, const std::string& message) {
  ojson err = ojson::object();
  err["error"] = code_name;
  err["message"] = message;
  std::cerr << canonical_line(err) << "\n";
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"text bottleneck modeling engine"};
  app.require_subcommand(1);

  std::string config_path, out_dir, model_path, input_path, out_path;
  std::string curve_out, correlation_out, a_path, b_path, preset, spec_path;
  std::string backend_override;
  bool resume = false;
  uint64_t seed = 0;
  double gamma = 0.0;
  int iterations = 0, batch_size = 0, raters = 3;

  auto* train = app.add_subcommand("train", "discover concepts and fit the model");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--out", out_dir, "run directory")->required();
  train->add_flag("--resume", resume, "continue from the run directory's model.json");
  auto* opt_seed = train->add_option("--seed", seed, "override generation seed");
  auto* opt_gamma = train->add_option("--gamma", gamma, "override admission margin");
  auto* opt_iters = train->add_option("--iterations", iterations, "override iteration count");
  auto* opt_batch = train->add_option("--batch-size", batch_size, "override measurement batch size");
  auto* opt_backend = train->add_option("--backend", backend_override, "override backend kind")
                          ->check(CLI::IsMember({"http", "scripted"}));

  auto* predict = app.add_subcommand("predict", "score new texts with a trained model");
  predict->add_option("--config", config_path, "run config JSON")->required();
  predict->add_option("--model", model_path, "model.json path")->required();
  predict->add_option("--input", input_path, "JSONL of {id, text} rows")->required();
  predict->add_option("--out", out_path, "output JSONL (default stdout)");

  auto* eval = app.add_subcommand("eval", "measure test metrics for a trained model");
  eval->add_option("--config", config_path, "run config JSON")->required();
  eval->add_option("--model", model_path, "model.json path")->required();
  eval->add_option("--curve-out", curve_out, "write the learning curve CSV here");
  eval->add_option("--correlation-out", correlation_out, "write concept correlations CSV here");

  auto* agreement = app.add_subcommand("agreement", "compare two measurement record files");
  agreement->add_option("--a", a_path, "first record JSONL")->required();
  agreement->add_option("--b", b_path, "second record JSONL")->required();

  auto* audit = app.add_subcommand("audit", "rate concept quality with the backend");
  audit->add_option("--config", config_path, "run config JSON")->required();
  audit->add_option("--model", model_path, "model.json path")->required();
  audit->add_option("--raters", raters, "independent ratings per concept");

  auto* synth = app.add_subcommand("synth", "generate a synthetic scripted bundle");
  synth->add_option("--preset", preset, "built-in spec")
      ->check(CLI::IsMember({"classification", "regression"}));
  synth->add_option("--spec", spec_path, "spec JSON file (overrides --preset)");
  synth->add_option("--out", out_dir, "bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    detail::print_error(errc_name(errc::config_error), e.what());
    return 2;
  }

  try {
    if (*train) {
      run_config rc = load_run_config(config_path);
      if (opt_seed->count()) rc.gen.seed = seed;
      if (opt_gamma->count()) rc.gen.gamma = gamma;
      if (opt_iters->count()) rc.gen.iterations = iterations;
      if (opt_batch->count()) rc.meas.batch_size = batch_size;
      if (opt_backend->count())
        rc.backend.kind =
            backend_override == "http" ? backend_kind::http : backend_kind::scripted;
      validate_generation_config(rc.gen);
      return cmd_train(rc, out_dir, resume);
    }
    if (*predict) return cmd_predict(load_run_config(config_path), model_path, input_path, out_path);
    if (*eval) return cmd_eval(load_run_config(config_path), model_path, curve_out, correlation_out);
    if (*agreement) return cmd_agreement(a_path, b_path);
    if (*audit) return cmd_audit(load_run_config(config_path), model_path, raters);
    if (*synth) return cmd_synth(preset, spec_path, out_dir);
  } catch (const error& e) {
    detail::print_error(errc_name(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    detail::print_error(errc_name(errc::data_error), e.what());
    return 4;
  }
  return 0;
}

}  // namespace tbm
