#pragma once

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "tbm/canonical_json.hpp"
#include "tbm/concept.hpp"
#include "tbm/dataset.hpp"
#include "tbm/errors.hpp"
#include "tbm/model.hpp"
#include "tbm/prompts.hpp"
#include "tbm/util.hpp"

namespace tbm {

// A synthetic concept is observable through one keyword: texts that express
// the concept contain the keyword sentence, all other texts avoid the keyword
// entirely. Irrelevant concepts keep a keyword that no generated text uses.
struct synthetic_concept {
  concept_def def;
  std::string keyword;
  std::string present_response;
  std::string absent_response;
  std::string present_text;  // the sentence inserted when the concept holds
  bool relevant = true;
  int present_score = 0;
  int absent_score = 0;
};

namespace detail {

inline std::string regex_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (std::strchr("\\^$.|?*+()[]{}", c) != nullptr) out += '\\';
    out += c;
  }
  return out;
}

inline synthetic_concept parse_synthetic_concept(const ojson& doc) {
  if (!doc.is_object() || !doc.contains("definition"))
    fail(errc::config_error, "synthetic concept needs a definition");
  synthetic_concept sc;
  sc.def = validate_concept(doc["definition"]);
  sc.keyword = doc.value("keyword", std::string());
  sc.present_response = doc.value("present_response", std::string());
  sc.absent_response = doc.value("absent_response", std::string());
  sc.present_text = doc.value("present_text", std::string());
  sc.relevant = doc.value("relevant", true);
  if (sc.keyword.empty())
    fail(errc::config_error, "synthetic concept needs a keyword: " + sc.def.name);
  for (const std::string* resp : {&sc.present_response, &sc.absent_response})
    if (sc.def.find_response(*resp) == nullptr)
      fail(errc::config_error,
           "response \"" + *resp + "\" is not in the response set of " + sc.def.name);
  if (sc.relevant && !contains(sc.present_text, sc.keyword))
    fail(errc::config_error, "present_text must contain the keyword: " + sc.keyword);
  // The keyword may only ever appear in generated texts, never in the
  // definition, or measurement rules would fire on the prompt itself.
  for (const std::string* field : {&sc.def.name, &sc.def.description, &sc.def.question})
    if (contains(*field, sc.keyword))
      fail(errc::config_error, "keyword leaks into the definition of " + sc.def.name);
  auto score_of = [&](const std::string& resp) {
    return sc.def.response_mapping[sc.def.response_index(*sc.def.find_response(resp))].value;
  };
  sc.present_score = score_of(sc.present_response);
  sc.absent_score = score_of(sc.absent_response);
  return sc;
}

inline std::string measurement_reply(const synthetic_concept& sc, bool present) {
  ojson rec = ojson::object();
  rec["text"] = "Text 1";
  ojson snips = ojson::object();
  for (const auto& resp : sc.def.possible_responses) {
    ojson arr = ojson::array();
    if (present && resp == sc.present_response) arr.push_back(sc.keyword);
    snips[resp] = arr;
  }
  rec["snippets"] = snips;
  rec["thoughts"] = present ? "The relevant sentence appears in the text."
                            : "No relevant sentence appears in the text.";
  rec["answer"] = present ? sc.present_response : sc.absent_response;
  ojson arr = ojson::array();
  arr.push_back(rec);
  return canonical_line(arr);
}

}  // namespace detail

// Expands a synthetic spec into a runnable bundle: dataset.json, train.jsonl,
// test.jsonl, rules.jsonl for the scripted backend, manifest.json with the
// ground truth, and run_config.json wired to drive the whole pipeline. Every
// byte is a pure function of the spec.
inline ojson generate_synthetic(const ojson& spec, const std::string& out_dir) {
  if (!spec.is_object()) fail(errc::config_error, "synthetic spec must be a JSON object");
  if (spec.value("schema_version", 0) != kSchemaVersion)
    fail(errc::schema_version_mismatch, "unsupported synthetic spec schema_version");
  const std::string mode = spec.value("mode", std::string());
  const bool keyword_mode = mode == "keyword_patterns";
  if (!keyword_mode && mode != "linear_scores")
    fail(errc::config_error, "unknown synthetic mode: " + mode);

  dataset ds;
  ds.name = spec.value("name", std::string());
  ds.description = spec.value("description", std::string());
  ds.kind = keyword_mode ? task_kind::classification : task_kind::regression;
  if (ds.name.empty()) fail(errc::config_error, "synthetic spec needs a name");
  if (keyword_mode) {
    if (!spec.contains("label_guide") || !spec["label_guide"].is_object())
      fail(errc::config_error, "keyword_patterns spec needs a label_guide");
    for (auto it = spec["label_guide"].begin(); it != spec["label_guide"].end(); ++it)
      ds.label_guide.emplace_back(it.key(), it.value().get<std::string>());
  }

  std::vector<synthetic_concept> pool;
  for (const auto& c : spec.at("concepts")) pool.push_back(detail::parse_synthetic_concept(c));
  if (pool.empty()) fail(errc::config_error, "synthetic spec needs concepts");
  std::vector<size_t> active;  // concepts that actually shape texts and labels
  for (size_t j = 0; j < pool.size(); ++j)
    if (pool[j].relevant) active.push_back(j);
  if (active.empty()) fail(errc::config_error, "synthetic spec needs at least one relevant concept");

  std::vector<std::string> fillers;
  for (const auto& f : spec.at("fillers")) fillers.push_back(f.get<std::string>());
  if (fillers.empty()) fail(errc::config_error, "synthetic spec needs filler sentences");
  for (const auto& f : fillers)
    for (const auto& sc : pool)
      if (contains(f, sc.keyword))
        fail(errc::config_error, "keyword leaks into a filler sentence: " + sc.keyword);

  std::vector<double> rule_weights;
  double threshold = 0.0;
  double intercept = 0.0;
  std::string positive_label;
  std::string negative_label;
  if (keyword_mode) {
    for (const auto& w : spec.at("label_weights")) rule_weights.push_back(w.get<double>());
    threshold = spec.at("label_threshold").get<double>();
    positive_label = spec.at("positive_label").get<std::string>();
    negative_label = spec.at("negative_label").get<std::string>();
    for (const auto& lab : {positive_label, negative_label})
      ds.class_index(lab);  // both must appear in the guide
  } else {
    for (const auto& w : spec.at("true_weights")) rule_weights.push_back(w.get<double>());
    intercept = spec.value("intercept", 0.0);
  }
  if (rule_weights.size() != active.size())
    fail(errc::config_error, "label weights must cover the relevant concepts");

  const uint64_t seed = spec.value("seed", uint64_t{0});

  // Bit patterns over the active concepts, expanded to counts, shuffled, and
  // rendered into texts. Pattern keys are bit strings in active order.
  auto build_split = [&](const char* split_name, const char* id_prefix) {
    std::vector<std::string> patterns;
    if (keyword_mode) {
      const ojson& counts = spec.at(std::string(split_name) + "_counts");
      for (auto it = counts.begin(); it != counts.end(); ++it) {
        const std::string& key = it.key();
        if (key.size() != active.size() ||
            key.find_first_not_of("01") != std::string::npos)
          fail(errc::config_error, "bad pattern key: " + key);
        int n = it.value().get<int>();
        for (int i = 0; i < n; ++i) patterns.push_back(key);
      }
    } else {
      int per_combo = spec.at(std::string("combo_") + split_name + "_count").get<int>();
      for (size_t combo = 0; combo < (size_t{1} << active.size()); ++combo) {
        std::string key(active.size(), '0');
        for (size_t b = 0; b < active.size(); ++b)
          if (combo & (size_t{1} << b)) key[b] = '1';
        for (int i = 0; i < per_combo; ++i) patterns.push_back(key);
      }
    }

    rng shuffle_rng = rng(seed).derive(std::string("shuffle-") + split_name);
    for (size_t i = patterns.size(); i > 1; --i)
      std::swap(patterns[i - 1], patterns[shuffle_rng.below(i)]);

    rng fill_rng = rng(seed).derive(std::string("fill-") + split_name);
    std::vector<example> out;
    char id[32];
    for (size_t i = 0; i < patterns.size(); ++i) {
      std::snprintf(id, sizeof id, "%s-%04zu", id_prefix, i + 1);
      example ex;
      ex.id = id;
      ex.text = fillers[fill_rng.below(fillers.size())];
      double dot = 0.0;
      for (size_t b = 0; b < active.size(); ++b) {
        const synthetic_concept& sc = pool[active[b]];
        bool present = patterns[i][b] == '1';
        if (present) ex.text += " " + sc.present_text;
        dot += rule_weights[b] * (present ? sc.present_score : sc.absent_score);
      }
      if (keyword_mode) {
        ex.label.cls = dot >= threshold ? positive_label : negative_label;
      } else {
        ex.label.num = intercept + dot;
        ex.label.is_numeric = true;
      }
      out.push_back(std::move(ex));
    }
    return out;
  };
  ds.train = build_split("train", "train");
  ds.test = build_split("test", "test");

  // Scripted pool: generation turn t yields concept t, refinements echo the
  // candidate, measurements answer per text from the keyword.
  std::vector<ojson> rules;
  for (size_t t = 0; t < pool.size(); ++t) {
    ojson r = ojson::object();
    r["match_on"] = "generation_turn";
    r["turn_index"] = static_cast<int>(t + 1);
    r["response_text"] = concept_prompt_json(pool[t].def, true);
    rules.push_back(std::move(r));
  }
  for (const auto& sc : pool) {
    ojson r = ojson::object();
    r["match_on"] = "generation_turn";
    r["turn_index"] = 0;
    r["text_pattern"] = detail::regex_escape(sc.def.name);
    r["response_text"] = concept_prompt_json(sc.def, true);
    rules.push_back(std::move(r));
  }
  for (const auto& sc : pool) {
    ojson hit = ojson::object();
    hit["match_on"] = "concept_question";
    hit["concept_name"] = sc.def.name;
    hit["text_pattern"] = "Text 1:[^\\n]*" + detail::regex_escape(sc.keyword);
    hit["response_text"] = detail::measurement_reply(sc, true);
    rules.push_back(std::move(hit));
    ojson miss = ojson::object();
    miss["match_on"] = "concept_question";
    miss["concept_name"] = sc.def.name;
    miss["response_text"] = detail::measurement_reply(sc, false);
    rules.push_back(std::move(miss));
  }

  ojson manifest = ojson::object();
  manifest["schema_version"] = kSchemaVersion;
  manifest["name"] = ds.name;
  manifest["mode"] = mode;
  manifest["task_kind"] = task_kind_name(ds.kind);
  {
    ojson arr = ojson::array();
    for (const auto& sc : pool) {
      ojson row = ojson::object();
      row["name"] = sc.def.name;
      row["keyword"] = sc.keyword;
      row["relevant"] = sc.relevant;
      row["present_response"] = sc.present_response;
      row["absent_response"] = sc.absent_response;
      row["present_score"] = sc.present_score;
      row["absent_score"] = sc.absent_score;
      arr.push_back(std::move(row));
    }
    manifest["concepts"] = arr;
  }
  {
    ojson rule = ojson::object();
    if (keyword_mode) {
      rule["label_weights"] = rule_weights;
      rule["label_threshold"] = threshold;
      rule["positive_label"] = positive_label;
      rule["negative_label"] = negative_label;
    } else {
      rule["true_weights"] = rule_weights;
      rule["intercept"] = intercept;
    }
    manifest["label_rule"] = rule;
  }
  {
    // Ground-truth mapped scores per example, one column per pool concept.
    ojson scores = ojson::object();
    auto score_rows = [&](const std::vector<example>& split) {
      for (const auto& ex : split) {
        ojson row = ojson::array();
        for (const auto& sc : pool) {
          bool present = sc.relevant && contains(ex.text, sc.keyword);
          row.push_back(present ? sc.present_score : sc.absent_score);
        }
        scores[ex.id] = row;
      }
    };
    score_rows(ds.train);
    score_rows(ds.test);
    manifest["true_scores"] = scores;
  }
  manifest["train_count"] = ds.train.size();
  manifest["test_count"] = ds.test.size();

  ojson rc = ojson::object();
  rc["schema_version"] = kSchemaVersion;
  {
    ojson d = ojson::object();
    d["meta"] = "dataset.json";
    d["train"] = "train.jsonl";
    d["test"] = "test.jsonl";
    rc["dataset"] = d;
  }
  {
    ojson b = ojson::object();
    b["kind"] = "scripted";
    b["script"] = "rules.jsonl";
    b["context_token_limit"] = 8000;
    rc["backend"] = b;
  }
  {
    ojson g = ojson::object();
    g["iterations"] = pool.size();
    g["gamma"] = 0.0;
    g["eval_subset_size"] = ds.train.size();
    g["k_neighbors"] = 10;
    g["n_hard_examples"] = 20;
    g["min_examples_after_trim"] = 4;
    g["truncation_factor"] = 0.8;
    g["max_truncation_rounds"] = 10;
    g["seed"] = seed;
    rc["generation"] = g;
  }
  {
    ojson f = ojson::object();
    f["l2_penalty"] = keyword_mode ? 1e-4 : 1e-6;
    f["max_epochs"] = 2000;
    f["learning_rate"] = 0.1;
    f["convergence_tol"] = 1e-8;
    rc["fit"] = f;
  }
  {
    // One text per request so the scripted keyword rules see exactly one
    // "Text 1:" line.
    ojson m = ojson::object();
    m["batch_size"] = 1;
    m["max_in_flight"] = 4;
    m["fallback_warn_rate"] = 0.2;
    rc["measurement"] = m;
  }

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "spec.json").string(), canonical_dump(spec));
  write_file((fs::path(out_dir) / "dataset.json").string(), canonical_dump(dataset_meta_to_json(ds)));
  save_examples_jsonl(ds.train, (fs::path(out_dir) / "train.jsonl").string());
  save_examples_jsonl(ds.test, (fs::path(out_dir) / "test.jsonl").string());
  {
    std::string lines;
    for (const auto& r : rules) lines += canonical_line(r) + "\n";
    write_file((fs::path(out_dir) / "rules.jsonl").string(), lines);
  }
  write_file((fs::path(out_dir) / "manifest.json").string(), canonical_dump(manifest));
  write_file((fs::path(out_dir) / "run_config.json").string(), canonical_dump(rc));
  return manifest;
}

// ---- built-in presets ------------------------------------------------------

namespace detail {

inline ojson synth_def(const char* name, const char* desc, const char* question,
                       std::vector<std::pair<const char*, const char*>> guide,
                       std::vector<std::pair<const char*, int>> mapping) {
  ojson def = ojson::object();
  def["name"] = name;
  def["description"] = desc;
  def["question"] = question;
  ojson responses = ojson::array();
  ojson g = ojson::object();
  ojson m = ojson::object();
  for (const auto& [resp, text] : guide) {
    responses.push_back(resp);
    g[resp] = text;
  }
  for (const auto& [resp, score] : mapping) m[resp] = score;
  def["possible_responses"] = responses;
  def["response_guide"] = g;
  def["response_mapping"] = m;
  return def;
}

inline ojson synth_concept(ojson def, const char* keyword, bool relevant,
                           const char* present_text) {
  ojson c = ojson::object();
  c["definition"] = std::move(def);
  c["keyword"] = keyword;
  c["relevant"] = relevant;
  c["present_response"] = "yes";
  c["absent_response"] = "no";
  if (present_text != nullptr) c["present_text"] = present_text;
  return c;
}

}  // namespace detail

// Classification preset: three keyword concepts decide the label through the
// rule s1 + s2 + 2*s3 >= 2, two more concepts never occur in any text. The
// pattern counts are arranged so each relevant concept strictly improves a
// fitted layer while the inert ones improve nothing.
inline ojson synthetic_classification_spec() {
  ojson spec = ojson::object();
  spec["schema_version"] = kSchemaVersion;
  spec["mode"] = "keyword_patterns";
  spec["name"] = "pocket-gadget-reviews";
  spec["description"] =
      "Short owner reviews of a folding pocket gadget. Each review is labeled by whether the "
      "reviewer recommends the gadget.";
  {
    ojson guide = ojson::object();
    guide["negative"] = "The reviewer does not recommend the gadget.";
    guide["positive"] = "The reviewer recommends the gadget.";
    spec["label_guide"] = guide;
  }
  spec["positive_label"] = "positive";
  spec["negative_label"] = "negative";
  spec["seed"] = 7;
  {
    ojson concepts = ojson::array();
    concepts.push_back(detail::synth_concept(
        detail::synth_def(
            "praises frame sturdiness",
            "Whether the review praises how solidly the gadget's frame is built. Calling the "
            "frame tough, rigid, or hard to damage expresses the concept.",
            "Does the review praise the sturdiness of the gadget's frame?",
            {{"yes", "The review praises the frame as tough, rigid, or hard to damage."},
             {"no", "The review says nothing positive about the frame's sturdiness."}},
            {{"yes", 1}, {"no", 0}}),
        "durasteel", true, "The durasteel frame shrugs off every drop."));
    concepts.push_back(detail::synth_concept(
        detail::synth_def(
            "mentions gift wrapping",
            "Whether the review mentions wrapping or presenting the gadget as a present for "
            "someone else.",
            "Does the review mention gift wrapping?",
            {{"yes", "The review mentions wrapping or gifting the gadget."},
             {"no", "The review does not mention gift wrapping."}},
            {{"yes", 1}, {"no", 0}}),
        "giftwrap", false, nullptr));
    concepts.push_back(detail::synth_concept(
        detail::synth_def(
            "praises battery endurance",
            "Whether the review praises how long the gadget runs between charges.",
            "Does the review praise the gadget's battery endurance?",
            {{"yes", "The review praises how long a charge lasts."},
             {"no", "The review says nothing positive about battery endurance."}},
            {{"yes", 1}, {"no", 0}}),
        "longcell", true, "The longcell battery runs a full weekend."));
    concepts.push_back(detail::synth_concept(
        detail::synth_def(
            "mentions store staff",
            "Whether the review describes interactions with shop staff rather than the gadget "
            "itself.",
            "Does the review mention store staff?",
            {{"yes", "The review describes talking to or being helped by store staff."},
             {"no", "The review does not mention store staff."}},
            {{"yes", 1}, {"no", 0}}),
        "clerkdesk", false, nullptr));
    concepts.push_back(detail::synth_concept(
        detail::synth_def(
            "praises hinge smoothness",
            "Whether the review praises how smoothly the folding mechanism operates.",
            "Does the review praise the smoothness of the folding action?",
            {{"yes", "The review praises the folding action as smooth or effortless."},
             {"no", "The review says nothing positive about the folding action."}},
            {{"yes", 1}, {"no", 0}}),
        "glidehinge", true, "The glidehinge pivot swings open smooth as glass."));
    spec["concepts"] = concepts;
  }
  {
    ojson fillers = ojson::array();
    for (const char* f :
         {"Carried it around for a week now.", "Got this to replace an older model.",
          "Second one of these in our house.", "Took it along on a camping trip.",
          "Picked it up during the spring sale.", "Arrived quickly in plain packaging.",
          "Mostly lives on my workbench.", "Ordered after a friend showed me theirs."})
      fillers.push_back(f);
    spec["fillers"] = fillers;
  }
  {
    ojson w = ojson::array();
    w.push_back(1.0);
    w.push_back(1.0);
    w.push_back(2.0);
    spec["label_weights"] = w;
  }
  spec["label_threshold"] = 2.0;
  // Pattern counts are tuned so the greedy loop accepts the three relevant
  // concepts in pool order: each prefix fit strictly improves train accuracy
  // (0.69 majority, 0.79 with s1, 0.82 with s1+s2, 1.0 with all three).
  // The sparse "001" cell keeps the (s1, s2) projection's pure-positive cell
  // from dragging the mixed cells across the decision boundary.
  {
    ojson counts = ojson::object();
    counts["000"] = 92;
    counts["100"] = 23;
    counts["010"] = 23;
    counts["110"] = 13;
    counts["001"] = 2;
    counts["101"] = 17;
    counts["011"] = 17;
    counts["111"] = 13;
    spec["train_counts"] = counts;
  }
  {
    ojson counts = ojson::object();
    counts["000"] = 42;
    counts["100"] = 12;
    counts["010"] = 12;
    counts["110"] = 8;
    counts["001"] = 2;
    counts["101"] = 8;
    counts["011"] = 8;
    counts["111"] = 8;
    spec["test_counts"] = counts;
  }
  return spec;
}

// Regression preset: two opposed keyword concepts combine linearly with zero
// noise, so a fitted layer must recover the weights almost exactly.
inline ojson synthetic_regression_spec() {
  ojson spec = ojson::object();
  spec["schema_version"] = kSchemaVersion;
  spec["mode"] = "linear_scores";
  spec["name"] = "trail-shoe-reviews";
  spec["description"] =
      "Owner reviews of a trail running shoe, each labeled with a numeric satisfaction score.";
  spec["seed"] = 11;
  {
    ojson concepts = ojson::array();
    concepts.push_back(detail::synth_concept(
        detail::synth_def(
            "praises midsole cushioning",
            "Whether the review praises the softness of the shoe underfoot.",
            "Does the review praise the midsole cushioning?",
            {{"yes", "The review praises a soft or forgiving feel underfoot."},
             {"no", "The review does not praise the cushioning."}},
            {{"yes", 1}, {"no", -1}}),
        "cloudfoam", true, "The cloudfoam midsole keeps every stride soft."));
    concepts.push_back(detail::synth_concept(
        detail::synth_def(
            "praises outsole grip",
            "Whether the review praises how well the tread holds the trail.",
            "Does the review praise the outsole grip?",
            {{"yes", "The review praises traction or surefootedness."},
             {"no", "The review does not praise the grip."}},
            {{"yes", 1}, {"no", -1}}),
        "gritsole", true, "The gritsole tread bites into loose gravel."));
    spec["concepts"] = concepts;
  }
  {
    ojson fillers = ojson::array();
    for (const char* f :
         {"Logged about sixty miles so far.", "Replaced my previous pair last month.",
          "Mostly running fire roads with these.", "Sized up half a size as suggested.",
          "Third pair from this brand.", "Laces could be a touch longer."})
      fillers.push_back(f);
    spec["fillers"] = fillers;
  }
  {
    ojson w = ojson::array();
    w.push_back(2.0);
    w.push_back(-1.0);
    spec["true_weights"] = w;
  }
  spec["intercept"] = 0.25;
  spec["combo_train_count"] = 50;
  spec["combo_test_count"] = 25;
  return spec;
}

}  // namespace tbm
