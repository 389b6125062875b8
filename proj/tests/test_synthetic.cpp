#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tbm/dataset.hpp"
#include "tbm/gateway.hpp"
#include "tbm/synthetic.hpp"

using namespace tbm;
namespace fs = std::filesystem;

namespace {

template <typename F>
std::optional<errc> thrown_code(F&& f) {
  try {
    f();
  } catch (const error& e) {
    return e.code();
  }
  return std::nullopt;
}

struct temp_dir {
  fs::path path;
  explicit temp_dir(const char* stem) : path(fs::temp_directory_path() / stem) {
    fs::remove_all(path);
  }
  ~temp_dir() { fs::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
};

dataset load_bundle(const temp_dir& d) {
  return load_dataset(d.file("dataset.json"), d.file("train.jsonl"), d.file("test.jsonl"));
}

// Minimal hand-checkable spec: one concept, one filler, three train texts.
ojson tiny_spec() {
  ojson def = ojson::object();
  def["name"] = "praises strap comfort";
  def["description"] = "Whether the review praises how the strap feels when worn.";
  def["question"] = "Does the review praise the strap comfort?";
  def["possible_responses"] = ojson::array({"yes", "no"});
  def["response_guide"] = ojson::parse(R"({"yes": "Strap comfort is praised.", "no": "It is not."})");
  def["response_mapping"] = ojson::parse(R"({"yes": 1, "no": 0})");

  ojson c = ojson::object();
  c["definition"] = def;
  c["keyword"] = "velcroloop";
  c["relevant"] = true;
  c["present_response"] = "yes";
  c["absent_response"] = "no";
  c["present_text"] = "The velcroloop strap never chafes.";

  ojson spec = ojson::object();
  spec["schema_version"] = kSchemaVersion;
  spec["mode"] = "keyword_patterns";
  spec["name"] = "watch-band-reviews";
  spec["description"] = "Reviews of a watch band.";
  spec["label_guide"] = ojson::parse(R"({"bad": "Not recommended.", "good": "Recommended."})");
  spec["positive_label"] = "good";
  spec["negative_label"] = "bad";
  spec["seed"] = 5;
  spec["concepts"] = ojson::array({c});
  spec["fillers"] = ojson::array({"Worn daily for a month."});
  spec["label_weights"] = ojson::array({1.0});
  spec["label_threshold"] = 1.0;
  spec["train_counts"] = ojson::parse(R"({"0": 1, "1": 2})");
  spec["test_counts"] = ojson::parse(R"({"0": 1, "1": 1})");
  return spec;
}

}  // namespace

TEST_CASE("tiny bundle renders exactly the expected texts and labels") {
  temp_dir dir("tbm_synth_tiny");
  ojson manifest = generate_synthetic(tiny_spec(), dir.path.string());
  dataset ds = load_bundle(dir);

  CHECK(ds.kind == task_kind::classification);
  CHECK(ds.name == "watch-band-reviews");
  REQUIRE(ds.train.size() == 3);
  REQUIRE(ds.test.size() == 2);
  CHECK(ds.train[0].id == "train-0001");
  CHECK(ds.train[2].id == "train-0003");
  CHECK(ds.test[1].id == "test-0002");

  const std::string plain = "Worn daily for a month.";
  const std::string praised = plain + " The velcroloop strap never chafes.";
  size_t praising = 0;
  for (const auto& ex : ds.train) {
    REQUIRE((ex.text == plain || ex.text == praised));
    bool hit = ex.text == praised;
    praising += hit;
    CHECK(ex.label.cls == (hit ? "good" : "bad"));
  }
  CHECK(praising == 2);

  CHECK(manifest["train_count"] == 3);
  CHECK(manifest["test_count"] == 2);
  CHECK(manifest["concepts"][0]["keyword"] == "velcroloop");
  CHECK(manifest["label_rule"]["label_threshold"] == 1.0);
  for (const auto& ex : ds.train)
    CHECK(manifest["true_scores"][ex.id][0] == (ex.text == praised ? 1 : 0));

  // Emitted rules replay the whole pipeline: one generate turn, one refine
  // echo, and a hit/miss pair for measurement.
  auto rules = scripted_backend::load_rules(dir.file("rules.jsonl"));
  REQUIRE(rules.size() == 4);
  CHECK(rules[0].turn_index == 1);
  CHECK(rules[1].match_on == scripted_rule::match::generation_turn);
  CHECK(rules[1].turn_index == 0);
  CHECK(rules[2].concept_name == "praises strap comfort");
  CHECK(rules[3].text_pattern.empty());
  scripted_backend backend(rules);  // patterns must all compile

  // The spec is echoed verbatim so a bundle can be regenerated from itself.
  CHECK(ojson::parse(read_file(dir.file("spec.json"))) == tiny_spec());
  CHECK(ojson::parse(read_file(dir.file("manifest.json"))) == manifest);
}

TEST_CASE("generation is deterministic across runs") {
  temp_dir a("tbm_synth_det_a");
  temp_dir b("tbm_synth_det_b");
  generate_synthetic(synthetic_classification_spec(), a.path.string());
  generate_synthetic(synthetic_classification_spec(), b.path.string());
  for (const char* name : {"spec.json", "dataset.json", "train.jsonl", "test.jsonl",
                           "rules.jsonl", "manifest.json", "run_config.json"})
    CHECK(read_file(a.file(name)) == read_file(b.file(name)));

  // A different seed must actually reshuffle something.
  ojson reseeded = synthetic_classification_spec();
  reseeded["seed"] = 8;
  temp_dir c("tbm_synth_det_c");
  generate_synthetic(reseeded, c.path.string());
  CHECK(read_file(a.file("train.jsonl")) != read_file(c.file("train.jsonl")));
}

TEST_CASE("classification preset obeys its own label rule") {
  temp_dir dir("tbm_synth_cls");
  ojson manifest = generate_synthetic(synthetic_classification_spec(), dir.path.string());
  dataset ds = load_bundle(dir);
  REQUIRE(ds.train.size() == 200);
  REQUIRE(ds.test.size() == 100);

  std::vector<std::string> keywords;
  std::vector<bool> relevant;
  for (const auto& row : manifest["concepts"]) {
    keywords.push_back(row["keyword"].get<std::string>());
    relevant.push_back(row["relevant"].get<bool>());
  }
  REQUIRE(keywords.size() == 5);

  size_t positives = 0;
  auto check_split = [&](const std::vector<example>& split) {
    for (const auto& ex : split) {
      // true_scores mirror keyword presence, and inert keywords never occur.
      const ojson& row = manifest["true_scores"].at(ex.id);
      for (size_t j = 0; j < keywords.size(); ++j) {
        bool hit = contains(ex.text, keywords[j]);
        if (!relevant[j]) CHECK_FALSE(hit);
        CHECK(row[j].get<int>() == (hit ? 1 : 0));
      }
      double dot = row[0].get<int>() * 1.0 + row[2].get<int>() * 1.0 + row[4].get<int>() * 2.0;
      CHECK(ex.label.cls == (dot >= 2.0 ? "positive" : "negative"));
      positives += ex.label.cls == "positive";
    }
  };
  check_split(ds.train);
  check_split(ds.test);
  // 110, 001, 101, 011, 111 cross the threshold in both splits.
  CHECK(positives == size_t(13 + 2 + 17 + 17 + 13 + 8 + 2 + 8 + 8 + 8));

  check_dataset(ds);
  auto rules = scripted_backend::load_rules(dir.file("rules.jsonl"));
  CHECK(rules.size() == 20);  // 5 generate + 5 refine + 5 hit + 5 miss
}

TEST_CASE("regression preset labels are the exact linear rule") {
  temp_dir dir("tbm_synth_reg");
  ojson manifest = generate_synthetic(synthetic_regression_spec(), dir.path.string());
  dataset ds = load_bundle(dir);
  REQUIRE(ds.train.size() == 200);  // 50 per pattern over two concepts
  REQUIRE(ds.test.size() == 100);
  CHECK(ds.kind == task_kind::regression);

  auto check_split = [&](const std::vector<example>& split) {
    for (const auto& ex : split) {
      int s1 = contains(ex.text, "cloudfoam") ? 1 : -1;
      int s2 = contains(ex.text, "gritsole") ? 1 : -1;
      CHECK(ex.label.num == 0.25 + 2.0 * s1 - 1.0 * s2);
      CHECK(manifest["true_scores"].at(ex.id)[0].get<int>() == s1);
      CHECK(manifest["true_scores"].at(ex.id)[1].get<int>() == s2);
    }
  };
  check_split(ds.train);
  check_split(ds.test);

  ojson rc = ojson::parse(read_file(dir.file("run_config.json")));
  CHECK(rc["backend"]["kind"] == "scripted");
  CHECK(rc["generation"]["iterations"] == 2);
  CHECK(rc["generation"]["eval_subset_size"] == 200);
  CHECK(rc["fit"]["l2_penalty"] == 1e-6);
  CHECK(rc["measurement"]["batch_size"] == 1);
}

TEST_CASE("spec validation rejects each malformed field") {
  temp_dir dir("tbm_synth_bad");
  auto expect = [&](ojson spec, errc code) {
    CHECK(thrown_code([&] { generate_synthetic(spec, dir.path.string()); }) == code);
  };

  {
    ojson s = tiny_spec();
    s.erase("schema_version");
    expect(s, errc::schema_version_mismatch);
  }
  {
    ojson s = tiny_spec();
    s["mode"] = "waffle";
    expect(s, errc::config_error);
  }
  {
    ojson s = tiny_spec();
    s["name"] = "";
    expect(s, errc::config_error);
  }
  {
    ojson s = tiny_spec();
    s.erase("label_guide");
    expect(s, errc::config_error);
  }
  {
    ojson s = tiny_spec();
    s["concepts"] = ojson::array();
    expect(s, errc::config_error);
  }
  {
    ojson s = tiny_spec();
    s["concepts"][0]["relevant"] = false;
    expect(s, errc::config_error);  // no relevant concept left
  }
  {
    ojson s = tiny_spec();
    s["fillers"] = ojson::array();
    expect(s, errc::config_error);
  }
  {
    ojson s = tiny_spec();
    s["fillers"].push_back("A velcroloop came loose.");
    expect(s, errc::config_error);  // keyword leaks into a filler
  }
  {
    ojson s = tiny_spec();
    s["label_weights"].push_back(3.0);
    expect(s, errc::config_error);  // more weights than relevant concepts
  }
  {
    ojson s = tiny_spec();
    s["train_counts"] = ojson::parse(R"({"01": 1})");
    expect(s, errc::config_error);  // key length vs one concept
  }
  {
    ojson s = tiny_spec();
    s["train_counts"] = ojson::parse(R"({"2": 1})");
    expect(s, errc::config_error);
  }
  {
    ojson s = tiny_spec();
    s["concepts"][0]["keyword"] = "";
    expect(s, errc::config_error);
  }
  {
    ojson s = tiny_spec();
    s["concepts"][0]["present_response"] = "maybe";
    expect(s, errc::config_error);
  }
  {
    ojson s = tiny_spec();
    s["concepts"][0]["present_text"] = "The strap never chafes.";
    expect(s, errc::config_error);  // relevant concept without its keyword
  }
  {
    ojson s = tiny_spec();
    s["concepts"][0]["definition"]["description"] = "Mentions the velcroloop closure.";
    expect(s, errc::config_error);  // keyword leaks into the definition
  }
  {
    ojson s = tiny_spec();
    s["positive_label"] = "great";
    expect(s, errc::data_error);  // label missing from the guide
  }
}
