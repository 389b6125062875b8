#include <catch2/catch_amalgamated.hpp>

#include "tbm/concept.hpp"
#include "tbm/json_extract.hpp"

using namespace tbm;

namespace {

ojson build_quality_doc() {
  return ojson::parse(R"({
    "name": "build quality",
    "description": "Whether the review discusses how well the product is constructed.",
    "question": "How does the review rate the build quality of the product?",
    "possible_responses": ["high", "low", "uncertain"],
    "response_guide": {
      "high": "The review calls the construction sturdy or well made.",
      "low": "The review complains about flimsy or cheap construction.",
      "uncertain": "The review does not make the build quality clear."
    },
    "response_mapping": {"high": 1, "low": -1, "uncertain": 0}
  })");
}

concept_def build_quality() { return validate_concept(build_quality_doc()); }

}  // namespace

TEST_CASE("validate_concept accepts both key spellings") {
  concept_def a = build_quality();
  ojson prompt_style = ojson::parse(R"({
    "Concept Name": "build quality",
    "Concept Description": "Whether the review discusses how well the product is constructed.",
    "Concept Question": "How does the review rate the build quality of the product?",
    "Possible Responses": ["high", "low", "uncertain"],
    "Response Guide": {
      "high": "The review calls the construction sturdy or well made.",
      "low": "The review complains about flimsy or cheap construction.",
      "uncertain": "The review does not make the build quality clear."
    },
    "Response Mapping": {"high": 1, "low": -1, "uncertain": 0}
  })");
  concept_def b = validate_concept(prompt_style);
  CHECK(concepts_equal(a, b));
  CHECK(concept_hash(a) == concept_hash(b));
  CHECK(a.possible_responses == std::vector<std::string>{"high", "low", "uncertain"});
  CHECK(a.response_mapping[0].value == 1);
  CHECK(a.response_mapping[1].value == -1);
}

TEST_CASE("validate_concept rejects malformed documents") {
  auto mutate = [](const char* key, ojson v) {
    ojson doc = build_quality_doc();
    doc[key] = std::move(v);
    return doc;
  };

  SECTION("missing fields") {
    for (const char* key :
         {"name", "description", "question", "possible_responses", "response_guide",
          "response_mapping"}) {
      ojson doc = build_quality_doc();
      doc.erase(key);
      CHECK_THROWS_AS(validate_concept(doc), error);
    }
    CHECK_THROWS_AS(validate_concept(ojson::parse("[]")), error);
    CHECK_THROWS_AS(validate_concept(mutate("name", "   ")), error);
  }
  SECTION("response set size limits") {
    ojson doc = build_quality_doc();
    doc["possible_responses"] = ojson::array({"only"});
    CHECK_THROWS_AS(validate_concept(doc), error);

    ojson wide = ojson::array();
    ojson guide = ojson::object();
    ojson mapping = ojson::object();
    for (int i = 0; i < 9; ++i) {
      std::string r = "r" + std::to_string(i);
      wide.push_back(r);
      guide[r] = "entry";
      mapping[r] = 0;
    }
    doc["possible_responses"] = wide;
    doc["response_guide"] = guide;
    doc["response_mapping"] = mapping;
    CHECK_THROWS_AS(validate_concept(doc), error);
  }
  SECTION("duplicate responses collapse under normalization") {
    ojson doc = build_quality_doc();
    doc["possible_responses"] = ojson::array({"Yes", " yes "});
    CHECK_THROWS_AS(validate_concept(doc), error);
  }
  SECTION("mapping range and stray keys") {
    ojson doc = build_quality_doc();
    doc["response_mapping"]["high"] = 4;
    CHECK_THROWS_AS(validate_concept(doc), error);

    doc = build_quality_doc();
    doc["response_mapping"]["high"] = -4;
    CHECK_THROWS_AS(validate_concept(doc), error);

    doc = build_quality_doc();
    doc["response_guide"]["extra"] = "no such response";
    CHECK_THROWS_AS(validate_concept(doc), error);

    doc = build_quality_doc();
    doc["response_mapping"].erase("low");
    CHECK_THROWS_AS(validate_concept(doc), error);
  }
  SECTION("boundary scores pass") {
    ojson doc = build_quality_doc();
    doc["response_mapping"]["high"] = 3;
    doc["response_mapping"]["low"] = -3;
    concept_def c = validate_concept(doc);
    CHECK(c.response_mapping[0].value == 3);
    CHECK(c.response_mapping[1].value == -3);
  }
}

TEST_CASE("resolve_score normalizes answers and flags gaps") {
  concept_def c = build_quality();
  CHECK(resolve_score(c, "high") == concept_score{1, provenance::measured});
  CHECK(resolve_score(c, "  HIGH  ") == concept_score{1, provenance::measured});
  CHECK(resolve_score(c, "low") == concept_score{-1, provenance::measured});
  CHECK(resolve_score(c, "banana") == concept_score{0, provenance::parse_fallback});
  CHECK(resolve_score(c, "") == concept_score{0, provenance::parse_fallback});
}

TEST_CASE("resolve_score recognizes the not-applicable conventions") {
  ojson doc = build_quality_doc();
  doc["possible_responses"] = ojson::array({"high", "low", "not applicable"});
  doc["response_guide"] = ojson::object({{"high", "g"}, {"low", "g"}, {"not applicable", "g"}});

  SECTION("explicit na sentinel") {
    doc["response_mapping"] = ojson::object({{"high", 1}, {"low", -1}, {"not applicable", "na"}});
    concept_def c = validate_concept(doc);
    CHECK(resolve_score(c, "Not Applicable") == concept_score{0, provenance::not_applicable});
    CHECK(resolve_score(c, "high") == concept_score{1, provenance::measured});
  }
  SECTION("zero-mapped literal response text") {
    doc["response_mapping"] = ojson::object({{"high", 1}, {"low", -1}, {"not applicable", 0}});
    concept_def c = validate_concept(doc);
    CHECK(resolve_score(c, "not applicable") == concept_score{0, provenance::not_applicable});
  }
  SECTION("a nonzero mapping keeps the answer measured") {
    doc["response_mapping"] = ojson::object({{"high", 1}, {"low", -1}, {"not applicable", 2}});
    concept_def c = validate_concept(doc);
    CHECK(resolve_score(c, "not applicable") == concept_score{2, provenance::measured});
  }
}

TEST_CASE("concept save/load round-trips byte for byte") {
  concept_def c = build_quality();
  std::string text;
  save_concept(c, text);
  concept_def back = load_concept(text);
  CHECK(concepts_equal(c, back));
  std::string again;
  save_concept(back, again);
  CHECK(text == again);
}

TEST_CASE("load_concept enforces the schema stamp") {
  concept_def c = build_quality();
  std::string text;
  save_concept(c, text);

  ojson doc = ojson::parse(text);
  doc.erase("schema_version");
  CHECK_THROWS_AS(load_concept(canonical_dump(doc)), error);
  doc["schema_version"] = 999;
  CHECK_THROWS_AS(load_concept(canonical_dump(doc)), error);
  CHECK_THROWS_AS(load_concept("not json at all"), error);
}

TEST_CASE("provenance names round-trip") {
  for (provenance p :
       {provenance::measured, provenance::parse_fallback, provenance::not_applicable})
    CHECK(provenance_from_name(provenance_name(p)) == p);
  CHECK_THROWS_AS(provenance_from_name("mystery"), error);
}

TEST_CASE("extract_first_json finds values inside prose") {
  auto v = extract_first_json("Sure! Here you go: ```json\n{\"a\": 1}\n``` done", '{');
  REQUIRE(v.has_value());
  CHECK((*v)["a"] == 1);

  auto arr = extract_first_array("the list [1, 2, 3] ends ###");
  REQUIRE(arr.has_value());
  CHECK(arr->size() == 3);

  CHECK_FALSE(extract_first_json("no brackets here", '{').has_value());
  CHECK_FALSE(extract_first_json("", '{').has_value());
}

TEST_CASE("extract_first_json repairs truncated tails") {
  auto v = extract_first_json("{\"a\": {\"b\": [1, 2", '{');
  REQUIRE(v.has_value());
  CHECK((*v)["a"]["b"] == ojson::array({1, 2}));

  auto cut_str = extract_first_json("{\"key\": \"unterminated", '{');
  REQUIRE(cut_str.has_value());
  CHECK((*cut_str)["key"] == "unterminated");

  auto dangling = extract_first_json("{\"done\": 1, \"next\":", '{');
  REQUIRE(dangling.has_value());
  CHECK((*dangling)["done"] == 1);
}

TEST_CASE("extract skips non-qualifying brackets") {
  auto v = extract_first_json_if("{\"a\": 1} {\"b\": 2}", '{',
                                 [](const ojson& j) { return j.contains("b"); });
  REQUIRE(v.has_value());
  CHECK((*v)["b"] == 2);
}

TEST_CASE("object continuation restores the opening brace") {
  auto v = extract_object_continuation("\"name\": \"x\"}");
  REQUIRE(v.has_value());
  CHECK((*v)["name"] == "x");

  // Self-contained object still parses: "{{" never opens valid JSON, so the
  // scan falls through to the inner brace.
  auto whole = extract_object_continuation("{\"name\": \"y\"}");
  REQUIRE(whole.has_value());
  CHECK((*whole)["name"] == "y");
}

TEST_CASE("array continuation prefers the raw text") {
  auto shaped = [](const ojson& j) {
    return j.is_array() && !j.empty() && j[0].is_object();
  };
  // Raw text already holds the full array; restoring "[" would nest it.
  auto whole = extract_array_continuation_if("[{\"t\": 1}] ###", shaped);
  REQUIRE(whole.has_value());
  CHECK((*whole)[0]["t"] == 1);

  auto cont = extract_array_continuation_if("{\"t\": 1}, {\"t\": 2}]", shaped);
  REQUIRE(cont.has_value());
  CHECK(cont->size() == 2);
}
