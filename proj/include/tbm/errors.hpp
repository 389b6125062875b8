#pragma once

#include <stdexcept>
#include <string>

namespace tbm {

enum class errc {
  missing_field,
  response_set_mismatch,
  invalid_score,
  schema_version_mismatch,
  corrupt_document,
  config_error,
  data_error,
  budget_exceeded,
  budget_unreachable,
  retries_exhausted,
  script_miss,
  empty_concept_space,
  invalid_candidate,
  dimension_mismatch,
  single_class_training_set,
  length_mismatch,
  zero_variance,
  no_overlap,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::missing_field: return "missing_field";
    case errc::response_set_mismatch: return "response_set_mismatch";
    case errc::invalid_score: return "invalid_score";
    case errc::schema_version_mismatch: return "schema_version_mismatch";
    case errc::corrupt_document: return "corrupt_document";
    case errc::config_error: return "config_error";
    case errc::data_error: return "data_error";
    case errc::budget_exceeded: return "budget_exceeded";
    case errc::budget_unreachable: return "budget_unreachable";
    case errc::retries_exhausted: return "retries_exhausted";
    case errc::script_miss: return "script_miss";
    case errc::empty_concept_space: return "empty_concept_space";
    case errc::invalid_candidate: return "invalid_candidate";
    case errc::dimension_mismatch: return "dimension_mismatch";
    case errc::single_class_training_set: return "single_class_training_set";
    case errc::length_mismatch: return "length_mismatch";
    case errc::zero_variance: return "zero_variance";
    case errc::no_overlap: return "no_overlap";
  }
  return "unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

}  // namespace tbm
