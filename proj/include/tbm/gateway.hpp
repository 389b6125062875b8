#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "tbm/canonical_json.hpp"
#include "tbm/errors.hpp"
#include "tbm/util.hpp"

namespace tbm {

struct chat_request {
  std::string system_text;
  std::string user_text;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string stop_marker;  // empty = none

  bool operator==(const chat_request&) const = default;
};

// Covers every field; two requests differing anywhere hash apart.
inline uint64_t request_hash(const chat_request& r) {
  ojson doc = ojson::object();
  doc["system"] = r.system_text;
  doc["user"] = r.user_text;
  doc["temperature"] = r.temperature;
  doc["max_output_tokens"] = r.max_output_tokens;
  doc["stop"] = r.stop_marker;
  return fnv1a64(canonical_line(doc));
}

// Fixed chars-per-token heuristic. Properties relied on elsewhere:
// estimate("") == 0, monotone in length, estimate(a+b) <= estimate(a)+estimate(b)+1.
constexpr double kCharsPerToken = 4.0;

inline int estimate_tokens(std::string_view text) {
  if (text.empty()) return 0;
  return static_cast<int>((text.size() + 3) / 4);
}

inline int estimate_tokens(const chat_request& r) {
  return estimate_tokens(r.system_text) + estimate_tokens(r.user_text);
}

// Repeatedly keeps a 0.8 prefix of every text until the combined estimate
// fits. Texts shrink together so relative coverage stays balanced.
inline std::vector<std::string> truncate_to_budget(std::vector<std::string> texts,
                                                   int budget_tokens,
                                                   double factor = 0.8) {
  auto total = [&] {
    int t = 0;
    for (const auto& s : texts) t += estimate_tokens(s);
    return t;
  };
  std::vector<size_t> keep(texts.size());
  for (size_t i = 0; i < texts.size(); ++i) keep[i] = texts[i].size();
  while (total() > budget_tokens) {
    bool all_minimal = true;
    for (size_t i = 0; i < texts.size(); ++i) {
      if (texts[i].empty()) continue;
      if (keep[i] > 1) {
        keep[i] = std::max<size_t>(1, static_cast<size_t>(keep[i] * factor));
        all_minimal = false;
      }
      texts[i] = texts[i].substr(0, keep[i]);
    }
    if (all_minimal)
      fail(errc::budget_unreachable, "texts cannot fit token budget even at 1 character each");
  }
  return texts;
}

// Transport-level failure worth retrying (timeouts, 5xx, 429). Anything else
// a backend throws is treated as permanent.
class transient_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class backend_kind { scripted, http };

struct backend_config {
  backend_kind kind = backend_kind::scripted;
  std::string endpoint;       // http backend, e.g. http://host:port
  std::string model = "gpt-4";
  std::string script_path;    // scripted backend rules, JSONL
  int context_token_limit = 8000;
  int max_retries = 3;
  int retry_backoff_ms = 250;
  int request_timeout_ms = 30000;
  int max_in_flight = 4;
};

class chat_backend {
 public:
  virtual ~chat_backend() = default;
  virtual std::string complete_raw(const chat_request& req) = 0;
  virtual const char* kind_name() const = 0;
};

// ---- scripted backend ------------------------------------------------------

// One replay rule. match_on "concept_question" targets measurement requests
// (concept_name must appear in the task text, text_pattern runs over the
// user text); "generation_turn" targets concept-generation requests when
// turn_index is set, refinement requests otherwise. Rules are ordered and the
// first match wins; a request matching none is a script_miss.
struct scripted_rule {
  enum class match { concept_question, generation_turn };
  match match_on = match::concept_question;
  std::string concept_name;
  std::string text_pattern;
  int turn_index = 0;  // 0 = unset
  std::string response_text;
};

// Markers the prompt builders place at the head of the system text. The
// scripted backend keys off them to classify requests.
constexpr const char* kGenerateMarker = "Concept Feature Engineering Task";
constexpr const char* kRefineMarker = "Concept Improvement Task";
constexpr const char* kMeasureMarker = "Answer the following question";

class scripted_backend : public chat_backend {
 public:
  explicit scripted_backend(std::vector<scripted_rule> rules) : rules_(std::move(rules)) {
    for (size_t i = 0; i < rules_.size(); ++i) {
      try {
        patterns_.emplace_back(rules_[i].text_pattern, std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        fail(errc::config_error,
             "rule " + std::to_string(i + 1) + ": bad text_pattern: " + e.what());
      }
    }
  }

  static std::vector<scripted_rule> load_rules(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(errc::config_error, "cannot open script file " + path);
    std::vector<scripted_rule> rules;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      ojson doc = ojson::parse(line, nullptr, false);
      if (doc.is_discarded() || !doc.is_object())
        fail(errc::config_error, path + ":" + std::to_string(lineno) + ": bad rule");
      scripted_rule r;
      std::string m = doc.value("match_on", "concept_question");
      if (m == "concept_question") r.match_on = scripted_rule::match::concept_question;
      else if (m == "generation_turn") r.match_on = scripted_rule::match::generation_turn;
      else fail(errc::config_error, path + ":" + std::to_string(lineno) + ": bad match_on " + m);
      r.concept_name = doc.value("concept_name", "");
      r.text_pattern = doc.value("text_pattern", "");
      r.turn_index = doc.value("turn_index", 0);
      if (!doc.contains("response_text"))
        fail(errc::config_error, path + ":" + std::to_string(lineno) + ": missing response_text");
      r.response_text = doc["response_text"].get<std::string>();
      rules.push_back(std::move(r));
    }
    return rules;
  }

  static scripted_backend from_file(const std::string& path) {
    return scripted_backend(load_rules(path));
  }

  std::string complete_raw(const chat_request& req) override {
    calls_.fetch_add(1);
    bool is_generate = req.system_text.rfind(kGenerateMarker, 0) == 0;
    bool is_refine = req.system_text.rfind(kRefineMarker, 0) == 0;
    int turn = is_generate ? generation_turn(req.user_text) : 0;
    for (size_t i = 0; i < rules_.size(); ++i) {
      const scripted_rule& r = rules_[i];
      if (r.match_on == scripted_rule::match::concept_question) {
        if (is_generate || is_refine) continue;
        if (!r.concept_name.empty() && !contains(req.user_text, r.concept_name)) continue;
      } else {
        if (r.turn_index > 0) {
          if (!is_generate || turn != r.turn_index) continue;
        } else {
          if (!is_refine) continue;
        }
      }
      if (!r.text_pattern.empty() &&
          !std::regex_search(req.user_text, patterns_[i]))
        continue;
      return r.response_text;
    }
    fail(errc::script_miss, "no scripted rule matches request (turn " + std::to_string(turn) +
                                "): " + req.user_text.substr(0, 160));
  }

  const char* kind_name() const override { return "scripted"; }

  int calls() const { return calls_.load(); }

  // Turn number recovered from the prompt itself: 1 plus the number of
  // concepts already listed as accepted or rejected. Keeps replay a pure
  // function of the request.
  static int generation_turn(const std::string& user_text) {
    return 1 + count_block_entries(user_text, "we already have the following concepts") +
           count_block_entries(user_text, "have been rejected by the system");
  }

 private:
  static int count_block_entries(const std::string& text, std::string_view header) {
    size_t at = text.find(header);
    if (at == std::string::npos) return 0;
    size_t line_start = text.find('\n', at);
    if (line_start == std::string::npos) return 0;
    int n = 0;
    size_t pos = line_start + 1;
    while (pos < text.size()) {
      size_t eol = text.find('\n', pos);
      std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
      std::string t = trim(line);
      bool numbered = !t.empty() && std::isdigit(static_cast<unsigned char>(t[0])) &&
                      t.find(". ") != std::string::npos && t.find(". ") < 4;
      if (numbered) ++n;
      else if (!t.empty()) break;
      if (eol == std::string::npos) break;
      pos = eol + 1;
    }
    return n;
  }

  std::vector<scripted_rule> rules_;
  std::vector<std::regex> patterns_;
  std::atomic<int> calls_{0};
};

// ---- cache + client --------------------------------------------------------

// Append-only completion cache, hit only at temperature 0. Safe for
// concurrent use; the file replays into memory on open.
class completion_cache {
 public:
  completion_cache() = default;

  explicit completion_cache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      ojson doc = ojson::parse(line, nullptr, false);
      if (doc.is_discarded() || !doc.is_object() || !doc.contains("request_hash")) continue;
      entries_[doc["request_hash"].get<std::string>()] = doc.value("completion", "");
    }
  }

  bool get(uint64_t key, std::string& out) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(hex64(key));
    if (it == entries_.end()) return false;
    out = it->second;
    return true;
  }

  void put(uint64_t key, const std::string& completion) {
    std::lock_guard<std::mutex> lock(mu_);
    std::string k = hex64(key);
    if (entries_.count(k)) return;
    entries_[k] = completion;
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::app | std::ios::binary);
      ojson doc = ojson::object();
      doc["request_hash"] = k;
      doc["completion"] = completion;
      out << canonical_line(doc) << "\n";
    }
  }

  size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
  }

 private:
  std::string path_;
  std::map<std::string, std::string> entries_;
  mutable std::mutex mu_;
};

// Budget check, cache lookup, bounded retries with exponential backoff.
class chat_client {
 public:
  chat_client(std::shared_ptr<chat_backend> backend, backend_config cfg,
              std::shared_ptr<completion_cache> cache = nullptr)
      : backend_(std::move(backend)), cfg_(std::move(cfg)), cache_(std::move(cache)) {}

  std::string complete(const chat_request& req) {
    int prompt_tokens = estimate_tokens(req);
    if (prompt_tokens > cfg_.context_token_limit)
      fail(errc::budget_exceeded, "prompt estimate " + std::to_string(prompt_tokens) +
                                      " exceeds context limit " +
                                      std::to_string(cfg_.context_token_limit));
    bool cacheable = req.temperature == 0.0 && cache_ != nullptr;
    uint64_t key = cacheable ? request_hash(req) : 0;
    if (cacheable) {
      std::string hit;
      if (cache_->get(key, hit)) return hit;
    }
    std::string completion = complete_with_retries(req);
    if (cacheable) cache_->put(key, completion);
    return completion;
  }

  const backend_config& config() const { return cfg_; }
  chat_backend& backend() { return *backend_; }

 private:
  std::string complete_with_retries(const chat_request& req) {
    int attempts = cfg_.max_retries + 1;
    std::string last_error;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      try {
        return backend_->complete_raw(req);
      } catch (const transient_error& e) {
        last_error = e.what();
      }
      if (attempt < attempts) {
        int delay = cfg_.retry_backoff_ms << (attempt - 1);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
    }
    fail(errc::retries_exhausted,
         "backend failed after " + std::to_string(attempts) + " attempts: " + last_error);
  }

  std::shared_ptr<chat_backend> backend_;
  backend_config cfg_;
  std::shared_ptr<completion_cache> cache_;
};

}  // namespace tbm
