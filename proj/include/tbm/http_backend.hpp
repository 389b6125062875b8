#pragma once

// Split from gateway.hpp so only the CLI and the http tests pay for httplib.

#include <httplib.h>

#include <cstdlib>
#include <string>

#include "tbm/gateway.hpp"

namespace tbm {

// Minimal chat-completion wire shape: POST {endpoint}/v1/chat/completions with
// model, messages, temperature, max_tokens, stop. Credentials come from the
// TBM_API_KEY environment variable only and never touch disk.
class http_backend : public chat_backend {
 public:
  explicit http_backend(backend_config cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty()) fail(errc::config_error, "http backend needs an endpoint");
  }

  std::string complete_raw(const chat_request& req) override {
    httplib::Client cli(cfg_.endpoint);
    cli.set_connection_timeout(0, cfg_.request_timeout_ms * 1000);
    cli.set_read_timeout(cfg_.request_timeout_ms / 1000, (cfg_.request_timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (const char* key = std::getenv("TBM_API_KEY"))
      headers.emplace("Authorization", std::string("Bearer ") + key);
    auto res = cli.Post("/v1/chat/completions", headers, build_body(cfg_, req),
                        "application/json");
    if (!res)
      throw transient_error("transport failure: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
      throw transient_error("backend status " + std::to_string(res->status));
    if (res->status != 200)
      fail(errc::retries_exhausted,
           "backend status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    return parse_completion(res->body);
  }

  const char* kind_name() const override { return "http"; }

  static std::string build_body(const backend_config& cfg, const chat_request& req) {
    ojson msgs = ojson::array();
    if (!req.system_text.empty()) {
      ojson m = ojson::object();
      m["role"] = "system";
      m["content"] = req.system_text;
      msgs.push_back(m);
    }
    ojson u = ojson::object();
    u["role"] = "user";
    u["content"] = req.user_text;
    msgs.push_back(u);
    ojson body = ojson::object();
    body["model"] = cfg.model;
    body["messages"] = msgs;
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_output_tokens;
    if (!req.stop_marker.empty()) body["stop"] = ojson::array({req.stop_marker});
    return canonical_line(body);
  }

  static std::string parse_completion(const std::string& body) {
    ojson doc = ojson::parse(body, nullptr, false);
    if (doc.is_discarded()) fail(errc::retries_exhausted, "backend returned non-JSON body");
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty() ||
        !doc["choices"][0].contains("message") ||
        !doc["choices"][0]["message"].contains("content"))
      fail(errc::retries_exhausted, "backend response missing choices[0].message.content");
    return doc["choices"][0]["message"]["content"].get<std::string>();
  }

 private:
  backend_config cfg_;
};

}  // namespace tbm
