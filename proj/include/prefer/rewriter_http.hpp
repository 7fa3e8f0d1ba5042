#pragma once

// Text-generation HTTP client for the summarizer stages.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>

#include <json.hpp>

#include "prefer/core.hpp"
#include "prefer/summarizer.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that breaks Eigen kernels.
#include <httplib.h>

namespace prefer::summarizer {

struct RewriterEndpoint {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string model;
  std::chrono::milliseconds timeout{30000};
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
  std::string api_key_env = "PREFER_REWRITER_KEY";

  void validate() const {
    require(!base_url.empty(), "rewriter base_url is empty");
    require(timeout.count() > 0, "rewriter timeout must be positive");
    require(max_attempts >= 1, "rewriter needs at least one attempt");
  }
};

inline RewriterEndpoint endpoint_from_json(const nlohmann::json& j) {
  RewriterEndpoint e;
  e.base_url = j.at("base_url").get<std::string>();
  e.model = j.value("model", std::string());
  if (j.contains("timeout_ms")) e.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<long>());
  e.max_attempts = j.value("max_attempts", e.max_attempts);
  e.api_key_env = j.value("api_key_env", e.api_key_env);
  e.validate();
  return e;
}

class HttpTextGenerator : public TextGenerator {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpTextGenerator(RewriterEndpoint endpoint, Sleeper sleeper = default_sleeper())
      : endpoint_(std::move(endpoint)), sleeper_(std::move(sleeper)) {
    endpoint_.validate();
    const auto scheme_end = endpoint_.base_url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = endpoint_.base_url.find('/', host_start);
    origin_ = endpoint_.base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : endpoint_.base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  std::string generate(const std::string& prompt, int max_tokens) override {
    const nlohmann::json body = {
        {"model", endpoint_.model}, {"prompt", prompt}, {"max_tokens", max_tokens}};
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt < endpoint_.max_attempts; ++attempt) {
      if (attempt > 0) sleeper_(endpoint_.backoff_base * (1 << (attempt - 1)));
      try {
        return attempt_once(body.dump());
      } catch (const std::exception& e) {
        last_error = e.what();
      }
    }
    throw Error(ErrorCode::upstream, "rewriter failed after " +
                                         std::to_string(endpoint_.max_attempts) +
                                         " attempts: " + last_error);
  }

  int attempts_made() const { return attempts_; }

  static Sleeper default_sleeper() {
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

 private:
  std::string attempt_once(const std::string& payload) {
    ++attempts_;
    httplib::Client client(origin_);
    const auto secs = endpoint_.timeout.count() / 1000;
    const auto usecs = (endpoint_.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
    auto res = client.Post(prefix_ + "/generate", headers, payload, "application/json");
    if (!res) throw Error(ErrorCode::upstream, "transport error: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(ErrorCode::upstream, "status " + std::to_string(res->status));
    const auto j = nlohmann::json::parse(res->body);
    std::string text = j.at("text").get<std::string>();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
      throw Error(ErrorCode::upstream, "empty completion");
    return text;
  }

  RewriterEndpoint endpoint_;
  Sleeper sleeper_;
  std::string origin_;
  std::string prefix_;
  int attempts_ = 0;
};

}  // namespace prefer::summarizer
