#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "phishdebate/prompts.hpp"
#include "phishdebate/support.hpp"

namespace phishdebate {

// Connection settings for one chat-completion endpoint. The API key is read
// from the environment variable named by api_key_env at call time; it is
// never stored in this struct, in config files or in output artifacts.
struct ProviderConfig {
  std::string name;
  std::string endpoint;     // e.g. https://api.openai.com/v1
  std::string model_id;
  std::string api_key_env;  // empty means no Authorization header
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  int requests_per_minute = 60;
};

struct CompletionResult {
  std::string text;
  std::chrono::milliseconds latency{0};
  int attempts = 1;
  std::map<std::string, std::string> provider_meta;
};

class ProviderError : public std::runtime_error {
 public:
  enum class Kind { transport, http_status, malformed_response, missing_api_key };

  ProviderError(Kind kind, const std::string& what, int status = 0, int attempts = 0)
      : std::runtime_error(what), kind_(kind), status_(status), attempts_(attempts) {}

  Kind kind() const { return kind_; }
  int status() const { return status_; }
  int attempts() const { return attempts_; }

 private:
  Kind kind_;
  int status_;
  int attempts_;
};

// Stable digest of a rendered prompt, used to key scripted replies and to
// tie transcript entries back to the exact bytes that were sent.
inline std::string fingerprint(const PromptBundle& bundle) {
  std::string canon;
  for (const auto& m : bundle.messages) {
    char r = 'u';
    if (m.role == MessageRole::system) r = 's';
    if (m.role == MessageRole::assistant) r = 'a';
    canon += r;
    canon += ':';
    canon += std::to_string(m.content.size());
    canon += ':';
    canon += m.content;
    canon += '\n';
  }
  return fnv1a64_hex(canon);
}

class Provider {
 public:
  virtual ~Provider() = default;
  virtual CompletionResult complete(const PromptBundle& bundle) = 0;
  virtual const std::string& name() const = 0;
};

// Sliding-window limiter: at most `rpm` calls may start in any 60 s span.
// Blocks by sleeping on the injected clock, so tests run instantly.
class RateLimiter {
 public:
  RateLimiter(int rpm, std::shared_ptr<Clock> clock)
      : rpm_(rpm), clock_(std::move(clock)) {}

  void acquire() {
    using namespace std::chrono;
    if (rpm_ <= 0) return;
    for (;;) {
      milliseconds wait{0};
      {
        std::lock_guard<std::mutex> lock(mu_);
        const auto now = clock_->now();
        while (!starts_.empty() && now - starts_.front() >= minutes(1)) {
          starts_.pop_front();
        }
        if (starts_.size() < static_cast<std::size_t>(rpm_)) {
          starts_.push_back(now);
          return;
        }
        wait = starts_.front() + minutes(1) - now;
      }
      clock_->sleep_for(wait);
    }
  }

 private:
  int rpm_;
  std::shared_ptr<Clock> clock_;
  std::mutex mu_;
  std::deque<std::chrono::milliseconds> starts_;
};

namespace detail {

// Splits "https://host:port/base/path" into the client target and the path
// prefix that request paths get appended to.
inline std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ProviderError(ProviderError::Kind::transport,
                        "endpoint must include a scheme: " + endpoint);
  }
  auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {endpoint, ""};
  }
  std::string prefix = endpoint.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {endpoint.substr(0, path_start), prefix};
}

inline bool retryable_status(int status) {
  return status == 429 || (status >= 500 && status <= 599);
}

}  // namespace detail

// Chat-completion client over HTTP. Retries transport failures, timeouts,
// 429 and 5xx with exponential backoff and jitter; other HTTP errors and
// malformed bodies fail immediately. Total attempts never exceed
// max_retries + 1.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(ProviderConfig config,
                        std::shared_ptr<Clock> clock = std::make_shared<SystemClock>())
      : config_(std::move(config)),
        clock_(std::move(clock)),
        limiter_(config_.requests_per_minute, clock_),
        rng_(std::random_device{}()) {
    std::tie(host_, path_prefix_) = detail::split_endpoint(config_.endpoint);
  }

  const std::string& name() const override { return config_.name; }

  CompletionResult complete(const PromptBundle& bundle) override {
    const std::string body = request_body(bundle).dump();
    const std::string api_key = read_api_key();
    const int max_attempts = config_.max_retries + 1;

    std::string last_error;
    int last_status = 0;
    bool saw_http_error = false;

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
      limiter_.acquire();
      const auto start = clock_->now();
      httplib::Client client(host_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      httplib::Headers headers;
      if (!api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key);
      }

      auto res = client.Post(path_prefix_ + "/chat/completions", headers, body,
                             "application/json");
      const auto latency = clock_->now() - start;

      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        saw_http_error = false;
      } else if (res->status >= 200 && res->status < 300) {
        CompletionResult out = parse_response(res->body, attempt);
        out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(latency);
        out.attempts = attempt;
        return out;
      } else if (detail::retryable_status(res->status)) {
        last_error = "HTTP " + std::to_string(res->status);
        last_status = res->status;
        saw_http_error = true;
      } else {
        throw ProviderError(ProviderError::Kind::http_status,
                            config_.name + ": HTTP " + std::to_string(res->status),
                            res->status, attempt);
      }

      if (attempt < max_attempts) {
        clock_->sleep_for(backoff_delay(attempt));
      }
    }
    throw ProviderError(saw_http_error ? ProviderError::Kind::http_status
                                       : ProviderError::Kind::transport,
                        config_.name + ": " + last_error + " after " +
                            std::to_string(max_attempts) + " attempts",
                        last_status, max_attempts);
  }

 private:
  nlohmann::json request_body(const PromptBundle& bundle) const {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : bundle.messages) {
      messages.push_back({{"role", message_role_to_string(m.role)},
                          {"content", m.content}});
    }
    return nlohmann::json{{"model", config_.model_id},
                          {"messages", messages},
                          {"temperature", config_.temperature},
                          {"max_tokens", config_.max_output_tokens}};
  }

  std::string read_api_key() const {
    if (config_.api_key_env.empty()) return {};
    const char* value = std::getenv(config_.api_key_env.c_str());
    if (!value || !*value) {
      throw ProviderError(ProviderError::Kind::missing_api_key,
                          config_.name + ": environment variable " + config_.api_key_env +
                              " is not set");
    }
    return value;
  }

  CompletionResult parse_response(const std::string& body, int attempt) const {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(ProviderError::Kind::malformed_response,
                          config_.name + ": response is not JSON: " + e.what(), 0, attempt);
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty() ||
        !j["choices"][0].contains("message") ||
        !j["choices"][0]["message"].contains("content") ||
        !j["choices"][0]["message"]["content"].is_string()) {
      throw ProviderError(ProviderError::Kind::malformed_response,
                          config_.name + ": response lacks choices[0].message.content", 0,
                          attempt);
    }
    CompletionResult out;
    out.text = j["choices"][0]["message"]["content"].get<std::string>();
    if (j.contains("model") && j["model"].is_string()) {
      out.provider_meta["model"] = j["model"].get<std::string>();
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      for (const char* key : {"prompt_tokens", "completion_tokens", "total_tokens"}) {
        if (j["usage"].contains(key) && j["usage"][key].is_number_integer()) {
          out.provider_meta[key] = std::to_string(j["usage"][key].get<long long>());
        }
      }
    }
    return out;
  }

  // 500 ms doubled per attempt, stretched by up to 25% jitter. The jitter
  // band is narrow enough that delays stay nondecreasing across attempts.
  std::chrono::milliseconds backoff_delay(int attempt) {
    double base = 500.0 * static_cast<double>(1ull << (attempt - 1));
    double jitter;
    {
      std::lock_guard<std::mutex> lock(rng_mu_);
      jitter = std::uniform_real_distribution<double>(0.0, 0.25)(rng_);
    }
    return std::chrono::milliseconds(static_cast<long long>(base * (1.0 + jitter)));
  }

  ProviderConfig config_;
  std::shared_ptr<Clock> clock_;
  RateLimiter limiter_;
  std::string host_;
  std::string path_prefix_;
  std::mt19937_64 rng_;
  std::mutex rng_mu_;
};

// Deterministic in-process provider for tests and offline runs. Replies are
// resolved in priority order: exact prompt fingerprint, first matching
// substring rule, reply function, fixed default. Configure before use; the
// lookup tables are read-only once calls begin.
class ScriptedProvider : public Provider {
 public:
  using ReplyFn = std::function<std::string(const PromptBundle&)>;

  explicit ScriptedProvider(std::string name = "scripted") : name_(std::move(name)) {}

  void add_reply(const std::string& prompt_fingerprint, std::string reply) {
    by_fingerprint_[prompt_fingerprint] = std::move(reply);
  }

  void add_rule(std::string substring, std::string reply) {
    rules_.push_back({std::move(substring), std::move(reply)});
  }

  void set_default_reply(std::string reply) { default_reply_ = std::move(reply); }
  void set_default_fn(ReplyFn fn) { default_fn_ = std::move(fn); }

  int calls() const { return calls_.load(); }
  const std::string& name() const override { return name_; }

  CompletionResult complete(const PromptBundle& bundle) override {
    calls_.fetch_add(1);
    CompletionResult out;
    out.provider_meta["scripted"] = "true";

    auto it = by_fingerprint_.find(fingerprint(bundle));
    if (it != by_fingerprint_.end()) {
      out.text = it->second;
      return out;
    }
    std::string joined;
    for (const auto& m : bundle.messages) {
      joined += m.content;
      joined += '\n';
    }
    for (const auto& [needle, reply] : rules_) {
      if (joined.find(needle) != std::string::npos) {
        out.text = reply;
        return out;
      }
    }
    if (default_fn_) {
      out.text = default_fn_(bundle);
      return out;
    }
    if (default_reply_) {
      out.text = *default_reply_;
      return out;
    }
    throw ProviderError(ProviderError::Kind::transport,
                        name_ + ": no scripted reply matches the prompt");
  }

 private:
  std::string name_;
  std::map<std::string, std::string> by_fingerprint_;
  std::vector<std::pair<std::string, std::string>> rules_;
  std::optional<std::string> default_reply_;
  ReplyFn default_fn_;
  std::atomic<int> calls_{0};
};

}  // namespace phishdebate
