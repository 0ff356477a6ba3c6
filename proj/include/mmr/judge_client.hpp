#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"

namespace mmr {

/// Chat-completion endpoint. The api key is read from the environment and
/// never written to logs, errors or request dumps.
struct judge_endpoint_config {
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4o-mini";
    std::string api_key_env = "MMR_JUDGE_API_KEY";
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    double backoff_multiplier = 2.0;
    std::optional<double> temperature;
    std::optional<int> max_tokens;
    double requests_per_second = 0.0; // 0 disables rate limiting
    int burst = 1;

    void validate() const
    {
        if (timeout.count() <= 0) {
            throw config_error("judge timeout must be positive");
        }
        if (max_retries < 0) {
            throw config_error("max_retries must be non-negative");
        }
        if (backoff_multiplier < 1.0) {
            throw config_error("backoff multiplier must be at least 1");
        }
        if (requests_per_second < 0.0 || burst < 1) {
            throw config_error("invalid rate limit");
        }
    }

    [[nodiscard]] std::string api_key() const
    {
        const char* v = std::getenv(api_key_env.c_str());
        return v ? std::string(v) : std::string();
    }
};

struct http_request {
    std::string url;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
    std::chrono::milliseconds timeout{0};
};

struct http_response {
    int status = 0;
    std::string body;
};

/// Thrown by transports for connection-level failures (refused, timed out).
class network_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class http_transport_interface {
  public:
    virtual ~http_transport_interface() = default;
    virtual http_response post(const http_request& req) = 0;
};

struct attempt_record {
    int attempt = 0; // 1-based
    int status = 0;  // 0 for network errors
    std::string error;
    std::chrono::milliseconds backoff{0}; // wait before the next attempt
    bool retried = false;
};

class judge_transport_error : public std::runtime_error {
  public:
    judge_transport_error(const std::string& what, std::vector<attempt_record> log)
        : std::runtime_error(what), attempts(std::move(log))
    {
    }
    std::vector<attempt_record> attempts;
};

class judge_protocol_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Request body: one user message, fixed key order, no ids or timestamps.
[[nodiscard]] inline std::string chat_request_body(const judge_endpoint_config& cfg, std::string_view prompt)
{
    nlohmann::ordered_json j;
    j["model"] = cfg.model;
    j["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", std::string(prompt)}}});
    if (cfg.temperature) {
        j["temperature"] = *cfg.temperature;
    }
    if (cfg.max_tokens) {
        j["max_tokens"] = *cfg.max_tokens;
    }
    return j.dump();
}

/// choices[0].message.content of a chat-completion response.
[[nodiscard]] inline std::string chat_reply_text(std::string_view body)
{
    auto j = nlohmann::json::parse(body.begin(), body.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw judge_protocol_error("response body is not a JSON object");
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
        throw judge_protocol_error("response has no choices");
    }
    const auto& c = j["choices"][0];
    if (!c.is_object() || !c.contains("message") || !c["message"].is_object() || !c["message"].contains("content") ||
        !c["message"]["content"].is_string()) {
        throw judge_protocol_error("choices[0].message.content missing or not a string");
    }
    return c["message"]["content"].get<std::string>();
}

[[nodiscard]] constexpr bool is_transient_status(int status) noexcept
{
    return status == 408 || status == 429 || (status >= 500 && status <= 599);
}

/// Token bucket with an injectable clock. acquire() returns how long the
/// caller must wait before sending.
class token_bucket {
  public:
    using clock_fn = std::function<std::chrono::steady_clock::time_point()>;

    token_bucket(double rate_per_second, int burst, clock_fn clock = [] { return std::chrono::steady_clock::now(); })
        : rate_(rate_per_second), capacity_(burst), tokens_(burst), clock_(std::move(clock)), last_(clock_())
    {
    }

    [[nodiscard]] std::chrono::milliseconds acquire()
    {
        std::lock_guard lock(mu_);
        if (rate_ <= 0.0) {
            return std::chrono::milliseconds{0};
        }
        auto now = clock_();
        double elapsed = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        tokens_ = std::min(static_cast<double>(capacity_), tokens_ + elapsed * rate_);
        tokens_ -= 1.0;
        if (tokens_ >= 0.0) {
            return std::chrono::milliseconds{0};
        }
        double wait_s = -tokens_ / rate_;
        return std::chrono::milliseconds{static_cast<long long>(std::ceil(wait_s * 1000.0))};
    }

  private:
    std::mutex mu_;
    double rate_;
    int capacity_;
    double tokens_;
    clock_fn clock_;
    std::chrono::steady_clock::time_point last_;
};

/// Sends prompts to the judge. Shareable across threads when the transport is.
class judge_client {
  public:
    using sleep_fn = std::function<void(std::chrono::milliseconds)>;

    judge_client(judge_endpoint_config cfg, http_transport_interface& transport,
                 sleep_fn sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); },
                 token_bucket::clock_fn clock = [] { return std::chrono::steady_clock::now(); })
        : cfg_(std::move(cfg)), transport_(transport), sleep_(std::move(sleeper)),
          bucket_(cfg_.requests_per_second, cfg_.burst, std::move(clock))
    {
        cfg_.validate();
    }

    [[nodiscard]] const judge_endpoint_config& config() const noexcept { return cfg_; }

    [[nodiscard]] http_request make_request(std::string_view prompt) const
    {
        http_request req;
        auto base = cfg_.base_url;
        while (!base.empty() && base.back() == '/') {
            base.pop_back();
        }
        req.url = base + "/chat/completions";
        req.headers.emplace_back("Content-Type", "application/json");
        if (auto key = cfg_.api_key(); !key.empty()) {
            req.headers.emplace_back("Authorization", "Bearer " + key);
        }
        req.body = chat_request_body(cfg_, prompt);
        req.timeout = cfg_.timeout;
        return req;
    }

    /// Returns the assistant text. `log`, when given, receives one record
    /// per attempt.
    std::string judge(std::string_view prompt, std::vector<attempt_record>* log = nullptr)
    {
        auto req = make_request(prompt);
        auto key = cfg_.api_key();
        std::vector<attempt_record> attempts;
        auto backoff = cfg_.initial_backoff;
        for (int attempt = 1;; ++attempt) {
            if (auto wait = bucket_.acquire(); wait.count() > 0) {
                sleep_(wait);
            }
            attempt_record rec;
            rec.attempt = attempt;
            std::optional<http_response> resp;
            try {
                resp = transport_.post(req);
                rec.status = resp->status;
            } catch (const network_error& e) {
                rec.error = redact(e.what(), key);
            }
            if (resp && resp->status >= 200 && resp->status < 300) {
                attempts.push_back(rec);
                if (log) {
                    *log = attempts;
                }
                return chat_reply_text(resp->body);
            }
            if (resp && rec.error.empty()) {
                rec.error = "HTTP " + std::to_string(resp->status);
            }
            bool transient = !resp || is_transient_status(resp->status);
            bool again = transient && attempt <= cfg_.max_retries;
            if (again) {
                rec.retried = true;
                rec.backoff = backoff;
            }
            attempts.push_back(rec);
            if (!again) {
                if (log) {
                    *log = attempts;
                }
                throw judge_transport_error("judge request failed after " + std::to_string(attempt) +
                                                " attempt(s): " + rec.error,
                                            attempts);
            }
            sleep_(backoff);
            backoff = std::chrono::milliseconds{
                static_cast<long long>(static_cast<double>(backoff.count()) * cfg_.backoff_multiplier)};
        }
    }

  private:
    static std::string redact(std::string msg, const std::string& key)
    {
        if (key.empty()) {
            return msg;
        }
        for (auto at = msg.find(key); at != std::string::npos; at = msg.find(key, at)) {
            msg.replace(at, key.size(), "***");
        }
        return msg;
    }

    judge_endpoint_config cfg_;
    http_transport_interface& transport_;
    sleep_fn sleep_;
    token_bucket bucket_;
};

} // namespace mmr
