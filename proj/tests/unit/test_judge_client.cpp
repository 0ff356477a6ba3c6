#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <deque>

#include "mmr/judge_client.hpp"

using namespace mmr;
using namespace std::chrono_literals;

namespace {

const std::string ok_body = R"({"choices": [{"message": {"role": "assistant", "content": "{\"judgement\": \"correct\"}"}}]})";

struct step {
    int status = 200;
    bool network = false;
};

class scripted_transport final : public http_transport_interface {
  public:
    explicit scripted_transport(std::deque<step> s) : steps_(std::move(s)) {}

    http_response post(const http_request& req) override
    {
        requests.push_back(req);
        auto s = steps_.empty() ? step{} : steps_.front();
        if (!steps_.empty()) steps_.pop_front();
        if (s.network) {
            throw network_error("connection refused for key " + key_in_message);
        }
        return {s.status, s.status == 200 ? ok_body : "{\"error\": \"busy\"}"};
    }

    std::vector<http_request> requests;
    std::string key_in_message;

  private:
    std::deque<step> steps_;
};

struct recorded_sleeps {
    std::vector<std::chrono::milliseconds> waits;
    judge_client::sleep_fn fn()
    {
        return [this](std::chrono::milliseconds d) { waits.push_back(d); };
    }
};

} // namespace

TEST_CASE("two failures then success leaves two retry records")
{
    scripted_transport t({{503}, {0, true}, {200}});
    recorded_sleeps sleeps;
    judge_endpoint_config cfg;
    judge_client client(cfg, t, sleeps.fn());
    std::vector<attempt_record> log;
    CHECK(client.judge("p", &log) == "{\"judgement\": \"correct\"}");
    REQUIRE(log.size() == 3);
    CHECK(log[0].retried);
    CHECK(log[0].status == 503);
    CHECK(log[0].backoff == 500ms);
    CHECK(log[1].retried);
    CHECK(log[1].status == 0);
    CHECK(log[1].backoff == 1000ms);
    CHECK_FALSE(log[2].retried);
    CHECK(log[2].status == 200);
    CHECK(sleeps.waits == std::vector<std::chrono::milliseconds>{500ms, 1000ms});
}

TEST_CASE("retry state enumeration")
{
    // Every failure pattern of length 4 against every retry budget 0..3.
    for (int budget = 0; budget <= 3; ++budget) {
        for (int pattern = 0; pattern < 16; ++pattern) {
            std::deque<step> steps;
            for (int i = 0; i < 4; ++i) {
                steps.push_back((pattern >> i) & 1 ? step{500} : step{200});
            }
            int first_ok = 0;
            while (first_ok < 4 && ((pattern >> first_ok) & 1)) ++first_ok;
            scripted_transport t(steps);
            recorded_sleeps sleeps;
            judge_endpoint_config cfg;
            cfg.max_retries = budget;
            judge_client client(cfg, t, sleeps.fn());
            std::vector<attempt_record> log;
            bool succeeds = first_ok <= budget;
            if (succeeds) {
                CHECK_NOTHROW(client.judge("p", &log));
                CHECK(log.size() == static_cast<std::size_t>(first_ok + 1));
            } else {
                CHECK_THROWS_AS(client.judge("p", &log), judge_transport_error);
                CHECK(log.size() == static_cast<std::size_t>(budget + 1));
            }
            CHECK(t.requests.size() == log.size());
            CHECK(sleeps.waits.size() == log.size() - 1);
            for (std::size_t i = 0; i + 1 < log.size(); ++i) {
                CHECK(log[i].retried);
            }
            CHECK_FALSE(log.back().retried);
        }
    }
}

TEST_CASE("no retries fails on the first error")
{
    scripted_transport t({{503}, {200}});
    judge_endpoint_config cfg;
    cfg.max_retries = 0;
    recorded_sleeps sleeps;
    judge_client client(cfg, t, sleeps.fn());
    try {
        (void)client.judge("p");
        FAIL("expected a transport error");
    } catch (const judge_transport_error& e) {
        REQUIRE(e.attempts.size() == 1);
        CHECK_FALSE(e.attempts[0].retried);
    }
    CHECK(t.requests.size() == 1);
    CHECK(sleeps.waits.empty());
}

TEST_CASE("client errors are not retried")
{
    for (int status : {400, 401, 404}) {
        scripted_transport t({{status}, {200}});
        recorded_sleeps sleeps;
        judge_client client({}, t, sleeps.fn());
        CHECK_THROWS_AS(client.judge("p"), judge_transport_error);
        CHECK(t.requests.size() == 1);
    }
    for (int status : {408, 429, 500, 599}) {
        CHECK(is_transient_status(status));
    }
    CHECK_FALSE(is_transient_status(404));
}

TEST_CASE("malformed reply bodies are protocol errors")
{
    CHECK_THROWS_AS(chat_reply_text("not json"), judge_protocol_error);
    CHECK_THROWS_AS(chat_reply_text(R"({"choices": []})"), judge_protocol_error);
    CHECK_THROWS_AS(chat_reply_text(R"({"choices": [{"message": {"content": 3}}]})"), judge_protocol_error);
    CHECK(chat_reply_text(ok_body) == "{\"judgement\": \"correct\"}");
}

TEST_CASE("the API key never appears in attempt logs")
{
    ::setenv("MMR_TEST_JUDGE_KEY", "sk-secret-123", 1);
    judge_endpoint_config cfg;
    cfg.api_key_env = "MMR_TEST_JUDGE_KEY";
    cfg.max_retries = 1;
    scripted_transport t({{0, true}, {0, true}});
    t.key_in_message = "sk-secret-123";
    recorded_sleeps sleeps;
    judge_client client(cfg, t, sleeps.fn());
    try {
        (void)client.judge("p");
        FAIL("expected a transport error");
    } catch (const judge_transport_error& e) {
        CHECK(std::string(e.what()).find("sk-secret-123") == std::string::npos);
        for (const auto& a : e.attempts) {
            CHECK(a.error.find("sk-secret-123") == std::string::npos);
            CHECK(a.error.find("***") != std::string::npos);
        }
    }
    REQUIRE_FALSE(t.requests.empty());
    CHECK(t.requests[0].body.find("sk-secret-123") == std::string::npos);
    bool bearer = false;
    for (const auto& [k, v] : t.requests[0].headers) {
        bearer = bearer || (k == "Authorization" && v == "Bearer sk-secret-123");
    }
    CHECK(bearer);
    ::unsetenv("MMR_TEST_JUDGE_KEY");
}

TEST_CASE("request bodies are deterministic")
{
    judge_endpoint_config cfg;
    cfg.base_url = "http://localhost:8080/v1/";
    scripted_transport t({});
    judge_client client(cfg, t);
    auto a = client.make_request("hello");
    auto b = client.make_request("hello");
    CHECK(a.body == b.body);
    CHECK(a.url == "http://localhost:8080/v1/chat/completions");
    CHECK(a.body == R"({"model":"gpt-4o-mini","messages":[{"role":"user","content":"hello"}]})");
    cfg.temperature = 0.0;
    cfg.max_tokens = 64;
    CHECK(chat_request_body(cfg, "x") ==
          R"({"model":"gpt-4o-mini","messages":[{"role":"user","content":"x"}],"temperature":0.0,"max_tokens":64})");
}

TEST_CASE("token bucket paces requests on a fake clock")
{
    auto now = std::chrono::steady_clock::time_point{};
    token_bucket bucket(2.0, 2, [&] { return now; });
    CHECK(bucket.acquire() == 0ms);
    CHECK(bucket.acquire() == 0ms);
    CHECK(bucket.acquire() == 500ms);
    now += 1500ms;
    CHECK(bucket.acquire() == 0ms);
    CHECK(bucket.acquire() == 0ms);
    token_bucket off(0.0, 1, [&] { return now; });
    for (int i = 0; i < 5; ++i) CHECK(off.acquire() == 0ms);
}

TEST_CASE("invalid endpoint settings are rejected")
{
    judge_endpoint_config cfg;
    cfg.max_retries = -1;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg.max_retries = 0;
    cfg.timeout = 0ms;
    CHECK_THROWS_AS(cfg.validate(), config_error);
}
