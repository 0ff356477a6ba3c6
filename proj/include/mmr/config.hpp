#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "curriculum.hpp"
#include "errors.hpp"
#include "grpo_core.hpp"
#include "judge_client.hpp"
#include "proximity_analysis.hpp"
#include "protocol_game.hpp"
#include "reward_engine.hpp"

namespace mmr {

/// Every knob the command line exposes, with its default. Config files and
/// --set overrides may only touch keys that exist here.
[[nodiscard]] inline ordered_json default_config_json()
{
    ordered_json j;
    j["seed"] = 42;
    j["reward"] = {{"alpha", 1.0 / 3.0}, {"cons_beta", 1.0 / 10.0}, {"require_exact_match", false}};
    j["grpo"] = {{"epsilon", 0.2},     {"kl_beta", 0.001},        {"group_size", 5},
                 {"learning_rate", 1e-6}, {"std_floor", 1e-8}, {"std", "population"}};
    j["retrieval"] = {{"top_k", 5}, {"chunk_size", 100}};
    j["curriculum"] = {{"transition", 1}, {"unit", "epoch"}, {"epochs", 2}, {"steps_per_epoch", 1}};
    j["toy"] = {{"episodes", 200},         {"groups_per_episode", 64}, {"max_actions", 12},
                {"transition_episode", 100}, {"inner_steps", 2},        {"learning_rate", 4.0}};
    j["proximity"] = {{"d", 64},           {"base", 10000.0},        {"max_delta", 512},  {"samples", 10000},
                      {"smoothing_window", 16}, {"key_alignment", 1.0}, {"threads", 0}};
    j["judge"] = {{"base_url", "https://api.openai.com/v1"},
                  {"model", "gpt-4o-mini"},
                  {"api_key_env", "MMR_JUDGE_API_KEY"},
                  {"timeout_ms", 30000},
                  {"max_retries", 3},
                  {"initial_backoff_ms", 500},
                  {"temperature", nullptr},
                  {"requests_per_second", 0.0}};
    return j;
}

namespace detail {

inline void merge_known(ordered_json& base, const ordered_json& patch, const std::string& path)
{
    if (!patch.is_object()) {
        throw config_error("config " + (path.empty() ? std::string("root") : path) + " must be an object");
    }
    for (const auto& [k, v] : patch.items()) {
        auto where = path.empty() ? k : path + "." + k;
        if (!base.contains(k)) {
            throw config_error("unknown config key '" + where + "'");
        }
        if (base[k].is_object()) {
            merge_known(base[k], v, where);
        } else {
            base[k] = v;
        }
    }
}

inline ordered_json parse_scalar(std::string_view raw)
{
    auto j = ordered_json::parse(raw.begin(), raw.end(), nullptr, false);
    if (j.is_discarded()) {
        return ordered_json(std::string(raw));
    }
    return j;
}

template <class T>
T get_as(const ordered_json& j, std::string_view section, std::string_view key)
{
    const auto& v = j.at(std::string(section)).at(std::string(key));
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw config_error("config key '" + std::string(section) + "." + std::string(key) + "' has the wrong type");
    }
}

} // namespace detail

/// Effective run configuration: defaults, then the config file, then flags.
struct run_config {
    ordered_json effective = default_config_json();

    void merge(const ordered_json& patch) { detail::merge_known(effective, patch, ""); }

    void merge_file(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw io_error("cannot open config " + path);
        }
        std::stringstream ss;
        ss << in.rdbuf();
        auto j = ordered_json::parse(ss.str(), nullptr, false);
        if (j.is_discarded()) {
            throw config_error("config " + path + " is not valid JSON");
        }
        merge(j);
    }

    /// "section.key=value"; the value is read as JSON when it parses,
    /// otherwise as a string.
    void set(std::string_view assignment)
    {
        auto eq = assignment.find('=');
        if (eq == std::string_view::npos || eq == 0) {
            throw config_error("override must look like key=value: " + std::string(assignment));
        }
        auto key = assignment.substr(0, eq);
        ordered_json patch = detail::parse_scalar(assignment.substr(eq + 1));
        for (auto dot = key.rfind('.'); ; dot = key.rfind('.')) {
            auto leaf = std::string(dot == std::string_view::npos ? key : key.substr(dot + 1));
            patch = ordered_json{{leaf, patch}};
            if (dot == std::string_view::npos) {
                break;
            }
            key = key.substr(0, dot);
        }
        merge(patch);
    }

    [[nodiscard]] std::uint64_t seed() const
    {
        try {
            return effective.at("seed").get<std::uint64_t>();
        } catch (const nlohmann::json::exception&) {
            throw config_error("config key 'seed' must be a non-negative integer");
        }
    }

    [[nodiscard]] reward_config reward() const
    {
        reward_config r;
        r.alpha = detail::get_as<double>(effective, "reward", "alpha");
        r.cons_beta = detail::get_as<double>(effective, "reward", "cons_beta");
        r.require_exact_match = detail::get_as<bool>(effective, "reward", "require_exact_match");
        r.validate();
        return r;
    }

    [[nodiscard]] grpo_config grpo() const
    {
        grpo_config g;
        g.epsilon = detail::get_as<double>(effective, "grpo", "epsilon");
        g.kl_beta = detail::get_as<double>(effective, "grpo", "kl_beta");
        g.group_size = detail::get_as<std::size_t>(effective, "grpo", "group_size");
        g.learning_rate = detail::get_as<double>(effective, "grpo", "learning_rate");
        g.std_floor = detail::get_as<double>(effective, "grpo", "std_floor");
        auto kind = detail::get_as<std::string>(effective, "grpo", "std");
        if (kind != "population" && kind != "sample") {
            throw config_error("grpo.std must be population or sample");
        }
        g.deviation = kind == "population" ? std_kind::population : std_kind::sample;
        g.validate();
        return g;
    }

    [[nodiscard]] std::size_t top_k() const { return detail::get_as<std::size_t>(effective, "retrieval", "top_k"); }
    [[nodiscard]] std::size_t chunk_size() const
    {
        return detail::get_as<std::size_t>(effective, "retrieval", "chunk_size");
    }

    [[nodiscard]] curriculum_schedule curriculum() const
    {
        curriculum_schedule s;
        auto unit = detail::get_as<std::string>(effective, "curriculum", "unit");
        if (unit != "epoch" && unit != "step") {
            throw config_error("curriculum.unit must be epoch or step");
        }
        s.transition_unit = unit == "epoch" ? curriculum_schedule::unit::epoch : curriculum_schedule::unit::step;
        s.transition = detail::get_as<std::size_t>(effective, "curriculum", "transition");
        s.steps_per_epoch = detail::get_as<std::size_t>(effective, "curriculum", "steps_per_epoch");
        s.validate();
        return s;
    }

    [[nodiscard]] toy_train_config toy() const
    {
        toy_train_config t;
        t.episodes = detail::get_as<std::size_t>(effective, "toy", "episodes");
        t.groups_per_episode = detail::get_as<std::size_t>(effective, "toy", "groups_per_episode");
        t.max_actions = detail::get_as<std::size_t>(effective, "toy", "max_actions");
        t.transition_episode = detail::get_as<std::size_t>(effective, "toy", "transition_episode");
        t.inner_steps = detail::get_as<std::size_t>(effective, "toy", "inner_steps");
        t.learning_rate = detail::get_as<double>(effective, "toy", "learning_rate");
        t.seed = seed();
        t.grpo = grpo();
        t.reward = reward();
        t.validate();
        return t;
    }

    [[nodiscard]] decay_config proximity() const
    {
        decay_config c;
        c.rope.d = detail::get_as<std::size_t>(effective, "proximity", "d");
        c.rope.base = detail::get_as<double>(effective, "proximity", "base");
        c.rope.max_delta = detail::get_as<std::size_t>(effective, "proximity", "max_delta");
        c.samples = detail::get_as<std::size_t>(effective, "proximity", "samples");
        c.smoothing_window = detail::get_as<std::size_t>(effective, "proximity", "smoothing_window");
        c.key_alignment = detail::get_as<double>(effective, "proximity", "key_alignment");
        c.threads = detail::get_as<unsigned>(effective, "proximity", "threads");
        c.seed = seed();
        c.validate();
        return c;
    }

    [[nodiscard]] judge_endpoint_config judge() const
    {
        judge_endpoint_config j;
        j.base_url = detail::get_as<std::string>(effective, "judge", "base_url");
        j.model = detail::get_as<std::string>(effective, "judge", "model");
        j.api_key_env = detail::get_as<std::string>(effective, "judge", "api_key_env");
        j.timeout = std::chrono::milliseconds{detail::get_as<long long>(effective, "judge", "timeout_ms")};
        j.max_retries = detail::get_as<int>(effective, "judge", "max_retries");
        j.initial_backoff = std::chrono::milliseconds{detail::get_as<long long>(effective, "judge", "initial_backoff_ms")};
        if (const auto& t = effective["judge"]["temperature"]; !t.is_null()) {
            j.temperature = detail::get_as<double>(effective, "judge", "temperature");
        }
        j.requests_per_second = detail::get_as<double>(effective, "judge", "requests_per_second");
        j.validate();
        return j;
    }

    /// Validates every section; call once after all overrides.
    void validate() const
    {
        (void)seed();
        (void)reward();
        (void)grpo();
        (void)curriculum();
        (void)toy();
        (void)proximity();
        (void)judge();
        if (top_k() == 0) {
            throw config_error("retrieval.top_k must be positive");
        }
        if (chunk_size() == 0) {
            throw config_error("retrieval.chunk_size must be positive");
        }
    }

    /// One-line header record written at the top of every output.
    [[nodiscard]] std::string header() const
    {
        ordered_json h;
        h["config"] = effective;
        return h.dump();
    }
};

} // namespace mmr
