#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "curriculum.hpp"
#include "errors.hpp"
#include "grpo_core.hpp"
#include "reward_engine.hpp"
#include "rollout_grammar.hpp"
#include "toy_policy.hpp"

namespace mmr {

/// A scripted environment small enough for a bigram policy. Each action
/// renders a fixed fragment of protocol text; the transcript is parsed and
/// scored by the real reward engine. Tool results are environment tokens
/// and never enter the loss.
namespace game {

enum action : int {
    think = 0,
    search_key = 1,   // retrieves the passage holding the answer
    search_vague = 2, // retrieves an unrelated passage
    save = 3,         // saves what the last search returned
    answer = 4,       // opens the answer phase
    micro = 5,        // micro lookup of the saved key
    box = 6,          // boxes the best value at hand
    end = 7,          // closes the answer phase and the episode
};

inline constexpr int n_actions = 8;
inline constexpr int macro_result_token = 8;
inline constexpr int micro_result_token = 9;
inline constexpr int n_contexts = 10;

inline constexpr std::string_view answer_key = "RoomNumber";
inline constexpr std::string_view answer_value = "Room 301";
/// Boxing from memory without a micro lookup only recalls the number.
inline constexpr std::string_view recalled_value = "301";

[[nodiscard]] inline const gold_set& gold()
{
    static const gold_set g{{std::string(answer_value)}};
    return g;
}

struct episode {
    std::vector<int> tokens;
    std::vector<std::uint8_t> mask;
    std::string transcript;
    bool closed = false;
};

/// Renders and plays one episode. `pick` returns the next action given the
/// tokens so far.
template <class Pick>
episode play(Pick&& pick, training_stage stage, std::size_t max_actions)
{
    episode ep;
    bool in_answer = false;
    int last_search = -1;
    bool saved_key = false;
    bool saved_any = false;
    bool micro_hit = false;
    std::size_t actions = 0;
    while (actions < max_actions) {
        int a = pick(std::span<const int>(ep.tokens));
        ep.tokens.push_back(a);
        ep.mask.push_back(1);
        ++actions;
        auto& out = ep.transcript;
        switch (a) {
        case think:
            out += "<think>I should find the room number.</think>";
            break;
        case search_key:
        case search_vague: {
            bool key = a == search_key;
            out += key ? R"(<macro_tool_call>{"name": "search", "query": "suite room number"}</macro_tool_call>)"
                       : R"(<macro_tool_call>{"name": "search", "query": "hotel"}</macro_tool_call>)";
            out += key ? R"(<macro_response>"id": "0-0", "text": "The suite is Room 301."</macro_response>)"
                       : R"(<macro_response>"id": "4-0", "text": "The lobby opens at nine."</macro_response>)";
            ep.tokens.push_back(macro_result_token);
            ep.mask.push_back(0);
            last_search = a;
            break;
        }
        case save: {
            std::string value = last_search == search_key ? std::string(answer_value)
                                : last_search == search_vague ? "lobby hours"
                                                              : "unknown";
            saved_key = saved_key || last_search == search_key;
            saved_any = true;
            out += "<key_info_save>{\"" + std::string(answer_key) + "\": \"" + value + "\"}</key_info_save>";
            break;
        }
        case answer:
            out += "<answer>";
            in_answer = true;
            break;
        case micro: {
            out += "<micro_tool_call>{\"query\": \"" + std::string(answer_key) + "\"}</micro_tool_call>";
            // Micro retrieval only comes online in the full stage.
            bool live = stage == training_stage::full && saved_any;
            std::string value = !live ? "null"
                                : saved_key ? "\"" + std::string(answer_value) + "\""
                                            : "\"unknown\"";
            out += "<micro_response>{\"" + std::string(answer_key) + "\":" + value + "}</micro_response>";
            micro_hit = micro_hit || (live && saved_key);
            ep.tokens.push_back(micro_result_token);
            ep.mask.push_back(0);
            break;
        }
        case box:
            out += "The room is \\boxed{";
            out += micro_hit ? answer_value : (saved_key ? recalled_value : std::string_view("unknown"));
            out += "}.";
            break;
        case end:
            if (!in_answer) {
                out += "<answer>";
            }
            out += "</answer>\n";
            ep.closed = true;
            return ep;
        default:
            throw structural_error("protocol game: action out of range");
        }
    }
    return ep;
}

[[nodiscard]] inline double score(const episode& ep, training_stage stage, const reward_config& cfg)
{
    auto c = constraints_for(stage);
    auto b = score_rollout(parse(ep.transcript), gold(), cfg, c.rules);
    return stage_reward_adapter(b, stage, cfg);
}

} // namespace game

struct toy_train_config {
    std::size_t episodes = 200;
    std::size_t groups_per_episode = 64;
    std::size_t max_actions = 12;
    std::size_t transition_episode = 100;
    std::size_t inner_steps = 2;
    double learning_rate = 4.0;
    std::uint64_t seed = 42;
    grpo_config grpo;
    reward_config reward;

    void validate() const
    {
        if (episodes == 0 || groups_per_episode == 0 || max_actions == 0 || inner_steps == 0) {
            throw config_error("toy training sizes must be positive");
        }
        if (!(learning_rate > 0.0)) {
            throw config_error("toy learning rate must be positive");
        }
        grpo.validate();
        reward.validate();
    }
};

struct toy_episode_record {
    std::size_t episode = 0;
    training_stage stage = training_stage::macro_only;
    double mean_reward = 0.0;
    double moving_average = 0.0;
    grpo_step_telemetry step;

    [[nodiscard]] nlohmann::ordered_json to_json() const
    {
        nlohmann::ordered_json j;
        j["episode"] = episode;
        j["stage"] = std::string(to_string(stage));
        j["mean_reward"] = mean_reward;
        j["moving_average"] = moving_average;
        j["loss"] = step.loss;
        j["kl"] = step.kl;
        j["clip_fraction"] = step.clip_fraction;
        return j;
    }
};

inline constexpr std::size_t reward_window = 50;

/// Trailing mean over the last `window` values (shorter at the start).
[[nodiscard]] inline std::vector<double> trailing_mean(const std::vector<double>& xs, std::size_t window)
{
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
        double sum = 0.0;
        for (std::size_t j = lo; j <= i; ++j) {
            sum += xs[j];
        }
        out[i] = sum / static_cast<double>(i + 1 - lo);
    }
    return out;
}

/// GRPO on the protocol game with the two-stage curriculum. Episode e
/// samples groups from the current policy, then takes `inner_steps`
/// gradient steps against that snapshot. Each record is passed to `sink`
/// as it is produced.
template <class Sink>
std::vector<toy_episode_record> train_toy(const toy_train_config& cfg, Sink&& sink)
{
    cfg.validate();
    toy_softmax_policy policy(game::n_contexts, game::n_actions);
    const toy_softmax_policy reference = policy;
    curriculum_schedule schedule{curriculum_schedule::unit::step, cfg.transition_episode, 1};
    std::mt19937_64 rng(cfg.seed);
    const std::vector<int> input;

    std::vector<toy_episode_record> records;
    std::vector<double> means;
    for (std::size_t e = 0; e < cfg.episodes; ++e) {
        auto stage = schedule.stage_at(e);
        const toy_softmax_policy old = policy;
        std::vector<rollout_group> groups(cfg.groups_per_episode);
        double reward_sum = 0.0;
        for (auto& g : groups) {
            for (std::size_t i = 0; i < cfg.grpo.group_size; ++i) {
                auto ep = game::play(
                    [&](std::span<const int> prefix) { return old.sample(prefix, input, rng); }, stage,
                    cfg.max_actions);
                double r = game::score(ep, stage, cfg.reward);
                reward_sum += r;
                g.rollouts.push_back({std::move(ep.tokens), std::move(ep.mask), r});
            }
            assign_advantages(g, cfg.grpo);
        }
        grpo_step_telemetry tel;
        for (std::size_t k = 0; k < cfg.inner_steps; ++k) {
            tel = grpo_step(groups, policy, old, reference, cfg.grpo, cfg.learning_rate);
        }
        toy_episode_record rec;
        rec.episode = e;
        rec.stage = stage;
        rec.mean_reward = reward_sum / static_cast<double>(cfg.groups_per_episode * cfg.grpo.group_size);
        means.push_back(rec.mean_reward);
        rec.moving_average = trailing_mean(means, reward_window).back();
        rec.step = tel;
        rec.step.step = e;
        sink(rec);
        records.push_back(rec);
    }
    return records;
}

inline std::vector<toy_episode_record> train_toy(const toy_train_config& cfg)
{
    return train_toy(cfg, [](const toy_episode_record&) {});
}

} // namespace mmr
