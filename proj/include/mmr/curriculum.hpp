#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "errors.hpp"
#include "reward_engine.hpp"

namespace mmr {

enum class training_stage { macro_only, full };

[[nodiscard]] constexpr std::string_view to_string(training_stage s) noexcept
{
    return s == training_stage::macro_only ? "macro_only" : "full";
}

/// Two-stage schedule. Stage 1 (macro_only) trains macro retrieval and key
/// info saving; stage 2 (full) adds micro retrieval and grounding. The
/// switch happens once and is never undone.
struct curriculum_schedule {
    enum class unit { step, epoch };

    unit transition_unit = unit::epoch;
    std::size_t transition = 1; // first step/epoch of the full stage
    std::size_t steps_per_epoch = 1;

    void validate() const
    {
        if (transition == 0) {
            throw config_error("curriculum transition must be positive");
        }
        if (steps_per_epoch == 0) {
            throw config_error("steps_per_epoch must be positive");
        }
    }

    [[nodiscard]] std::size_t transition_step() const
    {
        return transition_unit == unit::step ? transition : transition * steps_per_epoch;
    }

    [[nodiscard]] training_stage stage_at(std::size_t step) const
    {
        validate();
        return step < transition_step() ? training_stage::macro_only : training_stage::full;
    }
};

struct rollout_constraints {
    training_stage stage = training_stage::full;
    bool allow_micro = true;
    format_rules rules;
    bool score_consistency = true;
};

[[nodiscard]] inline rollout_constraints constraints_for(training_stage s)
{
    rollout_constraints c;
    c.stage = s;
    if (s == training_stage::macro_only) {
        c.allow_micro = false;
        c.rules = {.allow_micro = false, .require_micro = false};
        c.score_consistency = false;
    }
    return c;
}

[[nodiscard]] inline rollout_constraints active_constraints(const curriculum_schedule& s, std::size_t step)
{
    return constraints_for(s.stage_at(step));
}

/// Stage 1 drops the consistency term from r_ans before the final-reward
/// case split; stage 2 returns b.r unchanged.
[[nodiscard]] inline double stage_reward_adapter(const reward_breakdown& b, training_stage s,
                                                 const reward_config& cfg = {})
{
    if (s == training_stage::full) {
        return b.r;
    }
    auto adjusted = b;
    adjusted.r_ans = b.s_final + cfg.alpha * b.s_key;
    return final_reward(adjusted, cfg);
}

} // namespace mmr
