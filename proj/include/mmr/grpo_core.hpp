#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"

namespace mmr {

/// Token-level policy: log pi(token | input ++ prefix).
class policy_interface {
  public:
    virtual ~policy_interface() = default;
    [[nodiscard]] virtual double log_prob(int token, std::span<const int> prefix,
                                          std::span<const int> input) const = 0;
};

/// A policy whose parameters we can differentiate through.
class differentiable_policy : public policy_interface {
  public:
    [[nodiscard]] virtual std::size_t parameter_count() const = 0;
    [[nodiscard]] virtual std::span<double> parameters() = 0;
    /// grad += scale * d log_prob(token | ...) / d params
    virtual void accumulate_log_prob_gradient(int token, std::span<const int> prefix, std::span<const int> input,
                                              double scale, std::span<double> grad) const = 0;
};

struct group_rollout {
    std::vector<int> tokens;
    std::vector<std::uint8_t> mask; // 1 = policy token, 0 = environment token
    double reward = 0.0;
};

struct rollout_group {
    std::vector<int> input;
    std::vector<group_rollout> rollouts;
    std::vector<double> advantages;
};

enum class std_kind { population, sample };

struct grpo_config {
    double epsilon = 0.2;
    double kl_beta = 0.001;
    std::size_t group_size = 5;
    double std_floor = 1e-8;
    std_kind deviation = std_kind::population;
    double learning_rate = 1e-6;

    void validate() const
    {
        if (!(epsilon > 0.0)) throw config_error("epsilon must be positive");
        if (!(kl_beta >= 0.0)) throw config_error("kl_beta must be non-negative");
        if (group_size < 1) throw config_error("group_size must be at least 1");
        if (!(std_floor >= 0.0)) throw config_error("std_floor must be non-negative");
    }
};

/// A_i = (r_i - mean) / std over the group. Groups whose std falls below
/// `std_floor` (including single-rollout groups) get all-zero advantages.
[[nodiscard]] inline std::vector<double> group_advantages(std::span<const double> rewards, double std_floor = 1e-8,
                                                          std_kind kind = std_kind::population)
{
    std::vector<double> adv(rewards.size(), 0.0);
    const auto n = rewards.size();
    if (n < 2) {
        return adv;
    }
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double r : rewards) {
        ss += (r - mean) * (r - mean);
    }
    double denom = kind == std_kind::population ? static_cast<double>(n) : static_cast<double>(n - 1);
    double sd = std::sqrt(ss / denom);
    if (!(sd >= std_floor) || sd == 0.0) {
        return adv;
    }
    for (std::size_t i = 0; i < n; ++i) {
        adv[i] = (rewards[i] - mean) / sd;
    }
    return adv;
}

inline void assign_advantages(rollout_group& g, const grpo_config& cfg)
{
    std::vector<double> rewards;
    rewards.reserve(g.rollouts.size());
    for (const auto& r : g.rollouts) {
        rewards.push_back(r.reward);
    }
    g.advantages = group_advantages(rewards, cfg.std_floor, cfg.deviation);
}

namespace detail {

inline void check_lengths(const group_rollout& r, std::size_t index)
{
    if (r.tokens.size() != r.mask.size()) {
        throw structural_error("rollout " + std::to_string(index) + ": mask length " + std::to_string(r.mask.size()) +
                               " != token count " + std::to_string(r.tokens.size()));
    }
}

/// Log-probs at unmasked positions only; masked positions are never queried.
inline std::vector<double> unmasked_log_probs(const policy_interface& policy, std::span<const int> input,
                                              const group_rollout& r, std::size_t index)
{
    check_lengths(r, index);
    std::vector<double> out;
    std::span<const int> tokens(r.tokens);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (r.mask[t] == 0) {
            continue;
        }
        double lp = policy.log_prob(tokens[t], tokens.first(t), input);
        if (!std::isfinite(lp)) {
            throw numeric_error("non-finite log-prob in rollout " + std::to_string(index) + " at token " +
                                    std::to_string(t),
                                index);
        }
        out.push_back(lp);
    }
    return out;
}

inline double masked_mean(const std::vector<double>& values)
{
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    return sum / static_cast<double>(std::max<std::size_t>(1, values.size()));
}

inline double k3(double delta) { return std::exp(delta) - delta - 1.0; }

} // namespace detail

/// (sum_t m_t log pi(y_t | y_<t, x)) / max(1, sum_t m_t)
[[nodiscard]] inline double masked_logprob(const policy_interface& policy, std::span<const int> input,
                                           const group_rollout& r)
{
    return detail::masked_mean(detail::unmasked_log_probs(policy, input, r, 0));
}

/// Mask-averaged k3 = exp(d) - d - 1 with d = log pi_ref - log pi_theta.
/// Non-negative; its expectation under pi_theta is KL(pi_theta || pi_ref).
[[nodiscard]] inline double kl_estimate(const policy_interface& policy, const policy_interface& reference,
                                        std::span<const int> input, const group_rollout& r)
{
    auto lp = detail::unmasked_log_probs(policy, input, r, 0);
    auto lr = detail::unmasked_log_probs(reference, input, r, 0);
    double sum = 0.0;
    for (std::size_t t = 0; t < lp.size(); ++t) {
        sum += detail::k3(lr[t] - lp[t]);
    }
    return sum / static_cast<double>(std::max<std::size_t>(1, lp.size()));
}

struct policy_set {
    const policy_interface* current = nullptr;
    const policy_interface* old = nullptr;
    const policy_interface* reference = nullptr;
};

struct rollout_term {
    double ratio = 1.0;
    double advantage = 0.0;
    double surrogate = 0.0;
    double kl = 0.0;
    double term = 0.0;
    bool clipped = false;
};

/// Sign convention: `loss` is the negated GRPO objective, so minimizing it
/// maximizes (1/G) sum_i [min(rho A, clip(rho) A) - kl_beta KL_i].
struct grpo_loss_result {
    double loss = 0.0;
    double objective = 0.0;
    std::vector<rollout_term> terms;

    [[nodiscard]] double mean_kl() const
    {
        double s = 0.0;
        for (const auto& t : terms) s += t.kl;
        return terms.empty() ? 0.0 : s / static_cast<double>(terms.size());
    }

    [[nodiscard]] double clip_fraction() const
    {
        double c = 0.0;
        for (const auto& t : terms) c += t.clipped ? 1.0 : 0.0;
        return terms.empty() ? 0.0 : c / static_cast<double>(terms.size());
    }
};

namespace detail {

struct rollout_eval {
    rollout_term term;
    std::vector<double> lp;     // current policy, unmasked positions
    std::vector<double> lp_ref; // reference policy, unmasked positions
    double dsurrogate_dratio = 0.0;
};

inline rollout_eval evaluate_rollout(const rollout_group& group, std::size_t i, const policy_set& p,
                                     const grpo_config& cfg)
{
    const auto& r = group.rollouts[i];
    std::span<const int> input(group.input);
    rollout_eval ev;
    ev.lp = unmasked_log_probs(*p.current, input, r, i);
    auto lp_old = unmasked_log_probs(*p.old, input, r, i);
    double a = group.advantages[i];
    // One ratio per rollout, from the masked mean log-ratio.
    double ratio = std::exp(masked_mean(ev.lp) - masked_mean(lp_old));
    double unclipped = ratio * a;
    double clipped = std::clamp(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon) * a;
    auto& t = ev.term;
    t.ratio = ratio;
    t.advantage = a;
    t.surrogate = std::min(unclipped, clipped);
    t.clipped = clipped < unclipped;
    ev.dsurrogate_dratio = unclipped <= clipped ? a : 0.0;
    if (cfg.kl_beta != 0.0) {
        ev.lp_ref = unmasked_log_probs(*p.reference, input, r, i);
        double sum = 0.0;
        for (std::size_t k = 0; k < ev.lp.size(); ++k) {
            sum += k3(ev.lp_ref[k] - ev.lp[k]);
        }
        t.kl = sum / static_cast<double>(std::max<std::size_t>(1, ev.lp.size()));
        t.term = t.surrogate - cfg.kl_beta * t.kl;
    } else {
        t.term = t.surrogate;
    }
    if (!std::isfinite(t.term)) {
        throw numeric_error("non-finite objective term in rollout " + std::to_string(i), i);
    }
    return ev;
}

inline void check_group(const rollout_group& group)
{
    if (group.advantages.size() != group.rollouts.size()) {
        throw structural_error("advantages not computed for this group");
    }
    if (group.rollouts.empty()) {
        throw structural_error("empty rollout group");
    }
}

} // namespace detail

/// GRPO loss for one group. The KL penalty is subtracted per rollout,
/// outside the min(). Rollouts are reduced in index order.
[[nodiscard]] inline grpo_loss_result grpo_loss(const rollout_group& group, const policy_set& policies,
                                                const grpo_config& cfg)
{
    cfg.validate();
    detail::check_group(group);
    grpo_loss_result out;
    out.terms.reserve(group.rollouts.size());
    for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
        out.terms.push_back(detail::evaluate_rollout(group, i, policies, cfg).term);
    }
    double sum = 0.0;
    for (const auto& t : out.terms) {
        sum += t.term;
    }
    out.objective = sum / static_cast<double>(out.terms.size());
    out.loss = -out.objective;
    return out;
}

struct grpo_gradient_result {
    grpo_loss_result value;
    std::vector<double> gradient; // d loss / d params of the current policy
};

/// Loss and analytic parameter gradient for one group. `scale` multiplies
/// both (used to average over a batch of groups).
inline grpo_gradient_result grpo_loss_gradient(const rollout_group& group, const differentiable_policy& current,
                                               const policy_interface& old, const policy_interface& reference,
                                               const grpo_config& cfg, double scale = 1.0)
{
    cfg.validate();
    detail::check_group(group);
    policy_set p{&current, &old, &reference};
    grpo_gradient_result out;
    out.gradient.assign(current.parameter_count(), 0.0);
    const auto g = static_cast<double>(group.rollouts.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
        auto ev = detail::evaluate_rollout(group, i, p, cfg);
        sum += ev.term.term;
        out.value.terms.push_back(ev.term);

        const auto& r = group.rollouts[i];
        const auto m = static_cast<double>(std::max<std::size_t>(1, ev.lp.size()));
        std::span<const int> tokens(r.tokens);
        std::size_t k = 0;
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            if (r.mask[t] == 0) {
                continue;
            }
            double d_term = ev.dsurrogate_dratio * ev.term.ratio;
            if (cfg.kl_beta != 0.0) {
                d_term -= cfg.kl_beta * (1.0 - std::exp(ev.lp_ref[k] - ev.lp[k]));
            }
            double coeff = -scale * d_term / (m * g);
            if (coeff != 0.0) {
                current.accumulate_log_prob_gradient(tokens[t], tokens.first(t), group.input, coeff, out.gradient);
            }
            ++k;
        }
    }
    out.value.objective = sum / g;
    out.value.loss = -out.value.objective * scale;
    out.value.objective *= scale;
    return out;
}

struct grpo_step_telemetry {
    std::size_t step = 0;
    double mean_reward = 0.0;
    double loss = 0.0;
    double kl = 0.0;
    double clip_fraction = 0.0;

    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"step", step}, {"mean_reward", mean_reward}, {"loss", loss}, {"kl", kl},
                {"clip_fraction", clip_fraction}};
    }
};

/// One plain gradient-descent step on the batch-mean GRPO loss.
inline grpo_step_telemetry grpo_step(const std::vector<rollout_group>& groups, differentiable_policy& policy,
                                     const policy_interface& old, const policy_interface& reference,
                                     const grpo_config& cfg, double learning_rate)
{
    if (groups.empty()) {
        throw structural_error("grpo_step needs at least one group");
    }
    const double scale = 1.0 / static_cast<double>(groups.size());
    std::vector<double> grad(policy.parameter_count(), 0.0);
    grpo_step_telemetry tel;
    double reward_sum = 0.0;
    std::size_t rollouts = 0;
    double kl_sum = 0.0;
    double clipped = 0.0;
    for (const auto& g : groups) {
        auto res = grpo_loss_gradient(g, policy, old, reference, cfg, scale);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            grad[i] += res.gradient[i];
        }
        tel.loss += res.value.loss;
        for (const auto& t : res.value.terms) {
            kl_sum += t.kl;
            clipped += t.clipped ? 1.0 : 0.0;
        }
        for (const auto& r : g.rollouts) {
            reward_sum += r.reward;
            ++rollouts;
        }
    }
    auto params = policy.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= learning_rate * grad[i];
    }
    tel.mean_reward = reward_sum / static_cast<double>(rollouts);
    tel.kl = kl_sum / static_cast<double>(rollouts);
    tel.clip_fraction = clipped / static_cast<double>(rollouts);
    return tel;
}

} // namespace mmr
