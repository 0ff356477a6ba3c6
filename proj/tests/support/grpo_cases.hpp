#pragma once

// Random toy GRPO instances shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "mmr/grpo_core.hpp"
#include "mmr/toy_policy.hpp"

namespace mmr::testing {

struct grpo_case {
    toy_softmax_policy current;
    toy_softmax_policy old;
    toy_softmax_policy reference;
    rollout_group group;
    std::size_t n_actions;
};

inline void randomize(toy_softmax_policy& p, std::mt19937_64& rng, double scale)
{
    std::normal_distribution<double> n(0.0, scale);
    for (auto& w : p.parameters()) {
        w = n(rng);
    }
}

/// Policy tokens are [0, V); environment tokens are [V, V + E) and masked.
inline grpo_case make_grpo_case(std::mt19937_64& rng, std::size_t v_max = 16, std::size_t t_max = 12,
                                std::size_t g = 5)
{
    std::size_t v = 2 + rng() % (v_max - 1);
    std::size_t e = 1 + rng() % 3;
    grpo_case c{toy_softmax_policy(v + e, v), toy_softmax_policy(v + e, v), toy_softmax_policy(v + e, v), {}, v};
    randomize(c.old, rng, 1.0);
    randomize(c.reference, rng, 1.0);
    auto cur = c.current.parameters();
    auto old = c.old.parameters();
    std::normal_distribution<double> drift(0.0, 0.15);
    for (std::size_t i = 0; i < cur.size(); ++i) {
        cur[i] = old[i] + drift(rng);
    }
    c.group.input = {static_cast<int>(rng() % v)};
    for (std::size_t i = 0; i < g; ++i) {
        group_rollout r;
        std::size_t t = 1 + rng() % t_max;
        for (std::size_t k = 0; k < t; ++k) {
            bool env = k > 0 && rng() % 4 == 0;
            r.tokens.push_back(static_cast<int>(env ? v + rng() % e : rng() % v));
            r.mask.push_back(env ? 0 : 1);
        }
        r.reward = static_cast<double>(rng() % 5) / 4.0;
        c.group.rollouts.push_back(std::move(r));
    }
    return c;
}

/// Returns noise for environment tokens and the wrapped policy otherwise.
class masked_noise_policy final : public policy_interface {
  public:
    masked_noise_policy(const toy_softmax_policy& inner, std::uint64_t seed) : inner_(inner), rng_(seed) {}

    [[nodiscard]] double log_prob(int token, std::span<const int> prefix, std::span<const int> input) const override
    {
        if (static_cast<std::size_t>(token) >= inner_.actions()) {
            return std::uniform_real_distribution<double>(-50.0, 50.0)(rng_);
        }
        return inner_.log_prob(token, prefix, input);
    }

  private:
    const toy_softmax_policy& inner_;
    mutable std::mt19937_64 rng_;
};

/// Smallest distance of any rollout ratio to a clip boundary or to 1.
inline double kink_distance(const grpo_loss_result& res, double epsilon)
{
    double d = std::numeric_limits<double>::infinity();
    for (const auto& t : res.terms) {
        d = std::min({d, std::abs(t.ratio - (1.0 - epsilon)), std::abs(t.ratio - (1.0 + epsilon))});
    }
    return d;
}

/// Central differences of the loss with respect to every current-policy logit.
inline std::vector<double> finite_difference(grpo_case& c, const grpo_config& cfg, double h)
{
    std::vector<double> out;
    auto params = c.current.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        double saved = params[i];
        params[i] = saved + h;
        double up = grpo_loss(c.group, {&c.current, &c.old, &c.reference}, cfg).loss;
        params[i] = saved - h;
        double down = grpo_loss(c.group, {&c.current, &c.old, &c.reference}, cfg).loss;
        params[i] = saved;
        out.push_back((up - down) / (2.0 * h));
    }
    return out;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b)
{
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
    return std::sqrt(diff) / scale;
}

} // namespace mmr::testing
