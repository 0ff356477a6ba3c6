#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "errors.hpp"
#include "grpo_core.hpp"

namespace mmr {

/// Uniform double in [0, 1) from the top 53 bits of one 64-bit draw.
[[nodiscard]] inline double uniform01(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Softmax policy conditioned on the previous token: one logit row per
/// context. The context is the last token of (input ++ prefix), or the
/// begin-of-sequence row when both are empty. Context ids may exceed the
/// action range (environment tokens); emitted tokens may not.
class toy_softmax_policy final : public differentiable_policy {
  public:
    toy_softmax_policy(std::size_t n_contexts, std::size_t n_actions)
        : n_contexts_(n_contexts + 1), n_actions_(n_actions), logits_(n_contexts_ * n_actions, 0.0)
    {
        if (n_actions == 0) {
            throw config_error("toy policy needs at least one action");
        }
    }

    [[nodiscard]] std::size_t actions() const noexcept { return n_actions_; }
    [[nodiscard]] std::size_t contexts() const noexcept { return n_contexts_; }
    [[nodiscard]] int bos() const noexcept { return static_cast<int>(n_contexts_ - 1); }

    [[nodiscard]] std::size_t parameter_count() const override { return logits_.size(); }
    [[nodiscard]] std::span<double> parameters() override { return logits_; }
    [[nodiscard]] std::span<const double> parameters() const { return logits_; }

    [[nodiscard]] int context(std::span<const int> prefix, std::span<const int> input) const
    {
        int c = !prefix.empty() ? prefix.back() : (!input.empty() ? input.back() : bos());
        if (c < 0 || static_cast<std::size_t>(c) >= n_contexts_) {
            throw structural_error("context token out of range");
        }
        return c;
    }

    /// Log-softmax of one context row.
    [[nodiscard]] std::vector<double> log_probs(int ctx) const
    {
        const double* row = &logits_[static_cast<std::size_t>(ctx) * n_actions_];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < n_actions_; ++a) {
            mx = std::max(mx, row[a]);
        }
        double z = 0.0;
        for (std::size_t a = 0; a < n_actions_; ++a) {
            z += std::exp(row[a] - mx);
        }
        double lse = mx + std::log(z);
        std::vector<double> out(n_actions_);
        for (std::size_t a = 0; a < n_actions_; ++a) {
            out[a] = row[a] - lse;
        }
        return out;
    }

    [[nodiscard]] double log_prob(int token, std::span<const int> prefix, std::span<const int> input) const override
    {
        if (token < 0 || static_cast<std::size_t>(token) >= n_actions_) {
            return -std::numeric_limits<double>::infinity();
        }
        return log_probs(context(prefix, input))[static_cast<std::size_t>(token)];
    }

    void accumulate_log_prob_gradient(int token, std::span<const int> prefix, std::span<const int> input,
                                      double scale, std::span<double> grad) const override
    {
        auto ctx = context(prefix, input);
        auto lp = log_probs(ctx);
        auto base = static_cast<std::size_t>(ctx) * n_actions_;
        for (std::size_t a = 0; a < n_actions_; ++a) {
            double indicator = static_cast<std::size_t>(token) == a ? 1.0 : 0.0;
            grad[base + a] += scale * (indicator - std::exp(lp[a]));
        }
    }

    /// Inverse-CDF draw at temperature 1.
    [[nodiscard]] int sample(std::span<const int> prefix, std::span<const int> input, std::mt19937_64& rng) const
    {
        auto lp = log_probs(context(prefix, input));
        double u = uniform01(rng);
        double acc = 0.0;
        for (std::size_t a = 0; a < n_actions_; ++a) {
            acc += std::exp(lp[a]);
            if (u < acc) {
                return static_cast<int>(a);
            }
        }
        return static_cast<int>(n_actions_ - 1);
    }

  private:
    std::size_t n_contexts_;
    std::size_t n_actions_;
    std::vector<double> logits_;
};

} // namespace mmr
