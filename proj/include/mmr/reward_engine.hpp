#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "key_info_store.hpp"
#include "rollout_grammar.hpp"
#include "text.hpp"

namespace mmr {

struct reward_config {
    double alpha = 1.0 / 3.0; // weight of s_key
    double cons_beta = 1.0 / 10.0; // weight of s_cons
    /// Also require every gold item to be matched exactly before r_ans is paid.
    bool require_exact_match = false;

    void validate() const
    {
        if (!(alpha >= 0.0) || !(cons_beta >= 0.0)) {
            throw config_error("reward weights alpha and cons_beta must be non-negative");
        }
    }
};

/// One gold answer item with its accepted aliases.
using gold_item = std::vector<std::string>;
using gold_set = std::vector<gold_item>;

/// Each string becomes its own single-alias item.
[[nodiscard]] inline gold_set gold_items(const std::vector<std::string>& answers)
{
    gold_set out;
    for (const auto& a : answers) {
        out.push_back({a});
    }
    return out;
}

struct reward_breakdown {
    bool format_ok = false;
    double s_final = 0.0;
    double s_key = 0.0;
    double s_cons = 0.0;
    double r_ans = 0.0;
    double r = 0.0;
    bool exact_match = false;
    std::vector<violation> violations;

    [[nodiscard]] nlohmann::json to_json() const
    {
        nlohmann::json v = nlohmann::json::array();
        for (const auto& x : violations) {
            v.push_back({{"offset", x.offset}, {"code", std::string(to_string(x.code))}});
        }
        return {{"format_ok", format_ok}, {"s_final", s_final}, {"s_key", s_key}, {"s_cons", s_cons},
                {"r_ans", r_ans},         {"r", r},             {"violations", v}};
    }
};

/// Bag-of-tokens F1 after answer normalization. Both sides empty gives 1,
/// one side empty gives 0.
[[nodiscard]] inline double token_f1(std::string_view prediction, std::string_view gold)
{
    auto p = text::normalized_tokens(prediction);
    auto g = text::normalized_tokens(gold);
    if (p.empty() || g.empty()) {
        return (p.empty() && g.empty()) ? 1.0 : 0.0;
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& t : g) {
        ++counts[t];
    }
    std::size_t common = 0;
    for (const auto& t : p) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) {
        return 0.0;
    }
    double precision = static_cast<double>(common) / static_cast<double>(p.size());
    double recall = static_cast<double>(common) / static_cast<double>(g.size());
    return 2.0 * precision * recall / (precision + recall);
}

[[nodiscard]] inline double best_alias_f1(std::string_view prediction, const gold_item& item)
{
    double best = 0.0;
    for (const auto& alias : item) {
        best = std::max(best, token_f1(prediction, alias));
    }
    return best;
}

/// Greedy one-to-one pairing of predicted values with gold items by F1,
/// highest pairs first (ties: lower item, then lower value index). Returns
/// the mean over gold items; unpaired items score 0.
[[nodiscard]] inline double paired_f1(const std::vector<std::string>& values, const gold_set& gold)
{
    if (gold.empty() || values.empty()) {
        return 0.0;
    }
    std::vector<std::vector<double>> f1(gold.size(), std::vector<double>(values.size()));
    for (std::size_t g = 0; g < gold.size(); ++g) {
        for (std::size_t v = 0; v < values.size(); ++v) {
            f1[g][v] = best_alias_f1(values[v], gold[g]);
        }
    }
    std::vector<bool> gold_used(gold.size(), false);
    std::vector<bool> value_used(values.size(), false);
    double total = 0.0;
    for (std::size_t round = 0; round < std::min(gold.size(), values.size()); ++round) {
        double best = -1.0;
        std::size_t bg = 0, bv = 0;
        for (std::size_t g = 0; g < gold.size(); ++g) {
            if (gold_used[g]) continue;
            for (std::size_t v = 0; v < values.size(); ++v) {
                if (!value_used[v] && f1[g][v] > best) {
                    best = f1[g][v];
                    bg = g;
                    bv = v;
                }
            }
        }
        gold_used[bg] = true;
        value_used[bv] = true;
        total += best;
    }
    return total / static_cast<double>(gold.size());
}

/// Which tag rules apply; the curriculum switches these per stage.
struct format_rules {
    bool allow_micro = true;
    bool require_micro = true;
};

struct format_check {
    bool ok = false;
    std::vector<violation> violations;
};

namespace detail {
inline bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

/// Offsets of `needle` in `hay` that are not glued to other alphanumerics.
inline std::vector<std::size_t> bounded_occurrences(std::string_view hay, std::string_view needle)
{
    std::vector<std::size_t> out;
    if (needle.empty()) {
        return out;
    }
    for (auto at = hay.find(needle); at != std::string_view::npos; at = hay.find(needle, at + 1)) {
        bool left_ok = at == 0 || !word_char(hay[at - 1]) || !word_char(needle.front());
        auto end = at + needle.size();
        bool right_ok = end == hay.size() || !word_char(hay[end]) || !word_char(needle.back());
        if (left_ok && right_ok) {
            out.push_back(at);
        }
    }
    return out;
}
} // namespace detail

/// Format reward check: grammar validity, well-typed key-info saves, every
/// stored value in the answer text wrapped in \boxed{}, and the stage's
/// micro-call rules.
[[nodiscard]] inline format_check check_format(const parse_result& parsed, const format_rules& rules = {})
{
    format_check out;
    if (const auto* rep = std::get_if<parse_report>(&parsed)) {
        out.violations = rep->violations;
    }
    const auto& spans = spans_of(parsed);
    auto replay = replay_saves(spans);
    out.violations.insert(out.violations.end(), replay.violations.begin(), replay.violations.end());

    std::vector<std::string> values;
    for (const auto& v : replay.repo.values()) {
        auto t = text::trim(v);
        if (!t.empty()) {
            values.emplace_back(t);
        }
    }
    const span* first_micro = nullptr;
    const span* first_boxed = nullptr;
    for (const auto& s : spans) {
        if (s.kind == span_kind::micro_call) {
            if (first_micro == nullptr) first_micro = &s;
            if (!rules.allow_micro) {
                out.violations.push_back({s.range.begin, violation_code::stage_violation,
                                          "micro retrieval is not enabled in this stage"});
            }
        }
        if (s.kind == span_kind::boxed_value && first_boxed == nullptr) {
            first_boxed = &s;
        }
        if (s.kind != span_kind::answer_text) {
            continue;
        }
        for (const auto& v : values) {
            for (auto at : detail::bounded_occurrences(s.text, v)) {
                out.violations.push_back({s.range.begin + at, violation_code::missing_box,
                                          "stored value \"" + v + "\" appears unboxed"});
            }
        }
    }
    if (rules.require_micro && first_boxed != nullptr && first_micro == nullptr) {
        out.violations.push_back({first_boxed->range.begin, violation_code::missing_micro_call,
                                  "answer values emitted without micro retrieval"});
    }
    std::stable_sort(out.violations.begin(), out.violations.end(),
                     [](const violation& a, const violation& b) { return a.offset < b.offset; });
    out.ok = out.violations.empty();
    return out;
}

[[nodiscard]] inline format_check check_format(const rollout& r, const format_rules& rules = {})
{
    return check_format(parse_result{r}, rules);
}

/// The three F1 sub-scores and r_ans = s_final + alpha s_key + cons_beta s_cons.
/// s_cons compares the pooled repository values with the pooled boxed
/// values and is 0 when either side is empty.
[[nodiscard]] inline reward_breakdown answer_reward(const std::vector<std::string>& boxed,
                                                    const key_info_repository& repo, const gold_set& gold,
                                                    const reward_config& cfg = {})
{
    cfg.validate();
    reward_breakdown b;
    auto stored = repo.values();
    b.s_final = paired_f1(boxed, gold);
    b.s_key = paired_f1(stored, gold);
    b.s_cons = (stored.empty() || boxed.empty()) ? 0.0 : token_f1(text::join(stored, " "), text::join(boxed, " "));
    b.r_ans = b.s_final + cfg.alpha * b.s_key + cfg.cons_beta * b.s_cons;
    b.exact_match = !gold.empty() && std::all_of(gold.begin(), gold.end(), [&](const gold_item& item) {
        return std::any_of(boxed.begin(), boxed.end(), [&](const std::string& v) {
            return std::any_of(item.begin(), item.end(), [&](const std::string& alias) {
                return text::normalize_answer(v) == text::normalize_answer(alias);
            });
        });
    });
    return b;
}

[[nodiscard]] inline reward_breakdown answer_reward(const rollout& r, const key_info_repository& repo,
                                                    const gold_set& gold, const reward_config& cfg = {})
{
    return answer_reward(extract_boxed(r), repo, gold, cfg);
}

/// Three-case final reward. "F1 is 0" means s_final == 0.
[[nodiscard]] inline double final_reward(const reward_breakdown& b, const reward_config& cfg = {})
{
    bool answered = b.s_final > 0.0 && (!cfg.require_exact_match || b.exact_match);
    if (answered) {
        return b.r_ans;
    }
    return b.format_ok ? 0.1 : 0.0;
}

/// Full scoring of one parsed rollout against gold. The repository is
/// replayed from the rollout's own saves.
[[nodiscard]] inline reward_breakdown score_rollout(const parse_result& parsed, const gold_set& gold,
                                                    const reward_config& cfg = {}, const format_rules& rules = {})
{
    auto repo = replay_saves(spans_of(parsed)).repo;
    auto b = answer_reward(extract_boxed(parsed), repo, gold, cfg);
    auto fc = check_format(parsed, rules);
    b.format_ok = fc.ok;
    b.violations = std::move(fc.violations);
    b.r = final_reward(b, cfg);
    return b;
}

} // namespace mmr
