#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "key_info_store.hpp"
#include "reward_engine.hpp"
#include "rollout_grammar.hpp"
#include "text.hpp"
#include "toy_policy.hpp"

namespace mmr {

/// One evaluation item. `gold` holds one alias list per question, so a
/// concatenated instance keeps its questions' answers apart.
struct eval_instance {
    std::string id;
    std::string question;
    std::vector<std::vector<std::string>> gold;

    [[nodiscard]] std::size_t n_questions() const noexcept { return gold.size(); }

    [[nodiscard]] std::vector<std::string> gold_answers() const
    {
        std::vector<std::string> out;
        for (const auto& g : gold) {
            out.insert(out.end(), g.begin(), g.end());
        }
        return out;
    }
};

/// True iff the normalized prediction equals some normalized gold answer.
[[nodiscard]] inline bool exact_match(std::string_view prediction, const std::vector<std::string>& gold)
{
    auto p = text::normalize_answer(prediction);
    if (p.empty()) {
        return false;
    }
    return std::any_of(gold.begin(), gold.end(),
                       [&](const std::string& g) { return text::normalize_answer(g) == p; });
}

/// Per-question EM averaged over the instance's questions. A question counts
/// as answered when any prediction matches one of its aliases.
[[nodiscard]] inline double instance_em(const std::vector<std::string>& predictions, const eval_instance& inst)
{
    if (inst.gold.empty()) {
        return 0.0;
    }
    std::size_t hit = 0;
    for (const auto& aliases : inst.gold) {
        bool ok = std::any_of(predictions.begin(), predictions.end(),
                              [&](const std::string& p) { return exact_match(p, aliases); });
        hit += ok ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(inst.gold.size());
}

struct multiq_result {
    std::vector<eval_instance> instances;
    std::size_t dropped = 0;
};

/// Shuffles with a seeded Fisher-Yates pass, then concatenates consecutive
/// runs of n questions. Leftovers that do not fill a run are dropped.
[[nodiscard]] inline multiq_result build_multiq(const std::vector<eval_instance>& instances, std::size_t n,
                                                std::uint64_t seed)
{
    if (n != 2 && n != 3 && n != 5) {
        throw config_error("multi-question size must be 2, 3 or 5");
    }
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    multiq_result out;
    std::size_t full = order.size() / n;
    for (std::size_t g = 0; g < full; ++g) {
        eval_instance merged;
        std::vector<std::string> questions;
        std::vector<std::string> ids;
        for (std::size_t k = 0; k < n; ++k) {
            const auto& src = instances[order[g * n + k]];
            questions.push_back(src.question);
            ids.push_back(src.id);
            merged.gold.insert(merged.gold.end(), src.gold.begin(), src.gold.end());
        }
        merged.question = text::join(questions, " ");
        merged.id = text::join(ids, "+");
        out.instances.push_back(std::move(merged));
    }
    out.dropped = order.size() - full * n;
    return out;
}

/// `{"id"?, "question"?, "gold_answers"}` per line. gold_answers is a list of
/// aliases, or a list of alias lists for multi-question items.
[[nodiscard]] inline std::vector<eval_instance> read_eval_dataset(std::istream& is)
{
    std::vector<eval_instance> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (text::trim(line).empty()) {
            continue;
        }
        auto j = nlohmann::json::parse(line, nullptr, false);
        auto bad = [&] { return io_error("dataset line " + std::to_string(lineno) + ": expected {question, gold_answers}"); };
        if (j.is_discarded() || !j.is_object() || !j.contains("gold_answers") ||
            !j["gold_answers"].is_array() || j["gold_answers"].empty()) {
            throw bad();
        }
        eval_instance inst;
        inst.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                                   : std::to_string(out.size());
        inst.question = j.value("question", std::string());
        const auto& g = j["gold_answers"];
        if (g[0].is_array()) {
            for (const auto& q : g) {
                inst.gold.push_back(q.get<std::vector<std::string>>());
            }
        } else {
            inst.gold.push_back(g.get<std::vector<std::string>>());
        }
        out.push_back(std::move(inst));
    }
    return out;
}

[[nodiscard]] inline std::vector<eval_instance> read_eval_dataset(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open dataset " + path);
    }
    return read_eval_dataset(in);
}

// ---------------------------------------------------------------------------
// LLM-as-judge prompt

inline constexpr std::string_view judge_prompt_template =
    "You will be given a question and its ground truth answer list where each item can be a ground truth "
    "answer. Provided a pred_answer, you need to judge if the pred_answer correctly answers the question based "
    "on the ground truth answer list. You should first give your rationale for the judgement, and then give "
    "your judgement result (i.e., correct or incorrect).\n"
    "\n"
    "Here is the criteria for the judgement:\n"
    "\n"
    "1. The pred_answer doesn't need to be exactly the same as any of the ground truth answers, but should be "
    "semantically same for the question.\n"
    "\n"
    "2. Each item in the ground truth answer list can be viewed as a ground truth answer for the question, and "
    "the pred_answer should be semantically same to at least one of them.\n"
    "\n"
    "question: {question}\n"
    "\n"
    "ground truth answers: {gt_answer}\n"
    "\n"
    "pred_answer: {pred_answer}\n"
    "\n"
    "The output should in the following json format:\n"
    "\n"
    "```json\n"
    "{\n"
    "    \"rationale\": \"your rationale for the judgement, as a text\",\n"
    "    \"judgement\": \"your judgement result, can only be `correct` or `incorrect`\"\n"
    "}\n"
    "```\n"
    "\n"
    "Your output:";

/// Fills the three template slots. The answer list is written as a JSON
/// array, e.g. ["180.0", "Room 301"].
[[nodiscard]] inline std::string build_judge_prompt(std::string_view question, const std::vector<std::string>& gold,
                                                    std::string_view prediction)
{
    ordered_json answers = ordered_json::array();
    for (const auto& g : gold) {
        answers.push_back(g);
    }
    std::string out(judge_prompt_template);
    auto fill = [&out](std::string_view slot, const std::string& value) {
        auto at = out.find(slot);
        out.replace(at, slot.size(), value);
    };
    // Fill question last so braces inside it are never mistaken for slots.
    fill("{pred_answer}", std::string(prediction));
    fill("{gt_answer}", format_inline(answers));
    fill("{question}", std::string(question));
    return out;
}

enum class judgement { correct, incorrect };

struct judge_verdict {
    std::string rationale;
    judgement verdict = judgement::incorrect;
};

struct judge_parse_failure {
    std::string reason;
};

using judge_parse_result = std::variant<judge_verdict, judge_parse_failure>;

/// Reads the structured block of a judge reply. A ```json fence is
/// unwrapped first; otherwise the outermost {...} is used.
[[nodiscard]] inline judge_parse_result parse_judge_reply(std::string_view raw)
{
    std::string_view body = raw;
    if (auto fence = raw.find("```"); fence != std::string_view::npos) {
        auto start = raw.find('\n', fence);
        auto close = start == std::string_view::npos ? std::string_view::npos : raw.find("```", start);
        if (close == std::string_view::npos) {
            return judge_parse_failure{"unterminated code fence"};
        }
        body = raw.substr(start + 1, close - start - 1);
    } else {
        auto b = raw.find('{');
        auto e = raw.rfind('}');
        if (b == std::string_view::npos || e == std::string_view::npos || e < b) {
            return judge_parse_failure{"no JSON object in reply"};
        }
        body = raw.substr(b, e - b + 1);
    }
    auto j = nlohmann::json::parse(body.begin(), body.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return judge_parse_failure{"reply block is not a JSON object"};
    }
    if (!j.contains("judgement") || !j["judgement"].is_string()) {
        return judge_parse_failure{"missing \"judgement\" string"};
    }
    auto value = std::string(text::trim(j["judgement"].get<std::string>()));
    judge_verdict v;
    if (value == "correct") {
        v.verdict = judgement::correct;
    } else if (value == "incorrect") {
        v.verdict = judgement::incorrect;
    } else {
        return judge_parse_failure{"judgement must be correct or incorrect, got \"" + value + "\""};
    }
    if (j.contains("rationale") && j["rationale"].is_string()) {
        v.rationale = j["rationale"].get<std::string>();
    }
    return v;
}

// ---------------------------------------------------------------------------
// Invocation and token statistics

struct summary_stat {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;

    [[nodiscard]] nlohmann::json to_json() const { return {{"mean", mean}, {"min", min}, {"max", max}}; }
};

struct rollout_statistics {
    std::size_t rollouts = 0;
    summary_stat invocations_think;  // macro calls
    summary_stat invocations_answer; // micro calls
    summary_stat output_tokens;      // policy tokens, whitespace tokenization
    summary_stat repo_tokens;

    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"rollouts", rollouts},
                {"invocations_think", invocations_think.to_json()},
                {"invocations_answer", invocations_answer.to_json()},
                {"output_tokens", output_tokens.to_json()},
                {"repo_tokens", repo_tokens.to_json()}};
    }
};

namespace detail {
inline summary_stat summarize(const std::vector<double>& xs)
{
    summary_stat s;
    if (xs.empty()) {
        return s;
    }
    s.min = *std::min_element(xs.begin(), xs.end());
    s.max = *std::max_element(xs.begin(), xs.end());
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    return s;
}
} // namespace detail

[[nodiscard]] inline rollout_statistics rollout_stats(const std::vector<std::string>& transcripts)
{
    std::vector<double> think, answer, out_tokens, repo;
    for (const auto& raw : transcripts) {
        auto parsed = parse(raw);
        const auto& spans = spans_of(parsed);
        double macro = 0, micro = 0;
        for (const auto& s : spans) {
            macro += s.kind == span_kind::macro_call ? 1 : 0;
            micro += s.kind == span_kind::micro_call ? 1 : 0;
        }
        auto mask = token_mask(spans, raw.size(), whitespace_tokenize(raw));
        double policy = 0;
        for (auto m : mask) policy += m;
        think.push_back(macro);
        answer.push_back(micro);
        out_tokens.push_back(policy);
        repo.push_back(static_cast<double>(replay_saves(spans).repo.snapshot_tokens()));
    }
    rollout_statistics st;
    st.rollouts = transcripts.size();
    st.invocations_think = detail::summarize(think);
    st.invocations_answer = detail::summarize(answer);
    st.output_tokens = detail::summarize(out_tokens);
    st.repo_tokens = detail::summarize(repo);
    return st;
}

} // namespace mmr
