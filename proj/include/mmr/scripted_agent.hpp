#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "key_info_store.hpp"
#include "retrieval_env.hpp"
#include "rollout_grammar.hpp"

namespace mmr {

/// A deterministic agent that replays a fixed plan against a live
/// environment. Tool results and micro responses come from the environment,
/// so the transcript reflects what the environment actually returned.
///
/// Plan steps (JSON objects, one key each):
///   {"think": "..."}               delimited think block
///   {"macro": {"name": ..., ...}}  macro call, executed against the env
///   {"search": "query"}            shorthand for {"macro": {"name": "search", "query": ...}}
///   {"save": {"k": "v", ...}}      key_info_save
///   {"answer": [items]}            answer phase
/// Answer items:
///   {"micro": "k" | ["k1", ...]}   micro call, answered from the repository
///   {"say": "text"}                answer text; "${k}" is replaced by the
///                                  last value looked up for k and
///                                  "\boxed{...}" becomes a boxed span
struct agent_episode {
    std::string id;
    ordered_json steps = ordered_json::array();
    std::string separator = "\n";
    std::string trailer = "\n";
};

[[nodiscard]] inline agent_episode episode_from_json(const ordered_json& j, std::size_t index)
{
    if (!j.is_object() || !j.contains("steps") || !j["steps"].is_array()) {
        throw io_error("agent episode " + std::to_string(index) + ": expected an object with a \"steps\" list");
    }
    agent_episode e;
    e.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                            : std::to_string(index);
    e.steps = j["steps"];
    if (j.contains("separator")) {
        e.separator = j["separator"].get<std::string>();
    }
    if (j.contains("trailer")) {
        e.trailer = j["trailer"].get<std::string>();
    }
    return e;
}

/// A script file holds one episode object or {"episodes": [...]}.
[[nodiscard]] inline std::vector<agent_episode> read_agent_script(std::istream& is)
{
    std::stringstream ss;
    ss << is.rdbuf();
    auto j = ordered_json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) {
        throw io_error("agent script is not valid JSON");
    }
    std::vector<agent_episode> out;
    if (j.is_object() && j.contains("episodes")) {
        for (std::size_t i = 0; i < j["episodes"].size(); ++i) {
            out.push_back(episode_from_json(j["episodes"][i], i));
        }
    } else {
        out.push_back(episode_from_json(j, 0));
    }
    return out;
}

[[nodiscard]] inline std::vector<agent_episode> read_agent_script(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open agent script " + path);
    }
    return read_agent_script(in);
}

struct agent_run {
    std::string id;
    rollout transcript;
    std::string text;
    key_info_repository repo;
    std::vector<std::string> call_log;
};

namespace detail {

/// Builder wrapper that merges adjacent bare text into one span, the way
/// the parser would see it.
class text_merger {
  public:
    explicit text_merger(rollout_builder& b) : b_(b) {}

    void text(std::string_view s) { pending_ += s; }

    void flush()
    {
        if (pending_.empty()) {
            return;
        }
        if (b_.in_answer()) {
            b_.answer_text(pending_);
        } else {
            b_.think_text(pending_);
        }
        pending_.clear();
    }

    rollout_builder& builder()
    {
        flush();
        return b_;
    }

  private:
    rollout_builder& b_;
    std::string pending_;
};

inline std::string fill_placeholders(std::string_view tmpl, const std::map<std::string, std::string>& values)
{
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        auto open = tmpl.find("${", i);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(i));
            break;
        }
        auto close = tmpl.find('}', open + 2);
        if (close == std::string_view::npos) {
            throw io_error("unterminated ${ placeholder in answer text");
        }
        out.append(tmpl.substr(i, open - i));
        auto key = std::string(tmpl.substr(open + 2, close - open - 2));
        auto it = values.find(key);
        out += it == values.end() ? std::string("MISSING") : it->second;
        i = close + 1;
    }
    return out;
}

inline void emit_answer_line(text_merger& m, std::string_view line)
{
    std::size_t i = 0;
    while (i < line.size()) {
        auto at = line.find(tags::boxed_open, i);
        if (at == std::string_view::npos) {
            m.text(line.substr(i));
            return;
        }
        m.text(line.substr(i, at - i));
        auto body = at + tags::boxed_open.size();
        auto end = match_brace(line, body);
        if (end == std::string_view::npos) {
            throw io_error("unbalanced \\boxed{ in answer text");
        }
        m.builder().boxed(line.substr(body, end - 1 - body));
        i = end;
    }
}

} // namespace detail

[[nodiscard]] inline agent_run run_agent(const agent_episode& ep, env_state env)
{
    agent_run run;
    run.id = ep.id;
    rollout_builder b;
    detail::text_merger m(b);
    bool first = true;
    auto sep = [&] {
        if (!first) {
            m.text(ep.separator);
        }
        first = false;
    };

    for (const auto& step : ep.steps) {
        if (!step.is_object() || step.size() != 1) {
            throw io_error("agent step must be an object with one key: " + step.dump());
        }
        const auto& kind = step.begin().key();
        const auto& arg = step.begin().value();
        if (kind == "think") {
            sep();
            m.builder().think(arg.get<std::string>());
        } else if (kind == "macro" || kind == "search") {
            ordered_json payload = kind == "macro" ? arg : ordered_json{{"name", "search"}, {"query", arg}};
            auto body = format_inline(payload);
            sep();
            m.builder().macro_call(body);
            auto result = execute_macro_call(decode_payload(body), env);
            sep();
            m.builder().macro_result(result);
        } else if (kind == "save") {
            auto body = format_inline(arg);
            sep();
            m.builder().key_info_save(body);
            auto v = run.repo.save(decode_payload(body));
            if (!v.empty()) {
                throw io_error("agent save rejected: " + v.front().message);
            }
        } else if (kind == "answer") {
            sep();
            m.builder().begin_answer();
            first = false;
            std::map<std::string, std::string> looked_up;
            for (const auto& item : arg) {
                if (!item.is_object() || item.size() != 1) {
                    throw io_error("answer item must be an object with one key: " + item.dump());
                }
                const auto& ik = item.begin().key();
                const auto& iv = item.begin().value();
                if (ik == "micro") {
                    std::vector<std::string> queries =
                        iv.is_array() ? iv.get<std::vector<std::string>>() : std::vector<std::string>{iv.get<std::string>()};
                    ordered_json q = ordered_json::object();
                    q["query"] = iv;
                    m.text(ep.separator);
                    m.builder().micro_call(format_inline(q));
                    auto results = run.repo.micro_lookup(queries);
                    m.text(ep.separator);
                    m.builder().micro_response(encode_micro_response(results));
                    for (const auto& r : results) {
                        if (r.value) {
                            looked_up[r.key] = *r.value;
                        }
                    }
                } else if (ik == "say") {
                    m.text(ep.separator);
                    detail::emit_answer_line(m, detail::fill_placeholders(iv.get<std::string>(), looked_up));
                } else {
                    throw io_error("unknown answer item '" + ik + "'");
                }
            }
            m.text(ep.separator);
            m.flush();
            b.end_answer(ep.trailer);
        } else {
            throw io_error("unknown agent step '" + kind + "'");
        }
    }
    if (!b.in_answer()) {
        throw io_error("agent episode " + ep.id + " never answers");
    }
    run.transcript = b.build();
    run.text = b.raw();
    run.call_log = env.call_log;
    return run;
}

} // namespace mmr
