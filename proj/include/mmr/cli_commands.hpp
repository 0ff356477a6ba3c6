#pragma once

// Subcommand bodies for the mmr executable. Each returns a process exit
// code and writes only to the streams and paths it is given, so tests can
// drive them in-process.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "curriculum.hpp"
#include "errors.hpp"
#include "eval_harness.hpp"
#include "judge_client.hpp"
#include "protocol_game.hpp"
#include "proximity_analysis.hpp"
#include "retrieval_env.hpp"
#include "reward_engine.hpp"
#include "rollout_grammar.hpp"
#include "scripted_agent.hpp"

namespace mmr::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1; // the command ran and found problems
inline constexpr int exit_usage = 2;   // bad flags, paths or config

struct transcript_record {
    std::string id;
    std::string text;
};

[[nodiscard]] inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// A rollout file is either one raw transcript or line-delimited
/// {"id", "transcript"} records. Lines holding a {"config"} header are
/// skipped.
[[nodiscard]] inline std::vector<transcript_record> read_transcripts(const std::string& path)
{
    auto content = read_file(path);
    auto first = content.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || content[first] != '{') {
        return {{std::filesystem::path(path).stem().string(), content}};
    }
    std::vector<transcript_record> out;
    std::istringstream is(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (text::trim(line).empty()) {
            continue;
        }
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw io_error(path + ":" + std::to_string(lineno) + ": not a JSON record");
        }
        if (j.contains("config")) {
            continue;
        }
        if (!j.contains("transcript") || !j["transcript"].is_string()) {
            throw io_error(path + ":" + std::to_string(lineno) + ": record has no \"transcript\" string");
        }
        auto id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                                   : std::to_string(out.size());
        out.push_back({id, j["transcript"].get<std::string>()});
    }
    return out;
}

[[nodiscard]] inline training_stage parse_stage(const std::string& s)
{
    if (s == "full") {
        return training_stage::full;
    }
    if (s == "macro_only") {
        return training_stage::macro_only;
    }
    throw config_error("stage must be full or macro_only, got '" + s + "'");
}

/// Gold for transcript i: matched by id, else by position; a single gold
/// record applies to every transcript.
[[nodiscard]] inline const eval_instance& gold_for(const std::vector<eval_instance>& gold, const transcript_record& t,
                                                   std::size_t i)
{
    for (const auto& g : gold) {
        if (g.id == t.id) {
            return g;
        }
    }
    if (gold.size() == 1) {
        return gold.front();
    }
    if (i < gold.size()) {
        return gold[i];
    }
    throw io_error("no gold record for transcript '" + t.id + "'");
}

[[nodiscard]] inline gold_set to_gold_set(const eval_instance& inst) { return inst.gold; }

// ---------------------------------------------------------------------------

struct validate_options {
    std::string rollouts;
    std::string stage = "full";
};

inline int cmd_validate(const validate_options& o, std::ostream& out)
{
    auto rules = constraints_for(parse_stage(o.stage)).rules;
    auto records = read_transcripts(o.rollouts);
    std::size_t bad = 0;
    for (const auto& t : records) {
        auto check = check_format(parse(t.text), rules);
        if (check.ok) {
            out << t.id << "\tok\n";
            continue;
        }
        ++bad;
        for (const auto& v : check.violations) {
            out << t.id << '\t' << v.offset << '\t' << to_string(v.code) << '\t' << v.message << '\n';
        }
    }
    out << "# " << records.size() - bad << "/" << records.size() << " transcripts valid\n";
    return bad == 0 ? exit_ok : exit_failure;
}

// ---------------------------------------------------------------------------

struct simulate_options {
    std::string script;
    std::string tools;
    std::string corpus;
    std::string out;
    bool raw = false;
};

inline int cmd_simulate(const simulate_options& o, const run_config& cfg, std::ostream& out)
{
    auto episodes = read_agent_script(o.script);
    std::optional<tool_table> tools;
    if (!o.tools.empty()) {
        tools = tool_table::read(o.tools);
    }
    std::optional<bm25_index> index;
    if (!o.corpus.empty()) {
        index.emplace(ingest(read_documents(o.corpus), cfg.chunk_size()));
    }
    if (o.raw && episodes.size() != 1) {
        throw config_error("--raw needs a script with exactly one episode");
    }
    env_state env;
    env.search = index ? &*index : nullptr;
    env.tools = tools ? &*tools : nullptr;
    env.top_k = cfg.top_k();

    std::ofstream file;
    std::ostream* sink = &out;
    if (!o.out.empty()) {
        file.open(o.out, std::ios::binary);
        if (!file) {
            throw io_error("cannot write " + o.out);
        }
        sink = &file;
    }
    if (o.raw) {
        auto run = run_agent(episodes.front(), env);
        *sink << run.text;
        if (sink != &out) {
            out << cfg.header() << '\n';
        }
        return exit_ok;
    }
    *sink << cfg.header() << '\n';
    for (const auto& ep : episodes) {
        auto run = run_agent(ep, env);
        ordered_json rec;
        rec["id"] = run.id;
        rec["transcript"] = run.text;
        rec["boxed"] = extract_boxed(run.transcript);
        *sink << rec.dump() << '\n';
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------

struct reward_options {
    std::string rollouts;
    std::string gold;
    std::string stage = "full";
};

inline int cmd_reward(const reward_options& o, const run_config& cfg, std::ostream& out)
{
    auto stage = parse_stage(o.stage);
    auto rcfg = cfg.reward();
    auto rules = constraints_for(stage).rules;
    auto records = read_transcripts(o.rollouts);
    auto gold = read_eval_dataset(o.gold);
    out << cfg.header() << '\n';
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& t = records[i];
        auto parsed = parse(t.text);
        auto b = score_rollout(parsed, to_gold_set(gold_for(gold, t, i)), rcfg, rules);
        ordered_json rec;
        rec["id"] = t.id;
        rec["stage"] = std::string(to_string(stage));
        rec["boxed"] = extract_boxed(parsed);
        auto breakdown = b.to_json();
        for (const auto& [k, v] : breakdown.items()) {
            rec[k] = v;
        }
        rec["r"] = stage_reward_adapter(b, stage, rcfg);
        out << rec.dump() << '\n';
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------

struct train_toy_options {
    std::optional<std::size_t> episodes;
    std::string out;
};

inline int cmd_train_toy(const train_toy_options& o, run_config cfg, std::ostream& out)
{
    if (o.episodes) {
        cfg.merge({{"toy", {{"episodes", *o.episodes}}}});
    }
    auto tcfg = cfg.toy();
    std::ofstream file;
    std::ostream* sink = &out;
    if (!o.out.empty()) {
        file.open(o.out, std::ios::binary);
        if (!file) {
            throw io_error("cannot write " + o.out);
        }
        sink = &file;
    }
    *sink << cfg.header() << '\n';
    auto records = train_toy(tcfg, [&](const toy_episode_record& r) { *sink << r.to_json().dump() << '\n'; });
    if (sink != &out) {
        const auto& last = records.back();
        out << "episodes=" << records.size() << " final_mean_reward=" << last.mean_reward
            << " final_moving_average=" << last.moving_average << '\n';
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------

struct proximity_options {
    std::string out;
    std::string svg;
};

inline int cmd_proximity(const proximity_options& o, const run_config& cfg, std::ostream& out)
{
    auto dcfg = cfg.proximity();
    auto curve = compute_decay_curve(dcfg);
    std::ofstream file;
    std::ostream* sink = &out;
    if (!o.out.empty()) {
        file.open(o.out, std::ios::binary);
        if (!file) {
            throw io_error("cannot write " + o.out);
        }
        sink = &file;
    }
    *sink << "# " << cfg.header() << '\n';
    curve.write_csv(*sink);
    if (!o.svg.empty()) {
        std::ofstream svg(o.svg, std::ios::binary);
        if (!svg) {
            throw io_error("cannot write " + o.svg);
        }
        curve.write_svg(svg);
    }
    if (sink != &out) {
        auto trend = summarize_trend(curve);
        char buf[128];
        std::snprintf(buf, sizeof buf, "spearman=%.6f argmax=%zu\n", trend.spearman_rho, trend.argmax);
        out << buf;
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------

struct eval_options {
    std::string dataset;
    std::string predictions;
    std::string out;
    bool judge = false;
};

struct prediction_record {
    std::vector<std::string> values;
    std::optional<std::string> transcript;
};

[[nodiscard]] inline std::map<std::string, prediction_record> read_predictions(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open predictions " + path);
    }
    std::map<std::string, prediction_record> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) {
            continue;
        }
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || j.contains("config")) {
            if (!j.is_discarded() && j.is_object()) {
                continue;
            }
            throw io_error(path + ":" + std::to_string(lineno) + ": not a JSON record");
        }
        if (!j.contains("id")) {
            throw io_error(path + ":" + std::to_string(lineno) + ": prediction has no id");
        }
        auto id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        prediction_record p;
        if (j.contains("transcript")) {
            p.transcript = j["transcript"].get<std::string>();
            p.values = extract_boxed(parse(*p.transcript));
        } else if (j.contains("predictions")) {
            p.values = j["predictions"].get<std::vector<std::string>>();
        } else if (j.contains("prediction")) {
            p.values = {j["prediction"].get<std::string>()};
        } else {
            throw io_error(path + ":" + std::to_string(lineno) + ": expected prediction, predictions or transcript");
        }
        out[id] = std::move(p);
    }
    return out;
}

inline int cmd_eval(const eval_options& o, const run_config& cfg, std::ostream& out,
                    http_transport_interface* transport = nullptr,
                    judge_client::sleep_fn sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
{
    auto dataset = read_eval_dataset(o.dataset);
    auto preds = read_predictions(o.predictions);
    std::optional<judge_client> client;
    if (o.judge) {
        if (transport == nullptr) {
            throw config_error("--judge needs a transport");
        }
        client.emplace(cfg.judge(), *transport, std::move(sleeper));
    }
    std::ofstream file;
    if (!o.out.empty()) {
        file.open(o.out, std::ios::binary);
        if (!file) {
            throw io_error("cannot write " + o.out);
        }
        file << cfg.header() << '\n';
    }
    double em_sum = 0.0;
    std::size_t judged = 0, correct = 0, judge_failures = 0;
    std::vector<std::string> transcripts;
    for (const auto& inst : dataset) {
        auto it = preds.find(inst.id);
        prediction_record p = it == preds.end() ? prediction_record{} : it->second;
        double em = instance_em(p.values, inst);
        em_sum += em;
        ordered_json rec;
        rec["id"] = inst.id;
        rec["em"] = em;
        rec["predictions"] = p.values;
        if (client) {
            auto prompt = build_judge_prompt(inst.question, inst.gold_answers(), text::join(p.values, ", "));
            try {
                auto verdict = parse_judge_reply(client->judge(prompt));
                if (const auto* v = std::get_if<judge_verdict>(&verdict)) {
                    ++judged;
                    correct += v->verdict == judgement::correct ? 1 : 0;
                    rec["judge_verdict"] = v->verdict == judgement::correct ? "correct" : "incorrect";
                } else {
                    ++judge_failures;
                    rec["judge_verdict"] = nullptr;
                    rec["judge_error"] = std::get<judge_parse_failure>(verdict).reason;
                }
            } catch (const std::exception& e) {
                ++judge_failures;
                rec["judge_verdict"] = nullptr;
                rec["judge_error"] = e.what();
            }
        }
        if (p.transcript) {
            auto st = rollout_stats({*p.transcript});
            rec["stats"] = {{"invocations_think", st.invocations_think.mean},
                            {"invocations_answer", st.invocations_answer.mean},
                            {"output_tokens", st.output_tokens.mean},
                            {"repo_tokens", st.repo_tokens.mean}};
            transcripts.push_back(*p.transcript);
        }
        if (file.is_open()) {
            file << rec.dump() << '\n';
        }
    }
    auto n = dataset.size();
    char buf[256];
    out << "dataset\tinstances\tEM";
    if (client) {
        out << "\tLJ\tjudge_failures";
    }
    out << '\n';
    std::snprintf(buf, sizeof buf, "%s\t%zu\t%.4f", std::filesystem::path(o.dataset).stem().string().c_str(), n,
                  n ? em_sum / static_cast<double>(n) : 0.0);
    out << buf;
    if (client) {
        std::snprintf(buf, sizeof buf, "\t%.4f\t%zu", judged ? static_cast<double>(correct) / static_cast<double>(n) : 0.0,
                      judge_failures);
        out << buf;
    }
    out << '\n';
    if (!transcripts.empty()) {
        out << "stats " << rollout_stats(transcripts).to_json().dump() << '\n';
    }
    return exit_ok;
}

} // namespace mmr::cli
