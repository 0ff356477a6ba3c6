#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mmr/cli_commands.hpp"
#include "mmr/http_transport.hpp"

namespace {

struct common_flags {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, common_flags& f)
{
    app->add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--set", f.sets, "override a config key, e.g. --set grpo.epsilon=0.1");
    app->add_option("--seed", f.seed, "random seed");
}

mmr::run_config effective(const common_flags& f)
{
    mmr::run_config cfg;
    if (!f.config.empty()) {
        cfg.merge_file(f.config);
    }
    for (const auto& s : f.sets) {
        cfg.set(s);
    }
    if (f.seed) {
        cfg.merge({{"seed", *f.seed}});
    }
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Macro/micro retrieval rollout toolkit"};
    app.require_subcommand(1);

    common_flags validate_f, simulate_f, reward_f, train_f, prox_f, eval_f;

    mmr::cli::validate_options vo;
    auto* validate = app.add_subcommand("validate", "parse and format-check transcripts");
    validate->add_option("rollouts", vo.rollouts, "transcript file")->required()->check(CLI::ExistingFile);
    validate->add_option("--stage", vo.stage, "full or macro_only")->check(CLI::IsMember({"full", "macro_only"}));
    add_common(validate, validate_f);

    mmr::cli::simulate_options so;
    auto* simulate = app.add_subcommand("simulate", "run a scripted agent against the environment");
    simulate->add_option("--script", so.script, "agent script (JSON)")->required()->check(CLI::ExistingFile);
    simulate->add_option("--tools", so.tools, "tool table (JSONL)")->check(CLI::ExistingFile);
    simulate->add_option("--corpus", so.corpus, "documents (JSONL {title, text})")->check(CLI::ExistingFile);
    simulate->add_option("--out", so.out, "output file (default stdout)");
    simulate->add_flag("--raw", so.raw, "write the bare transcript instead of JSONL records");
    add_common(simulate, simulate_f);

    mmr::cli::reward_options ro;
    auto* reward = app.add_subcommand("reward", "score transcripts against gold answers");
    reward->add_option("rollouts", ro.rollouts, "transcript file")->required()->check(CLI::ExistingFile);
    reward->add_option("--gold", ro.gold, "gold answers (JSONL)")->required()->check(CLI::ExistingFile);
    reward->add_option("--stage", ro.stage, "full or macro_only")->check(CLI::IsMember({"full", "macro_only"}));
    add_common(reward, reward_f);

    mmr::cli::train_toy_options to;
    std::size_t episodes = 0;
    auto* train = app.add_subcommand("train-toy", "GRPO on the toy protocol game");
    auto* episodes_opt = train->add_option("--episodes", episodes, "number of episodes")->check(CLI::PositiveNumber);
    train->add_option("--out", to.out, "telemetry file (default stdout)");
    add_common(train, train_f);

    mmr::cli::proximity_options po;
    std::optional<std::size_t> d, samples, max_delta;
    std::optional<double> base;
    auto* prox = app.add_subcommand("proximity", "RoPE relative-distance decay curve");
    prox->add_option("--out", po.out, "CSV output (default stdout)");
    prox->add_option("--svg", po.svg, "optional SVG plot");
    prox->add_option("--d", d, "head dimension");
    prox->add_option("--base", base, "RoPE base");
    prox->add_option("--samples", samples, "samples per distance");
    prox->add_option("--max-delta", max_delta, "largest distance");
    add_common(prox, prox_f);

    mmr::cli::eval_options eo;
    std::optional<std::string> judge_url, judge_model;
    auto* eval = app.add_subcommand("eval", "exact match and optional LLM judge");
    eval->add_option("--dataset", eo.dataset, "eval dataset (JSONL)")->required()->check(CLI::ExistingFile);
    eval->add_option("--predictions", eo.predictions, "predictions (JSONL)")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", eo.out, "per-instance results (JSONL)");
    eval->add_flag("--judge", eo.judge, "also score with the LLM judge");
    eval->add_option("--judge-url", judge_url, "chat-completion base URL");
    eval->add_option("--judge-model", judge_model, "judge model name");
    add_common(eval, eval_f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : mmr::cli::exit_usage;
    }

    try {
        if (*validate) {
            (void)effective(validate_f);
            return mmr::cli::cmd_validate(vo, std::cout);
        }
        if (*simulate) {
            return mmr::cli::cmd_simulate(so, effective(simulate_f), std::cout);
        }
        if (*reward) {
            return mmr::cli::cmd_reward(ro, effective(reward_f), std::cout);
        }
        if (*train) {
            if (episodes_opt->count() > 0) {
                to.episodes = episodes;
            }
            return mmr::cli::cmd_train_toy(to, effective(train_f), std::cout);
        }
        if (*prox) {
            auto cfg = effective(prox_f);
            mmr::ordered_json patch = mmr::ordered_json::object();
            if (d) patch["d"] = *d;
            if (base) patch["base"] = *base;
            if (samples) patch["samples"] = *samples;
            if (max_delta) patch["max_delta"] = *max_delta;
            cfg.merge({{"proximity", patch}});
            cfg.validate();
            return mmr::cli::cmd_proximity(po, cfg, std::cout);
        }
        if (*eval) {
            auto cfg = effective(eval_f);
            mmr::ordered_json patch = mmr::ordered_json::object();
            if (judge_url) patch["base_url"] = *judge_url;
            if (judge_model) patch["model"] = *judge_model;
            cfg.merge({{"judge", patch}});
            cfg.validate();
            mmr::httplib_transport transport;
            return mmr::cli::cmd_eval(eo, cfg, std::cout, &transport);
        }
    } catch (const mmr::config_error& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return mmr::cli::exit_usage;
    } catch (const mmr::io_error& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return mmr::cli::exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return mmr::cli::exit_failure;
    }
    return mmr::cli::exit_usage;
}
