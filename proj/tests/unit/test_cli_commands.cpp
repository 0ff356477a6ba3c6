#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmr/cli_commands.hpp"

using namespace mmr;
namespace fs = std::filesystem;

namespace {

const std::string data_dir = MMR_DATA;
const std::string fixtures = MMR_FIXTURES;

fs::path scratch(const std::string& name)
{
    auto dir = fs::temp_directory_path() / "mmr_cli_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write(const fs::path& p, const std::string& content)
{
    std::ofstream f(p, std::ios::binary);
    f << content;
}

std::vector<std::string> lines_of(const std::string& s)
{
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

class fixed_reply final : public http_transport_interface {
  public:
    explicit fixed_reply(std::string verdict) : verdict_(std::move(verdict)) {}
    http_response post(const http_request& req) override
    {
        prompts.push_back(nlohmann::json::parse(req.body)["messages"][0]["content"].get<std::string>());
        nlohmann::json content = "```json\n{\"rationale\": \"r\", \"judgement\": \"" + verdict_ + "\"}\n```";
        nlohmann::json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
        return {200, body.dump()};
    }
    std::vector<std::string> prompts;

  private:
    std::string verdict_;
};

} // namespace

TEST_CASE("validate exit codes")
{
    std::ostringstream out;
    CHECK(cli::cmd_validate({fixtures + "/hotel_transcript.txt", "full"}, out) == cli::exit_ok);
    CHECK(out.str() == "hotel_transcript\tok\n# 1/1 transcripts valid\n");

    auto bad = scratch("bad.jsonl");
    write(bad, R"({"config": {}}
{"id": "a", "transcript": "<think>x</think><answer>\\boxed{1}</answer>"}
{"id": "b", "transcript": "<think>x"}
)");
    std::ostringstream out2;
    CHECK(cli::cmd_validate({bad.string(), "macro_only"}, out2) == cli::exit_failure);
    CHECK(out2.str().find("b\t0\tunclosed_tag") != std::string::npos);
    CHECK(out2.str().find("# 0/2 transcripts valid") != std::string::npos);
    CHECK_THROWS_AS(cli::cmd_validate({bad.string(), "stage3"}, out2), config_error);
    CHECK_THROWS_AS(cli::cmd_validate({"/nonexistent/file", "full"}, out2), io_error);
}

TEST_CASE("simulate writes the raw transcript")
{
    auto path = scratch("hotel.txt");
    std::ostringstream out;
    run_config cfg;
    cli::simulate_options o{data_dir + "/hotel_agent.json", data_dir + "/hotel_tools.jsonl", "", path.string(), true};
    CHECK(cli::cmd_simulate(o, cfg, out) == cli::exit_ok);
    CHECK(cli::read_file(path.string()) == cli::read_file(fixtures + "/hotel_transcript.txt"));
    CHECK(out.str() == cfg.header() + "\n");

    std::ostringstream records;
    o.raw = false;
    o.out.clear();
    CHECK(cli::cmd_simulate(o, cfg, records) == cli::exit_ok);
    auto ls = lines_of(records.str());
    REQUIRE(ls.size() == 2);
    auto rec = nlohmann::json::parse(ls[1]);
    CHECK(rec["id"] == "hotel-101");
    CHECK(rec["boxed"] == nlohmann::json::array({"180.0", "301"}));
}

TEST_CASE("reward prints the breakdown")
{
    std::ostringstream out;
    run_config cfg;
    CHECK(cli::cmd_reward({fixtures + "/hotel_transcript.txt", data_dir + "/hotel_gold.jsonl", "full"}, cfg, out) ==
          cli::exit_ok);
    auto ls = lines_of(out.str());
    REQUIRE(ls.size() == 2);
    CHECK(ls[0] == cfg.header());
    auto rec = nlohmann::json::parse(ls[1]);
    CHECK(std::abs(rec["r"].get<double>() - 43.0 / 30.0) <= 1e-12);
    CHECK(rec["format_ok"] == true);

    std::ostringstream stage1;
    CHECK(cli::cmd_reward({fixtures + "/hotel_transcript.txt", data_dir + "/hotel_gold.jsonl", "macro_only"}, cfg,
                          stage1) == cli::exit_ok);
    auto r1 = nlohmann::json::parse(lines_of(stage1.str())[1]);
    CHECK(std::abs(r1["r"].get<double>() - 4.0 / 3.0) <= 1e-12);
}

TEST_CASE("train-toy streams one record per episode")
{
    run_config cfg;
    cfg.set("toy.groups_per_episode=4");
    std::ostringstream out;
    cli::train_toy_options o;
    o.episodes = 3;
    CHECK(cli::cmd_train_toy(o, cfg, out) == cli::exit_ok);
    auto ls = lines_of(out.str());
    REQUIRE(ls.size() == 4);
    CHECK(nlohmann::json::parse(ls[0])["config"]["toy"]["episodes"] == 3);
    CHECK(nlohmann::json::parse(ls[3])["episode"] == 2);
}

TEST_CASE("proximity writes a CSV and an SVG")
{
    run_config cfg;
    cfg.merge({{"proximity", {{"samples", 20}, {"max_delta", 16}}}});
    auto csv = scratch("prox.csv");
    auto svg = scratch("prox.svg");
    std::ostringstream out;
    CHECK(cli::cmd_proximity({csv.string(), svg.string()}, cfg, out) == cli::exit_ok);
    auto ls = lines_of(cli::read_file(csv.string()));
    REQUIRE(ls.size() == 2 + 17);
    CHECK(ls[0].rfind("# {\"config\"", 0) == 0);
    CHECK(ls[1] == "delta,raw_envelope,smoothed_envelope");
    CHECK(cli::read_file(svg.string()).rfind("<svg", 0) == 0);
    CHECK(out.str().rfind("spearman=", 0) == 0);
    CHECK(out.str().find("argmax=0") != std::string::npos);
}

TEST_CASE("eval reports EM and judge accuracy")
{
    auto preds = scratch("preds.jsonl");
    nlohmann::json rec = {{"id", "hotel-101"}, {"transcript", cli::read_file(fixtures + "/hotel_transcript.txt")}};
    write(preds, rec.dump() + "\n");
    auto results = scratch("results.jsonl");
    run_config cfg;
    fixed_reply judge("correct");
    std::ostringstream out;
    cli::eval_options o{data_dir + "/hotel_gold.jsonl", preds.string(), results.string(), true};
    CHECK(cli::cmd_eval(o, cfg, out, &judge, [](std::chrono::milliseconds) {}) == cli::exit_ok);
    auto ls = lines_of(out.str());
    REQUIRE(ls.size() == 3);
    CHECK(ls[0] == "dataset\tinstances\tEM\tLJ\tjudge_failures");
    CHECK(ls[1] == "hotel_gold\t1\t1.0000\t1.0000\t0");
    CHECK(ls[2].rfind("stats {", 0) == 0);
    REQUIRE(judge.prompts.size() == 1);
    CHECK(judge.prompts[0].find("pred_answer: 180.0, 301\n") != std::string::npos);
    auto out_lines = lines_of(cli::read_file(results.string()));
    REQUIRE(out_lines.size() == 2);
    CHECK(nlohmann::json::parse(out_lines[1])["judge_verdict"] == "correct");

    std::ostringstream plain;
    o.judge = false;
    o.out.clear();
    CHECK(cli::cmd_eval(o, cfg, plain) == cli::exit_ok);
    CHECK(lines_of(plain.str())[0] == "dataset\tinstances\tEM");
}

TEST_CASE("judge failures are counted, not fatal")
{
    auto preds = scratch("preds2.jsonl");
    write(preds, R"({"id": "hotel-101", "predictions": ["180.0"]})" "\n");
    fixed_reply judge("unsure");
    run_config cfg;
    std::ostringstream out;
    cli::eval_options o{data_dir + "/hotel_gold.jsonl", preds.string(), "", true};
    CHECK(cli::cmd_eval(o, cfg, out, &judge) == cli::exit_ok);
    CHECK(lines_of(out.str())[1] == "hotel_gold\t1\t0.5000\t0.0000\t1");
}
