#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "mmr/reward_engine.hpp"
#include "mmr/scripted_agent.hpp"

using namespace mmr;

namespace {

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

agent_run hotel_run()
{
    auto tools = tool_table::read(std::string(MMR_DATA) + "/hotel_tools.jsonl");
    auto eps = read_agent_script(std::string(MMR_DATA) + "/hotel_agent.json");
    REQUIRE(eps.size() == 1);
    env_state env;
    env.tools = &tools;
    return run_agent(eps[0], env);
}

} // namespace

TEST_CASE("hotel agent reproduces the golden transcript")
{
    auto run = hotel_run();
    CHECK(run.text == slurp(std::string(MMR_FIXTURES) + "/hotel_transcript.txt"));
    CHECK(serialize(run.transcript) == run.text);
    CHECK(extract_boxed(run.transcript) == std::vector<std::string>{"180.0", "301"});
    CHECK(run.call_log == std::vector<std::string>{"get_available_rooms", "get_guest_vip_status"});
    CHECK(run.repo.to_record() == R"({"finalPayableAmount":"180.0","RoomNumber":"301"})");
    auto b = score_rollout(parse(run.text), gold_items({"180.0", "301"}));
    CHECK(std::abs(b.r - 43.0 / 30.0) <= 1e-12);
}

TEST_CASE("the built rollout equals the parsed transcript")
{
    auto run = hotel_run();
    auto parsed = parse(run.text);
    REQUIRE(is_valid(parsed));
    const auto& spans = spans_of(parsed);
    REQUIRE(spans.size() == run.transcript.spans.size());
    for (std::size_t i = 0; i < spans.size(); ++i) {
        CHECK(spans[i].kind == run.transcript.spans[i].kind);
        CHECK(spans[i].range.begin == run.transcript.spans[i].range.begin);
        CHECK(spans[i].range.end == run.transcript.spans[i].range.end);
    }
}

TEST_CASE("missing keys produce null responses and a MISSING fill")
{
    std::istringstream script(R"({"id": "m", "separator": "", "trailer": "",
      "steps": [{"think": "t"}, {"save": {"a": "1"}},
                {"answer": [{"micro": ["a", "b"]}, {"say": "\\boxed{${a}} and ${b}"}]}]})");
    auto eps = read_agent_script(script);
    auto run = run_agent(eps[0], env_state{});
    CHECK(run.text.find(R"(<micro_response>{"a":"1","b":null}</micro_response>)") != std::string::npos);
    CHECK(run.text.find("\\boxed{1} and MISSING</answer>") != std::string::npos);
    CHECK(is_valid(parse(run.text)));
}

TEST_CASE("search steps become search macro calls")
{
    bm25_index idx(ingest({{"Hotel", "the suite is room 301"}, {"Lobby", "opens at nine"}}, 100));
    std::istringstream script(R"({"steps": [{"search": "suite room"}, {"save": {"k": "301"}},
                                 {"answer": [{"micro": "k"}, {"say": "\\boxed{${k}}"}]}]})");
    env_state env;
    env.search = &idx;
    env.top_k = 1;
    auto run = run_agent(read_agent_script(script)[0], env);
    CHECK(run.text.find(R"(<macro_tool_call>{"name": "search", "query": "suite room"}</macro_tool_call>)") !=
          std::string::npos);
    CHECK(run.text.find(R"("text": "the suite is room 301")") != std::string::npos);
    CHECK(run.text.find("opens at nine") == std::string::npos);
}

TEST_CASE("bad scripts are rejected")
{
    std::istringstream not_json("{");
    CHECK_THROWS_AS(read_agent_script(not_json), io_error);
    std::istringstream no_steps(R"({"id": 1})");
    CHECK_THROWS_AS(read_agent_script(no_steps), io_error);
    std::istringstream multi(R"({"episodes": [{"steps": []}, {"id": "b", "steps": []}]})");
    auto eps = read_agent_script(multi);
    REQUIRE(eps.size() == 2);
    CHECK(eps[0].id == "0");
    CHECK(eps[1].id == "b");
}
