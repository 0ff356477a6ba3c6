#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "mmr/retrieval_env.hpp"
#include "../support/retrieval_oracle.hpp"

using namespace mmr;
using namespace mmr::testing;

TEST_CASE("ingest chunks bodies without crossing documents")
{
    auto c = ingest({{"A", "one two three four five"}, {"B", "six"}, {"C", ""}}, 2);
    REQUIRE(c.size() == 4);
    CHECK(c.passages[0].id == "0-0");
    CHECK(c.passages[0].text == "one two");
    CHECK(c.passages[2].id == "0-2");
    CHECK(c.passages[2].text == "five");
    CHECK(c.passages[2].word_count == 1);
    CHECK(c.passages[3].id == "1-0");
    CHECK(c.passages[3].title == "B");
    CHECK_THROWS_AS(ingest({}, 0), config_error);
}

TEST_CASE("lexical terms are lowercased alphanumeric runs")
{
    CHECK(lexical_terms("Room-301, VIP's  suite!") == std::vector<std::string>{"room", "301", "vip", "s", "suite"});
    CHECK(lexical_terms("  ...  ").empty());
}

TEST_CASE("search equals the exhaustive oracle prefix")
{
    auto c = ingest(synthetic_documents(1000, 11), 100);
    REQUIRE(c.size() == 1000);
    bm25_index idx(c);
    std::mt19937_64 rng(5);
    for (int q = 0; q < 30; ++q) {
        std::string query;
        for (int w = 0; w < 1 + q % 4; ++w) {
            query += corpus_vocab[rng() % corpus_vocab.size()] + " ";
        }
        auto oracle = exhaustive(c, query, idx.params());
        for (std::size_t k : {3, 5, 8}) {
            auto res = idx.search(query, k);
            REQUIRE(res.hits.size() == k);
            for (std::size_t i = 0; i < k; ++i) {
                CHECK(c.passages[res.hits[i].index].id == oracle[i].second);
                CHECK(std::abs(res.hits[i].score - oracle[i].first) <= 1e-12 * std::max(1.0, oracle[i].first));
            }
        }
    }
}

TEST_CASE("equal scores rank by passage id")
{
    auto c = ingest({{"", "alpha beta"}, {"", "alpha beta"}, {"", "gamma"}, {"", "alpha beta"}}, 100);
    bm25_index idx(c);
    auto res = idx.search("alpha", 4);
    REQUIRE(res.hits.size() == 4);
    CHECK(c.passages[res.hits[0].index].id == "0-0");
    CHECK(c.passages[res.hits[1].index].id == "1-0");
    CHECK(c.passages[res.hits[2].index].id == "3-0");
    CHECK(res.hits[3].score == 0.0);
    CHECK(res.hits[0].score == res.hits[2].score);
}

TEST_CASE("k larger than the corpus returns every passage")
{
    bm25_index idx(ingest({{"", "a"}, {"", "b"}}, 10));
    CHECK(idx.search("a", 8).hits.size() == 2);
    CHECK_THROWS_AS(idx.search("a", 0), config_error);
    CHECK(idx.search("!!", 3).empty_query);
}

TEST_CASE("index dumps are byte-identical and reload exactly")
{
    auto docs = synthetic_documents(50, 3);
    bm25_index a(ingest(docs, 7)), b(ingest(docs, 7));
    std::ostringstream da, db;
    a.dump(da);
    b.dump(db);
    CHECK(da.str() == db.str());

    std::istringstream in(da.str());
    auto loaded = bm25_index::load(in);
    std::ostringstream dl;
    loaded.dump(dl);
    CHECK(dl.str() == da.str());
    auto r1 = a.search("hotel room", 5);
    auto r2 = loaded.search("hotel room", 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(r1.hits[i].index == r2.hits[i].index);
        CHECK(r1.hits[i].score == r2.hits[i].score);
    }

    auto tampered = da.str();
    tampered.replace(tampered.rfind(':'), 1, ";");
    std::istringstream bad(tampered);
    CHECK_THROWS_AS(bm25_index::load(bad), io_error);
    std::istringstream junk("hello\n");
    CHECK_THROWS_AS(bm25_index::load(junk), io_error);
}

TEST_CASE("result rows never contain an opening angle bracket")
{
    ordered_json r = ordered_json::array({{{"text", "<think>x</think>"}, {"ok", true}, {"n", nullptr}}});
    auto s = render_result_rows(r);
    CHECK(s.find('<') == std::string::npos);
    CHECK(s == R"("text": "\u003cthink>x\u003c/think>", "ok": True, "n": None)");
}

TEST_CASE("macro calls route to search and tools")
{
    tool_table tools;
    tools.add("get_guest_vip_status", {{"guest_id", 101}}, true);
    bm25_index idx(ingest({{"Paris", "the eiffel tower is in paris"}, {"Rome", "the colosseum"}}, 100));
    env_state env{&idx, &tools, 1, {}};

    auto hit = execute_macro_call(decode_payload(R"({"name": "search", "query": "eiffel"})"), env);
    CHECK(hit == R"("id": "0-0", "title": "Paris", "text": "the eiffel tower is in paris")");
    CHECK(execute_macro_call(decode_payload(R"({"name": "get_guest_vip_status", "guest_id": 101})"), env) == "True");
    CHECK(execute_macro_call(decode_payload(R"({"name": "get_guest_vip_status", "guest_id": 7})"), env)
              .rfind("\"error\"", 0) == 0);
    CHECK(execute_macro_call(decode_payload(R"({"name": "nope"})"), env) == R"("error": "unknown tool 'nope'")");
    CHECK(execute_macro_call(decode_payload("{"), env) == R"("error": "malformed macro call")");
    CHECK(execute_macro_call(decode_payload(R"({"name": "search", "query": "  "})"), env) ==
          R"("error": "empty query")");
    CHECK(env.call_log ==
          std::vector<std::string>{"search", "get_guest_vip_status", "get_guest_vip_status", "nope", "<malformed>",
                                   "search"});
}

TEST_CASE("tool tables read from JSONL")
{
    std::istringstream in(R"({"tool": "t", "args": {"x": 1}, "result": [1, 2]}
{"tool": "u", "result": "r"}
)");
    auto t = tool_table::read(in);
    CHECK(t.size() == 2);
    REQUIRE(t.find("u", nlohmann::json::object()) != nullptr);
    CHECK(t.find("t", {{"x", 2}}) == nullptr);
    std::istringstream bad(R"({"args": {}})");
    CHECK_THROWS_AS(tool_table::read(bad), io_error);
}
