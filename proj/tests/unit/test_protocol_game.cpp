#include <catch_amalgamated.hpp>

#include <cmath>

#include "mmr/protocol_game.hpp"

using namespace mmr;

namespace {

game::episode scripted(const std::vector<int>& actions, training_stage stage)
{
    std::size_t i = 0;
    return game::play([&](std::span<const int>) { return actions.at(i++); }, stage, actions.size());
}

const std::vector<int> grounded = {game::think, game::search_key, game::save,  game::answer,
                                   game::micro, game::box,        game::end};
const std::vector<int> recalled = {game::think, game::search_key, game::save, game::answer, game::box, game::end};

} // namespace

TEST_CASE("the grounded episode earns the full reward")
{
    auto ep = scripted(grounded, training_stage::full);
    CHECK(ep.closed);
    CHECK(is_valid(parse(ep.transcript)));
    CHECK(extract_boxed(parse(ep.transcript)) == std::vector<std::string>{"Room 301"});
    CHECK(std::abs(game::score(ep, training_stage::full, {}) - 43.0 / 30.0) <= 1e-12);
}

TEST_CASE("environment tokens are masked")
{
    auto ep = scripted(grounded, training_stage::full);
    REQUIRE(ep.tokens.size() == ep.mask.size());
    for (std::size_t i = 0; i < ep.tokens.size(); ++i) {
        bool env = ep.tokens[i] == game::macro_result_token || ep.tokens[i] == game::micro_result_token;
        CHECK(ep.mask[i] == (env ? 0 : 1));
    }
    CHECK(ep.tokens.size() == grounded.size() + 2);
}

TEST_CASE("stage one scores recall without consistency")
{
    auto ep = scripted(recalled, training_stage::macro_only);
    // F1("301", "Room 301") = 2/3, key F1 = 1.
    CHECK(game::score(ep, training_stage::macro_only, {}) == Catch::Approx(2.0 / 3.0 + 1.0 / 3.0));
    auto in_stage_one = scripted(grounded, training_stage::macro_only);
    CHECK(in_stage_one.transcript.find("{\"RoomNumber\":null}") != std::string::npos);
    auto full = scripted(recalled, training_stage::full);
    // Full stage without a micro call fails the format but still pays r_ans.
    CHECK(game::score(full, training_stage::full, {}) == Catch::Approx(2.0 / 3.0 + 1.0 / 3.0 + 0.1 * 2.0 / 3.0));
}

TEST_CASE("malformed episodes earn nothing")
{
    auto ep = scripted({game::answer, game::box}, training_stage::full);
    CHECK_FALSE(ep.closed);
    CHECK(game::score(ep, training_stage::full, {}) == 0.0);
    auto empty_answer = scripted({game::think, game::search_vague, game::save, game::end}, training_stage::macro_only);
    CHECK(game::score(empty_answer, training_stage::macro_only, {}) == 0.1);
}

TEST_CASE("toy training is bit-reproducible")
{
    toy_train_config cfg;
    cfg.episodes = 6;
    cfg.groups_per_episode = 8;
    cfg.transition_episode = 3;
    auto a = train_toy(cfg);
    auto b = train_toy(cfg);
    REQUIRE(a.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].mean_reward == b[i].mean_reward);
        CHECK(a[i].step.loss == b[i].step.loss);
        CHECK(a[i].to_json().dump() == b[i].to_json().dump());
    }
    CHECK(a[2].stage == training_stage::macro_only);
    CHECK(a[3].stage == training_stage::full);
    cfg.seed = 7;
    CHECK(train_toy(cfg)[0].mean_reward != a[0].mean_reward);
}

TEST_CASE("trailing mean")
{
    CHECK(trailing_mean({1, 2, 3, 4}, 2) == std::vector<double>{1.0, 1.5, 2.5, 3.5});
    CHECK(trailing_mean({}, 3).empty());
}
