#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "mmr/proximity_analysis.hpp"

using namespace mmr;

namespace {

std::vector<double> gaussian(std::size_t d, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(d);
    for (auto& x : v) x = n(rng);
    return v;
}

} // namespace

TEST_CASE("rotation preserves norms")
{
    rope_config cfg;
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
        auto v = gaussian(cfg.d, rng);
        auto r = rotate(v, static_cast<long long>(rng() % 5000) - 2500, cfg);
        CHECK(std::abs(dot(r, r) - dot(v, v)) <= 1e-10 * dot(v, v));
    }
    CHECK(rotate(std::vector<double>{1.0, 2.0}, 0, {.d = 2}) == std::vector<double>{1.0, 2.0});
}

TEST_CASE("scores depend only on relative position")
{
    rope_config cfg;
    std::mt19937_64 rng(2);
    for (int i = 0; i < 1000; ++i) {
        auto q = gaussian(cfg.d, rng);
        auto k = gaussian(cfg.d, rng);
        long long m = static_cast<long long>(rng() % 1024);
        long long n = static_cast<long long>(rng() % 1024);
        long long s = static_cast<long long>(rng() % 4096);
        CHECK(std::abs(rope_dot(q, k, m, n, cfg) - rope_dot(q, k, m + s, n + s, cfg)) <= 1e-10);
    }
}

TEST_CASE("spectral components sum to the rotated dot product")
{
    rope_config cfg;
    std::mt19937_64 rng(3);
    for (int i = 0; i < 1000; ++i) {
        auto q = gaussian(cfg.d, rng);
        auto k = gaussian(cfg.d, rng);
        long long delta = static_cast<long long>(rng() % 1025) - 512;
        auto parts = spectral_decompose(q, k, delta, cfg);
        CHECK(parts.size() == cfg.d / 2);
        CHECK(std::abs(spectral_sum(parts) - rope_dot(q, k, delta, 0, cfg)) <= 1e-10);
    }
}

TEST_CASE("the opposite phase sign does not reproduce the dot product")
{
    rope_config cfg{.d = 2};
    std::vector<double> q{1.0, 0.0}, k{0.0, 1.0};
    for (long long delta : {1LL, 2LL, 3LL}) {
        auto parts = spectral_decompose(q, k, delta, cfg);
        double flipped = parts[0].cos_term - parts[0].sin_term;
        CHECK(std::abs(spectral_sum(parts) - rope_dot(q, k, delta, 0, cfg)) <= 1e-12);
        CHECK(std::abs(flipped - rope_dot(q, k, delta, 0, cfg)) > 0.1);
    }
}

TEST_CASE("invalid RoPE settings are rejected")
{
    CHECK_THROWS_AS((rope_config{.d = 3}).validate(), config_error);
    CHECK_THROWS_AS((rope_config{.d = 4, .base = 1.0}).validate(), config_error);
    std::vector<double> q(4), k(6);
    CHECK_THROWS_AS(spectral_decompose(q, k, 0, {.d = 4}), structural_error);
}

TEST_CASE("decay curves are deterministic across thread counts")
{
    decay_config cfg;
    cfg.rope.max_delta = 40;
    cfg.samples = 50;
    cfg.threads = 1;
    auto a = compute_decay_curve(cfg);
    cfg.threads = 3;
    auto b = compute_decay_curve(cfg);
    CHECK(a.envelope == b.envelope);
    CHECK(a.smoothed == b.smoothed);
    cfg.seed = 43;
    CHECK(compute_decay_curve(cfg).envelope != a.envelope);

    std::ostringstream ca, cb;
    a.write_csv(ca);
    b.write_csv(cb);
    CHECK(ca.str() == cb.str());
    CHECK(ca.str().rfind("delta,raw_envelope,smoothed_envelope\n0,", 0) == 0);
}

TEST_CASE("aligned keys peak at distance zero")
{
    decay_config cfg;
    cfg.rope.max_delta = 128;
    cfg.samples = 200;
    auto c = compute_decay_curve(cfg);
    CHECK(std::abs(c.envelope[0] - 1.0) <= 1e-12);
    auto t = summarize_trend(c);
    CHECK(t.argmax == 0);
    CHECK(t.spearman_rho < 0.0);
}

TEST_CASE("moving average and ranks")
{
    CHECK(moving_average({1, 2, 3, 4}, 2) == std::vector<double>{1.0, 1.5, 2.5, 3.5});
    CHECK(average_ranks({3, 1, 3, 2}) == std::vector<double>{3.5, 1.0, 3.5, 2.0});
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == Catch::Approx(-1.0));
    CHECK(spearman({1, 2, 3}, {1, 2, 3}) == Catch::Approx(1.0));
}
