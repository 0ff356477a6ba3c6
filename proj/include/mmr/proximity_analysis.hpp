#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"

namespace mmr {

struct rope_config {
    std::size_t d = 64;
    double base = 10000.0;
    std::size_t max_delta = 512;

    void validate() const
    {
        if (d == 0 || d % 2 != 0) {
            throw config_error("RoPE head dimension must be a positive even number");
        }
        if (!(base > 1.0)) {
            throw config_error("RoPE base must exceed 1");
        }
    }

    /// theta_i = base^(-2i/d)
    [[nodiscard]] double theta(std::size_t i) const
    {
        return std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
    }
};

/// cos/sin of m * theta_i for every frequency i.
struct rotation_table {
    std::vector<double> c;
    std::vector<double> s;

    rotation_table(double m, const rope_config& cfg)
    {
        cfg.validate();
        c.resize(cfg.d / 2);
        s.resize(cfg.d / 2);
        for (std::size_t i = 0; i < cfg.d / 2; ++i) {
            double a = m * cfg.theta(i);
            c[i] = std::cos(a);
            s[i] = std::sin(a);
        }
    }
};

[[nodiscard]] inline std::vector<double> rotate(std::span<const double> v, const rotation_table& t)
{
    if (v.size() != 2 * t.c.size()) {
        throw structural_error("vector length does not match the RoPE dimension");
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < t.c.size(); ++i) {
        double x = v[2 * i];
        double y = v[2 * i + 1];
        out[2 * i] = t.c[i] * x - t.s[i] * y;
        out[2 * i + 1] = t.s[i] * x + t.c[i] * y;
    }
    return out;
}

/// Block-diagonal rotation of v to position m: each pair (v_2i, v_2i+1)
/// turns by m * theta_i.
[[nodiscard]] inline std::vector<double> rotate(std::span<const double> v, long long m, const rope_config& cfg)
{
    cfg.validate();
    if (v.size() != cfg.d) {
        throw structural_error("vector length does not match the RoPE dimension");
    }
    return rotate(v, rotation_table(static_cast<double>(m), cfg));
}

[[nodiscard]] inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

/// (R_m q) . (R_n k). Depends only on m - n.
[[nodiscard]] inline double rope_dot(std::span<const double> q, std::span<const double> k, long long m, long long n,
                                     const rope_config& cfg)
{
    if (q.size() != cfg.d || k.size() != cfg.d) {
        throw structural_error("rope_dot: vectors must have length d");
    }
    auto rq = rotate(q, m, cfg);
    auto rk = rotate(k, n, cfg);
    return dot(rq, rk);
}

struct spectral_component {
    double cos_term = 0.0;
    double sin_term = 0.0;

    [[nodiscard]] double value() const noexcept { return cos_term + sin_term; }
};

/// Per-frequency split of rope_dot at distance delta = m - n, computed in
/// the complex plane: with h_i = (q_2i + i q_2i+1) conj(k_2i + i k_2i+1),
/// component i is Re(h_i) cos(delta theta_i) - Im(h_i) sin(delta theta_i).
[[nodiscard]] inline std::vector<spectral_component> spectral_decompose(std::span<const double> q,
                                                                        std::span<const double> k, long long delta,
                                                                        const rope_config& cfg)
{
    cfg.validate();
    if (q.size() != cfg.d || k.size() != cfg.d) {
        throw structural_error("spectral_decompose: vectors must have length d");
    }
    std::vector<spectral_component> out(cfg.d / 2);
    for (std::size_t i = 0; i < cfg.d / 2; ++i) {
        std::complex<double> zq(q[2 * i], q[2 * i + 1]);
        std::complex<double> zk(k[2 * i], k[2 * i + 1]);
        auto h = zq * std::conj(zk);
        double phase = static_cast<double>(delta) * cfg.theta(i);
        out[i] = {h.real() * std::cos(phase), -h.imag() * std::sin(phase)};
    }
    return out;
}

[[nodiscard]] inline double spectral_sum(const std::vector<spectral_component>& parts)
{
    double s = 0.0;
    for (const auto& p : parts) {
        s += p.value();
    }
    return s;
}

// ---------------------------------------------------------------------------
// Distance decay

struct decay_config {
    rope_config rope;
    std::size_t samples = 10000;
    std::uint64_t seed = 42;
    std::size_t smoothing_window = 16;
    /// Correlation between key and query: k = normalize(a q + sqrt(1 - a^2) u).
    /// 1 means the key carries the query's own content.
    double key_alignment = 1.0;
    unsigned threads = 0; // 0 = hardware concurrency

    void validate() const
    {
        rope.validate();
        if (samples < 1) throw config_error("samples must be at least 1");
        if (smoothing_window < 1) throw config_error("smoothing window must be at least 1");
        if (!(key_alignment >= -1.0 && key_alignment <= 1.0)) throw config_error("key_alignment must be in [-1, 1]");
    }
};

struct decay_curve {
    std::vector<long long> deltas;
    std::vector<double> envelope; // mean |rope_dot| per delta
    std::vector<double> smoothed;
    std::size_t samples = 0;

    void write_csv(std::ostream& os) const
    {
        os << "delta,raw_envelope,smoothed_envelope\n";
        char buf[96];
        for (std::size_t i = 0; i < deltas.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g\n", deltas[i], envelope[i], smoothed[i]);
            os << buf;
        }
    }

    /// Minimal SVG line plot of both curves.
    void write_svg(std::ostream& os) const
    {
        const double w = 640, h = 360, pad = 40;
        double ymax = 0.0;
        for (double v : envelope) ymax = std::max(ymax, v);
        if (ymax <= 0.0) ymax = 1.0;
        auto xmax = static_cast<double>(std::max<long long>(1, deltas.empty() ? 1 : deltas.back()));
        auto poly = [&](const std::vector<double>& ys, const char* color) {
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
            char buf[64];
            for (std::size_t i = 0; i < ys.size(); ++i) {
                double x = pad + (w - 2 * pad) * static_cast<double>(deltas[i]) / xmax;
                double y = h - pad - (h - 2 * pad) * ys[i] / ymax;
                std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, y);
                os << buf;
            }
            os << "\"/>\n";
        };
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
        os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        poly(envelope, "#9ab");
        poly(smoothed, "#c33");
        os << "</svg>\n";
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::vector<double> unit_vector(std::size_t d, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(d);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = normal(rng);
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : v) {
        x /= norm;
    }
    return v;
}

inline double bin_envelope(const decay_config& cfg, long long delta)
{
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(delta))));
    const auto d = cfg.rope.d;
    const double a = cfg.key_alignment;
    const double b = std::sqrt(std::max(0.0, 1.0 - a * a));
    double sum = 0.0;
    for (std::size_t s = 0; s < cfg.samples; ++s) {
        auto q = unit_vector(d, rng);
        auto u = unit_vector(d, rng);
        std::vector<double> k(d);
        double norm = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            k[i] = a * q[i] + b * u[i];
            norm += k[i] * k[i];
        }
        norm = std::sqrt(norm);
        for (auto& x : k) {
            x /= norm;
        }
        sum += std::abs(rope_dot(q, k, 0, -delta, cfg.rope));
    }
    return sum / static_cast<double>(cfg.samples);
}

} // namespace detail

/// Trailing moving average; the first window-1 entries average what exists.
[[nodiscard]] inline std::vector<double> moving_average(const std::vector<double>& xs, std::size_t window)
{
    std::vector<double> out(xs.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        acc += xs[i];
        if (i >= window) {
            acc -= xs[i - window];
        }
        out[i] = acc / static_cast<double>(std::min(window, i + 1));
    }
    return out;
}

/// Mean |rope_dot(q, k, 0, -delta)| for delta = 0..max_delta. Each delta
/// bin draws from its own generator seeded from (seed, delta), so the
/// result does not depend on the thread count.
[[nodiscard]] inline decay_curve compute_decay_curve(const decay_config& cfg)
{
    cfg.validate();
    decay_curve out;
    const auto bins = cfg.rope.max_delta + 1;
    out.samples = cfg.samples;
    out.deltas.resize(bins);
    std::iota(out.deltas.begin(), out.deltas.end(), 0LL);
    out.envelope.assign(bins, 0.0);
    unsigned n_threads = cfg.threads != 0 ? cfg.threads : std::max(1U, std::thread::hardware_concurrency());
    n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(bins));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < n_threads; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t b = t; b < bins; b += n_threads) {
                    out.envelope[b] = detail::bin_envelope(cfg, static_cast<long long>(b));
                }
            });
        }
    }
    out.smoothed = moving_average(out.envelope, cfg.smoothing_window);
    return out;
}

/// Ranks with ties sharing their average rank (1-based).
[[nodiscard]] inline std::vector<double> average_ranks(const std::vector<double>& xs)
{
    std::vector<std::size_t> idx(xs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(xs.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) {
            ++j;
        }
        double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

[[nodiscard]] inline double spearman(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) {
        throw structural_error("spearman needs two equal-length series of at least 2 points");
    }
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
    double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(ry.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

struct decay_trend {
    double spearman_rho = 0.0; // smoothed envelope vs delta
    std::size_t argmax = 0;    // of the raw envelope
};

[[nodiscard]] inline decay_trend summarize_trend(const decay_curve& c)
{
    decay_trend t;
    std::vector<double> x(c.deltas.begin(), c.deltas.end());
    t.spearman_rho = spearman(x, c.smoothed);
    t.argmax = static_cast<std::size_t>(std::max_element(c.envelope.begin(), c.envelope.end()) - c.envelope.begin());
    return t;
}

} // namespace mmr
