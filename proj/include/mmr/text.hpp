#pragma once

#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mmr {

struct char_range {
    std::size_t begin = 0;
    std::size_t end = 0; // exclusive

    [[nodiscard]] constexpr std::size_t size() const noexcept { return end - begin; }
    [[nodiscard]] constexpr bool overlaps(const char_range& o) const noexcept
    {
        return begin < o.end && o.begin < end;
    }
    friend constexpr bool operator==(const char_range&, const char_range&) = default;
};

namespace text {

inline bool is_space(char c) noexcept
{
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

/// Splits on ASCII whitespace.
inline std::vector<std::string> split_whitespace(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) {
            ++i;
        }
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j])) {
            ++j;
        }
        if (j > i) {
            out.emplace_back(s.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

inline std::size_t count_whitespace_tokens(std::string_view s)
{
    std::size_t n = 0;
    bool in_token = false;
    for (char c : s) {
        bool sp = is_space(c);
        if (!sp && !in_token) {
            ++n;
        }
        in_token = !sp;
    }
    return n;
}

inline std::string_view trim(std::string_view s) noexcept
{
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) {
        ++b;
    }
    while (e > b && is_space(s[e - 1])) {
        --e;
    }
    return s.substr(b, e - b);
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i != 0) {
            out += sep;
        }
        out += parts[i];
    }
    return out;
}

/// Extractive-QA answer normalization: lowercase, drop ASCII punctuation,
/// drop the articles a/an/the, collapse whitespace.
inline std::string normalize_answer(std::string_view s)
{
    std::string lowered;
    lowered.reserve(s.size());
    for (char c : s) {
        auto uc = static_cast<unsigned char>(c);
        if (std::ispunct(uc) != 0) {
            continue;
        }
        lowered.push_back(static_cast<char>(std::tolower(uc)));
    }
    std::vector<std::string> kept;
    for (auto& w : split_whitespace(lowered)) {
        if (w == "a" || w == "an" || w == "the") {
            continue;
        }
        kept.push_back(std::move(w));
    }
    return join(kept, " ");
}

inline std::vector<std::string> normalized_tokens(std::string_view s)
{
    return split_whitespace(normalize_answer(s));
}

} // namespace text
} // namespace mmr
