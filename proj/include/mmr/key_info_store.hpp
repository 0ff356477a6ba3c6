#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rollout_grammar.hpp"
#include "text.hpp"

namespace mmr {

struct lookup_result {
    std::string key;
    std::optional<std::string> value; // nullopt is the MISSING marker

    [[nodiscard]] bool missing() const noexcept { return !value.has_value(); }
};

/// Per-rollout key-information repository. Keys are exact, case-sensitive
/// and trimmed at both ends; the last write to a key wins.
class key_info_repository {
  public:
    /// Writes every pair of a <key_info_save> payload. Any non-string leaf
    /// rejects the whole payload and nothing is written.
    [[nodiscard]] std::vector<violation> save(const structured_call& payload, std::size_t offset = 0)
    {
        if (!payload.well_formed || !payload.payload.is_object()) {
            return {{offset, violation_code::invalid_key_info, "key info payload is not an object"}};
        }
        for (const auto& [k, v] : payload.payload.items()) {
            if (!v.is_string()) {
                return {{offset, violation_code::invalid_key_info,
                         "value of \"" + k + "\" is not a string"}};
            }
        }
        for (const auto& [k, v] : payload.payload.items()) {
            put(k, v.get<std::string>());
        }
        return {};
    }

    void put(std::string_view key, std::string value)
    {
        auto k = std::string(text::trim(key));
        log_.emplace_back(k, value);
        entries_[k] = std::move(value);
    }

    /// Exact-key lookups in query order. Never mutates the repository.
    [[nodiscard]] std::vector<lookup_result> micro_lookup(const std::vector<std::string>& queries) const
    {
        std::vector<lookup_result> out;
        out.reserve(queries.size());
        for (const auto& q : queries) {
            auto k = std::string(text::trim(q));
            auto it = entries_.find(k);
            out.push_back({k, it == entries_.end() ? std::nullopt : std::optional<std::string>(it->second)});
        }
        return out;
    }

    /// Whitespace tokens over every stored key and value.
    [[nodiscard]] std::size_t snapshot_tokens() const
    {
        std::size_t n = 0;
        for (const auto& [k, v] : entries_) {
            n += text::count_whitespace_tokens(k) + text::count_whitespace_tokens(v);
        }
        return n;
    }

    /// Values in first-save order of their keys.
    [[nodiscard]] std::vector<std::string> values() const
    {
        std::vector<std::string> out;
        for (const auto& k : key_order()) {
            out.push_back(entries_.at(k));
        }
        return out;
    }

    [[nodiscard]] std::vector<std::string> key_order() const
    {
        std::vector<std::string> keys;
        for (const auto& [k, v] : log_) {
            if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
                keys.push_back(k);
            }
        }
        return keys;
    }

    /// Key-value text record: a JSON object in first-save key order.
    [[nodiscard]] std::string to_record() const
    {
        ordered_json j = ordered_json::object();
        for (const auto& k : key_order()) {
            j[k] = entries_.at(k);
        }
        return j.dump();
    }

    [[nodiscard]] const std::map<std::string, std::string>& entries() const noexcept { return entries_; }
    [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& write_log() const noexcept
    {
        return log_;
    }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }

  private:
    std::map<std::string, std::string> entries_;
    std::vector<std::pair<std::string, std::string>> log_;
};

/// JSON body of a <micro_response>: {"key":"value"}, MISSING as null.
[[nodiscard]] inline std::string encode_micro_response(const std::vector<lookup_result>& results)
{
    ordered_json j = ordered_json::object();
    for (const auto& r : results) {
        j[r.key] = r.value ? ordered_json(*r.value) : ordered_json(nullptr);
    }
    return j.dump();
}

struct replayed_repository {
    key_info_repository repo;
    std::vector<violation> violations;
};

/// Rebuilds the repository a rollout wrote through its <key_info_save> spans.
[[nodiscard]] inline replayed_repository replay_saves(const std::vector<span>& spans)
{
    replayed_repository out;
    for (const auto& s : spans) {
        if (s.kind != span_kind::key_info_save) {
            continue;
        }
        auto v = out.repo.save(decode_payload(s.text), s.body().begin);
        out.violations.insert(out.violations.end(), v.begin(), v.end());
    }
    return out;
}

} // namespace mmr
