#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "text.hpp"

namespace mmr {

using ordered_json = nlohmann::ordered_json;

enum class span_kind : std::uint8_t {
    think_text,
    macro_call,
    macro_result,
    key_info_save,
    answer_text,
    micro_call,
    micro_response,
    boxed_value,
};

enum class span_source : std::uint8_t { policy, environment };

[[nodiscard]] constexpr span_source source_of(span_kind k) noexcept
{
    return (k == span_kind::macro_result || k == span_kind::micro_response) ? span_source::environment
                                                                            : span_source::policy;
}

[[nodiscard]] constexpr std::string_view to_string(span_kind k) noexcept
{
    switch (k) {
    case span_kind::think_text: return "think_text";
    case span_kind::macro_call: return "macro_call";
    case span_kind::macro_result: return "macro_result";
    case span_kind::key_info_save: return "key_info_save";
    case span_kind::answer_text: return "answer_text";
    case span_kind::micro_call: return "micro_call";
    case span_kind::micro_response: return "micro_response";
    case span_kind::boxed_value: return "boxed_value";
    }
    return "unknown";
}

/// Tag names of the rollout protocol.
namespace tags {
inline constexpr std::string_view think = "think";
inline constexpr std::string_view macro_call = "macro_tool_call";
inline constexpr std::string_view macro_result = "macro_response";
inline constexpr std::string_view key_info_save = "key_info_save";
inline constexpr std::string_view answer = "answer";
inline constexpr std::string_view micro_call = "micro_tool_call";
inline constexpr std::string_view micro_response = "micro_response";
inline constexpr std::string_view boxed_open = "\\boxed{";

inline constexpr std::array<std::string_view, 7> all = {
    think, macro_call, macro_result, key_info_save, answer, micro_call, micro_response};

inline std::string open(std::string_view name) { return "<" + std::string(name) + ">"; }
inline std::string close(std::string_view name) { return "</" + std::string(name) + ">"; }
} // namespace tags

/// One labelled piece of a rollout. `range` covers the tag delimiters too;
/// bare text spans (undelimited) have none.
struct span {
    span_kind kind = span_kind::think_text;
    std::string text;
    span_source source = span_source::policy;
    char_range range;
    bool delimited = true;

    [[nodiscard]] std::string open_delimiter() const
    {
        if (!delimited) {
            return {};
        }
        switch (kind) {
        case span_kind::think_text: return tags::open(tags::think);
        case span_kind::macro_call: return tags::open(tags::macro_call);
        case span_kind::macro_result: return tags::open(tags::macro_result);
        case span_kind::key_info_save: return tags::open(tags::key_info_save);
        case span_kind::micro_call: return tags::open(tags::micro_call);
        case span_kind::micro_response: return tags::open(tags::micro_response);
        case span_kind::boxed_value: return std::string(tags::boxed_open);
        case span_kind::answer_text: return {};
        }
        return {};
    }

    [[nodiscard]] std::string close_delimiter() const
    {
        if (!delimited) {
            return {};
        }
        switch (kind) {
        case span_kind::think_text: return tags::close(tags::think);
        case span_kind::macro_call: return tags::close(tags::macro_call);
        case span_kind::macro_result: return tags::close(tags::macro_result);
        case span_kind::key_info_save: return tags::close(tags::key_info_save);
        case span_kind::micro_call: return tags::close(tags::micro_call);
        case span_kind::micro_response: return tags::close(tags::micro_response);
        case span_kind::boxed_value: return "}";
        case span_kind::answer_text: return {};
        }
        return {};
    }

    [[nodiscard]] std::string rendered() const { return open_delimiter() + text + close_delimiter(); }

    /// Offsets of `text` inside the raw rollout.
    [[nodiscard]] char_range body() const
    {
        auto b = range.begin + open_delimiter().size();
        return {b, b + text.size()};
    }
};

/// A rollout that satisfies every grammar rule. The answer tags are not
/// spans: `<answer>` sits right before spans[phase_boundary] and
/// `</answer>` after the last span, followed by `trailer` (whitespace).
struct rollout {
    std::vector<span> spans;
    std::size_t phase_boundary = 0;
    std::string trailer;

    [[nodiscard]] std::size_t count(span_kind k) const
    {
        return static_cast<std::size_t>(
            std::count_if(spans.begin(), spans.end(), [k](const span& s) { return s.kind == k; }));
    }
};

enum class violation_code : std::uint8_t {
    unclosed_tag,
    unexpected_close_tag,
    phase_violation,
    malformed_payload,
    missing_think,
    missing_answer,
    missing_key_info_save,
    duplicate_answer,
    trailing_text,
    unpaired_call,
    orphan_response,
    unclosed_boxed,
    invalid_key_info,
    missing_box,
    missing_micro_call,
    stage_violation,
};

[[nodiscard]] constexpr std::string_view to_string(violation_code c) noexcept
{
    switch (c) {
    case violation_code::unclosed_tag: return "unclosed_tag";
    case violation_code::unexpected_close_tag: return "unexpected_close_tag";
    case violation_code::phase_violation: return "phase_violation";
    case violation_code::malformed_payload: return "malformed_payload";
    case violation_code::missing_think: return "missing_think";
    case violation_code::missing_answer: return "missing_answer";
    case violation_code::missing_key_info_save: return "missing_key_info_save";
    case violation_code::duplicate_answer: return "duplicate_answer";
    case violation_code::trailing_text: return "trailing_text";
    case violation_code::unpaired_call: return "unpaired_call";
    case violation_code::orphan_response: return "orphan_response";
    case violation_code::unclosed_boxed: return "unclosed_boxed";
    case violation_code::invalid_key_info: return "invalid_key_info";
    case violation_code::missing_box: return "missing_box";
    case violation_code::missing_micro_call: return "missing_micro_call";
    case violation_code::stage_violation: return "stage_violation";
    }
    return "unknown";
}

struct violation {
    std::size_t offset = 0;
    violation_code code = violation_code::unclosed_tag;
    std::string message;

    friend bool operator==(const violation& a, const violation& b)
    {
        return a.offset == b.offset && a.code == b.code;
    }
};

/// Everything the parser found wrong, plus the spans it could still recover.
struct parse_report {
    std::vector<violation> violations;
    std::vector<span> partial_spans;

    [[nodiscard]] bool has(violation_code c) const
    {
        return std::any_of(violations.begin(), violations.end(),
                           [c](const violation& v) { return v.code == c; });
    }

    /// One `offset<TAB>code<TAB>message` line per violation.
    void write(std::ostream& os) const
    {
        for (const auto& v : violations) {
            os << v.offset << '\t' << to_string(v.code) << '\t' << v.message << '\n';
        }
    }

    [[nodiscard]] std::string to_text() const
    {
        std::ostringstream os;
        write(os);
        return os.str();
    }
};

using parse_result = std::variant<rollout, parse_report>;

[[nodiscard]] inline bool is_valid(const parse_result& r) noexcept
{
    return std::holds_alternative<rollout>(r);
}

/// Spans of a parse outcome: all of them for a valid rollout, the recovered
/// ones for a report.
[[nodiscard]] inline const std::vector<span>& spans_of(const parse_result& r)
{
    if (const auto* ro = std::get_if<rollout>(&r)) {
        return ro->spans;
    }
    return std::get<parse_report>(r).partial_spans;
}

// ---------------------------------------------------------------------------
// Structured payloads

struct structured_call {
    ordered_json payload;
    bool well_formed = false;
    std::string error;

    [[nodiscard]] std::string canonical() const { return payload.dump(); }
};

/// Decodes a call body. Bodies must be a single JSON object; whitespace
/// around it is fine, trailing commas and comments are not.
[[nodiscard]] inline structured_call decode_payload(std::string_view body)
{
    structured_call out;
    auto trimmed = text::trim(body);
    out.payload = ordered_json::parse(trimmed.begin(), trimmed.end(), nullptr, false);
    if (out.payload.is_discarded()) {
        out.payload = ordered_json();
        out.error = "payload is not valid JSON";
        return out;
    }
    if (!out.payload.is_object()) {
        out.error = "payload must be a JSON object";
        return out;
    }
    out.well_formed = true;
    return out;
}

/// One-line JSON with `", "` and `": "` separators, in insertion order:
/// {"name": "search", "query": "..."}.
[[nodiscard]] inline std::string format_inline(const ordered_json& j)
{
    if (j.is_object()) {
        std::string out = "{";
        bool first = true;
        for (const auto& [k, v] : j.items()) {
            if (!first) {
                out += ", ";
            }
            first = false;
            out += ordered_json(k).dump();
            out += ": ";
            out += format_inline(v);
        }
        return out + "}";
    }
    if (j.is_array()) {
        std::string out = "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i != 0) {
                out += ", ";
            }
            out += format_inline(j[i]);
        }
        return out + "]";
    }
    return j.dump();
}

/// Queries named by a micro call: `{"query": "k"}` or `{"query": ["k1", "k2"]}`.
[[nodiscard]] inline std::optional<std::vector<std::string>> micro_queries(const structured_call& c)
{
    if (!c.well_formed || !c.payload.contains("query")) {
        return std::nullopt;
    }
    const auto& q = c.payload["query"];
    std::vector<std::string> out;
    if (q.is_string()) {
        out.push_back(q.get<std::string>());
        return out;
    }
    if (!q.is_array() || q.empty()) {
        return std::nullopt;
    }
    for (const auto& e : q) {
        if (!e.is_string()) {
            return std::nullopt;
        }
        out.push_back(e.get<std::string>());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

struct tag_token {
    std::size_t offset = 0;
    std::size_t length = 0;
    std::string_view name; // empty for \boxed{
    bool closing = false;
    bool boxed = false;
};

/// Finds the next protocol token at or after `from`. `\boxed{` only counts
/// when `with_boxed` is set.
inline std::optional<tag_token> next_token(std::string_view raw, std::size_t from, bool with_boxed)
{
    std::size_t i = from;
    while (i < raw.size()) {
        std::size_t lt = raw.find('<', i);
        std::size_t bx = with_boxed ? raw.find(tags::boxed_open, i) : std::string_view::npos;
        if (bx != std::string_view::npos && (lt == std::string_view::npos || bx < lt)) {
            return tag_token{bx, tags::boxed_open.size(), {}, false, true};
        }
        if (lt == std::string_view::npos) {
            return std::nullopt;
        }
        bool closing = lt + 1 < raw.size() && raw[lt + 1] == '/';
        std::size_t name_begin = lt + (closing ? 2 : 1);
        for (auto name : tags::all) {
            if (raw.compare(name_begin, name.size(), name) == 0 && name_begin + name.size() < raw.size() &&
                raw[name_begin + name.size()] == '>') {
                return tag_token{lt, name_begin + name.size() + 1 - lt, name, closing, false};
            }
        }
        i = lt + 1;
    }
    return std::nullopt;
}

inline std::optional<span_kind> leaf_kind(std::string_view name)
{
    if (name == tags::think) return span_kind::think_text;
    if (name == tags::macro_call) return span_kind::macro_call;
    if (name == tags::macro_result) return span_kind::macro_result;
    if (name == tags::key_info_save) return span_kind::key_info_save;
    if (name == tags::micro_call) return span_kind::micro_call;
    if (name == tags::micro_response) return span_kind::micro_response;
    return std::nullopt;
}

inline bool think_only(span_kind k)
{
    return k == span_kind::think_text || k == span_kind::macro_call || k == span_kind::macro_result ||
           k == span_kind::key_info_save;
}

/// Position just past the brace closing a `\boxed{` whose body starts at
/// `body_begin`, or npos. Protocol tags inside the body end the search.
inline std::size_t match_brace(std::string_view raw, std::size_t body_begin)
{
    int depth = 1;
    for (std::size_t i = body_begin; i < raw.size(); ++i) {
        char c = raw[i];
        if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) {
                return i + 1;
            }
        } else if (c == '<') {
            auto t = next_token(raw, i, false);
            if (t && t->offset == i) {
                return std::string_view::npos;
            }
        }
    }
    return std::string_view::npos;
}

inline bool balanced_braces(std::string_view s)
{
    int depth = 0;
    for (char c : s) {
        if (c == '{') {
            ++depth;
        } else if (c == '}' && --depth < 0) {
            return false;
        }
    }
    return depth == 0;
}

inline void check_pairing(const std::vector<span>& spans, span_kind call, span_kind response,
                          std::vector<violation>& out)
{
    const span* pending = nullptr;
    for (const auto& s : spans) {
        if (s.kind == call) {
            if (pending != nullptr) {
                out.push_back({pending->range.begin, violation_code::unpaired_call,
                               std::string(to_string(call)) + " has no response"});
            }
            pending = &s;
        } else if (s.kind == response) {
            if (pending == nullptr) {
                out.push_back({s.range.begin, violation_code::orphan_response,
                               std::string(to_string(response)) + " without a preceding call"});
            }
            pending = nullptr;
        }
    }
    if (pending != nullptr) {
        out.push_back({pending->range.begin, violation_code::unpaired_call,
                       std::string(to_string(call)) + " has no response"});
    }
}

inline void check_payloads(const std::vector<span>& spans, std::vector<violation>& out)
{
    for (const auto& s : spans) {
        if (s.kind != span_kind::macro_call && s.kind != span_kind::micro_call &&
            s.kind != span_kind::key_info_save) {
            continue;
        }
        auto call = decode_payload(s.text);
        auto at = s.body().begin;
        if (!call.well_formed) {
            out.push_back({at, violation_code::malformed_payload, call.error});
            continue;
        }
        if (s.kind == span_kind::macro_call &&
            (!call.payload.contains("name") || !call.payload["name"].is_string())) {
            out.push_back({at, violation_code::malformed_payload, "macro call needs a string \"name\""});
        }
        if (s.kind == span_kind::micro_call && !micro_queries(call)) {
            out.push_back({at, violation_code::malformed_payload,
                           "micro call needs \"query\" as a string or list of strings"});
        }
    }
}

} // namespace detail

/// Single pass over `raw`. Never throws on bad input: every problem becomes a
/// violation, and scanning resumes at the next recognizable tag.
[[nodiscard]] inline parse_result parse(std::string_view raw)
{
    enum class phase { think, answer, done };

    std::vector<span> spans;
    std::vector<violation> violations;
    std::string trailer;
    phase ph = phase::think;
    std::size_t boundary = 0;
    std::size_t answer_open_offset = 0;

    auto flush_text = [&](std::size_t b, std::size_t e) {
        if (e <= b) {
            return;
        }
        auto chunk = raw.substr(b, e - b);
        if (ph == phase::done) {
            auto first = std::find_if(chunk.begin(), chunk.end(), [](char c) { return !text::is_space(c); });
            if (first != chunk.end()) {
                auto at = b + static_cast<std::size_t>(first - chunk.begin());
                violations.push_back({at, violation_code::trailing_text, "text after </answer>"});
            }
            trailer += chunk;
            return;
        }
        span s;
        s.kind = ph == phase::think ? span_kind::think_text : span_kind::answer_text;
        s.text = std::string(chunk);
        s.source = span_source::policy;
        s.range = {b, e};
        s.delimited = false;
        spans.push_back(std::move(s));
    };

    std::size_t pos = 0;
    while (pos < raw.size()) {
        auto tok = detail::next_token(raw, pos, ph == phase::answer);
        if (!tok) {
            flush_text(pos, raw.size());
            pos = raw.size();
            break;
        }
        if (ph == phase::done) {
            // Anything after </answer>, tags included, is trailing text.
            flush_text(pos, tok->offset + tok->length);
            pos = tok->offset + tok->length;
            continue;
        }
        flush_text(pos, tok->offset);
        const auto at = tok->offset;

        if (tok->boxed) {
            auto body_begin = at + tok->length;
            auto end = detail::match_brace(raw, body_begin);
            if (end == std::string_view::npos) {
                violations.push_back({at, violation_code::unclosed_boxed, "\\boxed{ is never closed"});
                pos = body_begin;
                continue;
            }
            span s;
            s.kind = span_kind::boxed_value;
            s.text = std::string(raw.substr(body_begin, end - 1 - body_begin));
            s.range = {at, end};
            spans.push_back(std::move(s));
            pos = end;
            continue;
        }

        if (tok->name == tags::answer) {
            if (tok->closing) {
                if (ph == phase::answer) {
                    ph = phase::done;
                } else {
                    violations.push_back({at, violation_code::unexpected_close_tag, "</answer> without <answer>"});
                }
            } else if (ph == phase::think) {
                ph = phase::answer;
                boundary = spans.size();
                answer_open_offset = at;
            } else {
                violations.push_back({at, violation_code::duplicate_answer, "second <answer>"});
            }
            pos = at + tok->length;
            continue;
        }

        auto kind = *detail::leaf_kind(tok->name);
        if (tok->closing) {
            violations.push_back({at, violation_code::unexpected_close_tag,
                                  "</" + std::string(tok->name) + "> without opening tag"});
            pos = at + tok->length;
            continue;
        }

        auto body_begin = at + tok->length;
        auto next = detail::next_token(raw, body_begin, false);
        if (!next || next->name != tok->name || !next->closing) {
            violations.push_back({at, violation_code::unclosed_tag,
                                  "<" + std::string(tok->name) + "> is never closed"});
            pos = next ? next->offset : raw.size();
            continue;
        }

        bool in_think = ph == phase::think;
        if (detail::think_only(kind) != in_think) {
            std::string msg = "<" + std::string(tok->name) + "> inside " + (in_think ? "think" : "answer") +
                              " phase";
            violations.push_back({at, violation_code::phase_violation, std::move(msg)});
        }
        span s;
        s.kind = kind;
        s.text = std::string(raw.substr(body_begin, next->offset - body_begin));
        s.source = source_of(kind);
        s.range = {at, next->offset + next->length};
        spans.push_back(std::move(s));
        pos = next->offset + next->length;
    }

    if (ph == phase::think) {
        violations.push_back({raw.size(), violation_code::missing_answer, "no <answer> phase"});
        boundary = spans.size();
    } else if (ph == phase::answer) {
        violations.push_back({answer_open_offset, violation_code::unclosed_tag, "<answer> is never closed"});
    }

    bool has_think = false;
    bool has_save = false;
    for (std::size_t i = 0; i < boundary && i < spans.size(); ++i) {
        has_think |= spans[i].kind == span_kind::think_text && spans[i].delimited;
        has_save |= spans[i].kind == span_kind::key_info_save;
    }
    if (!has_think) {
        violations.push_back({0, violation_code::missing_think, "no <think> block before the answer phase"});
    }
    if (!has_save) {
        violations.push_back({ph == phase::think ? raw.size() : answer_open_offset,
                              violation_code::missing_key_info_save, "no <key_info_save> in think phase"});
    }

    detail::check_pairing(spans, span_kind::macro_call, span_kind::macro_result, violations);
    detail::check_pairing(spans, span_kind::micro_call, span_kind::micro_response, violations);
    detail::check_payloads(spans, violations);

    if (violations.empty()) {
        return rollout{std::move(spans), boundary, std::move(trailer)};
    }
    std::stable_sort(violations.begin(), violations.end(),
                     [](const violation& a, const violation& b) { return a.offset < b.offset; });
    return parse_report{std::move(violations), std::move(spans)};
}

// ---------------------------------------------------------------------------
// Serialization

/// Inverse of parse on valid rollouts. Throws structural_error when `r`
/// breaks a Rollout invariant.
[[nodiscard]] inline std::string serialize(const rollout& r)
{
    if (r.phase_boundary > r.spans.size()) {
        throw structural_error("phase boundary past the last span");
    }
    if (!text::trim(r.trailer).empty()) {
        throw structural_error("trailer must be whitespace");
    }
    std::string out;
    for (std::size_t i = 0; i < r.spans.size(); ++i) {
        if (i == r.phase_boundary) {
            out += tags::open(tags::answer);
        }
        const auto& s = r.spans[i];
        const auto where = "span " + std::to_string(i);
        bool think_phase = i < r.phase_boundary;
        if (s.source != source_of(s.kind)) {
            throw structural_error(where + " has the wrong source label");
        }
        bool answer_kind = !detail::think_only(s.kind);
        if (answer_kind == think_phase) {
            throw structural_error(where + " is on the wrong side of the phase boundary");
        }
        if ((s.kind == span_kind::answer_text && s.delimited) ||
            (s.kind != span_kind::answer_text && s.kind != span_kind::think_text && !s.delimited)) {
            throw structural_error(where + " has the wrong delimiting");
        }
        if (detail::next_token(s.text, 0, s.kind == span_kind::answer_text)) {
            throw structural_error(where + " text contains a protocol tag");
        }
        if (s.kind == span_kind::boxed_value && !detail::balanced_braces(s.text)) {
            throw structural_error(where + " boxed text has unbalanced braces");
        }
        if (s.range.begin != out.size()) {
            throw structural_error("span " + std::to_string(i) + " range does not match its position");
        }
        out += s.rendered();
        if (s.range.end != out.size()) {
            throw structural_error("span " + std::to_string(i) + " range does not match its length");
        }
    }
    if (r.phase_boundary == r.spans.size()) {
        out += tags::open(tags::answer);
    }
    out += tags::close(tags::answer);
    out += r.trailer;
    return out;
}

/// Appends spans while tracking offsets, so callers never compute ranges by
/// hand. The answer tags are written by begin_answer/end_answer.
class rollout_builder {
  public:
    rollout_builder& think(std::string_view body) { return add(span_kind::think_text, body, true); }
    rollout_builder& think_text(std::string_view body) { return add(span_kind::think_text, body, false); }
    rollout_builder& macro_call(std::string_view body) { return add(span_kind::macro_call, body, true); }
    rollout_builder& macro_result(std::string_view body) { return add(span_kind::macro_result, body, true); }
    rollout_builder& key_info_save(std::string_view body) { return add(span_kind::key_info_save, body, true); }
    rollout_builder& answer_text(std::string_view body) { return add(span_kind::answer_text, body, false); }
    rollout_builder& micro_call(std::string_view body) { return add(span_kind::micro_call, body, true); }
    rollout_builder& micro_response(std::string_view body) { return add(span_kind::micro_response, body, true); }
    rollout_builder& boxed(std::string_view body) { return add(span_kind::boxed_value, body, true); }

    rollout_builder& begin_answer()
    {
        if (in_answer_) {
            throw structural_error("answer phase already open");
        }
        in_answer_ = true;
        r_.phase_boundary = r_.spans.size();
        raw_ += tags::open(tags::answer);
        return *this;
    }

    rollout_builder& end_answer(std::string_view trailer = "\n")
    {
        if (!in_answer_) {
            begin_answer();
        }
        raw_ += tags::close(tags::answer);
        r_.trailer = std::string(trailer);
        raw_ += trailer;
        closed_ = true;
        return *this;
    }

    /// Text written so far, exactly as serialize would produce it once closed.
    [[nodiscard]] const std::string& raw() const noexcept { return raw_; }
    [[nodiscard]] bool in_answer() const noexcept { return in_answer_; }
    [[nodiscard]] const rollout& peek() const noexcept { return r_; }

    [[nodiscard]] rollout build() const
    {
        if (!closed_) {
            throw structural_error("rollout_builder: answer phase not closed");
        }
        return r_;
    }

  private:
    rollout_builder& add(span_kind kind, std::string_view body, bool delimited)
    {
        if (closed_) {
            throw structural_error("rollout_builder: already closed");
        }
        span s;
        s.kind = kind;
        s.text = std::string(body);
        s.source = source_of(kind);
        s.delimited = delimited;
        s.range.begin = raw_.size();
        raw_ += s.rendered();
        s.range.end = raw_.size();
        r_.spans.push_back(std::move(s));
        return *this;
    }

    rollout r_;
    std::string raw_;
    bool in_answer_ = false;
    bool closed_ = false;
};

// ---------------------------------------------------------------------------
// Queries over parsed rollouts

[[nodiscard]] inline std::vector<std::string> extract_boxed(const std::vector<span>& spans)
{
    std::vector<std::string> out;
    for (const auto& s : spans) {
        if (s.kind == span_kind::boxed_value) {
            out.push_back(s.text);
        }
    }
    return out;
}

[[nodiscard]] inline std::vector<std::string> extract_boxed(const rollout& r) { return extract_boxed(r.spans); }
[[nodiscard]] inline std::vector<std::string> extract_boxed(const parse_result& r) { return extract_boxed(spans_of(r)); }

struct token_span {
    std::string token;
    char_range range;
};

/// Test tokenizer: maximal runs of non-whitespace.
[[nodiscard]] inline std::vector<token_span> whitespace_tokenize(std::string_view raw)
{
    std::vector<token_span> out;
    std::size_t i = 0;
    while (i < raw.size()) {
        while (i < raw.size() && text::is_space(raw[i])) {
            ++i;
        }
        std::size_t j = i;
        while (j < raw.size() && !text::is_space(raw[j])) {
            ++j;
        }
        if (j > i) {
            out.push_back({std::string(raw.substr(i, j - i)), {i, j}});
        }
        i = j;
    }
    return out;
}

/// m_t = 0 iff token t overlaps an environment span (tags included).
/// `length` is the size of the raw text the tokenization covers.
[[nodiscard]] inline std::vector<std::uint8_t> token_mask(const std::vector<span>& spans, std::size_t length,
                                                          const std::vector<token_span>& tokenization)
{
    std::vector<char_range> env;
    for (const auto& s : spans) {
        if (s.source == span_source::environment) {
            env.push_back(s.range);
        }
    }
    std::vector<std::uint8_t> mask;
    mask.reserve(tokenization.size());
    for (std::size_t t = 0; t < tokenization.size(); ++t) {
        const auto& r = tokenization[t].range;
        if (r.begin > r.end || r.end > length) {
            throw structural_error("token " + std::to_string(t) + " lies outside the rollout");
        }
        auto it = std::lower_bound(env.begin(), env.end(), r.begin,
                                   [](const char_range& e, std::size_t b) { return e.end <= b; });
        bool hit = it != env.end() && it->overlaps(r);
        mask.push_back(hit ? 0 : 1);
    }
    return mask;
}

[[nodiscard]] inline std::vector<std::uint8_t> token_mask(const rollout& r,
                                                          const std::vector<token_span>& tokenization)
{
    return token_mask(r.spans, serialize(r).size(), tokenization);
}

} // namespace mmr
