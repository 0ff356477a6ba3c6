#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "rollout_grammar.hpp"
#include "text.hpp"

namespace mmr {

struct passage {
    std::string id; // "{doc_index}-{chunk_index}"
    std::string title;
    std::string text;
    std::size_t word_count = 0;
};

struct corpus {
    std::vector<passage> passages;
    std::size_t chunk_size_words = 100;

    [[nodiscard]] std::size_t size() const noexcept { return passages.size(); }
};

struct document {
    std::string title;
    std::string body;
};

/// Splits each body at whitespace into consecutive chunks of at most
/// `chunk_size_words` words. Chunks never span two documents.
[[nodiscard]] inline corpus ingest(const std::vector<document>& docs, std::size_t chunk_size_words)
{
    if (chunk_size_words < 1) {
        throw config_error("chunk_size_words must be at least 1");
    }
    corpus c;
    c.chunk_size_words = chunk_size_words;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        auto words = text::split_whitespace(docs[d].body);
        for (std::size_t start = 0, chunk = 0; start < words.size(); start += chunk_size_words, ++chunk) {
            auto stop = std::min(words.size(), start + chunk_size_words);
            std::vector<std::string> piece(words.begin() + static_cast<std::ptrdiff_t>(start),
                                           words.begin() + static_cast<std::ptrdiff_t>(stop));
            c.passages.push_back(
                {std::to_string(d) + "-" + std::to_string(chunk), docs[d].title, text::join(piece, " "), piece.size()});
        }
    }
    return c;
}

/// Line-delimited documents, one `{"title": ..., "text": ...}` per line.
[[nodiscard]] inline std::vector<document> read_documents(std::istream& is)
{
    std::vector<document> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (text::trim(line).empty()) {
            continue;
        }
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("text") || !j["text"].is_string()) {
            throw io_error("corpus line " + std::to_string(lineno) + ": expected {\"title\", \"text\"}");
        }
        docs.push_back({j.value("title", std::string()), j["text"].get<std::string>()});
    }
    return docs;
}

[[nodiscard]] inline std::vector<document> read_documents(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open corpus " + path);
    }
    return read_documents(in);
}

/// Lowercased alphanumeric runs; the term vocabulary of the lexical scorer.
[[nodiscard]] inline std::vector<std::string> lexical_terms(std::string_view s)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        auto uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc) != 0) {
            cur.push_back(static_cast<char>(std::tolower(uc)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

struct search_hit {
    std::size_t index = 0; // position in corpus.passages
    double score = 0.0;
};

struct search_result {
    std::vector<search_hit> hits;
    bool empty_query = false;
};

/// Orders hits by descending score, then ascending passage id.
struct hit_order {
    const corpus* c;
    bool operator()(const search_hit& a, const search_hit& b) const
    {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return c->passages[a.index].id < c->passages[b.index].id;
    }
};

enum class scorer_kind { lexical, pluggable };

struct retriever_config {
    std::size_t top_k = 5;
    scorer_kind scorer = scorer_kind::lexical;
};

/// Pluggable top-k retriever over one corpus.
class retriever {
  public:
    virtual ~retriever() = default;
    [[nodiscard]] virtual search_result search(std::string_view query, std::size_t k) const = 0;
    [[nodiscard]] virtual const corpus& documents() const = 0;
};

struct bm25_params {
    double k1 = 0.9;
    double b = 0.4;
};

/// Okapi BM25 with the non-negative idf ln(1 + (N - df + 0.5) / (df + 0.5)).
/// A query is scored as the sum, over its distinct terms in lexicographic
/// order, of qtf * idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avglen)).
/// Passages sharing no term with the query score 0 and still rank (by id).
class bm25_index final : public retriever {
  public:
    struct posting {
        std::size_t doc;
        std::size_t tf;
    };

    explicit bm25_index(corpus c, bm25_params p = {}) : corpus_(std::move(c)), params_(p)
    {
        lengths_.reserve(corpus_.size());
        std::size_t total = 0;
        for (std::size_t d = 0; d < corpus_.size(); ++d) {
            auto terms = lexical_terms(corpus_.passages[d].text);
            lengths_.push_back(terms.size());
            total += terms.size();
            std::map<std::string, std::size_t> tf;
            for (auto& t : terms) {
                ++tf[t];
            }
            for (auto& [t, n] : tf) {
                postings_[t].push_back({d, n});
            }
        }
        avg_length_ = corpus_.size() == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(corpus_.size());
    }

    [[nodiscard]] double idf(std::size_t df) const
    {
        auto n = static_cast<double>(corpus_.size());
        auto f = static_cast<double>(df);
        return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
    }

    [[nodiscard]] double term_weight(std::size_t tf, std::size_t length) const
    {
        auto f = static_cast<double>(tf);
        double norm = avg_length_ > 0.0 ? static_cast<double>(length) / avg_length_ : 0.0;
        return f * (params_.k1 + 1.0) / (f + params_.k1 * (1.0 - params_.b + params_.b * norm));
    }

    [[nodiscard]] search_result search(std::string_view query, std::size_t k) const override
    {
        if (k < 1) {
            throw config_error("top_k must be at least 1");
        }
        search_result out;
        auto terms = lexical_terms(query);
        if (terms.empty()) {
            out.empty_query = true;
            return out;
        }
        std::map<std::string, std::size_t> qtf;
        for (auto& t : terms) {
            ++qtf[t];
        }
        std::vector<double> scores(corpus_.size(), 0.0);
        for (const auto& [t, n] : qtf) {
            auto it = postings_.find(t);
            if (it == postings_.end()) {
                continue;
            }
            double w = static_cast<double>(n) * idf(it->second.size());
            for (const auto& p : it->second) {
                scores[p.doc] += w * term_weight(p.tf, lengths_[p.doc]);
            }
        }
        std::vector<search_hit> hits;
        hits.reserve(corpus_.size());
        for (std::size_t d = 0; d < corpus_.size(); ++d) {
            hits.push_back({d, scores[d]});
        }
        auto take = std::min(k, hits.size());
        std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                          hit_order{&corpus_});
        hits.resize(take);
        out.hits = std::move(hits);
        return out;
    }

    [[nodiscard]] const corpus& documents() const override { return corpus_; }
    [[nodiscard]] const bm25_params& params() const noexcept { return params_; }
    [[nodiscard]] double average_length() const noexcept { return avg_length_; }
    [[nodiscard]] const std::vector<std::size_t>& lengths() const noexcept { return lengths_; }

    /// Versioned text dump; identical corpora give byte-identical dumps.
    /// Floating values are written as hex floats so they reload exactly.
    void dump(std::ostream& os) const
    {
        os << "mmr-bm25-index v1\n";
        os << "params " << hex(params_.k1) << ' ' << hex(params_.b) << '\n';
        os << "chunk_size " << corpus_.chunk_size_words << '\n';
        os << "passages " << corpus_.size() << '\n';
        for (std::size_t d = 0; d < corpus_.size(); ++d) {
            const auto& p = corpus_.passages[d];
            nlohmann::json rec = {{"id", p.id}, {"title", p.title}, {"text", p.text}, {"length", lengths_[d]}};
            os << rec.dump() << '\n';
        }
        os << "terms " << postings_.size() << '\n';
        for (const auto& [t, list] : postings_) {
            os << t << ' ' << list.size();
            for (const auto& p : list) {
                os << ' ' << p.doc << ':' << p.tf;
            }
            os << '\n';
        }
    }

    /// Rebuilds an index from dump(). The postings section is checked
    /// against the reindexed passages.
    [[nodiscard]] static bm25_index load(std::istream& is)
    {
        std::string line;
        if (!std::getline(is, line) || line != "mmr-bm25-index v1") {
            throw io_error("not an mmr-bm25-index v1 dump");
        }
        bm25_params p;
        std::string tag, k1s, bs;
        std::size_t chunk = 0, n = 0;
        {
            std::getline(is, line);
            std::istringstream ls(line);
            ls >> tag >> k1s >> bs;
            p.k1 = std::strtod(k1s.c_str(), nullptr);
            p.b = std::strtod(bs.c_str(), nullptr);
        }
        {
            std::getline(is, line);
            std::istringstream ls(line);
            ls >> tag >> chunk;
        }
        {
            std::getline(is, line);
            std::istringstream ls(line);
            ls >> tag >> n;
        }
        corpus c;
        c.chunk_size_words = chunk;
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::getline(is, line)) {
                throw io_error("truncated index dump");
            }
            auto j = nlohmann::json::parse(line);
            auto txt = j["text"].get<std::string>();
            auto wc = text::count_whitespace_tokens(txt);
            c.passages.push_back({j["id"].get<std::string>(), j["title"].get<std::string>(), std::move(txt), wc});
        }
        bm25_index idx(std::move(c), p);
        std::ostringstream again;
        idx.dump(again);
        std::ostringstream rest;
        rest << is.rdbuf();
        auto head_end = again.str().find("terms ");
        if (head_end == std::string::npos || again.str().substr(head_end) != rest.str()) {
            throw io_error("index dump postings do not match its passages");
        }
        return idx;
    }

  private:
    static std::string hex(double v)
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%a", v);
        return buf;
    }

    corpus corpus_;
    bm25_params params_;
    std::vector<std::size_t> lengths_;
    double avg_length_ = 0.0;
    std::map<std::string, std::vector<posting>> postings_;
};

// ---------------------------------------------------------------------------
// Tool results

namespace detail {
inline std::string escape_tag_chars(std::string s)
{
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '<') {
            out += "\\u003c";
        } else {
            out.push_back(c);
        }
    }
    return out;
}

inline std::string row_value(const ordered_json& v)
{
    if (v.is_boolean()) {
        return v.get<bool>() ? "True" : "False";
    }
    if (v.is_null()) {
        return "None";
    }
    if (v.is_string()) {
        return escape_tag_chars(v.dump());
    }
    if (v.is_structured()) {
        return escape_tag_chars(format_inline(v));
    }
    return v.dump();
}

inline std::string row(const ordered_json& obj)
{
    std::string out;
    bool first = true;
    for (const auto& [k, v] : obj.items()) {
        if (!first) {
            out += ", ";
        }
        first = false;
        out += escape_tag_chars(ordered_json(k).dump()) + ": " + row_value(v);
    }
    return out;
}
} // namespace detail

/// Renders a tool result the way result rows are shown to the policy:
/// objects as `"k": v` pairs joined by ", ", records of a list joined by
/// "; ", booleans as True/False. No output ever contains '<'.
[[nodiscard]] inline std::string render_result_rows(const ordered_json& result)
{
    if (result.is_array()) {
        std::string out;
        for (std::size_t i = 0; i < result.size(); ++i) {
            if (i != 0) {
                out += "; ";
            }
            out += result[i].is_object() ? detail::row(result[i]) : detail::row_value(result[i]);
        }
        return out;
    }
    if (result.is_object()) {
        return detail::row(result);
    }
    return detail::row_value(result);
}

/// Scripted tool responses keyed on (tool name, argument object).
class tool_table {
  public:
    void add(std::string tool, const nlohmann::json& args, ordered_json result)
    {
        entries_.push_back({std::move(tool), args, std::move(result)});
    }

    [[nodiscard]] bool knows(std::string_view tool) const
    {
        return std::any_of(entries_.begin(), entries_.end(), [&](const entry& e) { return e.tool == tool; });
    }

    [[nodiscard]] const ordered_json* find(std::string_view tool, const nlohmann::json& args) const
    {
        for (const auto& e : entries_) {
            if (e.tool == tool && e.args == args) {
                return &e.result;
            }
        }
        return nullptr;
    }

    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }

    /// Line-delimited `{"tool": ..., "args": {...}, "result": ...}` records.
    [[nodiscard]] static tool_table read(std::istream& is)
    {
        tool_table t;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (text::trim(line).empty()) {
                continue;
            }
            auto j = ordered_json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("tool") || !j.contains("result")) {
                throw io_error("tool table line " + std::to_string(lineno) + ": expected {tool, args, result}");
            }
            nlohmann::json args = j.contains("args") ? nlohmann::json::parse(j["args"].dump()) : nlohmann::json::object();
            t.add(j["tool"].get<std::string>(), args, j["result"]);
        }
        return t;
    }

    [[nodiscard]] static tool_table read(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw io_error("cannot open tool table " + path);
        }
        return read(in);
    }

  private:
    struct entry {
        std::string tool;
        nlohmann::json args;
        ordered_json result;
    };
    std::vector<entry> entries_;
};

/// Per-rollout environment: the shared retriever and tool table plus a log
/// of every call executed so far.
struct env_state {
    const retriever* search = nullptr;
    const tool_table* tools = nullptr;
    std::size_t top_k = 5;
    std::vector<std::string> call_log;
};

[[nodiscard]] inline std::string error_payload(std::string_view message)
{
    return render_result_rows(ordered_json{{"error", std::string(message)}});
}

/// Runs one macro call. "search" goes to the retriever; other names go to
/// the tool table. Failures come back as an error payload, never an
/// exception, so the rollout continues.
[[nodiscard]] inline std::string execute_macro_call(const structured_call& call, env_state& env)
{
    if (!call.well_formed || !call.payload.contains("name") || !call.payload["name"].is_string()) {
        env.call_log.emplace_back("<malformed>");
        return error_payload("malformed macro call");
    }
    auto name = call.payload["name"].get<std::string>();
    env.call_log.push_back(name);

    if (name == "search" && env.search != nullptr) {
        if (!call.payload.contains("query") || !call.payload["query"].is_string()) {
            return error_payload("search needs a string \"query\"");
        }
        auto res = env.search->search(call.payload["query"].get<std::string>(), env.top_k);
        if (res.empty_query) {
            return error_payload("empty query");
        }
        ordered_json rows = ordered_json::array();
        const auto& docs = env.search->documents();
        for (const auto& h : res.hits) {
            const auto& p = docs.passages[h.index];
            rows.push_back({{"id", p.id}, {"title", p.title}, {"text", p.text}});
        }
        return render_result_rows(rows);
    }

    if (env.tools == nullptr || !env.tools->knows(name)) {
        return error_payload("unknown tool '" + name + "'");
    }
    auto args = nlohmann::json::parse(call.payload.dump());
    args.erase("name");
    const auto* result = env.tools->find(name, args);
    if (result == nullptr) {
        return error_payload("no result for " + name + " with arguments " + args.dump());
    }
    return render_result_rows(*result);
}

} // namespace mmr
