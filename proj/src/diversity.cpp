#include "sqlpair/diversity.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <fmt/format.h>

#include "json_util.hpp"
#include "sqlpair/error.hpp"
#include "sqlpair/schema.hpp"

namespace sqlpair {

namespace {

struct Collector {
    QueryFeatures f;
    std::set<std::string> tables;
    std::set<std::string> columns;

    void keyword(const std::string& k) { ++f.keywords[k]; }

    void visit(const AstNode& n) {
        switch (n.kind) {
            case NodeKind::Select:
                ++f.clause_count;
                keyword("SELECT");
                break;
            case NodeKind::From:
                ++f.clause_count;
                keyword("FROM");
                break;
            case NodeKind::Where:
                ++f.clause_count;
                keyword("WHERE");
                break;
            case NodeKind::GroupBy:
                ++f.clause_count;
                keyword("GROUP BY");
                break;
            case NodeKind::OrderBy:
                ++f.clause_count;
                keyword("ORDER BY");
                break;
            case NodeKind::Join:
                ++f.clause_count;
                keyword(n.children.at(0).lexeme + " JOIN");
                break;
            case NodeKind::Distinct:
                keyword("DISTINCT");
                break;
            case NodeKind::And:
            case NodeKind::Or:
                // n-ary node: one keyword per connective
                for (std::size_t i = 1; i < n.children.size(); ++i) keyword(n.kind == NodeKind::And ? "AND" : "OR");
                break;
            case NodeKind::Comparison:
            case NodeKind::Aggregate:
            case NodeKind::SortDir:
                keyword(n.lexeme);
                break;
            case NodeKind::TableRef:
                tables.insert(to_lower(n.lexeme));
                break;
            case NodeKind::ColumnRef:
                if (n.lexeme != "*") columns.insert(to_lower(n.lexeme));
                break;
            case NodeKind::Literal:
                ++f.value_count;
                break;
            default:
                break;
        }
        for (const auto& c : n.children) visit(c);
    }
};

// Anonymized copy of the tree, serialized with the regular writer.
AstNode anonymize(const AstNode& n) {
    AstNode out(n.kind, n.lexeme);
    switch (n.kind) {
        case NodeKind::TableRef:
            out.lexeme = "T";
            break;
        case NodeKind::ColumnRef:
            if (n.lexeme != "*") out.lexeme = "T.C";
            break;
        case NodeKind::Literal:
            out.lexeme = "0";
            break;
        default:
            break;
    }
    for (const auto& c : n.children) out.children.push_back(anonymize(c));
    return out;
}

bool is_vowel(char c) { return std::string_view("aeiouy").find(c) != std::string_view::npos; }

}  // namespace

QueryFeatures extract_features(const SqlQuery& query) {
    Collector c;
    c.visit(query.ast);
    c.f.table_count = c.tables.size();
    c.f.column_count = c.columns.size();
    c.f.structure_signature = serialize(anonymize(query.ast)).text;
    return std::move(c.f);
}

std::vector<QueryFeatures> extract_features_batch_serial(std::span<const SqlQuery> queries) {
    std::vector<QueryFeatures> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(extract_features(q));
    return out;
}

std::vector<QueryFeatures> extract_features_batch(std::span<const SqlQuery> queries) {
    std::vector<QueryFeatures> out(queries.size());
    const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = extract_features(queries[static_cast<std::size_t>(i)]);
    return out;
}

double simpson_index(const std::map<std::string, std::size_t>& counts) {
    if (counts.empty()) throw AnalysisError("simpson index of no categories");
    long double total = 0;
    for (const auto& [k, v] : counts) total += static_cast<long double>(v);
    if (total == 0) throw AnalysisError("simpson index of zero observations");
    long double sum_sq = 0;
    for (const auto& [k, v] : counts) {
        const long double p = static_cast<long double>(v) / total;
        sum_sq += p * p;
    }
    return static_cast<double>(1.0L - sum_sq);
}

std::size_t count_syllables(std::string_view raw) {
    std::string w;
    for (char c : raw)
        if (std::isalpha(static_cast<unsigned char>(c))) w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (w.empty()) return 1;
    std::size_t groups = 0;
    bool prev = false;
    for (char c : w) {
        const bool v = is_vowel(c);
        if (v && !prev) ++groups;
        prev = v;
    }
    const bool consonant_le = w.size() >= 3 && w.ends_with("le") && !is_vowel(w[w.size() - 3]);
    if (groups > 1 && w.back() == 'e' && !is_vowel(w[w.size() - 2]) && !consonant_le) --groups;
    return std::max<std::size_t>(groups, 1);
}

Readability flesch_reading_ease(std::string_view text) {
    Readability r;
    std::size_t i = 0;
    bool in_terminal = false;
    while (i < text.size()) {
        const char c = text[i];
        if (std::isalnum(static_cast<unsigned char>(c))) {
            const auto b = i;
            while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '\'')) ++i;
            ++r.words;
            r.syllables += count_syllables(text.substr(b, i - b));
            in_terminal = false;
            continue;
        }
        const bool terminal = c == '.' || c == '!' || c == '?';
        if (terminal && !in_terminal) ++r.sentences;
        in_terminal = terminal;
        ++i;
    }
    if (r.words == 0) throw AnalysisError("readability of text without words");
    r.sentences = std::max<std::size_t>(r.sentences, 1);
    const auto w = static_cast<double>(r.words);
    r.raw = 206.835 - 1.015 * (w / static_cast<double>(r.sentences)) - 84.6 * (static_cast<double>(r.syllables) / w);
    r.score = std::clamp(r.raw, 0.0, 100.0);
    return r;
}

DistributionReport analyze_dataset(const std::vector<DatasetRow>& rows) {
    DistributionReport report;
    std::vector<SqlQuery> parsed;
    std::vector<std::size_t> origin;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        try {
            parsed.push_back(parse_sql(rows[i].sql));
            origin.push_back(i);
        } catch (const SqlSyntaxError& e) {
            report.skipped.emplace_back(i, e.what());
        }
    }
    if (parsed.empty()) throw AnalysisError("empty dataset");
    const auto features = extract_features_batch(parsed);

    const auto add = [&](const char* dim, std::size_t value) {
        ++report.dimensions[dim].histogram[std::to_string(value)];
        report.dimensions[dim].mean += static_cast<double>(value);
    };
    for (const auto& f : features) {
        add("clauses", f.clause_count);
        add("tables", f.table_count);
        add("columns", f.column_count);
        add("values", f.value_count);
        for (const auto& [k, v] : f.keywords) report.keywords[k] += v;
    }
    for (auto& [name, d] : report.dimensions) {
        d.mean /= static_cast<double>(features.size());
        d.simpson = simpson_index(d.histogram);
    }
    double sum = 0;
    for (auto i : origin) {
        const auto& q = rows[i].question;
        if (std::none_of(q.begin(), q.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); })) continue;
        const auto r = flesch_reading_ease(q);
        report.readability_scores.push_back(r.score);
        report.readability_raw.push_back(r.raw);
        sum += r.score;
    }
    if (!report.readability_scores.empty()) report.readability_mean = sum / static_cast<double>(report.readability_scores.size());
    report.analyzed = parsed.size();
    return report;
}

std::string report_to_json(const DistributionReport& report) {
    detail::json j = detail::json::object();
    for (const auto& [name, d] : report.dimensions)
        j[name] = {{"histogram", d.histogram}, {"simpson", d.simpson}, {"mean", d.mean}};
    j["keywords"] = report.keywords;
    j["readability"] = {{"scores", report.readability_scores},
                        {"raw", report.readability_raw},
                        {"mean", report.readability_mean}};
    j["analyzed"] = report.analyzed;
    detail::json skipped = detail::json::array();
    for (const auto& [row, error] : report.skipped) skipped.push_back({{"row", row}, {"error", error}});
    j["skipped"] = skipped;
    return j.dump();
}

}  // namespace sqlpair
