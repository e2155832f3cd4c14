#pragma once

// Composition features of queries, Simpson's diversity, and Flesch reading ease.

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sqlpair/ast.hpp"

namespace sqlpair {

struct QueryFeatures {
    std::size_t clause_count = 0;  // SELECT, FROM, WHERE, GROUP BY, ORDER BY present, plus one per JOIN
    std::size_t table_count = 0;   // distinct tables in FROM and JOIN
    std::size_t column_count = 0;  // distinct column references, * excluded
    std::size_t value_count = 0;   // literal operands
    std::map<std::string, std::size_t> keywords;
    std::string structure_signature;  // query text with tables as T, columns as C, literals as ?
    bool operator==(const QueryFeatures&) const = default;
};

QueryFeatures extract_features(const SqlQuery& query);

// Same result as calling extract_features per query; the OpenMP version splits by row.
std::vector<QueryFeatures> extract_features_batch(std::span<const SqlQuery> queries);
std::vector<QueryFeatures> extract_features_batch_serial(std::span<const SqlQuery> queries);

// 1 - sum p_i^2. Throws AnalysisError on no categories or a zero total.
double simpson_index(const std::map<std::string, std::size_t>& counts);

struct Readability {
    std::size_t words = 0;
    std::size_t sentences = 0;
    std::size_t syllables = 0;
    double raw = 0;    // 206.835 - 1.015 words/sentences - 84.6 syllables/words
    double score = 0;  // raw clamped to [0, 100]
};

// Vowel groups (a e i o u y) per word. A final e after a consonant is silent when the word
// has more than one group, except in a consonant + "le" ending. Every word has at least one.
std::size_t count_syllables(std::string_view word);

// Words are runs of letters, digits and apostrophes; sentences are runs of . ! ? (at least 1).
// Throws AnalysisError when the text has no words.
Readability flesch_reading_ease(std::string_view text);

struct DimensionStats {
    std::map<std::string, std::size_t> histogram;  // feature value -> number of queries
    double simpson = 0;
    double mean = 0;
};

struct DatasetRow {
    std::string sql;
    std::string question;
};

struct DistributionReport {
    std::map<std::string, DimensionStats> dimensions;  // clauses, tables, columns, values
    std::map<std::string, std::size_t> keywords;
    std::vector<double> readability_scores;  // clamped, one per row with a question
    std::vector<double> readability_raw;
    double readability_mean = 0;
    std::size_t analyzed = 0;
    std::vector<std::pair<std::size_t, std::string>> skipped;  // row index, reason
};

// Throws AnalysisError("empty dataset") when no row can be analyzed.
DistributionReport analyze_dataset(const std::vector<DatasetRow>& rows);

// {"clauses":{"histogram":{...},"simpson":x,"mean":y}, ..., "keywords":{...},
//  "readability":{"scores":[...],"raw":[...],"mean":m}, "analyzed":n, "skipped":[{"row":i,"error":"..."}]}
std::string report_to_json(const DistributionReport& report);

}  // namespace sqlpair
