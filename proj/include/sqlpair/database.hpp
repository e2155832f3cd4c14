#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sqlpair/rng.hpp"
#include "sqlpair/schema.hpp"
#include "sqlpair/value.hpp"

namespace sqlpair {

// One row; values are positionally aligned with Table::columns.
using Record = std::vector<Value>;

struct TableRows {
    std::vector<Record> records;
};

// Synthetic records for every table of a schema. Immutable after population.
struct SandboxDatabase {
    Schema schema;
    std::vector<TableRows> tables;  // aligned with schema.tables

    const TableRows& rows(std::string_view table) const;
    // Every stored value of one column, in row order.
    std::vector<Value> column_values(std::string_view table, std::string_view column) const;
};

struct PopulationConfig {
    std::map<std::string, std::size_t> record_counts;  // table name -> rows
    std::size_t default_count = 0;                     // used for tables missing from record_counts
    double reuse_probability = 0.3;
    std::map<std::string, double> column_reuse;  // "Table.column" -> override
    std::uint64_t rng_seed = 0;

    std::size_t count_for(std::string_view table) const;
    double reuse_for(std::string_view table, std::string_view column) const;
};

// Inclusive bounds of fresh draws.
inline constexpr std::int64_t kIntMin = 0;
inline constexpr std::int64_t kIntMax = 10000;
inline constexpr double kRealMax = 10000.0;
inline constexpr std::int64_t kTimestampBegin = 946684800;  // 2000-01-01T00:00:00Z
inline constexpr std::int64_t kTimestampEnd = 1893456000;   // 2030-01-01T00:00:00Z, exclusive

std::string format_timestamp(std::int64_t unix_seconds);
std::string random_uuid(Rng& rng);

// A new value for `column`, ignoring repetition.
Value fresh_value(const Column& column, Rng& rng);

// One value for `column`. For foreign-key columns `existing` holds the referenced
// column's values and the draw always comes from it. Otherwise `existing` holds this
// column's values so far and, when non-empty, is reused with `reuse_probability`.
Value generate_value(const Column& column, std::span<const Value> existing, Rng& rng, double reuse_probability);

// Tables in foreign-key dependency order (referenced tables first). Throws PopulationError on cycles.
std::vector<std::size_t> dependency_order(const Schema& schema);

SandboxDatabase populate(const Schema& schema, const PopulationConfig& config);

// Checks every SandboxDatabase invariant; returns the list of problems (empty = valid).
std::vector<std::string> check_database(const SandboxDatabase& db);

// Records document: {"<Table>": [ {"<col>": value, ...}, ... ]}
std::string save_records(const SandboxDatabase& db);
SandboxDatabase load_records(const Schema& schema, std::string_view document);

}  // namespace sqlpair
