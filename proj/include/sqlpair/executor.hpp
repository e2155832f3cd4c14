#pragma once

#include <string>
#include <vector>

#include "sqlpair/ast.hpp"
#include "sqlpair/database.hpp"
#include "sqlpair/value.hpp"

namespace sqlpair {

// Comparison compatibility classes. Text literals compare with text, enum and timestamp columns.
enum class TypeClass { Numeric, Text, Timestamp, Boolean };

TypeClass type_class(DataType type);
bool comparable(TypeClass a, TypeClass b);

struct ResultTable {
    std::vector<std::string> columns;
    std::vector<std::vector<Value>> rows;
    bool operator==(const ResultTable&) const = default;
};

// Evaluates a parsed query over the sandbox.
//
// Semantics for the parts plain SQL leaves open:
//  * A query is aggregated when it has GROUP BY or an aggregate in SELECT. Bare columns
//    in an aggregated query take the group's first row value.
//  * An aggregate anywhere else (WHERE, ON, GROUP BY, ORDER BY of a plain query) is the
//    scalar aggregate of that column over its whole base table.
//  * Groups keep first-appearance order; ORDER BY is stable with NULLs first and the
//    direction applies to the last key; DISTINCT keeps first occurrences.
//  * LIKE compares the text form of both sides, case-insensitively.
//  * A quoted literal whose content is a number compares numerically with numeric operands.
// Throws ExecutionError for unknown tables/columns, out-of-scope tables, type mismatches,
// SUM/AVG over non-numeric columns and joins whose intermediate result exceeds kMaxJoinCells.
inline constexpr std::size_t kMaxJoinCells = 4'000'000;

ResultTable execute_query(const SandboxDatabase& db, const SqlQuery& query);
ResultTable execute_query(const SandboxDatabase& db, const AstNode& query);

bool like_match(std::string_view text, std::string_view pattern);

// Value of a literal node: integers without '.'/exponent, doubles otherwise, unquoted strings.
Value literal_value(const AstNode& literal);

std::string result_to_json(const ResultTable& table);

}  // namespace sqlpair
