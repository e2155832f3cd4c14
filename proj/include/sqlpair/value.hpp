#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <variant>

#include "sqlpair/schema.hpp"

namespace sqlpair {

// A cell value. monostate is SQL NULL; it only appears in query results
// (outer-join padding, aggregates over empty groups), never in stored records.
using Value = std::variant<std::monostate, bool, std::int64_t, double, std::string>;

inline bool is_null(const Value& v) { return std::holds_alternative<std::monostate>(v); }
bool is_number(const Value& v);
double as_double(const Value& v);

// True when `v` has the storage representation required by `type`.
bool value_matches_type(const Value& v, const Column& column);

// Text form used by LIKE, grouping keys and display ("true"/"false", shortest round-trip numbers).
std::string value_to_text(const Value& v);

// Total order used for ORDER BY, MIN/MAX and DISTINCT: NULL < booleans < numbers < strings.
std::strong_ordering compare_values(const Value& a, const Value& b);
bool values_equal(const Value& a, const Value& b);

// Shortest decimal representation that parses back to the same double.
std::string format_double(double d);

bool is_iso_timestamp(std::string_view s);

}  // namespace sqlpair
