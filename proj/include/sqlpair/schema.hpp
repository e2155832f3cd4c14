#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sqlpair {

enum class DataType { Text, Boolean, Int, Timestamp, Float, Double, Decimal, Enum };

std::string_view to_string(DataType type);
std::optional<DataType> parse_data_type(std::string_view name);
bool is_numeric(DataType type);

struct ColumnRef {
    std::string table;
    std::string column;
    bool operator==(const ColumnRef&) const = default;
};

struct Column {
    std::string name;
    DataType data_type = DataType::Text;
    bool is_primary_key = false;
    std::optional<ColumnRef> reference;
    std::vector<std::string> enum_values;
    std::optional<std::string> description;
    bool operator==(const Column&) const = default;
};

struct Table {
    std::string name;
    std::optional<std::string> description;
    std::vector<Column> columns;

    const Column* find_column(std::string_view column_name) const;
    std::optional<std::size_t> column_index(std::string_view column_name) const;
    const Column* primary_key() const;
    bool operator==(const Table&) const = default;
};

// Immutable once built; share by const reference or shared_ptr<const Schema>.
struct Schema {
    std::vector<Table> tables;
    std::string version;

    const Table* find_table(std::string_view table_name) const;
    std::optional<std::size_t> table_index(std::string_view table_name) const;
    const Column* find_column(const ColumnRef& ref) const;
    bool operator==(const Schema&) const = default;
};

struct Violation {
    std::string path;
    std::string message;
    bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

// Case-insensitive identifier comparison (identifiers are ASCII).
bool iequals(std::string_view a, std::string_view b);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
bool is_identifier(std::string_view s);
bool is_reserved_word(std::string_view s);

ValidationReport validate_schema(const Schema& schema);

// Structure only: throws DocumentError, leaves the invariants to validate_schema.
Schema parse_schema(std::string_view document);
// Throws DocumentError for malformed documents, ValidationError for invariant violations.
Schema load_schema(std::string_view document);
std::string save_schema(const Schema& schema);

// Version tag derived from the canonical document.
std::string schema_version(const Schema& schema);

}  // namespace sqlpair
