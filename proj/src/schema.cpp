#include "sqlpair/schema.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <set>

#include <fmt/format.h>

#include "json_util.hpp"

namespace sqlpair {

namespace {

constexpr std::array<std::pair<DataType, std::string_view>, 8> kTypeNames{{
    {DataType::Text, "text"},
    {DataType::Boolean, "boolean"},
    {DataType::Int, "int"},
    {DataType::Timestamp, "timestamp"},
    {DataType::Float, "float"},
    {DataType::Double, "double"},
    {DataType::Decimal, "decimal"},
    {DataType::Enum, "enum"},
}};

constexpr std::array<std::string_view, 24> kReserved{
    "SELECT", "DISTINCT", "FROM", "WHERE", "AND",   "OR",   "GROUP", "BY",
    "ORDER",  "ASC",      "DESC", "JOIN",  "INNER", "LEFT", "RIGHT", "FULL",
    "ON",     "LIKE",     "IN",   "COUNT", "SUM",   "AVG",  "MIN",   "MAX",
};

}  // namespace

std::string_view to_string(DataType type) {
    for (const auto& [t, name] : kTypeNames)
        if (t == type) return name;
    return "text";
}

std::optional<DataType> parse_data_type(std::string_view name) {
    for (const auto& [t, n] : kTypeNames)
        if (iequals(n, name)) return t;
    return std::nullopt;
}

bool is_numeric(DataType type) {
    return type == DataType::Int || type == DataType::Float || type == DataType::Double ||
           type == DataType::Decimal;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string to_upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    const auto first = static_cast<unsigned char>(s.front());
    if (!(std::isalpha(first) || first == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return std::isalnum(u) || u == '_';
    });
}

bool is_reserved_word(std::string_view s) {
    return std::any_of(kReserved.begin(), kReserved.end(), [&](std::string_view r) { return iequals(r, s); });
}

const Column* Table::find_column(std::string_view column_name) const {
    for (const auto& c : columns)
        if (iequals(c.name, column_name)) return &c;
    return nullptr;
}

std::optional<std::size_t> Table::column_index(std::string_view column_name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (iequals(columns[i].name, column_name)) return i;
    return std::nullopt;
}

const Column* Table::primary_key() const {
    for (const auto& c : columns)
        if (c.is_primary_key) return &c;
    return nullptr;
}

const Table* Schema::find_table(std::string_view table_name) const {
    for (const auto& t : tables)
        if (iequals(t.name, table_name)) return &t;
    return nullptr;
}

std::optional<std::size_t> Schema::table_index(std::string_view table_name) const {
    for (std::size_t i = 0; i < tables.size(); ++i)
        if (iequals(tables[i].name, table_name)) return i;
    return std::nullopt;
}

const Column* Schema::find_column(const ColumnRef& ref) const {
    const auto* t = find_table(ref.table);
    return t ? t->find_column(ref.column) : nullptr;
}

ValidationReport validate_schema(const Schema& schema) {
    ValidationReport report;
    auto add = [&](std::string path, std::string message) {
        report.push_back({std::move(path), std::move(message)});
    };
    if (schema.tables.empty()) {
        add("", "schema has no tables");
        return report;
    }

    std::set<std::string> table_names;
    for (const auto& table : schema.tables) {
        const std::string tpath = table.name.empty() ? std::string("<unnamed>") : table.name;
        if (!is_identifier(table.name))
            add(tpath, fmt::format("invalid table name '{}'", table.name));
        else if (is_reserved_word(table.name))
            add(tpath, fmt::format("table name '{}' is a reserved word", table.name));
        if (!table_names.insert(to_lower(table.name)).second)
            add(tpath, fmt::format("duplicate table name '{}'", table.name));
        if (table.columns.empty()) add(tpath, "table has no columns");

        std::set<std::string> column_names;
        int primary_keys = 0;
        for (const auto& column : table.columns) {
            const std::string cpath = tpath + "." + column.name;
            if (!is_identifier(column.name))
                add(cpath, fmt::format("invalid column name '{}'", column.name));
            else if (is_reserved_word(column.name))
                add(cpath, fmt::format("column name '{}' is a reserved word", column.name));
            if (!column_names.insert(to_lower(column.name)).second)
                add(cpath, fmt::format("duplicate column name '{}'", column.name));
            if (column.is_primary_key) ++primary_keys;

            if (column.data_type == DataType::Enum && column.enum_values.empty())
                add(cpath, "enum column requires a non-empty enum_values list");
            if (column.data_type != DataType::Enum && !column.enum_values.empty())
                add(cpath, "enum_values given for a non-enum column");

            if (column.reference) {
                const auto& ref = *column.reference;
                const auto* target_table = schema.find_table(ref.table);
                const Column* target = target_table ? target_table->find_column(ref.column) : nullptr;
                if (!target) {
                    add(cpath, fmt::format("reference to nonexistent column {}.{}", ref.table, ref.column));
                } else {
                    if (!target->is_primary_key)
                        add(cpath, fmt::format("referenced column {}.{} is not a primary key", ref.table, ref.column));
                    if (target->data_type != column.data_type)
                        add(cpath, fmt::format("type {} does not match referenced column {}.{} of type {}",
                                               to_string(column.data_type), ref.table, ref.column,
                                               to_string(target->data_type)));
                }
            }
        }
        if (primary_keys > 1) add(tpath, "table has more than one primary-key column");
    }
    return report;
}

namespace {

using detail::json;
using detail::ordered_json;

Column column_from_json(const json& j, const std::string& path) {
    detail::require_object(j, path);
    detail::reject_unknown(j, path, {"name", "type", "primary_key", "references", "enum_values", "description"});
    Column c;
    c.name = detail::require_string(j, path, "name");
    const auto type_name = detail::require_string(j, path, "type");
    const auto type = parse_data_type(type_name);
    if (!type) throw DocumentError(path + ".type", "unsupported data type '" + type_name + "'");
    c.data_type = *type;
    if (auto it = j.find("primary_key"); it != j.end()) {
        if (!it->is_boolean()) throw DocumentError(path + ".primary_key", "expected a boolean");
        c.is_primary_key = it->get<bool>();
    }
    if (auto it = j.find("references"); it != j.end()) {
        const auto rpath = path + ".references";
        detail::require_object(*it, rpath);
        detail::reject_unknown(*it, rpath, {"table", "column"});
        c.reference = ColumnRef{detail::require_string(*it, rpath, "table"), detail::require_string(*it, rpath, "column")};
    }
    if (auto it = j.find("enum_values"); it != j.end()) {
        if (!it->is_array()) throw DocumentError(path + ".enum_values", "expected an array");
        for (const auto& v : *it) {
            if (!v.is_string()) throw DocumentError(path + ".enum_values", "expected strings");
            c.enum_values.push_back(v.get<std::string>());
        }
    }
    if (auto it = j.find("description"); it != j.end()) {
        if (!it->is_string()) throw DocumentError(path + ".description", "expected a string");
        c.description = it->get<std::string>();
    }
    return c;
}

}  // namespace

Schema parse_schema(std::string_view document) {
    const json root = detail::parse_json(document, "schema document");
    detail::require_object(root, "");
    detail::reject_unknown(root, "", {"tables"});
    const auto& tables = detail::require_field(root, "", "tables");
    if (!tables.is_array()) throw DocumentError("tables", "expected an array");

    Schema schema;
    for (std::size_t i = 0; i < tables.size(); ++i) {
        const auto& tj = tables[i];
        const auto tpath = detail::index_path("tables", i);
        detail::require_object(tj, tpath);
        detail::reject_unknown(tj, tpath, {"name", "description", "columns"});
        Table t;
        t.name = detail::require_string(tj, tpath, "name");
        if (auto it = tj.find("description"); it != tj.end()) {
            if (!it->is_string()) throw DocumentError(tpath + ".description", "expected a string");
            t.description = it->get<std::string>();
        }
        const auto& cols = detail::require_field(tj, tpath, "columns");
        if (!cols.is_array()) throw DocumentError(tpath + ".columns", "expected an array");
        for (std::size_t k = 0; k < cols.size(); ++k)
            t.columns.push_back(column_from_json(cols[k], detail::index_path(tpath + ".columns", k)));
        schema.tables.push_back(std::move(t));
    }
    return schema;
}

Schema load_schema(std::string_view document) {
    auto schema = parse_schema(document);
    const auto report = validate_schema(schema);
    if (!report.empty()) throw ValidationError(report.front().path, report.front().message);
    schema.version = schema_version(schema);
    return schema;
}

std::string save_schema(const Schema& schema) {
    ordered_json root;
    root["tables"] = ordered_json::array();
    for (const auto& t : schema.tables) {
        ordered_json tj;
        tj["name"] = t.name;
        if (t.description) tj["description"] = *t.description;
        tj["columns"] = ordered_json::array();
        for (const auto& c : t.columns) {
            ordered_json cj;
            cj["name"] = c.name;
            cj["type"] = std::string(to_string(c.data_type));
            if (c.is_primary_key) cj["primary_key"] = true;
            if (c.reference) cj["references"] = ordered_json{{"table", c.reference->table}, {"column", c.reference->column}};
            if (c.data_type == DataType::Enum || !c.enum_values.empty()) cj["enum_values"] = c.enum_values;
            if (c.description) cj["description"] = *c.description;
            tj["columns"].push_back(std::move(cj));
        }
        root["tables"].push_back(std::move(tj));
    }
    return root.dump(2) + "\n";
}

std::string schema_version(const Schema& schema) {
    Schema copy = schema;
    copy.version.clear();
    const auto doc = save_schema(copy);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : doc) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace sqlpair
