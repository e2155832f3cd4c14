#include "sqlpair/database.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "json_util.hpp"

namespace sqlpair {

namespace {

constexpr std::array<std::string_view, 24> kFirstNames{
    "Alice", "Bruno", "Chen",  "Dana",   "Emeka", "Fatima", "Gustav", "Hana",
    "Ivan",  "Jamal", "Keiko", "Lucia",  "Mateo", "Nadia",  "Omar",   "Priya",
    "Quinn", "Rosa",  "Sven",  "Tamara", "Uma",   "Victor", "Wen",    "Yusuf",
};
constexpr std::array<std::string_view, 20> kLastNames{
    "Johnson", "Okafor", "Garcia", "Nakamura", "Schmidt", "Rossi",  "Kowalski",
    "Haddad",  "Silva",  "Larsen", "Ivanova",  "Dubois",  "Mensah", "Patel",
    "Kim",     "Novak",  "Moreau", "Tanaka",   "Fischer", "Lopez",
};
constexpr std::array<std::string_view, 20> kCities{
    "Lisbon", "Nairobi", "Osaka",    "Toronto", "Lyon",   "Austin",  "Krakow",
    "Recife", "Hanoi",   "Adelaide", "Bergen",  "Porto",  "Seville", "Tbilisi",
    "Quito",  "Dakar",   "Leeds",    "Graz",    "Cusco",  "Malmo",
};
constexpr std::array<std::string_view, 5> kStatuses{"active", "inactive", "pending", "suspended", "closed"};

bool lexicon_match(std::string_view column, std::string_view key) {
    const auto lower = to_lower(column);
    if (lower == key) return true;
    const std::string suffix = "_" + std::string(key);
    return lower.size() > suffix.size() && lower.compare(lower.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string fresh_text(const Column& column, Rng& rng) {
    if (lexicon_match(column.name, "name")) {
        return fmt::format("{} {}", kFirstNames[rng.index(kFirstNames.size())], kLastNames[rng.index(kLastNames.size())]);
    }
    if (lexicon_match(column.name, "email")) {
        const auto first = to_lower(kFirstNames[rng.index(kFirstNames.size())]);
        const auto last = to_lower(kLastNames[rng.index(kLastNames.size())]);
        return fmt::format("{}.{}{}@example.com", first, last, rng.uniform_int(1, 999));
    }
    if (lexicon_match(column.name, "city")) return std::string(kCities[rng.index(kCities.size())]);
    if (lexicon_match(column.name, "status")) return std::string(kStatuses[rng.index(kStatuses.size())]);
    return column.name + "_" + random_uuid(rng);
}

std::string value_key(const Value& v) { return std::to_string(v.index()) + ":" + value_to_text(v); }

// Number of distinct fresh values a column type can produce, or 0 for "effectively unbounded".
std::size_t domain_size(const Column& column) {
    switch (column.data_type) {
        case DataType::Boolean:
            return 2;
        case DataType::Enum:
            return column.enum_values.size();
        case DataType::Int:
            return static_cast<std::size_t>(kIntMax - kIntMin + 1);
        default:
            return 0;
    }
}

}  // namespace

const TableRows& SandboxDatabase::rows(std::string_view table) const {
    const auto idx = schema.table_index(table);
    if (!idx) throw ExecutionError(fmt::format("unknown table '{}'", table));
    return tables.at(*idx);
}

std::vector<Value> SandboxDatabase::column_values(std::string_view table, std::string_view column) const {
    const auto tidx = schema.table_index(table);
    if (!tidx) throw ExecutionError(fmt::format("unknown table '{}'", table));
    const auto cidx = schema.tables[*tidx].column_index(column);
    if (!cidx) throw ExecutionError(fmt::format("unknown column '{}.{}'", table, column));
    std::vector<Value> out;
    out.reserve(tables[*tidx].records.size());
    for (const auto& r : tables[*tidx].records) out.push_back(r[*cidx]);
    return out;
}

std::size_t PopulationConfig::count_for(std::string_view table) const {
    for (const auto& [name, n] : record_counts)
        if (iequals(name, table)) return n;
    return default_count;
}

double PopulationConfig::reuse_for(std::string_view table, std::string_view column) const {
    for (const auto& [key, p] : column_reuse) {
        const auto dot = key.find('.');
        if (dot != std::string::npos && iequals(key.substr(0, dot), table) && iequals(key.substr(dot + 1), column))
            return p;
    }
    return reuse_probability;
}

std::string format_timestamp(std::int64_t unix_seconds) {
    using namespace std::chrono;
    const auto tp = sys_seconds{seconds{unix_seconds}};
    const auto day = floor<days>(tp);
    const year_month_day ymd{day};
    const hh_mm_ss hms{tp - day};
    return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hms.hours().count(),
                       hms.minutes().count(), hms.seconds().count());
}

std::string random_uuid(Rng& rng) {
    std::uint64_t hi = rng.next();
    std::uint64_t lo = rng.next();
    hi = (hi & 0xFFFFFFFFFFFF0FFFULL) | 0x0000000000004000ULL;  // version 4
    lo = (lo & 0x3FFFFFFFFFFFFFFFULL) | 0x8000000000000000ULL;  // RFC 4122 variant
    return fmt::format("{:08x}-{:04x}-{:04x}-{:04x}-{:012x}", hi >> 32, (hi >> 16) & 0xFFFF, hi & 0xFFFF, lo >> 48,
                       lo & 0xFFFFFFFFFFFFULL);
}

Value fresh_value(const Column& column, Rng& rng) {
    switch (column.data_type) {
        case DataType::Boolean:
            return rng.bernoulli(0.5);
        case DataType::Int:
            return rng.uniform_int(kIntMin, kIntMax);
        case DataType::Float:
            return static_cast<double>(static_cast<float>(rng.uniform_real(0.0, kRealMax)));
        case DataType::Double:
            return rng.uniform_real(0.0, kRealMax);
        case DataType::Decimal: {
            const auto cents = rng.uniform_int(0, static_cast<std::int64_t>(kRealMax * 100) - 1);
            return static_cast<double>(cents) / 100.0;
        }
        case DataType::Timestamp:
            return format_timestamp(rng.uniform_int(kTimestampBegin, kTimestampEnd - 1));
        case DataType::Enum:
            return column.enum_values.at(rng.index(column.enum_values.size()));
        case DataType::Text:
            return fresh_text(column, rng);
    }
    return std::monostate{};
}

Value generate_value(const Column& column, std::span<const Value> existing, Rng& rng, double reuse_probability) {
    if (column.reference) {
        if (existing.empty())
            throw PopulationError(fmt::format("no referenced values available for foreign key {}", column.name));
        return existing[rng.index(existing.size())];
    }
    if (!existing.empty() && rng.bernoulli(reuse_probability)) return existing[rng.index(existing.size())];
    return fresh_value(column, rng);
}

std::vector<std::size_t> dependency_order(const Schema& schema) {
    const std::size_t n = schema.tables.size();
    std::vector<std::set<std::size_t>> depends_on(n);
    for (std::size_t t = 0; t < n; ++t) {
        for (const auto& c : schema.tables[t].columns) {
            if (!c.reference) continue;
            const auto target = schema.table_index(c.reference->table);
            if (!target) throw PopulationError(fmt::format("dangling reference in table {}", schema.tables[t].name));
            depends_on[t].insert(*target);
        }
    }
    std::vector<std::size_t> order;
    std::vector<bool> placed(n, false);
    while (order.size() < n) {
        bool progressed = false;
        for (std::size_t t = 0; t < n; ++t) {
            if (placed[t]) continue;
            const bool ready = std::all_of(depends_on[t].begin(), depends_on[t].end(),
                                           [&](std::size_t d) { return placed[d]; });
            if (ready) {
                placed[t] = true;
                order.push_back(t);
                progressed = true;
            }
        }
        if (!progressed) {
            std::string names;
            for (std::size_t t = 0; t < n; ++t)
                if (!placed[t]) names += (names.empty() ? "" : ", ") + schema.tables[t].name;
            throw PopulationError("cyclic foreign-key dependency among tables: " + names);
        }
    }
    return order;
}

SandboxDatabase populate(const Schema& schema, const PopulationConfig& config) {
    if (!(config.reuse_probability >= 0.0 && config.reuse_probability <= 1.0))
        throw PopulationError("reuse_probability must lie in [0, 1]");
    for (const auto& [key, p] : config.column_reuse)
        if (!(p >= 0.0 && p <= 1.0)) throw PopulationError("reuse probability for " + key + " must lie in [0, 1]");
    for (const auto& [name, n] : config.record_counts)
        if (!schema.find_table(name)) throw PopulationError("record count given for unknown table " + name);

    SandboxDatabase db;
    db.schema = schema;
    db.tables.resize(schema.tables.size());
    Rng rng(config.rng_seed);

    for (const auto t : dependency_order(schema)) {
        const auto& table = schema.tables[t];
        const std::size_t count = config.count_for(table.name);
        if (count == 0) throw PopulationError(fmt::format("table {} needs a positive record count", table.name));

        const std::size_t ncols = table.columns.size();
        std::vector<std::vector<Value>> columns(ncols);
        for (std::size_t c = 0; c < ncols; ++c) {
            const auto& column = table.columns[c];
            auto& out = columns[c];
            out.reserve(count);
            const double reuse = config.reuse_for(table.name, column.name);

            std::vector<Value> referenced;
            if (column.reference) {
                referenced = db.column_values(column.reference->table, column.reference->column);
                if (referenced.empty())
                    throw PopulationError(fmt::format("foreign key {}.{} references table {} which has no rows",
                                                      table.name, column.name, column.reference->table));
            }

            if (column.is_primary_key && column.reference) {
                // One-to-one: distinct referenced values.
                if (referenced.size() < count)
                    throw PopulationError(fmt::format("primary key {}.{} needs {} distinct referenced values, found {}",
                                                      table.name, column.name, count, referenced.size()));
                for (std::size_t i = 0; i < count; ++i) {
                    const auto j = i + rng.index(referenced.size() - i);
                    std::swap(referenced[i], referenced[j]);
                    out.push_back(referenced[i]);
                }
            } else if (column.is_primary_key) {
                const auto domain = domain_size(column);
                if (domain != 0 && domain < count)
                    throw PopulationError(fmt::format("primary key {}.{} cannot hold {} distinct {} values", table.name,
                                                      column.name, count, to_string(column.data_type)));
                std::unordered_set<std::string> seen;
                while (out.size() < count) {
                    auto v = fresh_value(column, rng);
                    if (seen.insert(value_key(v)).second) out.push_back(std::move(v));
                }
            } else if (column.reference) {
                for (std::size_t i = 0; i < count; ++i) out.push_back(generate_value(column, referenced, rng, reuse));
            } else {
                for (std::size_t i = 0; i < count; ++i)
                    out.push_back(generate_value(column, std::span<const Value>(out.data(), out.size()), rng, reuse));
            }
        }

        auto& records = db.tables[t].records;
        records.assign(count, Record(ncols));
        for (std::size_t c = 0; c < ncols; ++c)
            for (std::size_t i = 0; i < count; ++i) records[i][c] = std::move(columns[c][i]);
    }
    return db;
}

std::vector<std::string> check_database(const SandboxDatabase& db) {
    std::vector<std::string> problems;
    const auto& schema = db.schema;
    if (db.tables.size() != schema.tables.size()) {
        problems.push_back("table count mismatch");
        return problems;
    }
    for (std::size_t t = 0; t < schema.tables.size(); ++t) {
        const auto& table = schema.tables[t];
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            const auto& column = table.columns[c];
            std::unordered_set<std::string> seen;
            std::unordered_set<std::string> targets;
            if (column.reference)
                for (const auto& v : db.column_values(column.reference->table, column.reference->column))
                    targets.insert(value_key(v));
            for (std::size_t r = 0; r < db.tables[t].records.size(); ++r) {
                const auto& rec = db.tables[t].records[r];
                if (rec.size() != table.columns.size()) {
                    problems.push_back(fmt::format("{} row {} has {} values", table.name, r, rec.size()));
                    break;
                }
                const auto& v = rec[c];
                if (!value_matches_type(v, column))
                    problems.push_back(fmt::format("{}.{} row {}: value '{}' is not a valid {}", table.name,
                                                   column.name, r, value_to_text(v), to_string(column.data_type)));
                if (column.is_primary_key && !seen.insert(value_key(v)).second)
                    problems.push_back(fmt::format("{}.{} row {}: duplicate primary key", table.name, column.name, r));
                if (column.reference && !targets.contains(value_key(v)))
                    problems.push_back(fmt::format("{}.{} row {}: dangling foreign key '{}'", table.name, column.name,
                                                   r, value_to_text(v)));
            }
        }
    }
    return problems;
}

namespace {

using detail::json;
using detail::ordered_json;

ordered_json value_to_json(const Value& v) {
    return std::visit(
        [](const auto& x) -> ordered_json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) return nullptr;
            else return x;
        },
        v);
}

Value value_from_json(const json& j, const Column& column, const std::string& path) {
    Value v;
    switch (column.data_type) {
        case DataType::Boolean:
            if (!j.is_boolean()) throw DocumentError(path, "expected a boolean");
            v = j.get<bool>();
            break;
        case DataType::Int:
            if (!j.is_number_integer()) throw DocumentError(path, "expected an integer");
            v = j.get<std::int64_t>();
            break;
        case DataType::Float:
        case DataType::Double:
        case DataType::Decimal:
            if (!j.is_number()) throw DocumentError(path, "expected a number");
            v = j.get<double>();
            break;
        default:
            if (!j.is_string()) throw DocumentError(path, "expected a string");
            v = j.get<std::string>();
    }
    if (!value_matches_type(v, column))
        throw ValidationError(path, "value is not a valid " + std::string(to_string(column.data_type)));
    return v;
}

}  // namespace

std::string save_records(const SandboxDatabase& db) {
    ordered_json root = ordered_json::object();
    for (std::size_t t = 0; t < db.schema.tables.size(); ++t) {
        const auto& table = db.schema.tables[t];
        ordered_json rows = ordered_json::array();
        for (const auto& rec : db.tables[t].records) {
            ordered_json row = ordered_json::object();
            for (std::size_t c = 0; c < table.columns.size(); ++c) row[table.columns[c].name] = value_to_json(rec[c]);
            rows.push_back(std::move(row));
        }
        root[table.name] = std::move(rows);
    }
    return root.dump(2) + "\n";
}

SandboxDatabase load_records(const Schema& schema, std::string_view document) {
    const json root = detail::parse_json(document, "records document");
    detail::require_object(root, "");
    SandboxDatabase db;
    db.schema = schema;
    db.tables.resize(schema.tables.size());
    for (auto it = root.begin(); it != root.end(); ++it) {
        const auto tidx = schema.table_index(it.key());
        if (!tidx) throw DocumentError(it.key(), "unknown table");
        if (!it->is_array()) throw DocumentError(it.key(), "expected an array of records");
        const auto& table = schema.tables[*tidx];
        for (std::size_t r = 0; r < it->size(); ++r) {
            const auto& row = (*it)[r];
            const auto rpath = detail::index_path(it.key(), r);
            detail::require_object(row, rpath);
            Record rec(table.columns.size());
            std::vector<bool> seen(table.columns.size(), false);
            for (auto f = row.begin(); f != row.end(); ++f) {
                const auto cidx = table.column_index(f.key());
                if (!cidx) throw DocumentError(rpath, "unknown column '" + f.key() + "'");
                rec[*cidx] = value_from_json(*f, table.columns[*cidx], rpath + "." + f.key());
                seen[*cidx] = true;
            }
            for (std::size_t c = 0; c < seen.size(); ++c)
                if (!seen[c]) throw DocumentError(rpath, "missing column '" + table.columns[c].name + "'");
            db.tables[*tidx].records.push_back(std::move(rec));
        }
    }
    const auto problems = check_database(db);
    if (!problems.empty()) throw ValidationError("", problems.front());
    return db;
}

}  // namespace sqlpair
