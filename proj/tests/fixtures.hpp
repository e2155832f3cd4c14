#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "sqlpair/database.hpp"
#include "sqlpair/schema.hpp"

namespace fixtures {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string data_path(const std::string& rel) { return std::string(SQLPAIR_DATA_DIR) + "/" + rel; }

inline sqlpair::Schema load(const std::string& name) {
    return sqlpair::load_schema(read_file(data_path("schemas/" + name + ".json")));
}

inline sqlpair::SandboxDatabase populated(const sqlpair::Schema& schema, std::size_t rows, std::uint64_t seed) {
    sqlpair::PopulationConfig config;
    config.default_count = rows;
    config.rng_seed = seed;
    return sqlpair::populate(schema, config);
}

// Employees table with hand-chosen rows for executor checks.
inline sqlpair::SandboxDatabase employees_fixture() {
    using namespace sqlpair;
    Schema s = load_schema(R"({"tables":[{"name":"Employees","columns":[
        {"name":"employee_id","type":"int","primary_key":true},
        {"name":"name","type":"text"},
        {"name":"department_id","type":"int"},
        {"name":"salary","type":"decimal"}]}]})");
    SandboxDatabase db{s, {}};
    db.tables.resize(1);
    auto add = [&](std::int64_t id, std::string name, std::int64_t dept, double salary) {
        db.tables[0].records.push_back({Value{id}, Value{std::move(name)}, Value{dept}, Value{salary}});
    };
    add(1, "Ada", 5, 72000.0);
    add(2, "Ben", 5, 48000.0);
    add(3, "Cyd", 3, 91000.0);
    add(4, "Dee", 5, 50000.0);
    add(5, "Eli", 5, 50000.5);
    add(6, "Fay", 2, 30000.0);
    add(7, "Gus", 3, 65000.0);
    return db;
}

}  // namespace fixtures
