#include <doctest.h>

#include "fixtures.hpp"
#include "sqlpair/error.hpp"
#include "sqlpair/executor.hpp"

using namespace sqlpair;

namespace {

ResultTable run(const SandboxDatabase& db, const std::string& sql) { return execute_query(db, parse_sql(sql)); }

}  // namespace

TEST_CASE("filter with two conditions returns the hand-filtered rows") {
    const auto db = fixtures::employees_fixture();
    // By hand: department 5 rows are Ada 72000, Ben 48000, Dee 50000, Eli 50000.5; above 50000 -> Ada, Eli.
    const auto r = run(db,
                       "SELECT Employees.name FROM Employees WHERE Employees.department_id = 5 AND Employees.salary > 50000");
    REQUIRE(r.rows.size() == 2);
    CHECK(std::get<std::string>(r.rows[0][0]) == "Ada");
    CHECK(std::get<std::string>(r.rows[1][0]) == "Eli");
    CHECK(r.columns == std::vector<std::string>{"Employees.name"});
}

TEST_CASE("count over all rows") {
    const auto db = fixtures::employees_fixture();
    const auto r = run(db, "SELECT COUNT(Employees.employee_id) FROM Employees");
    REQUIRE(r.rows.size() == 1);
    CHECK(std::get<std::int64_t>(r.rows[0][0]) == 7);
}

TEST_CASE("errors name the offending identifier") {
    const auto db = fixtures::employees_fixture();
    try {
        run(db, "SELECT Employees.age FROM Employees");
        FAIL("expected ExecutionError");
    } catch (const ExecutionError& e) {
        CHECK(std::string(e.what()).find("Employees.age") != std::string::npos);
    }
    CHECK_THROWS_WITH_AS(run(db, "SELECT Staff.name FROM Staff"), "unknown table Staff", ExecutionError);
    CHECK_THROWS_AS(run(db, "SELECT Employees.name FROM Employees WHERE Employees.salary = 'high'"), ExecutionError);
    CHECK_THROWS_AS(run(db, "SELECT SUM(Employees.name) FROM Employees"), ExecutionError);
}

TEST_CASE("grouping, ordering and distinct") {
    const auto db = fixtures::employees_fixture();
    auto r = run(db,
                 "SELECT Employees.department_id, COUNT(Employees.employee_id) FROM Employees GROUP BY "
                 "Employees.department_id ORDER BY Employees.department_id DESC");
    REQUIRE(r.rows.size() == 3);
    CHECK(std::get<std::int64_t>(r.rows[0][0]) == 5);
    CHECK(std::get<std::int64_t>(r.rows[0][1]) == 4);
    CHECK(std::get<std::int64_t>(r.rows[2][0]) == 2);

    r = run(db, "SELECT DISTINCT Employees.department_id FROM Employees");
    REQUIRE(r.rows.size() == 3);
    CHECK(std::get<std::int64_t>(r.rows[0][0]) == 5);
    CHECK(std::get<std::int64_t>(r.rows[1][0]) == 3);

    r = run(db, "SELECT MAX(Employees.salary), MIN(Employees.name), AVG(Employees.department_id) FROM Employees");
    CHECK(std::get<double>(r.rows[0][0]) == 91000.0);
    CHECK(std::get<std::string>(r.rows[0][1]) == "Ada");
    CHECK(std::get<double>(r.rows[0][2]) == doctest::Approx(28.0 / 7.0));
}

TEST_CASE("aggregates outside an aggregated context are whole-table scalars") {
    const auto db = fixtures::employees_fixture();
    // Mean salary = 406000.5 / 7 = 58000.07...; above it: Ada, Cyd, Gus.
    const auto r = run(db, "SELECT Employees.name FROM Employees WHERE Employees.salary > AVG(Employees.salary)");
    REQUIRE(r.rows.size() == 3);
    CHECK(std::get<std::string>(r.rows[2][0]) == "Gus");
}

TEST_CASE("like is case-insensitive with both wildcards") {
    CHECK(like_match("Marketing", "%KET%"));
    CHECK(like_match("abc", "a_c"));
    CHECK_FALSE(like_match("abc", "a_"));
    CHECK(like_match("", "%"));
    CHECK(like_match("50000.5", "%0.5"));
    const auto db = fixtures::employees_fixture();
    CHECK(run(db, "SELECT Employees.name FROM Employees WHERE Employees.name LIKE '%e%'").rows.size() == 3);
    CHECK(run(db, "SELECT Employees.name FROM Employees WHERE Employees.department_id IN (3)").rows.size() == 2);
}

TEST_CASE("outer join counts obey inclusion-exclusion") {
    const auto schema = fixtures::load("company");
    const auto db = fixtures::populated(schema, 25, 17);
    for (const char* cond : {"Employees.department_id = Departments.department_id",
                             "Employees.rating > Departments.budget", "Employees.employee_id = Departments.department_id"}) {
        const auto count = [&](const char* type) {
            return run(db, std::string("SELECT Employees.name FROM Employees ") + type + " JOIN Departments ON " + cond)
                .rows.size();
        };
        const auto inner = count("INNER"), left = count("LEFT"), right = count("RIGHT"), full = count("FULL");
        CHECK(inner <= left);
        CHECK(inner <= right);
        CHECK(full == left + right - inner);
    }
}

TEST_CASE("tables outside FROM are rejected") {
    const auto schema = fixtures::load("company");
    const auto db = fixtures::populated(schema, 5, 1);
    CHECK_THROWS_WITH_AS(run(db, "SELECT Departments.name FROM Employees"),
                         "table Departments is not in the FROM clause", ExecutionError);
}
