#include <doctest.h>

#include "sqlpair/ast.hpp"
#include "sqlpair/error.hpp"

using namespace sqlpair;

TEST_CASE("minimal query has five nodes") {
    const auto q = parse_sql("SELECT T.a FROM T");
    CHECK(q.ast.size() == 5);
    REQUIRE(q.ast.children.size() == 2);
    CHECK(q.ast.children[0].kind == NodeKind::Select);
    CHECK(q.ast.children[0].children[0].kind == NodeKind::ColumnRef);
    CHECK(q.ast.children[1].kind == NodeKind::From);
    CHECK(q.ast.children[1].children[0].kind == NodeKind::TableRef);
    CHECK(q.text == "SELECT T.a FROM T");
}

TEST_CASE("incomplete input fails at end of input") {
    const std::string text = "SELECT * FROM";
    try {
        parse_sql(text);
        FAIL("expected a syntax error");
    } catch (const SqlSyntaxError& e) {
        CHECK(e.offset() == text.size());
        REQUIRE(e.expected().size() == 1);
        CHECK(e.expected()[0] == "identifier");
    }
}

TEST_CASE("syntax errors point at the offending token") {
    try {
        parse_sql("SELECT T.a FROM T WHERE T.a == 3");
        FAIL("expected a syntax error");
    } catch (const SqlSyntaxError& e) {
        CHECK(e.offset() == 29);
    }
    CHECK_THROWS_AS(parse_sql("SELECT T.a FROM T WHERE T.b = 'open"), SqlSyntaxError);
    CHECK_THROWS_AS(parse_sql("SELECT T.a FROM T LIMIT 3"), SqlSyntaxError);
    CHECK_THROWS_AS(parse_sql("SELECT SUM(*) FROM T"), SqlSyntaxError);
}

TEST_CASE("keywords are case-insensitive and canonicalized") {
    const auto q = parse_sql("select distinct t.a ,  count( t.b )\nfrom t   left join u on t.a=u.a where t.b like '%x%' or t.c in (1,2) and t.d<>-3 group by t.a order by t.a desc;");
    CHECK(q.text ==
          "SELECT DISTINCT t.a, COUNT(t.b) FROM t LEFT JOIN u ON t.a = u.a WHERE t.b LIKE '%x%' OR t.c IN (1, 2) "
          "AND t.d <> -3 GROUP BY t.a ORDER BY t.a DESC");
}

TEST_CASE("AND binds tighter than OR") {
    const auto q = parse_sql("SELECT T.a FROM T WHERE T.a = 1 OR T.b = 2 AND T.c = 3");
    const auto& cond = q.ast.children[2].children[0];
    REQUIRE(cond.kind == NodeKind::Or);
    REQUIRE(cond.children.size() == 2);
    CHECK(cond.children[0].kind == NodeKind::Comparison);
    CHECK(cond.children[1].kind == NodeKind::And);
    CHECK(cond.children[1].children.size() == 2);
}

TEST_CASE("bare JOIN is an inner join") {
    const auto q = parse_sql("SELECT A.x FROM A JOIN B ON A.id = B.id");
    CHECK(q.text == "SELECT A.x FROM A INNER JOIN B ON A.id = B.id");
}

TEST_CASE("round trip is idempotent") {
    const char* queries[] = {
        "SELECT T.a FROM T",
        "SELECT DISTINCT Employees.name, AVG(Employees.salary) FROM Employees INNER JOIN Departments ON "
        "Employees.department_id = Departments.department_id WHERE Employees.name = 'O''Neil' GROUP BY "
        "Employees.name ORDER BY Employees.name, AVG(Employees.salary) ASC",
        "SELECT * FROM T WHERE T.x >= 2.5 AND T.y <= 1e3",
        "SELECT COUNT(*) FROM T FULL JOIN U ON T.a = U.a AND T.b = U.b RIGHT JOIN V ON U.c = V.c",
    };
    for (const auto* text : queries) {
        const auto q = parse_sql(text);
        const auto again = parse_sql(q.text);
        CHECK(again.ast == q.ast);
        CHECK(again.text == q.text);
        CHECK(serialize(q.ast).text == q.text);
    }
}

TEST_CASE("spans cover their nodes") {
    const auto q = parse_sql("SELECT Employees.name FROM Employees WHERE Employees.department_id = 5 AND Employees.salary > 50000");
    const auto text = [&](const AstPath& p) {
        const auto s = span_of(q, p);
        return q.text.substr(s.begin, s.end - s.begin);
    };
    CHECK(text({}) == q.text);
    CHECK(text({0}) == "SELECT Employees.name");
    CHECK(text({1}) == "FROM Employees");
    CHECK(text({1, 0}) == "Employees");
    CHECK(text({2}) == "WHERE Employees.department_id = 5 AND Employees.salary > 50000");
    CHECK(text({2, 0, 0}) == "Employees.department_id = 5");
    CHECK(text({2, 0, 1}) == "Employees.salary > 50000");
    CHECK(text({2, 0, 1, 1}) == "50000");
    CHECK(preorder_index(q.ast, {2, 0, 1, 1}) == q.ast.size() - 1);
}

TEST_CASE("labels fold identifier case") {
    const auto a = parse_sql("SELECT T.A FROM T");
    const auto b = parse_sql("SELECT t.a FROM t");
    CHECK(a.ast.children[0].children[0].label() == "ColumnRef:t.a");
    CHECK(a.ast.children[0].children[0].label() == b.ast.children[0].children[0].label());
    CHECK(a.text == "SELECT T.A FROM T");
}

TEST_CASE("literal helpers") {
    const auto q = parse_sql("SELECT T.a FROM T WHERE T.b = 'it''s'");
    const auto& lit = node_at(q.ast, {2, 0, 1});
    CHECK(is_string_literal(lit));
    CHECK(literal_text(lit) == "it's");
    CHECK(quote_string("it's") == "'it''s'");
    CHECK(column_table(node_at(q.ast, {0, 0})) == "T");
    CHECK(column_name(node_at(q.ast, {0, 0})) == "a");
}
