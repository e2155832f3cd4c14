#include <doctest.h>

#include <algorithm>
#include <regex>
#include <set>

#include "fixtures.hpp"
#include "sqlpair/error.hpp"
#include "sqlpair/executor.hpp"
#include "sqlpair/parallel.hpp"
#include "sqlpair/sampler.hpp"

using namespace sqlpair;

namespace {

// Keeps only production `keep` of `nt`.
void force(Grammar& g, const std::string& nt, const std::vector<std::string>& keep) {
    const auto i = g.find_production(nt, keep);
    REQUIRE(i != static_cast<std::size_t>(-1));
    auto p = g.rules[nt][i];
    p.probability = 1.0;
    g.rules[nt] = {p};
}

Grammar where_only_grammar() {
    auto g = default_grammar();
    force(g, "ColumnList", {"Column"});
    force(g, "Column", {"<TableName>", ".", "<ColumnName>"});
    force(g, "FromClause", {"FROM", "<TableName>"});
    force(g, "Condition", {"Column", "Operator", "Value"});
    auto& value = g.rules["Value"];
    value.pop_back();  // Value -> Column
    value[0].probability = value[1].probability = 0.5;
    g.optional["WHERE"] = 1.0;
    g.optional["GROUP_BY"] = 0.0;
    g.optional["ORDER_BY"] = 0.0;
    return g;
}

void collect(const AstNode& n, NodeKind kind, std::vector<const AstNode*>& out) {
    if (n.kind == kind) out.push_back(&n);
    for (const auto& c : n.children) collect(c, kind, out);
}

Schema one_table_schema() {
    return load_schema(R"({"tables":[{"name":"Items","columns":[
        {"name":"item_id","type":"int","primary_key":true},
        {"name":"label","type":"text"},
        {"name":"price","type":"decimal"},
        {"name":"weight","type":"float"},
        {"name":"stocked_at","type":"timestamp"},
        {"name":"grade","type":"enum","enum_values":["low","mid","high"]},
        {"name":"active","type":"boolean"}]}]})");
}

// Reference semantics for a single comparison against a literal, written independently
// of the executor.
bool oracle_holds(const Value& cell, const std::string& op, const AstNode& literal) {
    if (is_null(cell)) return false;
    if (op == "LIKE") {
        std::string re;
        for (char ch : literal_text(literal)) {
            if (ch == '%') re += ".*";
            else if (ch == '_') re += '.';
            else if (std::isalnum(static_cast<unsigned char>(ch))) re += ch;
            else re += std::string("\\") + ch;
        }
        return std::regex_match(value_to_text(cell), std::regex(re, std::regex::icase));
    }
    int cmp = 0;
    if (is_number(cell)) {
        const double a = std::holds_alternative<std::int64_t>(cell) ? static_cast<double>(std::get<std::int64_t>(cell))
                                                                    : std::get<double>(cell);
        const double b = std::stod(is_string_literal(literal) ? literal_text(literal) : literal.lexeme);
        cmp = a < b ? -1 : (a > b ? 1 : 0);
    } else {
        const auto& a = std::get<std::string>(cell);
        const auto b = literal_text(literal);
        cmp = a < b ? -1 : (a > b ? 1 : 0);
    }
    if (op == "=" || op == "IN") return cmp == 0;
    if (op == "<>") return cmp != 0;
    if (op == "<") return cmp < 0;
    if (op == ">") return cmp > 0;
    if (op == "<=") return cmp <= 0;
    if (op == ">=") return cmp >= 0;
    FAIL("unexpected operator ", op);
    return false;
}

}  // namespace

TEST_CASE("equality skeleton over the employees fixture binds real values") {
    auto g = where_only_grammar();
    force(g, "SelectClause", {"SELECT", "ColumnList"});
    force(g, "Operator", {"="});
    const auto db = fixtures::employees_fixture();
    const Grounder grounder(db);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const auto q = grounder.ground(sample_structure(g, rng), rng);
        std::vector<const AstNode*> cols, lits;
        collect(q.ast, NodeKind::ColumnRef, cols);
        collect(q.ast, NodeKind::Literal, lits);
        for (const auto* c : cols) {
            CHECK(column_table(*c) == "Employees");
            CHECK(db.schema.tables[0].find_column(column_name(*c)) != nullptr);
        }
        REQUIRE(lits.size() == 1);
        const auto& cmp = q.ast.children.at(2).children.at(0);
        const auto idx = *db.schema.tables[0].column_index(column_name(cmp.children[0]));
        bool present = false;
        for (const auto& row : db.tables[0].records) present = present || oracle_holds(row[idx], "=", *lits[0]);
        CHECK_MESSAGE(present, q.text);
        CHECK_FALSE(execute_query(db, q).rows.empty());
    }
}

TEST_CASE("a join over a single foreign key equates that pair") {
    const auto schema = load_schema(R"({"tables":[
        {"name":"Teams","columns":[{"name":"team_id","type":"int","primary_key":true},{"name":"title","type":"text"}]},
        {"name":"Players","columns":[{"name":"player_id","type":"int","primary_key":true},
            {"name":"team_id","type":"int","references":{"table":"Teams","column":"team_id"}},
            {"name":"nick","type":"text"}]}]})");
    const auto db = fixtures::populated(schema, 15, 3);
    auto g = default_grammar();
    force(g, "FromClause", {"FROM", "<TableName>", "JoinClause"});
    force(g, "JoinClause", {"JoinType", "JOIN", "<TableName>", "ON", "JoinCondition"});
    force(g, "JoinCondition", {"Column", "=", "Column"});
    force(g, "Column", {"<TableName>", ".", "<ColumnName>"});
    g.optional["WHERE"] = 0.0;
    const Grounder grounder(db);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        const auto q = grounder.ground(sample_structure(g, rng), rng);
        const auto& on = q.ast.children.at(1).children.at(1).children.at(2).children.at(0);
        std::set<std::string> sides{on.children[0].lexeme, on.children[1].lexeme};
        CHECK(sides == std::set<std::string>{"Teams.team_id", "Players.team_id"});
    }
}

TEST_CASE("1,000 samples over the company schema execute and round-trip") {
    const auto schema = fixtures::load("company");
    REQUIRE(schema.tables.size() == 5);
    const auto db = fixtures::populated(schema, 60, 11);
    const Grounder grounder(db);
    SamplerConfig config;
    config.rng_seed = 5;
    const auto batch = parallel::sample_batch(default_grammar(), grounder, config, 1000);
    std::size_t nonempty = 0;
    for (const auto& s : batch) {
        REQUIRE_MESSAGE(s.error.empty(), s.error);
        const auto reparsed = parse_sql(s.query.text);
        CHECK(serialize(reparsed.ast).text == s.query.text);
        CHECK(reparsed.ast == s.query.ast);
        CHECK_NOTHROW(execute_query(db, reparsed));
        // Every column belongs to a table in FROM/JOIN.
        std::vector<const AstNode*> tables, cols;
        collect(s.query.ast, NodeKind::TableRef, tables);
        collect(s.query.ast, NodeKind::ColumnRef, cols);
        std::set<std::string> scope;
        for (const auto* t : tables) scope.insert(t->lexeme);
        for (const auto* c : cols) CHECK(scope.count(column_table(*c)) == 1);
        if (s.nonempty) ++nonempty;
    }
    CHECK(nonempty >= 900);
}

TEST_CASE("500 samples with the non-empty requirement") {
    const auto db = fixtures::populated(fixtures::load("retail"), 80, 2);
    const Grounder grounder(db);
    SamplerConfig config;
    config.rng_seed = 77;
    std::size_t nonempty = 0;
    for (const auto& s : parallel::sample_batch(default_grammar(), grounder, config, 500)) {
        REQUIRE(s.error.empty());
        if (!execute_query(db, s.query).rows.empty()) ++nonempty;
    }
    CHECK(nonempty >= 450);
}

TEST_CASE("single-table schema never yields a join") {
    const auto db = fixtures::populated(one_table_schema(), 20, 4);
    const Grounder grounder(db);
    SamplerConfig config;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const auto out = sample_query(default_grammar(), grounder, config, rng);
        CHECK(out.query.text.find(" JOIN ") == std::string::npos);
    }
    auto g = default_grammar();
    force(g, "FromClause", {"FROM", "<TableName>", "JoinClause"});
    Rng rng(1);
    CHECK_THROWS_AS(grounder.ground(sample_structure(g, rng), rng), GroundingError);
    CHECK_THROWS_AS(sample_query(g, db, config, rng), SamplingError);
}

TEST_CASE("seed 42 twice gives the same query") {
    const auto db = fixtures::populated(fixtures::load("company"), 30, 1);
    SamplerConfig config;
    Rng a(42), b(42);
    CHECK(sample_query(default_grammar(), db, config, a).text == sample_query(default_grammar(), db, config, b).text);
}

TEST_CASE("parallel and serial batches agree") {
    const auto db = fixtures::populated(fixtures::load("company"), 30, 8);
    const Grounder grounder(db);
    SamplerConfig config;
    config.rng_seed = 99;
    const auto a = parallel::sample_batch(default_grammar(), grounder, config, 200);
    const auto b = parallel::sample_batch_serial(default_grammar(), grounder, config, 200);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].query.text == b[i].query.text);
        CHECK(a[i].attempts == b[i].attempts);
    }
}

TEST_CASE("single-comparison queries match a reference filter") {
    const auto db = fixtures::populated(one_table_schema(), 20, 6);
    const Grounder grounder(db);
    const auto g = where_only_grammar();
    const auto& table = db.schema.tables[0];
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        Rng rng(seed);
        const auto q = grounder.ground(sample_structure(g, rng), rng);
        const auto& select = q.ast.children[0];
        const bool distinct = select.children[0].kind == NodeKind::Distinct;
        const auto& cmp = q.ast.children[2].children[0];
        const auto lhs = *table.column_index(column_name(cmp.children[0]));
        const auto out = *table.column_index(column_name(select.children[distinct ? 1 : 0]));
        std::vector<std::vector<Value>> expected;
        for (const auto& row : db.tables[0].records) {
            if (!oracle_holds(row[lhs], cmp.lexeme, cmp.children[1])) continue;
            std::vector<Value> projected{row[out]};
            if (distinct && std::find(expected.begin(), expected.end(), projected) != expected.end()) continue;
            expected.push_back(std::move(projected));
        }
        CHECK_MESSAGE(execute_query(db, q).rows == expected, q.text);
    }
}

TEST_CASE("learning recovers each derivation's production counts") {
    const auto g = default_grammar();
    const auto db = fixtures::populated(fixtures::load("company"), 40, 12);
    const Grounder grounder(db);
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 600; ++seed) {
        Rng rng(seed);
        Derivation d;
        try {
            d = sample_structure(g, rng);
        } catch (const SamplingError&) {
            continue;
        }
        SqlQuery q;
        try {
            q = grounder.ground(d, rng);
        } catch (const GroundingError&) {
            continue;
        }
        ProductionCounts expected;
        count_productions(g, d, expected);
        const auto got = derivation_counts(g, parse_sql(q.text).ast);
        CHECK_MESSAGE(got.uses == expected.uses, q.text);
        CHECK_MESSAGE(got.optional == expected.optional, q.text);
        ++checked;
    }
    CHECK(checked > 500);
}

TEST_CASE("add-one smoothing on small corpora") {
    const auto g = default_grammar();
    const auto distinct = g.find_production("SelectClause", {"SELECT DISTINCT", "ColumnList"});
    SUBCASE("one of two queries uses DISTINCT") {
        const auto r = learn_probabilities(
            g, {parse_sql("SELECT DISTINCT T.a FROM T"), parse_sql("SELECT T.a FROM T")});
        CHECK(r.used == 2);
        CHECK(r.grammar.rules.at("SelectClause")[distinct].probability == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("98 plain selects") {
        std::vector<SqlQuery> corpus(98, parse_sql("SELECT T.a FROM T"));
        const auto r = learn_probabilities(g, corpus);
        CHECK(r.grammar.rules.at("SelectClause")[distinct].probability == doctest::Approx(0.01).epsilon(1e-12));
        for (const auto& [nt, prods] : r.grammar.rules) {
            double sum = 0;
            for (const auto& p : prods) sum += p.probability;
            CHECK(std::abs(sum - 1.0) <= 1e-9);
        }
        // WHERE never offered as present: (0 + 1) / (98 + 2).
        CHECK(r.grammar.optional.at("WHERE") == doctest::Approx(0.01).epsilon(1e-12));
    }
    SUBCASE("queries outside the grammar are skipped with a reason") {
        const auto r = learn_probabilities(g, {parse_sql("SELECT * FROM T"), parse_sql("SELECT T.a FROM T WHERE T.b IN (1, 2)"),
                                               parse_sql("SELECT T.a FROM T")});
        CHECK(r.used == 1);
        CHECK(r.skipped == 2);
        CHECK(r.skipped_reasons.size() == 2);
    }
    SUBCASE("empty corpus leaves the grammar alone") {
        const auto r = learn_probabilities(g, {});
        CHECK(r.empty_corpus);
        CHECK(save_grammar(r.grammar) == save_grammar(g));
    }
}
