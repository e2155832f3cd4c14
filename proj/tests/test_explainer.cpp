#include <doctest.h>

#include "fixtures.hpp"
#include "sqlpair/error.hpp"
#include "sqlpair/explainer.hpp"
#include "sqlpair/sampler.hpp"

using namespace sqlpair;

namespace {

const Schema& employees_schema() {
    static const Schema s = fixtures::employees_fixture().schema;
    return s;
}

std::string fragment(const SqlQuery& q, const ExplanationStep& s) {
    return q.text.substr(s.sql_span.begin, s.sql_span.end - s.sql_span.begin);
}

LlmBridge mock_bridge(std::shared_ptr<ScriptedMock> mock) { return LlmBridge(std::move(mock), 2); }

const char* kOrJoinSql =
    "SELECT Employees.name FROM Employees INNER JOIN Departments ON Employees.department_id = "
    "Departments.department_id OR Employees.salary > Departments.budget";

const char* kFallbackAnswer = R"(Here you go:
```json
{"steps":[
 {"kind":"FROM","sql":"FROM Employees","text":"Look at employees","sub_question":"Where?"},
 {"kind":"JOIN","sql":"INNER JOIN Departments ON Employees.department_id = Departments.department_id OR Employees.salary > Departments.budget","text":"Pair each with its department or any department whose budget is under the salary","sub_question":"Which departments?"},
 {"kind":"SELECT","sql":"SELECT Employees.name","text":"Give their names","sub_question":"What?"}
]}
```)";

const char* kOutOfOrderAnswer = R"(```json
{"steps":[
 {"kind":"SELECT","sql":"SELECT Employees.name","text":"Give their names"},
 {"kind":"FROM","sql":"FROM Employees","text":"Look at employees"},
 {"kind":"JOIN","sql":"INNER JOIN Departments ON Employees.department_id = Departments.department_id OR Employees.salary > Departments.budget","text":"Pair departments"}
]}
```)";

}  // namespace

TEST_CASE("four-step reference explanation") {
    const auto q = parse_sql(
        "SELECT Employees.name FROM Employees WHERE Employees.department_id = 5 AND Employees.salary > 50000");
    const auto e = explain(q, employees_schema());
    REQUIRE(e.steps.size() == 4);
    CHECK(e.steps[0].text == "In employees");
    CHECK(e.steps[1].text == "Filter employees from department 5");
    CHECK(e.steps[2].text == "Keep employees with salary exceeding $50,000");
    CHECK(e.steps[3].text == "Return the names of employees");
    CHECK(e.steps[0].sub_question == "Which data source should we care about?");
    CHECK(e.steps[1].sub_question == "Which department are employees from?");
    CHECK(e.steps[2].sub_question == "What salary range do we care about?");
    CHECK(e.steps[3].sub_question == "What information should be returned?");

    CHECK(fragment(q, e.steps[0]) == "FROM Employees");
    CHECK(fragment(q, e.steps[1]) == "WHERE Employees.department_id = 5");
    CHECK(fragment(q, e.steps[2]) == "AND Employees.salary > 50000");
    CHECK(fragment(q, e.steps[3]) == "SELECT Employees.name");
    for (std::size_t i = 0; i < 4; ++i) CHECK(e.steps[i].index == i + 1);
    CHECK(e.steps[0].ast_path == AstPath{1, 0});
    CHECK(node_at(q.ast, e.steps[2].ast_path).kind == NodeKind::Comparison);
    CHECK(check_explanation(e, q).empty());
    CHECK(e.source == ExplanationSource::RuleBased);

    // The salary value is tagged as a mention of the literal.
    const auto& ents = e.steps[2].entities;
    const auto it = std::find_if(ents.begin(), ents.end(), [](const EntityMention& m) { return m.kind == EntityMention::Kind::Value; });
    REQUIRE(it != ents.end());
    CHECK(e.steps[2].text.substr(it->begin, it->end - it->begin) == "$50,000");
    CHECK(it->lexeme == "50000");
}

TEST_CASE("minimal query yields FROM and SELECT only") {
    const auto q = parse_sql("SELECT Employees.name FROM Employees");
    const auto e = explain(q, employees_schema());
    REQUIRE(e.steps.size() == 2);
    CHECK(e.steps[0].kind == StepKind::From);
    CHECK(e.steps[1].kind == StepKind::Select);
    CHECK(check_explanation(e, q).empty());
}

TEST_CASE("join, grouping, ordering and OR get their own steps") {
    const Schema s = fixtures::load("company");
    const auto q = parse_sql(
        "SELECT DISTINCT Departments.name, AVG(Employees.salary) FROM Employees LEFT JOIN Departments ON "
        "Employees.department_id = Departments.department_id WHERE Employees.rating >= 3 OR Departments.region = "
        "'north' GROUP BY Departments.name ORDER BY AVG(Employees.salary) DESC");
    const auto e = explain(q, s);
    REQUIRE(e.steps.size() == 7);
    CHECK(e.steps[1].kind == StepKind::Join);
    CHECK(e.steps[1].text ==
          "Combine with departments where department id of employees matches department id of departments, keeping "
          "unmatched earlier rows");
    CHECK(e.steps[2].text == "Filter employees with rating at least 3");
    CHECK(e.steps[3].text == "Or alternatively keep departments with region equal to \"north\"");
    CHECK(fragment(q, e.steps[3]) == "OR Departments.region = 'north'");
    CHECK(e.steps[4].kind == StepKind::GroupBy);
    CHECK(e.steps[5].text == "Sort results by average salary of employees in descending order");
    CHECK(e.steps[6].text == "Return the distinct names of departments and the distinct average salary of employees");
    CHECK(check_explanation(e, q).empty());
    CHECK(expected_step_count(q.ast) == e.steps.size());
}

TEST_CASE("sampled company queries are fully covered by rule templates") {
    const Schema s = fixtures::load("company");
    const auto db = fixtures::populated(s, 40, 7);
    const Grounder grounder(db);
    SamplerConfig config;
    config.require_nonempty_result = false;
    Rng rng(11);
    std::size_t explained = 0;
    for (int i = 0; i < 300; ++i) {
        const auto q = sample_query(default_grammar(), grounder, config, rng).query;
        const auto e = rule_explain(q, s);
        REQUIRE_MESSAGE(e.has_value(), q.text);
        CHECK_MESSAGE(check_explanation(*e, q).empty(), q.text);
        CHECK_MESSAGE(e->steps.size() == expected_step_count(q.ast), q.text);
        for (const auto& step : e->steps) CHECK_FALSE(step.sub_question.empty());
        ++explained;
    }
    CHECK(explained == 300);
}

TEST_CASE("uncovered constructs return nullopt and unknown names throw") {
    const Schema s = fixtures::load("company");
    const auto q = parse_sql(kOrJoinSql);
    CHECK_FALSE(rule_explain(q, s).has_value());
    CHECK_THROWS_WITH_AS(explain(q, s), "query is not covered by explanation templates", ExplanationError);
    const auto unknown = parse_sql("SELECT Staff.name FROM Staff");
    CHECK_THROWS_AS(rule_explain(unknown, employees_schema()), ExplanationError);
}

TEST_CASE("provider fallback for uncovered queries") {
    const Schema company = fixtures::load("company");
    const auto q = parse_sql(kOrJoinSql);

    SUBCASE("valid answer") {
        auto mock = std::make_shared<ScriptedMock>();
        mock->add({"### task: explanation_fallback", "", {kFallbackAnswer}});
        auto bridge = mock_bridge(mock);
        const auto e = explain_with_fallback(q, company, bridge);
        REQUIRE(e.steps.size() == 3);
        CHECK(e.source == ExplanationSource::LlmFallback);
        CHECK(fragment(q, e.steps[1]).rfind("INNER JOIN Departments ON", 0) == 0);
        CHECK(node_at(q.ast, e.steps[1].ast_path).kind == NodeKind::Join);
        CHECK(e.steps[0].ast_path == AstPath{1, 0});
        CHECK(check_explanation(e, q).empty());
        // The prompt carries a rule-based example.
        CHECK(mock->prompts().at(0).find("Filter employees from department 5") != std::string::npos);
    }
    SUBCASE("one bad answer is retried") {
        auto mock = std::make_shared<ScriptedMock>();
        mock->add({"### task: explanation_fallback", "", {kOutOfOrderAnswer, kFallbackAnswer}});
        auto bridge = mock_bridge(mock);
        const auto e = fallback_explain(q, company, bridge);
        CHECK(e.steps.size() == 3);
        CHECK(mock->calls() == 2);
        CHECK(mock->prompts().at(1).find("previous answer was rejected") != std::string::npos);
    }
    SUBCASE("two bad answers fail") {
        auto mock = std::make_shared<ScriptedMock>();
        mock->add({"### task: explanation_fallback", "", {kOutOfOrderAnswer}});
        auto bridge = mock_bridge(mock);
        CHECK_THROWS_WITH_AS(fallback_explain(q, company, bridge), "invalid explanation structure",
                             ExplanationError);
        CHECK(mock->calls() == 2);
    }
    SUBCASE("covered queries never call the provider") {
        auto mock = std::make_shared<ScriptedMock>();
        auto bridge = mock_bridge(mock);
        const auto covered = parse_sql("SELECT Employees.name FROM Employees");
        CHECK(explain_with_fallback(covered, employees_schema(), bridge).steps.size() == 2);
        CHECK(mock->calls() == 0);
    }
}

TEST_CASE("paraphrase keeps spans and falls back on structural changes") {
    const auto q = parse_sql("SELECT Employees.name FROM Employees WHERE Employees.salary > 50000");
    const auto e = explain(q, employees_schema());
    REQUIRE(e.steps.size() == 3);

    auto good = std::make_shared<ScriptedMock>();
    good->add({"### task: paraphrase", "",
               {R"(```json
{"steps":[{"index":1,"text":"Look at the staff list","sub_question":"Which list?"},
{"index":2,"text":"Keep people paid over $50,000","sub_question":"What pay?"},
{"index":3,"text":"Show their names","sub_question":"What to show?"}]}
```)"}});
    auto b1 = mock_bridge(good);
    const auto r = paraphrase_steps(e, q, employees_schema(), b1);
    CHECK_FALSE(r.warning.has_value());
    CHECK(r.explanation.source == ExplanationSource::LlmParaphrased);
    CHECK(r.explanation.steps[1].text == "Keep people paid over $50,000");
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(r.explanation.steps[i].sql_span == e.steps[i].sql_span);
        CHECK(r.explanation.steps[i].kind == e.steps[i].kind);
    }

    auto short_answer = std::make_shared<ScriptedMock>();
    short_answer->add({"### task: paraphrase", "", {R"({"steps":[{"text":"only one"}]})"}});
    auto b2 = mock_bridge(short_answer);
    const auto kept = paraphrase_steps(e, q, employees_schema(), b2);
    CHECK(kept.warning.has_value());
    CHECK(kept.explanation == e);

    auto silent = std::make_shared<ScriptedMock>();  // no entries: every call fails
    auto b3 = mock_bridge(silent);
    const auto failed = paraphrase_steps(e, q, employees_schema(), b3);
    CHECK(failed.warning.has_value());
    CHECK(failed.explanation == e);
}

TEST_CASE("explanation JSON round trip") {
    const Schema s = fixtures::load("company");
    const auto q = parse_sql(
        "SELECT Employees.name FROM Employees INNER JOIN Departments ON Employees.department_id = "
        "Departments.department_id WHERE Departments.budget < 100000 ORDER BY Employees.name");
    const auto e = explain(q, s);
    CHECK(explanation_from_json(explanation_to_json(e)) == e);
    CHECK(e.steps[2].text == "Filter departments with budget below $100,000");
    CHECK_THROWS_AS(explanation_from_json(R"({"steps":[{"kind":"NOPE","text":"x","sql_span":[0,1]}]})"),
                    DocumentError);
    CHECK_THROWS_AS(explanation_from_json("[1"), DocumentError);
}

TEST_CASE("check_explanation reports broken structure") {
    const auto q = parse_sql("SELECT Employees.name FROM Employees WHERE Employees.salary > 1");
    auto e = explain(q, employees_schema());
    auto swapped = e;
    std::swap(swapped.steps[0], swapped.steps[2]);
    CHECK_FALSE(check_explanation(swapped, q).empty());
    auto gap = e;
    gap.steps.erase(gap.steps.begin() + 1);
    gap.steps[1].index = 2;
    CHECK_FALSE(check_explanation(gap, q).empty());
    auto overlap = e;
    overlap.steps[1].sql_span.begin -= 3;
    CHECK_FALSE(check_explanation(overlap, q).empty());
}
