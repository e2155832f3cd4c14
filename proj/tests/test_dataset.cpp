#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "sqlpair/dataset.hpp"
#include "sqlpair/error.hpp"

using namespace sqlpair;

namespace {

const char* kSql = "SELECT Employees.name FROM Employees WHERE Employees.department_id = 5 AND Employees.salary > 50000";
const char* kQuestion = "Who are the employees in Department 5 with a salary higher than $50,000?";

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("sqlpair-ds-" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "-" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

// Deterministic timestamps, one second apart.
DatasetStore::Clock ticking() {
    auto n = std::make_shared<int>(0);
    return [n] { return fmt::format("2026-01-01T00:00:{:02d}Z", (*n)++ % 60); };
}

std::size_t find_span(std::string_view q, std::string_view needle) { return q.find(needle); }

AnnotatedPair full_pair() {
    const Schema schema = fixtures::employees_fixture().schema;
    const auto q = parse_sql(kSql);
    AnnotatedPair p;
    p.sql = kSql;
    p.question = kQuestion;
    p.schema_version = "employees-1";
    p.steps = explain(q, schema);
    const std::string question = kQuestion;
    const auto at = [&](std::string_view s) {
        const auto b = find_span(question, s);
        return Span{b, b + s.size()};
    };
    p.alignment = complete_alignment(question, 4,
                                     {{1, {at("employees")}},
                                      {2, {at("in Department 5")}},
                                      {3, {at("salary higher than $50,000")}},
                                      {4, {at("Who")}}});
    p.confidence = 92;
    p.provenance = Provenance::Automated;
    p.pipeline = {"explain", "generate_question", "align", "score_equivalence"};
    return p;
}

AnnotatedPair simple_pair(int i) {
    AnnotatedPair p;
    p.sql = fmt::format("SELECT Employees.name FROM Employees WHERE Employees.salary > {}", 1000 * i);
    p.question = fmt::format("Who earns more than {}?", 1000 * i);
    return p;
}

}  // namespace

TEST_CASE("status names") {
    for (auto s : {PairStatus::Pending, PairStatus::Accepted, PairStatus::Rejected})
        CHECK(parse_pair_status(to_string(s)) == s);
    for (auto p : {Provenance::Interactive, Provenance::Automated}) CHECK(parse_provenance(to_string(p)) == p);
    CHECK_FALSE(parse_pair_status("done"));
}

TEST_CASE("pair json round trip keeps every field") {
    auto p = full_pair();
    p.id = "pair-000007";
    p.status = PairStatus::Accepted;
    p.created_at = "2026-02-03T04:05:06Z";
    const auto text = pair_to_json(p);
    CHECK(pair_from_json(text) == p);
    CHECK(text.find(R"("confidence":92)") != std::string::npos);
    CHECK(text.find(R"("explanation_source":"rule_based")") != std::string::npos);
    CHECK(text.find("\"override\"") == std::string::npos);

    AnnotatedPair bare;
    bare.sql = "SELECT T.a FROM T";
    bare.question = "Show a.";
    CHECK(pair_from_json(pair_to_json(bare)) == bare);
    CHECK_THROWS_AS(pair_from_json(R"({"sql":"SELECT T.a FROM T"})"), DocumentError);
    CHECK_THROWS_AS(pair_from_json(R"({"sql":"SELECT T.a FROM T","question":"q","extra":1})"), DocumentError);
}

TEST_CASE("check_pair") {
    CHECK(check_pair(full_pair()).empty());
    auto bad = full_pair();
    bad.confidence = 101;
    CHECK(check_pair(bad).size() == 1);
    bad = full_pair();
    bad.sql = "SELECT FROM";
    CHECK_FALSE(check_pair(bad).empty());
    bad = full_pair();
    bad.steps->steps.pop_back();
    CHECK_FALSE(check_pair(bad).empty());
}

TEST_CASE("accepting a pair with missing steps needs an override") {
    auto p = full_pair();
    p.alignment = complete_alignment(kQuestion, 4, {{1, {{12, 21}}}, {3, {}}, {4, {{0, 3}}}});
    REQUIRE(p.alignment->unmapped_steps == std::vector<std::size_t>{2, 3});
    DatasetStore store({}, {}, ticking());
    CHECK_THROWS_AS(store.accept(p), ValidationError);
    CHECK(store.size() == 0);
    // Rejecting keeps the record of the problem.
    CHECK_NOTHROW(store.reject(p));
    p.override_missing = true;
    const auto id = store.accept(p);
    CHECK(store.find(id)->override_missing);
}

TEST_CASE("ids, canonical sql, filters and export") {
    DatasetStore store({}, {}, ticking());
    std::vector<std::string> ids;
    for (int i = 1; i <= 3; ++i) ids.push_back(store.accept(simple_pair(i)));
    for (int i = 4; i <= 5; ++i) ids.push_back(store.reject(simple_pair(i)));
    CHECK(ids == std::vector<std::string>{"pair-000001", "pair-000002", "pair-000003", "pair-000004", "pair-000005"});
    CHECK(store.pairs({PairStatus::Accepted}).size() == 3);
    CHECK(store.pairs({PairStatus::Rejected}).size() == 2);
    CHECK(store.pairs().size() == 5);

    auto lower = simple_pair(9);
    lower.sql = "select employees.name from Employees where Employees.salary>9000";
    const auto id = store.accept(lower);
    CHECK(store.find(id)->sql == parse_sql(lower.sql).text);
    CHECK(store.find(id)->created_at == "2026-01-01T00:00:05Z");

    auto dup = simple_pair(1);
    dup.id = "pair-000002";
    CHECK_THROWS_AS(store.accept(dup), StoreError);

    const auto accepted = store.export_dataset({PairStatus::Accepted});
    DatasetStore other({}, {}, ticking());
    const auto r = other.import_dataset(accepted);
    CHECK(r.loaded == 4);
    CHECK(r.errors.empty());
    CHECK(other.export_dataset() == accepted);
}

TEST_CASE("export, import, export is byte-identical and re-import reports duplicates") {
    DatasetStore a({}, {}, ticking());
    a.accept(full_pair());
    a.accept(simple_pair(2));
    a.reject(simple_pair(3));
    const auto first = a.export_dataset();

    DatasetStore b({}, {}, ticking());
    const auto r = b.import_dataset(first);
    CHECK(r.loaded == 3);
    CHECK(b.export_dataset() == first);
    CHECK(b.pairs() == a.pairs());

    const auto again = b.import_dataset(first);
    CHECK(again.loaded == 0);
    CHECK(again.duplicates == 3);
    CHECK(again.errors.size() == 3);
    CHECK(b.size() == 3);
}

TEST_CASE("import reports bad rows and loads the rest") {
    DatasetStore store({}, {}, ticking());
    const auto r = store.import_dataset(R"({"pairs":[
        {"sql":"SELECT T.a FROM T","question":"one"},
        {"sql":"SELECT T.a FROM T WHERE T.a = 1","question":"two"},
        {"id":"bad-1","sql":"SELECT FROM WHERE","question":"three"},
        {"sql":"SELECT T.b FROM T","question":"four","status":"accepted"},
        {"sql":"SELECT T.c FROM T","question":"five"}]})");
    CHECK(r.loaded == 4);
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].row == 2);
    CHECK(r.errors[0].id == "bad-1");
    CHECK(r.errors[0].reason.find("sql") != std::string::npos);
    CHECK(store.size() == 4);
    CHECK_THROWS_AS(store.import_dataset(R"({"rows":[]})"), DocumentError);
    CHECK_THROWS_AS(store.import_dataset("not json"), DocumentError);
}

TEST_CASE("pool snapshots are isolated from later accepts") {
    const auto bundled = load_bundled_pool(fixtures::read_file(fixtures::data_path("pool/bundled.json")));
    CHECK(bundled.size() >= 50);
    DatasetStore store({}, bundled, ticking());
    const auto before = store.pool_snapshot();
    CHECK(before->size() == bundled.size());
    store.accept(simple_pair(1));
    store.reject(simple_pair(2));
    const auto after = store.pool_snapshot();
    CHECK(before->size() == bundled.size());
    CHECK(after->size() == bundled.size() + 1);
    CHECK(after->back().id == "pair-000001");
    CHECK_THROWS_AS(load_bundled_pool(R"({"pairs":[{"id":"x","sql":"SELEC","question":"q"}]})"), DocumentError);
}

TEST_CASE("journal survives a reopen and drops a torn last line") {
    TempDir dir;
    const auto journal = dir.path / "pairs.jsonl";
    std::string exported;
    {
        DatasetStore store(journal, {}, ticking());
        store.accept(full_pair());
        store.accept(simple_pair(2));
        store.reject(simple_pair(3));
        exported = store.export_dataset();
    }
    {
        DatasetStore reopened(journal, {}, ticking());
        CHECK(reopened.size() == 3);
        CHECK(reopened.export_dataset() == exported);
        CHECK(reopened.pool_snapshot()->size() == 2);
        CHECK(reopened.accept(simple_pair(4)) == "pair-000004");
    }
    {
        std::ofstream out(journal, std::ios::app | std::ios::binary);
        out << R"({"id":"pair-000005","sql":"SELECT Emp)";
    }
    {
        DatasetStore recovered(journal, {}, ticking());
        CHECK(recovered.size() == 4);
        CHECK_FALSE(recovered.find("pair-000005"));
    }
    // The torn line was rewritten away.
    const auto text = fixtures::read_file(journal.string());
    CHECK(text.find("SELECT Emp\"") == std::string::npos);
    CHECK(text.back() == '\n');
    CHECK(DatasetStore(journal).size() == 4);

    // Corruption in the middle is not silently skipped.
    {
        std::ofstream out(journal, std::ios::trunc | std::ios::binary);
        out << "garbage\n" << pair_to_json(full_pair()) << "\n";
    }
    CHECK_THROWS_AS(DatasetStore{journal}, StoreError);
}

TEST_CASE("utc_now format") {
    const auto t = utc_now();
    REQUIRE(t.size() == 20);
    CHECK(t[4] == '-');
    CHECK(t[10] == 'T');
    CHECK(t.back() == 'Z');
}
