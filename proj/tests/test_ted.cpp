#include <doctest.h>

#include "sqlpair/parallel.hpp"
#include "sqlpair/ted.hpp"

using namespace sqlpair;

namespace {

LabelTree leaf(std::string l) { return {std::move(l), {}}; }
LabelTree node(std::string l, std::vector<LabelTree> kids) { return {std::move(l), std::move(kids)}; }

}  // namespace

TEST_CASE("identity and single relabel") {
    const auto t = node("a", {leaf("b"), node("c", {leaf("d")})});
    CHECK(tree_edit_distance(t, t) == 0);
    CHECK(tree_edit_distance(leaf("a"), leaf("b")) == 1);
}

TEST_CASE("classic Zhang-Shasha example") {
    // f(d(a, c(b)), e) vs f(c(d(a, b)), e): distance 2.
    const auto a = node("f", {node("d", {leaf("a"), node("c", {leaf("b")})}), leaf("e")});
    const auto b = node("f", {node("c", {node("d", {leaf("a"), leaf("b")})}), leaf("e")});
    CHECK(tree_edit_distance(a, b) == 2);
    CHECK(tree_edit_distance(b, a) == 2);
}

TEST_CASE("insert and delete whole subtrees") {
    const auto a = leaf("a");
    const auto b = node("a", {leaf("b"), leaf("c"), node("d", {leaf("e")})});
    CHECK(tree_edit_distance(a, b) == 4);
}

TEST_CASE("one changed literal costs one relabel") {
    const auto a = parse_sql("SELECT T.a FROM T WHERE T.b = 1");
    const auto b = parse_sql("SELECT T.a FROM T WHERE T.b = 2");
    CHECK(tree_edit_distance(a.ast, b.ast) == 1);
    const double n = static_cast<double>(a.ast.size());
    CHECK(similarity(a, b) == doctest::Approx(1.0 - 1.0 / (2.0 * n)).epsilon(1e-12));
    CHECK(similarity(a, a) == 1.0);
}

TEST_CASE("similarity stays in [0,1] for disjoint labels") {
    const auto a = node("x", {leaf("y")});
    const auto b = node("p", {leaf("q"), leaf("r")});
    const double s = similarity(postorder(a), postorder(b));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
}

TEST_CASE("parallel and serial kernels agree") {
    std::vector<PostorderTree> trees;
    for (const char* sql : {"SELECT T.a FROM T", "SELECT T.b FROM T WHERE T.a = 3", "SELECT COUNT(T.a) FROM T GROUP BY T.b",
                            "SELECT U.x FROM U INNER JOIN T ON U.id = T.id ORDER BY U.x DESC"})
        trees.push_back(postorder(parse_sql(sql).ast));
    CHECK(parallel::ted_all_pairs(trees) == parallel::ted_all_pairs_serial(trees));

    std::vector<PoolEntry> pool;
    for (const char* sql : {"SELECT T.a FROM T", "SELECT T.b FROM T WHERE T.a = 3"})
        pool.push_back(make_pool_entry(sql, parse_sql(sql), "q"));
    const auto q = postorder(parse_sql("SELECT T.a FROM T WHERE T.a = 4").ast);
    CHECK(parallel::score_pool(q, pool) == parallel::score_pool_serial(q, pool));
}

TEST_CASE("retrieval ranks, filters and caps") {
    const std::vector<double> scores{0.4, 0.9, 0.5, 0.9, 0.7, 0.6, 0.55, 0.3};
    const auto top = rank_scores(scores, {});
    REQUIRE(top.size() == 5);
    CHECK(top[0].pool_index == 1);
    CHECK(top[1].pool_index == 3);
    CHECK(top[2].pool_index == 4);
    CHECK(top[3].pool_index == 5);
    CHECK(top[4].pool_index == 6);
    CHECK(rank_scores(scores, {5, 0.95}).empty());
}
