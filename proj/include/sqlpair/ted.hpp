#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sqlpair/ast.hpp"

namespace sqlpair {

// Plain labeled ordered tree, used where AST node kinds do not matter.
struct LabelTree {
    std::string label;
    std::vector<LabelTree> children;
    bool operator==(const LabelTree&) const = default;
};

// Postorder layout consumed by the Zhang-Shasha recurrence. Labels are kept as
// strings; equality is all the algorithm needs.
struct PostorderTree {
    std::vector<std::string> labels;   // postorder
    std::vector<std::size_t> leftmost;  // leftmost leaf descendant of each node
    std::vector<std::size_t> keyroots;  // ascending

    std::size_t size() const { return labels.size(); }
};

PostorderTree postorder(const AstNode& root);
PostorderTree postorder(const LabelTree& root);

// Unit-cost ordered tree edit distance (insert, delete, relabel).
std::size_t tree_edit_distance(const PostorderTree& a, const PostorderTree& b);
std::size_t tree_edit_distance(const AstNode& a, const AstNode& b);
std::size_t tree_edit_distance(const LabelTree& a, const LabelTree& b);

// 1 - ted / (|a| + |b|).
double similarity(const PostorderTree& a, const PostorderTree& b);
double similarity(const SqlQuery& a, const SqlQuery& b);

struct RetrieverConfig {
    std::size_t top_k = 5;
    double similarity_threshold = 0.5;
};

struct PoolEntry {
    std::string id;
    SqlQuery query;
    std::string question;
    PostorderTree tree;
};

PoolEntry make_pool_entry(std::string id, const SqlQuery& query, std::string question);

struct Retrieved {
    std::size_t pool_index;
    double similarity;
};

// Entries with similarity >= threshold, best first, ties in pool order, at most top_k.
std::vector<Retrieved> retrieve_similar(const SqlQuery& query, std::span<const PoolEntry> pool,
                                        const RetrieverConfig& config = {});

// Ranking step shared by the serial and parallel scorers.
std::vector<Retrieved> rank_scores(std::span<const double> scores, const RetrieverConfig& config);

}  // namespace sqlpair
