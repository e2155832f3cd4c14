#include "sqlpair/ted.hpp"

#include <algorithm>
#include <stdexcept>

#include "sqlpair/parallel.hpp"

namespace sqlpair {

namespace {

template <class Node, class LabelOf>
std::size_t walk(const Node& n, PostorderTree& t, LabelOf label_of) {
    std::size_t leftmost = static_cast<std::size_t>(-1);
    for (const auto& c : n.children) {
        const auto child_leftmost = walk(c, t, label_of);
        if (leftmost == static_cast<std::size_t>(-1)) leftmost = child_leftmost;
    }
    const auto id = t.labels.size();
    if (leftmost == static_cast<std::size_t>(-1)) leftmost = id;
    t.labels.push_back(label_of(n));
    t.leftmost.push_back(leftmost);
    return leftmost;
}

void compute_keyroots(PostorderTree& t) {
    // A keyroot is the highest node for each distinct leftmost leaf.
    std::vector<char> seen(t.size(), 0);
    for (std::size_t i = t.size(); i-- > 0;) {
        if (!seen[t.leftmost[i]]) {
            seen[t.leftmost[i]] = 1;
            t.keyroots.push_back(i);
        }
    }
    std::sort(t.keyroots.begin(), t.keyroots.end());
}

}  // namespace

PostorderTree postorder(const AstNode& root) {
    PostorderTree t;
    walk(root, t, [](const AstNode& n) { return n.label(); });
    compute_keyroots(t);
    return t;
}

PostorderTree postorder(const LabelTree& root) {
    PostorderTree t;
    walk(root, t, [](const LabelTree& n) { return n.label; });
    compute_keyroots(t);
    return t;
}

std::size_t tree_edit_distance(const PostorderTree& a, const PostorderTree& b) {
    const std::size_t n = a.size(), m = b.size();
    if (n == 0) return m;
    if (m == 0) return n;
    std::vector<std::size_t> td(n * m, 0);
    std::vector<std::size_t> fd((n + 1) * (m + 1), 0);
    for (auto i : a.keyroots) {
        for (auto j : b.keyroots) {
            const std::size_t li = a.leftmost[i], lj = b.leftmost[j];
            const std::size_t rows = i - li + 2, cols = j - lj + 2;
            // fd is indexed relative to (li-1, lj-1).
            auto F = [&](std::size_t x, std::size_t y) -> std::size_t& { return fd[x * cols + y]; };
            F(0, 0) = 0;
            for (std::size_t x = 1; x < rows; ++x) F(x, 0) = F(x - 1, 0) + 1;
            for (std::size_t y = 1; y < cols; ++y) F(0, y) = F(0, y - 1) + 1;
            for (std::size_t x = 1; x < rows; ++x) {
                const std::size_t ai = li + x - 1;
                for (std::size_t y = 1; y < cols; ++y) {
                    const std::size_t bj = lj + y - 1;
                    const std::size_t del = F(x - 1, y) + 1;
                    const std::size_t ins = F(x, y - 1) + 1;
                    if (a.leftmost[ai] == li && b.leftmost[bj] == lj) {
                        const std::size_t rel = F(x - 1, y - 1) + (a.labels[ai] == b.labels[bj] ? 0 : 1);
                        F(x, y) = std::min({del, ins, rel});
                        td[ai * m + bj] = F(x, y);
                    } else {
                        const std::size_t px = a.leftmost[ai] - li, py = b.leftmost[bj] - lj;
                        F(x, y) = std::min({del, ins, F(px, py) + td[ai * m + bj]});
                    }
                }
            }
        }
    }
    return td[(n - 1) * m + (m - 1)];
}

std::size_t tree_edit_distance(const AstNode& a, const AstNode& b) {
    return tree_edit_distance(postorder(a), postorder(b));
}

std::size_t tree_edit_distance(const LabelTree& a, const LabelTree& b) {
    return tree_edit_distance(postorder(a), postorder(b));
}

double similarity(const PostorderTree& a, const PostorderTree& b) {
    const auto total = a.size() + b.size();
    if (total == 0) return 1.0;
    return 1.0 - static_cast<double>(tree_edit_distance(a, b)) / static_cast<double>(total);
}

double similarity(const SqlQuery& a, const SqlQuery& b) { return similarity(postorder(a.ast), postorder(b.ast)); }

PoolEntry make_pool_entry(std::string id, const SqlQuery& query, std::string question) {
    return {std::move(id), query, std::move(question), postorder(query.ast)};
}

std::vector<Retrieved> rank_scores(std::span<const double> scores, const RetrieverConfig& config) {
    if (!(config.similarity_threshold >= 0.0 && config.similarity_threshold <= 1.0))
        throw std::invalid_argument("similarity_threshold must lie in [0,1]");
    std::vector<Retrieved> out;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] >= config.similarity_threshold) out.push_back({i, scores[i]});
    std::stable_sort(out.begin(), out.end(),
                     [](const Retrieved& x, const Retrieved& y) { return x.similarity > y.similarity; });
    if (out.size() > config.top_k) out.resize(config.top_k);
    return out;
}

std::vector<Retrieved> retrieve_similar(const SqlQuery& query, std::span<const PoolEntry> pool,
                                        const RetrieverConfig& config) {
    const auto tree = postorder(query.ast);
    const auto scores = parallel::score_pool(tree, pool);
    return rank_scores(scores, config);
}

}  // namespace sqlpair
