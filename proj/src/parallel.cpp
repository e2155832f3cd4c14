#include "sqlpair/parallel.hpp"

#include "sqlpair/error.hpp"
#include "sqlpair/rng.hpp"

namespace sqlpair::parallel {

std::vector<double> score_pool(const PostorderTree& query, std::span<const PoolEntry> pool) {
    std::vector<double> scores(pool.size());
    const auto n = static_cast<std::int64_t>(pool.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t i = 0; i < n; ++i) scores[i] = similarity(query, pool[i].tree);
    return scores;
}

std::vector<double> score_pool_serial(const PostorderTree& query, std::span<const PoolEntry> pool) {
    std::vector<double> scores(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) scores[i] = similarity(query, pool[i].tree);
    return scores;
}

std::vector<std::size_t> ted_all_pairs(std::span<const PostorderTree> trees) {
    const auto n = trees.size();
    std::vector<std::size_t> out(n * n, 0);
    const auto total = static_cast<std::int64_t>(n * n);
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t k = 0; k < total; ++k) {
        const auto i = static_cast<std::size_t>(k) / n, j = static_cast<std::size_t>(k) % n;
        out[k] = tree_edit_distance(trees[i], trees[j]);
    }
    return out;
}

std::vector<std::size_t> ted_all_pairs_serial(std::span<const PostorderTree> trees) {
    const auto n = trees.size();
    std::vector<std::size_t> out(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = tree_edit_distance(trees[i], trees[j]);
    return out;
}

namespace {

BatchSample sample_one(const Grammar& grammar, const Grounder& grounder, const SamplerConfig& config, std::size_t i) {
    Rng rng(stream_seed(config.rng_seed, i));
    BatchSample out;
    try {
        auto outcome = sample_query(grammar, grounder, config, rng);
        out.query = std::move(outcome.query);
        out.attempts = outcome.attempts;
        out.nonempty = outcome.nonempty;
    } catch (const SamplingError& e) {
        out.attempts = config.max_rejection_attempts;
        out.error = e.what();
    }
    return out;
}

bool count_one(const Grammar& grammar, const SamplerConfig& config, std::size_t i, ProductionCounts& counts) {
    Rng rng(stream_seed(config.rng_seed, i));
    try {
        count_productions(grammar, sample_structure(grammar, rng, config.optional_probabilities, config.max_expansions),
                          counts);
        return true;
    } catch (const SamplingError&) {
        return false;
    }
}

}  // namespace

std::vector<BatchSample> sample_batch(const Grammar& grammar, const Grounder& grounder, const SamplerConfig& config,
                                      std::size_t n) {
    std::vector<BatchSample> out(n);
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < count; ++i) out[i] = sample_one(grammar, grounder, config, static_cast<std::size_t>(i));
    return out;
}

std::vector<BatchSample> sample_batch_serial(const Grammar& grammar, const Grounder& grounder,
                                             const SamplerConfig& config, std::size_t n) {
    std::vector<BatchSample> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = sample_one(grammar, grounder, config, i);
    return out;
}

ProductionCounts structure_counts(const Grammar& grammar, const SamplerConfig& config, std::size_t n,
                                  std::size_t* failures) {
    ProductionCounts total;
    std::size_t failed = 0;
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel
    {
        ProductionCounts local;
        std::size_t local_failed = 0;
#pragma omp for schedule(static) nowait
        for (std::int64_t i = 0; i < count; ++i)
            if (!count_one(grammar, config, static_cast<std::size_t>(i), local)) ++local_failed;
#pragma omp critical
        {
            total.merge(local);
            failed += local_failed;
        }
    }
    if (failures) *failures = failed;
    return total;
}

ProductionCounts structure_counts_serial(const Grammar& grammar, const SamplerConfig& config, std::size_t n,
                                         std::size_t* failures) {
    ProductionCounts total;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (!count_one(grammar, config, i, total)) ++failed;
    if (failures) *failures = failed;
    return total;
}

}  // namespace sqlpair::parallel
