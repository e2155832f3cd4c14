#pragma once

// Batch kernels. Each has an OpenMP version (used by the library) and a serial
// reference with identical output, kept for tests and benchmarks. Outputs never
// depend on the thread count: every item owns its slot and its own RNG stream.

#include <cstdint>
#include <span>
#include <vector>

#include "sqlpair/grammar.hpp"
#include "sqlpair/sampler.hpp"
#include "sqlpair/ted.hpp"

namespace sqlpair::parallel {

std::vector<double> score_pool(const PostorderTree& query, std::span<const PoolEntry> pool);
std::vector<double> score_pool_serial(const PostorderTree& query, std::span<const PoolEntry> pool);

// Row-major n x n distance matrix.
std::vector<std::size_t> ted_all_pairs(std::span<const PostorderTree> trees);
std::vector<std::size_t> ted_all_pairs_serial(std::span<const PostorderTree> trees);

// Item i is drawn from Rng(stream_seed(config.rng_seed, i)). A failed item keeps an
// empty query text and the error message.
struct BatchSample {
    SqlQuery query;
    std::size_t attempts = 0;
    bool nonempty = false;
    std::string error;
};

std::vector<BatchSample> sample_batch(const Grammar& grammar, const Grounder& grounder, const SamplerConfig& config,
                                      std::size_t n);
std::vector<BatchSample> sample_batch_serial(const Grammar& grammar, const Grounder& grounder,
                                             const SamplerConfig& config, std::size_t n);

// Production tallies over n structure-only derivations, same seeding scheme.
// Derivations that hit the expansion cap are counted in `failures`.
ProductionCounts structure_counts(const Grammar& grammar, const SamplerConfig& config, std::size_t n,
                                  std::size_t* failures = nullptr);
ProductionCounts structure_counts_serial(const Grammar& grammar, const SamplerConfig& config, std::size_t n,
                                         std::size_t* failures = nullptr);

}  // namespace sqlpair::parallel
