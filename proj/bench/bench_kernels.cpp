// Serial reference vs OpenMP for each batch kernel. Set OMP_NUM_THREADS to vary the team.

#include <fstream>
#include <sstream>

#include <benchmark/benchmark.h>

#include "sqlpair/database.hpp"
#include "sqlpair/diversity.hpp"
#include "sqlpair/parallel.hpp"

using namespace sqlpair;

namespace {

struct Corpus {
    SandboxDatabase db;
    Grammar grammar = default_grammar();
    std::unique_ptr<Grounder> grounder;
    std::vector<SqlQuery> queries;
    std::vector<PoolEntry> pool;
    std::vector<PostorderTree> trees;

    Corpus() {
        std::ifstream in(std::string(SQLPAIR_DATA_DIR) + "/schemas/company.json");
        std::ostringstream ss;
        ss << in.rdbuf();
        PopulationConfig pc;
        pc.default_count = 60;
        pc.rng_seed = 1;
        db = populate(load_schema(ss.str()), pc);
        grounder = std::make_unique<Grounder>(db);
        SamplerConfig sc;
        sc.rng_seed = 2;
        for (auto& s : parallel::sample_batch(grammar, *grounder, sc, 400)) {
            if (!s.error.empty()) continue;
            pool.push_back(make_pool_entry("b" + std::to_string(queries.size()), s.query, ""));
            trees.push_back(pool.back().tree);
            queries.push_back(std::move(s.query));
        }
    }
};

const Corpus& corpus() {
    static const Corpus c;
    return c;
}

template <bool Parallel>
void BM_ScorePool(benchmark::State& state) {
    const auto& c = corpus();
    const std::span<const PoolEntry> pool(c.pool.data(), std::min<std::size_t>(state.range(0), c.pool.size()));
    for (auto _ : state) {
        auto r = Parallel ? parallel::score_pool(c.trees[0], pool) : parallel::score_pool_serial(c.trees[0], pool);
        benchmark::DoNotOptimize(r);
    }
    state.SetItemsProcessed(state.iterations() * pool.size());
}

template <bool Parallel>
void BM_TedAllPairs(benchmark::State& state) {
    const auto& c = corpus();
    const std::span<const PostorderTree> trees(c.trees.data(), std::min<std::size_t>(state.range(0), c.trees.size()));
    for (auto _ : state) {
        auto r = Parallel ? parallel::ted_all_pairs(trees) : parallel::ted_all_pairs_serial(trees);
        benchmark::DoNotOptimize(r);
    }
    state.SetItemsProcessed(state.iterations() * trees.size() * trees.size());
}

template <bool Parallel>
void BM_SampleBatch(benchmark::State& state) {
    const auto& c = corpus();
    SamplerConfig sc;
    sc.rng_seed = 9;
    for (auto _ : state) {
        auto r = Parallel ? parallel::sample_batch(c.grammar, *c.grounder, sc, state.range(0))
                          : parallel::sample_batch_serial(c.grammar, *c.grounder, sc, state.range(0));
        benchmark::DoNotOptimize(r);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_StructureCounts(benchmark::State& state) {
    const auto& c = corpus();
    SamplerConfig sc;
    sc.rng_seed = 9;
    for (auto _ : state) {
        auto r = Parallel ? parallel::structure_counts(c.grammar, sc, state.range(0))
                          : parallel::structure_counts_serial(c.grammar, sc, state.range(0));
        benchmark::DoNotOptimize(r);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_ExtractFeatures(benchmark::State& state) {
    const auto& c = corpus();
    for (auto _ : state) {
        auto r = Parallel ? extract_features_batch(c.queries) : extract_features_batch_serial(c.queries);
        benchmark::DoNotOptimize(r);
    }
    state.SetItemsProcessed(state.iterations() * c.queries.size());
}

}  // namespace

BENCHMARK(BM_ScorePool<false>)->Arg(100)->Arg(400);
BENCHMARK(BM_ScorePool<true>)->Arg(100)->Arg(400);
BENCHMARK(BM_TedAllPairs<false>)->Arg(30)->Arg(80);
BENCHMARK(BM_TedAllPairs<true>)->Arg(30)->Arg(80);
BENCHMARK(BM_SampleBatch<false>)->Arg(200);
BENCHMARK(BM_SampleBatch<true>)->Arg(200);
BENCHMARK(BM_StructureCounts<false>)->Arg(10000);
BENCHMARK(BM_StructureCounts<true>)->Arg(10000);
BENCHMARK(BM_ExtractFeatures<false>);
BENCHMARK(BM_ExtractFeatures<true>);

BENCHMARK_MAIN();
