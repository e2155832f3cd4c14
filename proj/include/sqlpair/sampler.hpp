#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sqlpair/ast.hpp"
#include "sqlpair/database.hpp"
#include "sqlpair/grammar.hpp"
#include "sqlpair/rng.hpp"

namespace sqlpair {

struct SamplerConfig {
    std::uint64_t rng_seed = 0;
    std::size_t max_rejection_attempts = 20;
    bool require_nonempty_result = true;
    // Overrides of the grammar's optional-clause probabilities, keyed WHERE / GROUP_BY / ORDER_BY / SORT_DIRECTION.
    std::map<std::string, double> optional_probabilities;
    std::size_t max_expansions = 10000;
};

// Binds skeletons to one schema and database. Construction precomputes per-column value
// pools; instances are read-only afterwards and may be shared between threads.
class Grounder {
public:
    explicit Grounder(const SandboxDatabase& db);
    ~Grounder();
    Grounder(const Grounder&) = delete;
    Grounder& operator=(const Grounder&) = delete;

    // Interprets the derivation by its nonterminal names (SelectClause, ColumnList, Column,
    // FromClause, JoinClause, JoinType, JoinCondition, WhereClause, Condition, GroupByClause,
    // OrderByClause, SortDirection, AggregateFunction, Operator, Value). The emitted query
    // keeps every production choice of the derivation. Throws GroundingError when the
    // schema cannot host the skeleton.
    SqlQuery ground(const Derivation& skeleton, Rng& rng) const;

    const SandboxDatabase& database() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

SqlQuery ground(const Derivation& skeleton, const SandboxDatabase& db, Rng& rng);

struct SampleOutcome {
    SqlQuery query;
    std::size_t attempts = 0;
    bool nonempty = false;
};

// sample_structure + ground with rejection (see SamplerConfig). Throws SamplingError when
// no executable query was found.
SampleOutcome sample_query(const Grammar& grammar, const Grounder& grounder, const SamplerConfig& config, Rng& rng);
SqlQuery sample_query(const Grammar& grammar, const SandboxDatabase& db, const SamplerConfig& config, Rng& rng);

struct LearnResult {
    Grammar grammar;
    std::size_t used = 0;
    std::size_t skipped = 0;
    std::vector<std::string> skipped_reasons;  // one per skipped query
    bool empty_corpus = false;
};

// Production uses recovered from a parsed query. Throws ValidationError naming the
// first construct the grammar cannot derive.
ProductionCounts derivation_counts(const Grammar& grammar, const AstNode& query);

// Add-one smoothed maximum likelihood: (uses + 1) / (total + #productions) per nonterminal,
// and (present + 1) / (offered + 2) for optional clauses.
LearnResult learn_probabilities(const Grammar& grammar, const std::vector<SqlQuery>& corpus);

}  // namespace sqlpair
