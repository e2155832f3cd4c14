#pragma once

// Step-by-step explanation of a query. Steps run FROM, each JOIN, each WHERE comparison,
// GROUP BY, ORDER BY and finally SELECT, and each owns one span of the canonical SQL text.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlpair/ast.hpp"
#include "sqlpair/llm.hpp"
#include "sqlpair/schema.hpp"

namespace sqlpair {

enum class StepKind { From, Join, WhereCond, GroupBy, OrderBy, Select };

std::string_view to_string(StepKind kind);  // FROM, JOIN, WHERE_COND, GROUP_BY, ORDER_BY, SELECT
std::optional<StepKind> parse_step_kind(std::string_view text);

// Offsets into the step text of a table, column or value mention, plus the query lexeme.
struct EntityMention {
    enum class Kind { Table, Column, Value };
    Kind kind = Kind::Table;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string lexeme;
    bool operator==(const EntityMention&) const = default;
};

struct ExplanationStep {
    std::size_t index = 0;  // 1-based
    StepKind kind = StepKind::From;
    std::string text;
    std::string sub_question;
    Span sql_span;
    AstPath ast_path;  // owning node: base TableRef, Join, Comparison, GroupBy, OrderBy or Select
    std::vector<EntityMention> entities;
    bool operator==(const ExplanationStep&) const = default;
};

enum class ExplanationSource { RuleBased, LlmFallback, LlmParaphrased };
std::string_view to_string(ExplanationSource source);

struct Explanation {
    std::vector<ExplanationStep> steps;
    ExplanationSource source = ExplanationSource::RuleBased;
    bool operator==(const Explanation&) const = default;
};

// Rule templates; nullopt when some part of the query has no template (for example a
// literal on the left of a comparison or OR inside ON). Throws ExplanationError when an
// identifier does not resolve against the schema.
std::optional<Explanation> rule_explain(const SqlQuery& query, const Schema& schema);

// rule_explain or ExplanationError("query is not covered by explanation templates").
Explanation explain(const SqlQuery& query, const Schema& schema);

// Asks the provider for steps, validates order, spans and coverage, retries once, then
// throws ExplanationError("invalid explanation structure").
Explanation fallback_explain(const SqlQuery& query, const Schema& schema, LlmBridge& bridge,
                             const std::vector<std::pair<SqlQuery, Explanation>>& examples = {});

// Rules first, provider only when the rules do not cover the query.
Explanation explain_with_fallback(const SqlQuery& query, const Schema& schema, LlmBridge& bridge);

struct ParaphraseResult {
    Explanation explanation;
    std::optional<std::string> warning;  // set when the original was kept
};

// Rewrites text and sub-questions only. Any provider failure or structural change keeps the
// original explanation and reports a warning.
ParaphraseResult paraphrase_steps(const Explanation& explanation, const SqlQuery& query, const Schema& schema,
                                  LlmBridge& bridge);

// Step count implied by the query: FROM + joins + WHERE comparisons + GROUP BY + ORDER BY + SELECT.
std::size_t expected_step_count(const AstNode& query);

// Checks ordering, span bounds, disjointness and coverage; returns the problems found.
std::vector<std::string> check_explanation(const Explanation& explanation, const SqlQuery& query);

std::vector<ExplanationStepView> step_views(const Explanation& explanation);

// [{index, kind, text, sub_question, sql_span:[s,e], entities:[...]}]
std::string explanation_to_json(const Explanation& explanation);
Explanation explanation_from_json(std::string_view document);

}  // namespace sqlpair
