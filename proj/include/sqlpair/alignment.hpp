#pragma once

// Links explanation steps to substrings of the question, reports what is missing or
// redundant, and repairs the question by injection and removal.
//
// Ranges are [begin, end) byte offsets into the question. Questions are expected to be
// ASCII or at least to keep multi-byte characters out of the quoted substrings.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sqlpair/ast.hpp"
#include "sqlpair/explainer.hpp"
#include "sqlpair/llm.hpp"
#include "sqlpair/schema.hpp"

namespace sqlpair {

struct Token {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool word = false;     // false for punctuation
    bool content = false;  // word that is not a stopword
};

// Words (letters, digits, $, %, ', -, and , or . between digits) and single punctuation marks.
std::vector<Token> tokenize(std::string_view question);
bool is_stopword(std::string_view lower_word);

struct AlignmentMap {
    std::map<std::size_t, std::vector<Span>> step_spans;  // every step index 1..n is a key
    std::vector<std::size_t> unmapped_steps;
    std::vector<Span> unmapped_question_ranges;
    bool operator==(const AlignmentMap&) const = default;
};

// Fills unmapped_steps and unmapped_question_ranges from step_spans. An unmapped range is
// a maximal run of word tokens not overlapping any step range that contains at least one
// content token; punctuation and mapped tokens end a run.
AlignmentMap complete_alignment(std::string_view question, std::size_t step_count,
                                std::map<std::size_t, std::vector<Span>> step_spans);

// Problems with a map for this question, empty when valid.
std::vector<std::string> check_alignment(const AlignmentMap& map, std::string_view question, std::size_t step_count);

// Parses {"mapping":[{"step":i,"quote":"...","range":[s,e]}]}. Ranges that do not reproduce
// their quote snap to the nearest exact occurrence; entries whose quote is absent, whose
// step is out of range, or that overlap an earlier range of the same step are dropped.
// nullopt when the response has no usable mapping array.
std::optional<std::map<std::size_t, std::vector<Span>>> parse_mapping(std::string_view response,
                                                                      std::string_view question,
                                                                      std::size_t step_count);

// Two prompts: free-form analysis, then the structured mapping with that analysis in
// context. The mapping prompt is repeated once if unparseable, then ResponseFormatError.
AlignmentMap align(const std::string& question, const Explanation& steps, const SqlQuery& sql, const Schema& schema,
                   LlmBridge& bridge);

struct MisalignmentReport {
    std::vector<std::pair<std::size_t, std::string>> missing_steps;
    std::vector<std::pair<Span, std::string>> redundant_spans;
    bool empty() const { return missing_steps.empty() && redundant_spans.empty(); }
    bool operator==(const MisalignmentReport&) const = default;
};

MisalignmentReport detect_misalignments(const AlignmentMap& map, const Explanation& steps, std::string_view question);

// Provider revision for one missing step, trimmed. Throws AlignmentError when the step is
// not reported missing or the revision is empty.
std::string inject_text(const std::string& question, const AlignmentMap& map, const ExplanationStep& step,
                        const SqlQuery& sql, const Schema& schema, LlmBridge& bridge);

struct Revision {
    std::string question;
    AlignmentMap alignment;
};

// inject_text followed by align on the revised question.
Revision inject_step(const std::string& question, const AlignmentMap& map, const ExplanationStep& step,
                     const Explanation& steps, const SqlQuery& sql, const Schema& schema, LlmBridge& bridge);

// Cuts the ranges, collapses runs of spaces, drops spaces before . , ; : ! ? and trims.
// Throws AlignmentError on overlapping or out-of-bounds ranges or an empty result.
std::string remove_spans(std::string_view question, std::vector<Span> ranges);

struct RepairOutcome {
    std::string question;
    AlignmentMap alignment;
    std::size_t iterations = 0;
    std::vector<std::size_t> injected;  // step indices, in order
    std::size_t removed_spans = 0;
};

inline constexpr std::size_t kMaxRepairIterations = 2;

// Each iteration: inject every missing step in order, align, cut the redundant ranges,
// align again. Stops when the report is empty or after max_iterations.
RepairOutcome auto_repair(const std::string& question, const AlignmentMap& map, const Explanation& steps,
                          const SqlQuery& sql, const Schema& schema, LlmBridge& bridge,
                          std::size_t max_iterations = kMaxRepairIterations);

// {"steps":{"<idx>":[[s,e],...]},"missing":[idx,...],"redundant":[[s,e],...]}
std::string alignment_to_json(const AlignmentMap& map);
// Parses and re-derives the unmapped sets; throws DocumentError / ValidationError.
AlignmentMap alignment_from_json(std::string_view document, std::string_view question, std::size_t step_count);

}  // namespace sqlpair
