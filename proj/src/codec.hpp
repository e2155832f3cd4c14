#pragma once

// JSON forms shared by the store, the pipeline and the HTTP service.

#include "json_util.hpp"
#include "sqlpair/alignment.hpp"
#include "sqlpair/explainer.hpp"

namespace sqlpair::detail {

// {"source":..., "steps":[{index, kind, text, sub_question, sql_span, ast_path, entities}]}
json explanation_json(const Explanation& e);
Explanation explanation_from(const json& j, const std::string& path);

// {"steps":{"<idx>":[[s,e]]},"missing":[...],"redundant":[[s,e]]}; the unmapped sets are
// re-derived and must agree with the document when present.
json alignment_json(const AlignmentMap& map);
AlignmentMap alignment_from(const json& j, const std::string& path, std::string_view question, std::size_t step_count);

}  // namespace sqlpair::detail
