#include "sqlpair/alignment.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>

#include <fmt/format.h>

#include "codec.hpp"
#include "sqlpair/error.hpp"

namespace sqlpair {

namespace {

constexpr std::string_view kStopwords[] = {
    // articles
    "a", "an", "the",
    // prepositions
    "about", "above", "across", "after", "against", "along", "among", "around", "at", "before", "behind", "below",
    "beneath", "beside", "between", "beyond", "by", "during", "for", "from", "in", "inside", "into", "of", "off", "on",
    "onto", "over", "per", "than", "through", "to", "toward", "under", "upon", "with", "within", "without",
    // auxiliaries
    "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "do", "does", "did", "will",
    "would", "shall", "should", "can", "could", "may", "might", "must"};

bool word_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '$' || c == '%' || c == '\'' || c == '-' || c == '_' || u >= 0x80;
}

bool overlaps(Span a, Span b) { return a.begin < b.end && b.begin < a.end; }

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string render_steps(const Explanation& steps) {
    std::string out;
    for (const auto& s : steps.steps) out += fmt::format("{}. {}\n", s.index, s.text);
    return out;
}

}  // namespace

bool is_stopword(std::string_view lower_word) {
    return std::find(std::begin(kStopwords), std::end(kStopwords), lower_word) != std::end(kStopwords);
}

std::vector<Token> tokenize(std::string_view q) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < q.size()) {
        if (std::isspace(static_cast<unsigned char>(q[i]))) {
            ++i;
            continue;
        }
        if (!word_char(q[i])) {
            out.push_back({i, i + 1, false, false});
            ++i;
            continue;
        }
        const std::size_t b = i;
        while (i < q.size()) {
            if (word_char(q[i])) {
                ++i;
            } else if ((q[i] == ',' || q[i] == '.') && i > b && i + 1 < q.size() &&
                       std::isdigit(static_cast<unsigned char>(q[i - 1])) &&
                       std::isdigit(static_cast<unsigned char>(q[i + 1]))) {
                ++i;  // 50,000 and 3.5 stay one token
            } else {
                break;
            }
        }
        const auto lower = to_lower(q.substr(b, i - b));
        out.push_back({b, i, true, !is_stopword(lower)});
    }
    return out;
}

AlignmentMap complete_alignment(std::string_view question, std::size_t step_count,
                                std::map<std::size_t, std::vector<Span>> step_spans) {
    AlignmentMap map;
    for (std::size_t i = 1; i <= step_count; ++i) {
        auto& spans = step_spans[i];
        std::sort(spans.begin(), spans.end(), [](Span a, Span b) { return a.begin < b.begin; });
        if (spans.empty()) map.unmapped_steps.push_back(i);
    }
    for (auto it = step_spans.begin(); it != step_spans.end();) {
        if (it->first == 0 || it->first > step_count) it = step_spans.erase(it);
        else ++it;
    }
    map.step_spans = std::move(step_spans);

    std::vector<Span> mapped;
    for (const auto& [idx, spans] : map.step_spans) mapped.insert(mapped.end(), spans.begin(), spans.end());
    const auto covered = [&](const Token& t) {
        return std::any_of(mapped.begin(), mapped.end(), [&](Span s) { return overlaps(s, {t.begin, t.end}); });
    };

    std::optional<Span> run;
    bool run_has_content = false;
    const auto flush = [&] {
        if (run && run_has_content) map.unmapped_question_ranges.push_back(*run);
        run.reset();
        run_has_content = false;
    };
    for (const auto& t : tokenize(question)) {
        if (!t.word || covered(t)) {
            flush();
            continue;
        }
        if (run) run->end = t.end;
        else run = Span{t.begin, t.end};
        run_has_content = run_has_content || t.content;
    }
    flush();
    return map;
}

std::vector<std::string> check_alignment(const AlignmentMap& map, std::string_view question, std::size_t step_count) {
    std::vector<std::string> problems;
    for (const auto& [idx, spans] : map.step_spans) {
        if (idx == 0 || idx > step_count) problems.push_back(fmt::format("step {} does not exist", idx));
        for (std::size_t k = 0; k < spans.size(); ++k) {
            if (spans[k].begin >= spans[k].end || spans[k].end > question.size())
                problems.push_back(fmt::format("step {} has a range outside the question", idx));
            for (std::size_t j = 0; j < k; ++j)
                if (overlaps(spans[j], spans[k])) problems.push_back(fmt::format("step {} has overlapping ranges", idx));
        }
    }
    const auto derived = complete_alignment(question, step_count, map.step_spans);
    if (derived.unmapped_steps != map.unmapped_steps) problems.push_back("missing steps do not match the step ranges");
    if (derived.unmapped_question_ranges != map.unmapped_question_ranges)
        problems.push_back("redundant ranges do not match the step ranges");
    return problems;
}

std::optional<std::map<std::size_t, std::vector<Span>>> parse_mapping(std::string_view response,
                                                                      std::string_view question,
                                                                      std::size_t step_count) {
    const auto block = extract_structured_block(response);
    if (!block) return std::nullopt;
    detail::json root;
    try {
        root = detail::json::parse(*block);
    } catch (const detail::json::exception&) {
        return std::nullopt;
    }
    if (!root.is_object() || !root.contains("mapping") || !root.at("mapping").is_array()) return std::nullopt;
    std::map<std::size_t, std::vector<Span>> out;
    for (const auto& e : root.at("mapping")) {
        if (!e.is_object() || !e.contains("step") || !e.at("step").is_number_integer() || !e.contains("quote") ||
            !e.at("quote").is_string())
            continue;
        const auto step = e.at("step").get<long long>();
        if (step < 1 || static_cast<std::size_t>(step) > step_count) continue;
        const auto quote = e.at("quote").get<std::string>();
        if (quote.empty()) continue;
        long long hint = 0;
        if (e.contains("range") && e.at("range").is_array() && !e.at("range").empty() && e.at("range")[0].is_number())
            hint = e.at("range")[0].get<long long>();
        // Nearest exact occurrence of the quote to the reported start.
        std::optional<std::size_t> best;
        for (auto pos = question.find(quote); pos != std::string_view::npos; pos = question.find(quote, pos + 1)) {
            if (!best || std::llabs(static_cast<long long>(pos) - hint) < std::llabs(static_cast<long long>(*best) - hint))
                best = pos;
        }
        if (!best) continue;
        const Span span{*best, *best + quote.size()};
        auto& spans = out[static_cast<std::size_t>(step)];
        if (std::any_of(spans.begin(), spans.end(), [&](Span s) { return overlaps(s, span); })) continue;
        spans.push_back(span);
    }
    return out;
}

AlignmentMap align(const std::string& question, const Explanation& steps, const SqlQuery& sql, const Schema& schema,
                   LlmBridge& bridge) {
    if (steps.steps.empty()) throw AlignmentError("alignment needs at least one explanation step");
    if (trim(question).empty()) throw AlignmentError("alignment needs a non-empty question");
    const auto step_text = render_steps(steps);
    const auto analysis = bridge.invoke(render_prompt(TemplateName::AlignmentAnalysis, {{"schema", describe_schema(schema)},
                                                                                        {"sql", sql.text},
                                                                                        {"steps", step_text},
                                                                                        {"question", question}}),
                                        kJudgeTemperature);
    const auto prompt = render_prompt(TemplateName::AlignmentMapping,
                                      {{"steps", step_text}, {"question", question}, {"analysis", trim(analysis)}});
    const auto n = steps.steps.size();
    auto mapping = parse_mapping(bridge.invoke(prompt, kJudgeTemperature), question, n);
    if (!mapping) {
        mapping = parse_mapping(
            bridge.invoke(prompt + "\nYour previous reply could not be read. Reply only with the fenced json block.\n",
                          kJudgeTemperature),
            question, n);
    }
    if (!mapping) throw ResponseFormatError("alignment mapping is unparseable");
    return complete_alignment(question, n, std::move(*mapping));
}

MisalignmentReport detect_misalignments(const AlignmentMap& map, const Explanation& steps, std::string_view question) {
    MisalignmentReport r;
    for (auto idx : map.unmapped_steps) {
        const auto it = std::find_if(steps.steps.begin(), steps.steps.end(),
                                     [&](const ExplanationStep& s) { return s.index == idx; });
        r.missing_steps.emplace_back(idx, it == steps.steps.end() ? std::string() : it->text);
    }
    for (auto s : map.unmapped_question_ranges)
        r.redundant_spans.emplace_back(s, std::string(question.substr(s.begin, s.end - s.begin)));
    return r;
}

std::string inject_text(const std::string& question, const AlignmentMap& map, const ExplanationStep& step,
                        const SqlQuery& sql, const Schema& schema, LlmBridge& bridge) {
    if (std::find(map.unmapped_steps.begin(), map.unmapped_steps.end(), step.index) == map.unmapped_steps.end())
        throw AlignmentError(fmt::format("step {} is already expressed by the question", step.index));
    auto revised = trim(bridge.invoke(render_prompt(TemplateName::Inject, {{"schema", describe_schema(schema)},
                                                                            {"sql", sql.text},
                                                                            {"question", question},
                                                                            {"step", step.text}}),
                                      kGenerationTemperature));
    if (revised.empty()) throw AlignmentError("provider returned an empty revision");
    return revised;
}

Revision inject_step(const std::string& question, const AlignmentMap& map, const ExplanationStep& step,
                     const Explanation& steps, const SqlQuery& sql, const Schema& schema, LlmBridge& bridge) {
    Revision r;
    r.question = inject_text(question, map, step, sql, schema, bridge);
    r.alignment = align(r.question, steps, sql, schema, bridge);
    return r;
}

std::string remove_spans(std::string_view question, std::vector<Span> ranges) {
    std::sort(ranges.begin(), ranges.end(), [](Span a, Span b) { return a.begin < b.begin; });
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        if (ranges[i].begin > ranges[i].end || ranges[i].end > question.size())
            throw AlignmentError(fmt::format("range [{}, {}) is outside the question", ranges[i].begin, ranges[i].end));
        if (i > 0 && ranges[i].begin < ranges[i - 1].end)
            throw AlignmentError(fmt::format("ranges [{}, {}) and [{}, {}) overlap", ranges[i - 1].begin,
                                             ranges[i - 1].end, ranges[i].begin, ranges[i].end));
    }
    std::string cut;
    std::size_t pos = 0;
    for (auto r : ranges) {
        cut.append(question.substr(pos, r.begin - pos));
        cut += ' ';
        pos = r.end;
    }
    cut.append(question.substr(pos));

    std::string out;
    for (char c : cut) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!out.empty() && out.back() != ' ') out += ' ';
            continue;
        }
        if (std::string_view(".,;:!?").find(c) != std::string_view::npos && !out.empty() && out.back() == ' ')
            out.pop_back();
        out += c;
    }
    out = trim(out);
    if (out.empty() || std::none_of(out.begin(), out.end(), [](char c) { return word_char(c); }))
        throw AlignmentError("removing these ranges leaves an empty question");
    return out;
}

RepairOutcome auto_repair(const std::string& question, const AlignmentMap& map, const Explanation& steps,
                          const SqlQuery& sql, const Schema& schema, LlmBridge& bridge, std::size_t max_iterations) {
    RepairOutcome out{question, map, 0, {}, 0};
    while (out.iterations < max_iterations) {
        const auto report = detect_misalignments(out.alignment, steps, out.question);
        if (report.empty()) break;
        ++out.iterations;
        if (!report.missing_steps.empty()) {
            for (const auto& [idx, text] : report.missing_steps) {
                const auto& step = steps.steps.at(idx - 1);
                // Each injection builds on the previous revision; the step list stays the
                // one reported before this round.
                out.question = inject_text(out.question, out.alignment, step, sql, schema, bridge);
                out.injected.push_back(idx);
            }
            out.alignment = align(out.question, steps, sql, schema, bridge);
        }
        const auto& redundant = out.alignment.unmapped_question_ranges;
        if (!redundant.empty()) {
            try {
                out.question = remove_spans(out.question, redundant);
            } catch (const AlignmentError&) {
                break;  // the question is nothing but redundant text; leave it for review
            }
            out.removed_spans += redundant.size();
            out.alignment = align(out.question, steps, sql, schema, bridge);
        }
    }
    return out;
}

std::string alignment_to_json(const AlignmentMap& map) { return detail::alignment_json(map).dump(); }

AlignmentMap alignment_from_json(std::string_view document, std::string_view question, std::size_t step_count) {
    return detail::alignment_from(detail::parse_json(document, "alignment"), "alignment", question, step_count);
}

namespace detail {

namespace {

json ranges_json(const std::vector<Span>& spans) {
    json out = json::array();
    for (auto s : spans) out.push_back({s.begin, s.end});
    return out;
}

std::vector<Span> ranges_from(const json& j, const std::string& path) {
    if (!j.is_array()) throw DocumentError(path, "expected an array of [begin, end] ranges");
    std::vector<Span> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& r = j[i];
        if (!r.is_array() || r.size() != 2 || !r[0].is_number_unsigned() || !r[1].is_number_unsigned())
            throw DocumentError(index_path(path, i), "expected [begin, end]");
        out.push_back({r[0].get<std::size_t>(), r[1].get<std::size_t>()});
    }
    return out;
}

}  // namespace

json alignment_json(const AlignmentMap& map) {
    json steps = json::object();
    for (const auto& [idx, spans] : map.step_spans) steps[std::to_string(idx)] = ranges_json(spans);
    return {{"steps", steps}, {"missing", map.unmapped_steps}, {"redundant", ranges_json(map.unmapped_question_ranges)}};
}

AlignmentMap alignment_from(const json& j, const std::string& path, std::string_view question,
                            std::size_t step_count) {
    require_object(j, path);
    const auto& steps = require_field(j, path, "steps");
    const auto steps_path = field_path(path, "steps");
    if (!steps.is_object()) throw DocumentError(steps_path, "expected an object keyed by step index");
    std::map<std::size_t, std::vector<Span>> spans;
    for (auto it = steps.begin(); it != steps.end(); ++it) {
        std::size_t idx = 0;
        try {
            std::size_t used = 0;
            idx = std::stoul(it.key(), &used);
            if (used != it.key().size()) throw std::invalid_argument(it.key());
        } catch (const std::exception&) {
            throw DocumentError(steps_path, fmt::format("'{}' is not a step index", it.key()));
        }
        if (idx == 0 || idx > step_count)
            throw ValidationError(field_path(steps_path, it.key()), fmt::format("no step {}", idx));
        spans[idx] = ranges_from(it.value(), field_path(steps_path, it.key()));
    }
    auto map = complete_alignment(question, step_count, std::move(spans));
    if (j.contains("missing") && j.at("missing") != json(map.unmapped_steps))
        throw ValidationError(field_path(path, "missing"), "does not match the step ranges");
    if (j.contains("redundant") && ranges_from(j.at("redundant"), field_path(path, "redundant")) != map.unmapped_question_ranges)
        throw ValidationError(field_path(path, "redundant"), "does not match the step ranges");
    const auto problems = check_alignment(map, question, step_count);
    if (!problems.empty()) throw ValidationError(steps_path, problems.front());
    return map;
}

}  // namespace detail

}  // namespace sqlpair
