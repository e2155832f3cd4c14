#include "sqlpair/explainer.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include <fmt/format.h>

#include "codec.hpp"
#include "sqlpair/error.hpp"

namespace sqlpair {

namespace {

constexpr std::array<std::string_view, 6> kStepKinds{"FROM", "JOIN", "WHERE_COND", "GROUP_BY", "ORDER_BY", "SELECT"};

// Thrown inside rule_explain when a construct has no template.
struct NotCovered {};

std::string words(std::string_view identifier) {
    std::string out;
    for (std::size_t i = 0; i < identifier.size(); ++i) {
        const char c = identifier[i];
        if (c == '_' || c == ' ') {
            if (!out.empty() && out.back() != ' ') out += ' ';
            continue;
        }
        const bool boundary = i > 0 && std::isupper(static_cast<unsigned char>(c)) &&
                              std::islower(static_cast<unsigned char>(identifier[i - 1]));
        if (boundary && !out.empty() && out.back() != ' ') out += ' ';
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::string plural(const std::string& noun) {
    if (noun.empty()) return noun;
    const auto last_space = noun.rfind(' ');
    const std::string head = last_space == std::string::npos ? "" : noun.substr(0, last_space + 1);
    const std::string w = last_space == std::string::npos ? noun : noun.substr(last_space + 1);
    const auto ends = [&](std::string_view s) { return w.size() >= s.size() && w.compare(w.size() - s.size(), s.size(), s) == 0; };
    if (ends("ss") || ends("us") || ends("x") || ends("ch") || ends("sh")) return head + w + "es";
    if (ends("s")) return noun;  // already plural, e.g. stars
    if (w.size() > 1 && w.back() == 'y' && std::string_view("aeiou").find(w[w.size() - 2]) == std::string_view::npos)
        return head + w.substr(0, w.size() - 1) + "ies";
    return head + w + "s";
}

bool is_currency_column(std::string_view column) {
    static constexpr std::array<std::string_view, 12> kMoney{"salary", "price",  "cost", "amount", "budget", "revenue",
                                                             "income", "wage",   "fee",  "balance", "payment", "spend"};
    const auto lower = to_lower(column);
    for (auto m : kMoney)
        if (lower.find(m) != std::string::npos) return true;
    return false;
}

// 50000 -> 50,000 ; 1234.5 -> 1,234.5
std::string group_thousands(std::string_view number) {
    std::string sign;
    if (!number.empty() && number.front() == '-') {
        sign = "-";
        number.remove_prefix(1);
    }
    const auto dot = number.find_first_of(".eE");
    const std::string_view whole = number.substr(0, dot);
    const std::string_view rest = dot == std::string_view::npos ? std::string_view() : number.substr(dot);
    std::string out;
    for (std::size_t i = 0; i < whole.size(); ++i) {
        if (i > 0 && (whole.size() - i) % 3 == 0) out += ',';
        out += whole[i];
    }
    return sign + out + std::string(rest);
}

std::string_view aggregate_words(std::string_view fn) {
    if (fn == "COUNT") return "count of";
    if (fn == "SUM") return "total";
    if (fn == "AVG") return "average";
    if (fn == "MIN") return "minimum";
    if (fn == "MAX") return "maximum";
    return fn;
}

std::string_view op_words(std::string_view op) {
    if (op == "=") return "equal to";
    if (op == "<>") return "other than";
    if (op == "<") return "below";
    if (op == ">") return "exceeding";
    if (op == "<=") return "at most";
    if (op == ">=") return "at least";
    if (op == "LIKE") return "matching";
    if (op == "IN") return "among";
    throw NotCovered{};
}

bool is_range_op(std::string_view op) { return op == "<" || op == ">" || op == "<=" || op == ">="; }

class TextBuilder {
public:
    TextBuilder& add(std::string_view s) {
        text_ += s;
        return *this;
    }
    TextBuilder& entity(EntityMention::Kind kind, std::string_view shown, std::string lexeme) {
        mentions_.push_back({kind, text_.size(), text_.size() + shown.size(), std::move(lexeme)});
        text_ += shown;
        return *this;
    }
    std::string text() const { return text_; }
    std::vector<EntityMention> mentions() const { return mentions_; }

private:
    std::string text_;
    std::vector<EntityMention> mentions_;
};

class RuleExplainer {
public:
    RuleExplainer(const SqlQuery& q, const Schema& s) : query_(q), schema_(s) {}

    Explanation run() {
        const auto& root = query_.ast;
        std::optional<std::size_t> select, from, where, group, order;
        for (std::size_t i = 0; i < root.children.size(); ++i) {
            switch (root.children[i].kind) {
                case NodeKind::Select:
                    select = i;
                    break;
                case NodeKind::From:
                    from = i;
                    break;
                case NodeKind::Where:
                    where = i;
                    break;
                case NodeKind::GroupBy:
                    group = i;
                    break;
                case NodeKind::OrderBy:
                    order = i;
                    break;
                default:
                    throw NotCovered{};
            }
        }
        if (!select || !from) throw NotCovered{};
        const auto& from_node = root.children[*from];
        for (const auto& child : from_node.children) {
            const auto& tref = child.kind == NodeKind::Join ? child.children.at(1) : child;
            if (!schema_.find_table(tref.lexeme))
                throw ExplanationError(fmt::format("unknown table {}", tref.lexeme));
            tables_.push_back(tref.lexeme);
        }
        from_step(*from);
        for (std::size_t j = 1; j < from_node.children.size(); ++j) join_step(*from, j);
        if (where) where_steps(*where);
        if (group) group_step(*group);
        if (order) order_step(*order);
        select_step(*select);
        Explanation e;
        e.steps = std::move(steps_);
        for (std::size_t i = 0; i < e.steps.size(); ++i) e.steps[i].index = i + 1;
        return e;
    }

private:
    struct ColumnInfo {
        const Table* table = nullptr;
        const Column* column = nullptr;
    };

    ColumnInfo resolve(const AstNode& ref) const {
        if (ref.lexeme == "*") return {};
        const auto tname = column_table(ref);
        const auto cname = column_name(ref);
        const Table* t = nullptr;
        if (tname.empty()) {
            for (const auto& name : tables_) {
                const auto* cand = schema_.find_table(name);
                if (cand && cand->find_column(cname)) {
                    t = cand;
                    break;
                }
            }
        } else {
            t = schema_.find_table(tname);
        }
        const Column* c = t ? t->find_column(cname) : nullptr;
        if (!c) throw ExplanationError(fmt::format("unknown column {}", ref.lexeme));
        return {t, c};
    }

    std::string table_noun(const Table* t) const { return t ? words(t->name) : "rows"; }

    void add_step(StepKind kind, const TextBuilder& text, std::string sub_question, Span span, AstPath path) {
        ExplanationStep s;
        s.kind = kind;
        s.text = text.text();
        s.entities = text.mentions();
        s.sub_question = std::move(sub_question);
        s.sql_span = span;
        s.ast_path = std::move(path);
        steps_.push_back(std::move(s));
    }

    // Operand description: "salary", "average salary", "number of names", "all columns".
    void operand(TextBuilder& tb, const AstNode& n, bool with_table, bool plural_form) const {
        if (n.kind == NodeKind::Literal) throw NotCovered{};
        if (n.kind == NodeKind::ColumnRef) {
            if (n.lexeme == "*") {
                tb.add("all columns");
                return;
            }
            const auto info = resolve(n);
            const auto w = words(info.column->name);
            tb.entity(EntityMention::Kind::Column, plural_form ? plural(w) : w, n.lexeme);
            if (with_table) tb.add(" of ").entity(EntityMention::Kind::Table, table_noun(info.table), info.table->name);
            return;
        }
        if (n.kind != NodeKind::Aggregate) throw NotCovered{};
        const auto& arg = n.children.at(0);
        if (arg.lexeme == "*") {
            if (n.lexeme != "COUNT") throw NotCovered{};
            tb.add("number of rows");
            return;
        }
        const auto info = resolve(arg);
        if (n.lexeme == "COUNT") {
            tb.add("number of ").entity(EntityMention::Kind::Column, plural(words(info.column->name)), arg.lexeme);
        } else {
            const auto col = words(info.column->name);
            const auto agg = aggregate_words(n.lexeme);
            // SUM(total) reads "sum of total", not "total total"
            tb.add(col.rfind(agg, 0) == 0 ? fmt::format("{} of", to_lower(n.lexeme)) : std::string(agg));
            tb.add(" ").entity(EntityMention::Kind::Column, col, arg.lexeme);
        }
        if (with_table) tb.add(" of ").entity(EntityMention::Kind::Table, table_noun(info.table), info.table->name);
    }

    const Table* owner(const AstNode& n) const {
        if (n.kind == NodeKind::ColumnRef) return n.lexeme == "*" ? nullptr : resolve(n).table;
        if (n.kind == NodeKind::Aggregate) return owner(n.children.at(0));
        throw NotCovered{};
    }

    void value(TextBuilder& tb, const AstNode& lhs, const AstNode& v) const {
        if (v.kind == NodeKind::Literal) {
            if (is_string_literal(v)) {
                tb.add("\"").entity(EntityMention::Kind::Value, literal_text(v), v.lexeme).add("\"");
                return;
            }
            const AstNode& col = lhs.kind == NodeKind::Aggregate ? lhs.children.at(0) : lhs;
            const bool money = (lhs.kind == NodeKind::ColumnRef || (lhs.lexeme != "COUNT")) && col.lexeme != "*" &&
                               is_currency_column(column_name(col));
            tb.entity(EntityMention::Kind::Value, money ? "$" + group_thousands(v.lexeme) : v.lexeme, v.lexeme);
            return;
        }
        tb.add("the ");
        const bool other_table = owner(v) != owner(lhs);
        operand(tb, v, other_table, false);
    }

    void from_step(std::size_t from) {
        const auto& base = query_.ast.children[from].children.at(0);
        const auto* t = schema_.find_table(base.lexeme);
        TextBuilder tb;
        tb.add("In ").entity(EntityMention::Kind::Table, words(t->name), base.lexeme);
        const auto span_from = span_of(query_, {from});
        const auto span_base = span_of(query_, {from, 0});
        add_step(StepKind::From, tb, "Which data source should we care about?", {span_from.begin, span_base.end}, {from, 0});
    }

    void join_step(std::size_t from, std::size_t j) {
        const auto& join = query_.ast.children[from].children[j];
        const auto& type = join.children.at(0).lexeme;
        const auto* t = schema_.find_table(join.children.at(1).lexeme);
        const auto& cond = join.children.at(2).children.at(0);
        std::vector<const AstNode*> pairs;
        if (cond.kind == NodeKind::And) {
            for (const auto& c : cond.children) pairs.push_back(&c);
        } else if (cond.kind == NodeKind::Comparison) {
            pairs.push_back(&cond);
        } else {
            throw NotCovered{};
        }
        TextBuilder tb;
        tb.add("Combine with ").entity(EntityMention::Kind::Table, words(t->name), t->name).add(" where ");
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto& p = *pairs[i];
            if (p.children.size() != 2) throw NotCovered{};
            if (i > 0) tb.add(" and ");
            operand(tb, p.children[0], true, false);
            tb.add(p.lexeme == "=" ? " matches " : fmt::format(" is {} ", op_words(p.lexeme)));
            if (p.children[1].kind == NodeKind::Literal) value(tb, p.children[0], p.children[1]);
            else operand(tb, p.children[1], true, false);
        }
        if (type == "LEFT") tb.add(", keeping unmatched earlier rows");
        else if (type == "RIGHT") tb.add(", keeping unmatched ").add(words(t->name));
        else if (type == "FULL") tb.add(", keeping unmatched rows from both sides");
        else if (type != "INNER") throw NotCovered{};
        add_step(StepKind::Join, tb, fmt::format("How are {} related to the data so far?", words(t->name)),
                 span_of(query_, {from, j}), {from, j});
    }

    void where_steps(std::size_t where) {
        struct Leaf {
            AstPath path;
            bool after_or = false;
        };
        std::vector<Leaf> leaves;
        const auto& top = query_.ast.children[where].children.at(0);
        const auto collect_and = [&](const AstNode& n, AstPath path, bool after_or) {
            if (n.kind == NodeKind::And) {
                for (std::size_t k = 0; k < n.children.size(); ++k) {
                    auto p = path;
                    p.push_back(k);
                    leaves.push_back({p, k == 0 && after_or});
                }
            } else {
                leaves.push_back({path, after_or});
            }
        };
        if (top.kind == NodeKind::Or) {
            for (std::size_t i = 0; i < top.children.size(); ++i) collect_and(top.children[i], {where, 0, i}, i > 0);
        } else {
            collect_and(top, {where, 0}, false);
        }
        std::size_t prev_end = 0;
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            const auto& leaf = leaves[i];
            const auto& cmp = node_at(query_.ast, leaf.path);
            if (cmp.kind != NodeKind::Comparison) throw NotCovered{};
            const auto& lhs = cmp.children.at(0);
            if (lhs.kind == NodeKind::Literal) throw NotCovered{};
            const auto* table = owner(lhs);
            const auto rows = table_noun(table);

            TextBuilder tb;
            if (leaf.after_or) tb.add("Or alternatively keep ");
            else tb.add(i == 0 ? "Filter " : "Keep ");
            if (table) tb.entity(EntityMention::Kind::Table, rows, table->name);
            else tb.add(rows);

            std::string sub;
            const bool plain = lhs.kind == NodeKind::ColumnRef && lhs.lexeme != "*";
            const auto info = plain ? resolve(lhs) : ColumnInfo{};
            const bool id_like = plain && info.column->name.size() > 3 &&
                                 to_lower(info.column->name).ends_with("_id") && !info.column->is_primary_key;
            if (id_like && cmp.lexeme == "=" && cmp.children.size() == 2 && cmp.children[1].kind == NodeKind::Literal &&
                !is_string_literal(cmp.children[1])) {
                const auto base = words(info.column->name.substr(0, info.column->name.size() - 3));
                tb.add(" from ").entity(EntityMention::Kind::Column, base, lhs.lexeme).add(" ");
                value(tb, lhs, cmp.children[1]);
                sub = fmt::format("Which {} are {} from?", base, rows);
            } else {
                tb.add(" with ");
                TextBuilder subject;
                operand(subject, lhs, false, false);
                operand(tb, lhs, false, false);
                tb.add(" ").add(op_words(cmp.lexeme)).add(" ");
                if (cmp.lexeme == "IN" && cmp.children.size() > 2) {
                    for (std::size_t k = 1; k < cmp.children.size(); ++k) {
                        if (k > 1) tb.add(k + 1 == cmp.children.size() ? " or " : ", ");
                        value(tb, lhs, cmp.children[k]);
                    }
                } else {
                    value(tb, lhs, cmp.children.at(1));
                }
                sub = is_range_op(cmp.lexeme) ? fmt::format("What {} range do we care about?", subject.text())
                                              : fmt::format("Which {} do we care about?", subject.text());
            }

            const auto span = span_of(query_, leaf.path);
            std::size_t begin = span.begin;
            if (i == 0) {
                begin = span_of(query_, {where}).begin;
            } else {
                begin = query_.text.find_first_not_of(' ', prev_end);
            }
            prev_end = span.end;
            add_step(StepKind::WhereCond, tb, std::move(sub), {begin, span.end}, leaf.path);
        }
    }

    void group_step(std::size_t group) {
        const auto& node = query_.ast.children[group];
        TextBuilder tb;
        tb.add("Group rows by ");
        list(tb, node.children, node.children.size(), false);
        add_step(StepKind::GroupBy, tb, "How should the rows be grouped?", span_of(query_, {group}), {group});
    }

    void order_step(std::size_t order) {
        const auto& node = query_.ast.children[order];
        std::size_t items = node.children.size();
        std::string dir = "ASC";
        if (items > 0 && node.children.back().kind == NodeKind::SortDir) {
            dir = node.children.back().lexeme;
            --items;
        }
        TextBuilder tb;
        tb.add("Sort results by ");
        list(tb, node.children, items, false);
        tb.add(dir == "DESC" ? " in descending order" : " in ascending order");
        add_step(StepKind::OrderBy, tb, "In what order should the results appear?", span_of(query_, {order}), {order});
    }

    void list(TextBuilder& tb, const std::vector<AstNode>& items, std::size_t count, bool plural_form) const {
        for (std::size_t i = 0; i < count; ++i) {
            if (i > 0) tb.add(i + 1 == count ? " and " : ", ");
            operand(tb, items[i], tables_.size() > 1, plural_form);
        }
    }

    void select_step(std::size_t select) {
        const auto& node = query_.ast.children[select];
        std::size_t first = 0;
        const bool distinct = !node.children.empty() && node.children[0].kind == NodeKind::Distinct;
        if (distinct) first = 1;
        // Items grouped by owning table, tables in first-mention order.
        std::vector<const Table*> order;
        std::vector<std::vector<const AstNode*>> by_table;
        for (std::size_t i = first; i < node.children.size(); ++i) {
            const auto* t = owner(node.children[i]);
            auto it = std::find(order.begin(), order.end(), t);
            if (it == order.end()) {
                order.push_back(t);
                by_table.emplace_back();
                it = order.end() - 1;
            }
            by_table[static_cast<std::size_t>(it - order.begin())].push_back(&node.children[i]);
        }
        TextBuilder tb;
        tb.add("Return ");
        for (std::size_t g = 0; g < order.size(); ++g) {
            if (g > 0) tb.add(g + 1 == order.size() ? " and " : ", ");
            tb.add(distinct ? "the distinct " : "the ");
            const auto& items = by_table[g];
            for (std::size_t i = 0; i < items.size(); ++i) {
                if (i > 0) tb.add(i + 1 == items.size() ? " and " : ", ");
                operand(tb, *items[i], false, items[i]->kind == NodeKind::ColumnRef);
            }
            if (order[g]) tb.add(" of ").entity(EntityMention::Kind::Table, words(order[g]->name), order[g]->name);
            else if (order.size() == 1) tb.add(" of ").add(words(tables_.front()));
        }
        add_step(StepKind::Select, tb, "What information should be returned?", span_of(query_, {select}), {select});
    }

    const SqlQuery& query_;
    const Schema& schema_;
    std::vector<std::string> tables_;
    std::vector<ExplanationStep> steps_;
};

// Largest node (first in preorder) whose span lies inside `span`.
AstPath owning_path(const SqlQuery& q, Span span) {
    AstPath best;
    std::size_t best_len = 0;
    bool found = false;
    std::vector<std::pair<const AstNode*, AstPath>> stack{{&q.ast, {}}};
    while (!stack.empty()) {
        auto [n, path] = std::move(stack.back());
        stack.pop_back();
        const auto s = span_of(q, path);
        if (s.begin >= span.begin && s.end <= span.end && (!found || s.end - s.begin > best_len)) {
            best = path;
            best_len = s.end - s.begin;
            found = true;
        }
        for (std::size_t i = n->children.size(); i-- > 0;) {
            auto p = path;
            p.push_back(i);
            stack.push_back({&n->children[i], std::move(p)});
        }
    }
    return best;
}

std::string examples_block(const std::vector<std::pair<SqlQuery, Explanation>>& examples) {
    std::string out;
    for (const auto& [q, e] : examples) {
        detail::json steps = detail::json::array();
        for (const auto& s : e.steps)
            steps.push_back({{"kind", to_string(s.kind)},
                             {"sql", q.text.substr(s.sql_span.begin, s.sql_span.end - s.sql_span.begin)},
                             {"text", s.text},
                             {"sub_question", s.sub_question}});
        out += fmt::format("SQL: {}\n{}\n\n", q.text, detail::json{{"steps", steps}}.dump());
    }
    return out;
}

std::optional<Explanation> parse_fallback(std::string_view response, const SqlQuery& q, std::string& problem) {
    const auto block = extract_structured_block(response);
    if (!block) {
        problem = "no structured block";
        return std::nullopt;
    }
    detail::json root;
    try {
        root = detail::json::parse(*block);
    } catch (const detail::json::exception&) {
        problem = "block is not JSON";
        return std::nullopt;
    }
    if (!root.is_object() || !root.contains("steps") || !root.at("steps").is_array()) {
        problem = "missing steps array";
        return std::nullopt;
    }
    Explanation e;
    e.source = ExplanationSource::LlmFallback;
    std::vector<Span> used;
    for (const auto& js : root.at("steps")) {
        if (!js.is_object() || !js.contains("kind") || !js.contains("sql") || !js.contains("text") ||
            !js.at("kind").is_string() || !js.at("sql").is_string() || !js.at("text").is_string()) {
            problem = "step lacks kind, sql or text";
            return std::nullopt;
        }
        const auto kind = parse_step_kind(js.at("kind").get<std::string>());
        if (!kind) {
            problem = "unknown step kind";
            return std::nullopt;
        }
        const auto fragment = js.at("sql").get<std::string>();
        std::optional<Span> span;
        for (auto pos = q.text.find(fragment); !fragment.empty() && pos != std::string::npos;
             pos = q.text.find(fragment, pos + 1)) {
            const Span cand{pos, pos + fragment.size()};
            const bool clash = std::any_of(used.begin(), used.end(),
                                           [&](const Span& u) { return cand.begin < u.end && u.begin < cand.end; });
            if (!clash) {
                span = cand;
                break;
            }
        }
        if (!span) {
            problem = fmt::format("step sql '{}' is not part of the query", fragment);
            return std::nullopt;
        }
        used.push_back(*span);
        ExplanationStep s;
        s.index = e.steps.size() + 1;
        s.kind = *kind;
        s.text = js.at("text").get<std::string>();
        if (js.contains("sub_question") && js.at("sub_question").is_string())
            s.sub_question = js.at("sub_question").get<std::string>();
        s.sql_span = *span;
        s.ast_path = owning_path(q, *span);
        e.steps.push_back(std::move(s));
    }
    const auto problems = check_explanation(e, q);
    if (!problems.empty()) {
        problem = problems.front();
        return std::nullopt;
    }
    return e;
}

}  // namespace

std::string_view to_string(StepKind kind) { return kStepKinds[static_cast<std::size_t>(kind)]; }

std::optional<StepKind> parse_step_kind(std::string_view text) {
    for (std::size_t i = 0; i < kStepKinds.size(); ++i)
        if (kStepKinds[i] == text) return static_cast<StepKind>(i);
    return std::nullopt;
}

std::string_view to_string(ExplanationSource source) {
    switch (source) {
        case ExplanationSource::RuleBased:
            return "rule_based";
        case ExplanationSource::LlmFallback:
            return "llm_fallback";
        case ExplanationSource::LlmParaphrased:
            return "llm_paraphrased";
    }
    return "";
}

std::optional<Explanation> rule_explain(const SqlQuery& query, const Schema& schema) {
    try {
        return RuleExplainer(query, schema).run();
    } catch (const NotCovered&) {
        return std::nullopt;
    }
}

Explanation explain(const SqlQuery& query, const Schema& schema) {
    auto e = rule_explain(query, schema);
    if (!e) throw ExplanationError("query is not covered by explanation templates");
    return std::move(*e);
}

Explanation fallback_explain(const SqlQuery& query, const Schema& schema, LlmBridge& bridge,
                             const std::vector<std::pair<SqlQuery, Explanation>>& examples) {
    auto prompt = render_prompt(TemplateName::ExplanationFallback,
                                {{"schema", describe_schema(schema)}, {"examples", examples_block(examples)}, {"sql", query.text}});
    std::string problem;
    if (auto e = parse_fallback(bridge.invoke(prompt, kJudgeTemperature), query, problem)) return std::move(*e);
    prompt += fmt::format("\nYour previous answer was rejected ({}). Follow the rules exactly.\n", problem);
    if (auto e = parse_fallback(bridge.invoke(prompt, kJudgeTemperature), query, problem)) return std::move(*e);
    throw ExplanationError("invalid explanation structure");
}

Explanation explain_with_fallback(const SqlQuery& query, const Schema& schema, LlmBridge& bridge) {
    if (auto e = rule_explain(query, schema)) return std::move(*e);
    static const char* kExampleSql[] = {
        "SELECT Employees.name FROM Employees WHERE Employees.department_id = 5 AND Employees.salary > 50000",
    };
    std::vector<std::pair<SqlQuery, Explanation>> examples;
    const Schema demo = load_schema(R"({"tables":[{"name":"Employees","columns":[
        {"name":"employee_id","type":"int","primary_key":true},{"name":"name","type":"text"},
        {"name":"department_id","type":"int"},{"name":"salary","type":"decimal"}]}]})");
    for (const char* sql : kExampleSql) {
        auto q = parse_sql(sql);
        auto e = explain(q, demo);
        examples.emplace_back(std::move(q), std::move(e));
    }
    return fallback_explain(query, schema, bridge, examples);
}

ParaphraseResult paraphrase_steps(const Explanation& explanation, const SqlQuery& query, const Schema& schema,
                                  LlmBridge& bridge) {
    detail::json steps = detail::json::array();
    for (const auto& s : explanation.steps)
        steps.push_back({{"index", s.index}, {"text", s.text}, {"sub_question", s.sub_question}});
    const auto prompt = render_prompt(TemplateName::Paraphrase, {{"schema", describe_schema(schema)},
                                                                  {"sql", query.text},
                                                                  {"steps", detail::json{{"steps", steps}}.dump(2)}});
    ParaphraseResult out{explanation, std::nullopt};
    std::string response;
    try {
        response = bridge.invoke(prompt, kGenerationTemperature);
    } catch (const Error& e) {
        out.warning = fmt::format("paraphrase failed: {}", e.what());
        return out;
    }
    const auto block = extract_structured_block(response);
    detail::json root;
    try {
        if (!block) throw std::runtime_error("no structured block");
        root = detail::json::parse(*block);
        const auto& js = root.at("steps");
        if (!js.is_array() || js.size() != explanation.steps.size())
            throw std::runtime_error(fmt::format("expected {} steps", explanation.steps.size()));
        Explanation revised = explanation;
        for (std::size_t i = 0; i < js.size(); ++i) {
            const auto text = js[i].at("text").get<std::string>();
            if (text.empty()) throw std::runtime_error("empty step text");
            if (text != revised.steps[i].text) revised.steps[i].entities.clear();
            revised.steps[i].text = text;
            if (js[i].contains("sub_question")) revised.steps[i].sub_question = js[i].at("sub_question").get<std::string>();
        }
        revised.source = ExplanationSource::LlmParaphrased;
        out.explanation = std::move(revised);
    } catch (const std::exception& e) {
        out.warning = fmt::format("paraphrase ignored: {}", e.what());
    }
    return out;
}

std::size_t expected_step_count(const AstNode& query) {
    std::size_t n = 0;
    for (const auto& c : query.children) {
        switch (c.kind) {
            case NodeKind::Select:
            case NodeKind::GroupBy:
            case NodeKind::OrderBy:
                ++n;
                break;
            case NodeKind::From:
                n += c.children.size();  // base table plus one per join
                break;
            case NodeKind::Where: {
                const auto& top = c.children.at(0);
                if (top.kind == NodeKind::Comparison) {
                    ++n;
                } else {
                    for (const auto& d : top.children) n += d.kind == NodeKind::And ? d.children.size() : 1;
                }
                break;
            }
            default:
                break;
        }
    }
    return n;
}

std::vector<std::string> check_explanation(const Explanation& e, const SqlQuery& q) {
    std::vector<std::string> problems;
    if (e.steps.size() < 2) problems.push_back("an explanation needs at least FROM and SELECT steps");
    int last_rank = -1;
    std::vector<char> covered(q.text.size(), 0);
    for (std::size_t i = 0; i < e.steps.size(); ++i) {
        const auto& s = e.steps[i];
        if (s.index != i + 1) problems.push_back(fmt::format("step {} has index {}", i + 1, s.index));
        const int rank = static_cast<int>(s.kind);
        const bool repeatable = s.kind == StepKind::Join || s.kind == StepKind::WhereCond;
        if (rank < last_rank || (rank == last_rank && !repeatable))
            problems.push_back(fmt::format("step {} ({}) is out of order", i + 1, to_string(s.kind)));
        last_rank = rank;
        if (s.sql_span.begin >= s.sql_span.end || s.sql_span.end > q.text.size()) {
            problems.push_back(fmt::format("step {} has an invalid span", i + 1));
            continue;
        }
        for (auto k = s.sql_span.begin; k < s.sql_span.end; ++k) {
            if (covered[k]) {
                problems.push_back(fmt::format("step {} overlaps an earlier step", i + 1));
                break;
            }
            covered[k] = 1;
        }
    }
    if (!e.steps.empty()) {
        if (e.steps.front().kind != StepKind::From) problems.push_back("first step is not FROM");
        if (e.steps.back().kind != StepKind::Select) problems.push_back("last step is not SELECT");
    }
    for (std::size_t k = 0; k < q.text.size(); ++k) {
        if (!covered[k] && q.text[k] != ' ') {
            problems.push_back(fmt::format("query text at offset {} is not covered by any step", k));
            break;
        }
    }
    return problems;
}

std::vector<ExplanationStepView> step_views(const Explanation& e) {
    std::vector<ExplanationStepView> out;
    for (const auto& s : e.steps) out.push_back({s.index, s.text});
    return out;
}

std::string explanation_to_json(const Explanation& e) { return detail::explanation_json(e).dump(); }

Explanation explanation_from_json(std::string_view document) {
    return detail::explanation_from(detail::parse_json(document, "explanation"), "steps");
}

}  // namespace sqlpair

namespace sqlpair::detail {

namespace {

constexpr std::array<std::string_view, 3> kEntityKinds{"table", "column", "value"};

}  // namespace

json explanation_json(const Explanation& e) {
    json steps = json::array();
    for (const auto& s : e.steps) {
        json entities = json::array();
        for (const auto& m : s.entities)
            entities.push_back({{"kind", kEntityKinds[static_cast<std::size_t>(m.kind)]},
                                {"begin", m.begin},
                                {"end", m.end},
                                {"lexeme", m.lexeme}});
        steps.push_back({{"index", s.index},
                         {"kind", to_string(s.kind)},
                         {"text", s.text},
                         {"sub_question", s.sub_question},
                         {"sql_span", {s.sql_span.begin, s.sql_span.end}},
                         {"ast_path", s.ast_path},
                         {"entities", entities}});
    }
    return {{"source", to_string(e.source)}, {"steps", steps}};
}

Explanation explanation_from(const json& j, const std::string& path) {
    require_object(j, path);
    Explanation e;
    if (auto it = j.find("source"); it != j.end()) {
        const auto src = it->is_string() ? it->get<std::string>() : "";
        if (src == "rule_based") e.source = ExplanationSource::RuleBased;
        else if (src == "llm_fallback") e.source = ExplanationSource::LlmFallback;
        else if (src == "llm_paraphrased") e.source = ExplanationSource::LlmParaphrased;
        else throw DocumentError(field_path(path, "source"), "unknown explanation source");
    }
    const auto steps_path = field_path(path, "steps");
    const auto& steps = require_field(j, path, "steps");
    if (!steps.is_array()) throw DocumentError(steps_path, "expected an array");
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto sp = index_path(steps_path, i);
        const auto& js = steps[i];
        require_object(js, sp);
        ExplanationStep s;
        try {
            s.index = js.value("index", i + 1);
            const auto kind = parse_step_kind(require_string(js, sp, "kind"));
            if (!kind) throw DocumentError(field_path(sp, "kind"), "unknown step kind");
            s.kind = *kind;
            s.text = require_string(js, sp, "text");
            s.sub_question = js.value("sub_question", std::string());
            const auto& span = require_field(js, sp, "sql_span");
            if (!span.is_array() || span.size() != 2)
                throw DocumentError(field_path(sp, "sql_span"), "expected [begin, end]");
            s.sql_span = {span[0].get<std::size_t>(), span[1].get<std::size_t>()};
            if (js.contains("ast_path")) s.ast_path = js.at("ast_path").get<AstPath>();
            if (js.contains("entities")) {
                for (const auto& m : js.at("entities")) {
                    EntityMention em;
                    const auto k = m.at("kind").get<std::string>();
                    const auto kit = std::find(kEntityKinds.begin(), kEntityKinds.end(), k);
                    if (kit == kEntityKinds.end()) throw DocumentError(field_path(sp, "entities"), "unknown entity kind");
                    em.kind = static_cast<EntityMention::Kind>(kit - kEntityKinds.begin());
                    em.begin = m.at("begin").get<std::size_t>();
                    em.end = m.at("end").get<std::size_t>();
                    em.lexeme = m.value("lexeme", std::string());
                    s.entities.push_back(std::move(em));
                }
            }
        } catch (const json::exception& ex) {
            throw DocumentError(sp, ex.what());
        }
        e.steps.push_back(std::move(s));
    }
    return e;
}

}  // namespace sqlpair::detail
