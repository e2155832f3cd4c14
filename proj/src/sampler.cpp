#include "sqlpair/sampler.hpp"

#include <algorithm>
#include <array>

#include <fmt/format.h>

#include "sqlpair/error.hpp"
#include "sqlpair/executor.hpp"

namespace sqlpair {

namespace {

// ---------------------------------------------------------------------------
// Reading a derivation into a plan of slots to fill.

struct Slot {
    std::string fn;  // aggregate function, empty for a plain column
};

enum class ValueKind { Number, String, Column };

struct Leaf {
    Slot lhs;
    std::string op;
    ValueKind value = ValueKind::Number;
    Slot rhs;  // when value == Column
};

struct JoinPlan {
    std::string type;
    std::vector<std::pair<Slot, Slot>> pairs;
};

struct Plan {
    bool distinct = false;
    std::vector<Slot> select;
    std::vector<JoinPlan> joins;
    bool has_where = false;
    std::vector<Leaf> leaves;
    std::vector<std::string> connectives;  // between consecutive leaves
    bool has_group = false;
    std::vector<Slot> group;
    bool has_order = false;
    std::vector<Slot> order;
    std::string direction;
};

bool is_expanded(const Derivation& d) {
    return (d.symbol.kind == Symbol::Kind::Nonterminal || d.symbol.kind == Symbol::Kind::Optional) && d.present;
}

const Derivation* child(const Derivation& d, std::string_view name) {
    for (const auto& c : d.children)
        if (is_expanded(c) && c.symbol.text == name) return &c;
    return nullptr;
}

const Derivation& require_child(const Derivation& d, std::string_view name) {
    const auto* c = child(d, name);
    if (!c) throw GroundingError(fmt::format("{} has no {} to ground", d.symbol.text, name));
    return *c;
}

// First terminal in the subtree (used for one-token nonterminals such as JoinType).
std::string first_terminal(const Derivation& d) {
    for (const auto& c : d.children) {
        if (c.symbol.kind == Symbol::Kind::Terminal) return c.symbol.text;
        if (is_expanded(c)) {
            auto t = first_terminal(c);
            if (!t.empty()) return t;
        }
    }
    return {};
}

Slot read_column(const Derivation& column) {
    Slot s;
    if (const auto* agg = child(column, "AggregateFunction")) s.fn = to_upper(first_terminal(*agg));
    return s;
}

void read_column_list(const Derivation& list, std::vector<Slot>& out) {
    const Derivation* node = &list;
    while (node) {
        const Derivation* next = nullptr;
        for (const auto& c : node->children) {
            if (!is_expanded(c)) continue;
            if (c.symbol.text == "Column") out.push_back(read_column(c));
            else if (c.symbol.text == "ColumnList") next = &c;
        }
        node = next;
    }
}

void read_join_condition(const Derivation& cond, std::vector<std::pair<Slot, Slot>>& out) {
    std::vector<const Derivation*> stack{&cond};
    while (!stack.empty()) {
        const auto* n = stack.back();
        stack.pop_back();
        std::vector<const Derivation*> nested;
        std::vector<Slot> columns;
        for (const auto& c : n->children) {
            if (!is_expanded(c)) continue;
            if (c.symbol.text == "JoinCondition") nested.push_back(&c);
            else if (c.symbol.text == "Column") columns.push_back(read_column(c));
        }
        if (!nested.empty()) {
            for (auto it = nested.rbegin(); it != nested.rend(); ++it) stack.push_back(*it);
        } else if (columns.size() == 2) {
            out.emplace_back(columns[0], columns[1]);
        } else {
            throw GroundingError("join condition must compare two columns");
        }
    }
}

Leaf read_leaf(const Derivation& cond) {
    Leaf leaf;
    leaf.lhs = read_column(require_child(cond, "Column"));
    leaf.op = to_upper(first_terminal(require_child(cond, "Operator")));
    const auto& value = require_child(cond, "Value");
    bool found = false;
    for (const auto& c : value.children) {
        if (c.symbol.kind == Symbol::Kind::Placeholder && (c.symbol.text == "Number" || c.symbol.text == "String")) {
            leaf.value = c.symbol.text == "Number" ? ValueKind::Number : ValueKind::String;
            found = true;
        } else if (is_expanded(c) && c.symbol.text == "Column") {
            leaf.value = ValueKind::Column;
            leaf.rhs = read_column(c);
            found = true;
        }
    }
    if (!found) throw GroundingError("value has no literal or column");
    return leaf;
}

// In-order walk: leaves and the connective terminals between them.
void read_condition(const Derivation& root, Plan& plan) {
    struct Item {
        const Derivation* node;
        std::string connective;
    };
    std::vector<Item> stack{{&root, {}}};
    while (!stack.empty()) {
        auto item = std::move(stack.back());
        stack.pop_back();
        if (!item.node) {
            plan.connectives.push_back(std::move(item.connective));
            continue;
        }
        const auto& n = *item.node;
        if (child(n, "Operator")) {
            plan.leaves.push_back(read_leaf(n));
            continue;
        }
        std::vector<Item> parts;
        for (const auto& c : n.children) {
            if (c.symbol.kind == Symbol::Kind::Terminal) parts.push_back({nullptr, to_upper(c.symbol.text)});
            else if (is_expanded(c) && c.symbol.text == "Condition") parts.push_back({&c, {}});
        }
        if (parts.size() != 3 || parts[1].node || (parts[1].connective != "AND" && parts[1].connective != "OR"))
            throw GroundingError("condition must be a comparison or two conditions joined by AND/OR");
        for (auto it = parts.rbegin(); it != parts.rend(); ++it) stack.push_back(std::move(*it));
    }
}

Plan read_plan(const Derivation& root) {
    Plan plan;
    for (const auto& c : root.children) {
        if (!is_expanded(c)) continue;
        const auto& name = c.symbol.text;
        if (name == "SelectClause") {
            for (const auto& t : c.children)
                if (t.symbol.kind == Symbol::Kind::Terminal && to_upper(t.symbol.text).find("DISTINCT") != std::string::npos)
                    plan.distinct = true;
            read_column_list(require_child(c, "ColumnList"), plan.select);
        } else if (name == "FromClause") {
            const Derivation* join = child(c, "JoinClause");
            while (join) {
                JoinPlan jp;
                jp.type = to_upper(first_terminal(require_child(*join, "JoinType")));
                read_join_condition(require_child(*join, "JoinCondition"), jp.pairs);
                plan.joins.push_back(std::move(jp));
                join = child(*join, "JoinClause");
            }
        } else if (name == "WhereClause") {
            plan.has_where = true;
            read_condition(require_child(c, "Condition"), plan);
        } else if (name == "GroupByClause") {
            plan.has_group = true;
            read_column_list(require_child(c, "ColumnList"), plan.group);
        } else if (name == "OrderByClause") {
            plan.has_order = true;
            read_column_list(require_child(c, "ColumnList"), plan.order);
            if (const auto* dir = child(c, "SortDirection")) plan.direction = to_upper(first_terminal(*dir));
            for (const auto& t : c.children)
                if (t.symbol.kind == Symbol::Kind::Terminal && (t.symbol.text == "ASC" || t.symbol.text == "DESC"))
                    plan.direction = t.symbol.text;
        } else {
            throw GroundingError(fmt::format("cannot ground nonterminal {}", name));
        }
    }
    if (plan.select.empty()) throw GroundingError("query has no select list");
    return plan;
}

// ---------------------------------------------------------------------------
// Binding slots to schema columns.

constexpr std::size_t kClasses = 4;

std::size_t class_bit(TypeClass c) { return static_cast<std::size_t>(c); }

struct Bound {
    std::size_t table = 0;
    std::size_t column = 0;
    std::string fn;
    TypeClass cls = TypeClass::Text;
};

const std::array<std::string_view, 5> kAggregates{"COUNT", "SUM", "AVG", "MIN", "MAX"};

std::size_t aggregate_index(std::string_view fn) {
    for (std::size_t i = 0; i < kAggregates.size(); ++i)
        if (kAggregates[i] == fn) return i;
    throw GroundingError(fmt::format("unknown aggregate function {}", fn));
}

TypeClass expression_class(std::string_view fn, TypeClass column_class) {
    if (fn == "COUNT" || fn == "SUM" || fn == "AVG") return TypeClass::Numeric;
    return column_class;
}

bool fn_accepts(std::string_view fn, TypeClass column_class) {
    if (fn == "SUM" || fn == "AVG") return column_class == TypeClass::Numeric;
    return true;
}

std::string number_lexeme(const Value& v) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
    if (const auto* b = std::get_if<bool>(&v)) return *b ? "1" : "0";
    throw GroundingError("value is not numeric");
}

Value shifted(const Value& v, int delta) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i + delta;
    if (const auto* d = std::get_if<double>(&v)) return *d + delta;
    return v;
}

}  // namespace

struct Grounder::Impl {
    const SandboxDatabase& db;
    const Schema& schema;
    std::vector<std::vector<TypeClass>> classes;  // per table, per column
    // Whole-table aggregate per table, column and function (NULL when undefined).
    std::vector<std::vector<std::array<Value, 5>>> scalars;
    struct Edge {
        std::size_t from_table, from_column, to_table, to_column;
    };
    std::vector<Edge> edges;

    explicit Impl(const SandboxDatabase& database) : db(database), schema(database.schema) {
        classes.resize(schema.tables.size());
        scalars.resize(schema.tables.size());
        for (std::size_t t = 0; t < schema.tables.size(); ++t) {
            const auto& table = schema.tables[t];
            for (std::size_t c = 0; c < table.columns.size(); ++c) {
                const auto& col = table.columns[c];
                const auto cls = type_class(col.data_type);
                classes[t].push_back(cls);
                std::array<Value, 5> agg{};
                for (std::size_t f = 0; f < kAggregates.size(); ++f) {
                    if (!fn_accepts(kAggregates[f], cls)) continue;
                    AstNode q(NodeKind::Query);
                    q.children.emplace_back(
                        NodeKind::Select, "",
                        std::vector<AstNode>{AstNode(NodeKind::Aggregate, std::string(kAggregates[f]),
                                                     {AstNode(NodeKind::ColumnRef, table.name + "." + col.name)})});
                    q.children.emplace_back(NodeKind::From, "", std::vector<AstNode>{AstNode(NodeKind::TableRef, table.name)});
                    const auto r = execute_query(db, q);
                    agg[f] = r.rows.empty() ? Value{} : r.rows[0][0];
                }
                scalars[t].push_back(std::move(agg));
                if (col.reference) {
                    const auto rt = schema.table_index(col.reference->table);
                    const auto rc = rt ? schema.tables[*rt].column_index(col.reference->column) : std::nullopt;
                    if (rt && rc) edges.push_back({t, c, *rt, *rc});
                }
            }
        }
    }

    std::string column_lexeme(const Bound& b) const {
        const auto& table = schema.tables[b.table];
        return table.name + "." + table.columns[b.column].name;
    }

    AstNode node(const Bound& b) const {
        AstNode ref(NodeKind::ColumnRef, column_lexeme(b));
        if (b.fn.empty()) return ref;
        return AstNode(NodeKind::Aggregate, b.fn, {std::move(ref)});
    }

    // Every binding of `slot` over the scope whose expression class is in `allowed` (bitmask).
    void candidates(const Slot& slot, std::span<const std::size_t> scope, unsigned allowed,
                    std::vector<Bound>& out) const {
        out.clear();
        for (auto t : scope) {
            for (std::size_t c = 0; c < classes[t].size(); ++c) {
                const auto col_cls = classes[t][c];
                if (!slot.fn.empty() && !fn_accepts(slot.fn, col_cls)) continue;
                const auto cls = slot.fn.empty() ? col_cls : expression_class(slot.fn, col_cls);
                if (!(allowed & (1u << class_bit(cls)))) continue;
                out.push_back({t, c, slot.fn, cls});
            }
        }
    }

    Bound pick(const Slot& slot, std::span<const std::size_t> scope, std::initializer_list<unsigned> preferences,
               Rng& rng) const {
        std::vector<Bound> found;
        for (auto allowed : preferences) {
            candidates(slot, scope, allowed, found);
            if (!found.empty()) return found[rng.index(found.size())];
        }
        throw GroundingError(fmt::format("no column can fill a {} slot", slot.fn.empty() ? "column" : slot.fn));
    }

    const Value& sample_value(const Bound& b, Rng& rng) const {
        if (!b.fn.empty()) return scalars[b.table][b.column][aggregate_index(b.fn)];
        const auto& records = db.tables[b.table].records;
        if (records.empty()) throw GroundingError(fmt::format("table {} has no rows", schema.tables[b.table].name));
        return records[rng.index(records.size())][b.column];
    }

    AstNode literal(const Bound& lhs, const std::string& op, ValueKind kind, Rng& rng) const {
        Value v = sample_value(lhs, rng);
        if (is_null(v)) throw GroundingError("no value to compare against");
        if (!lhs.fn.empty() && is_number(v)) {
            // Keep strict comparisons against a whole-table aggregate satisfiable.
            if (op == ">") v = shifted(v, -1);
            else if (op == "<" || op == "<>") v = shifted(v, 1);
        }
        if (kind == ValueKind::Number) return AstNode(NodeKind::Literal, number_lexeme(v));
        auto text = value_to_text(v);
        if (op == "LIKE") {
            const std::size_t len = std::min<std::size_t>(text.size(), 2 + rng.index(4));
            const std::size_t start = text.size() > len ? rng.index(text.size() - len + 1) : 0;
            text = "%" + text.substr(start, len) + "%";
        }
        return AstNode(NodeKind::Literal, quote_string(text));
    }
};

namespace {

constexpr unsigned kNumeric = 1u << 0;
constexpr unsigned kText = 1u << 1;
constexpr unsigned kTimestamp = 1u << 2;
constexpr unsigned kBoolean = 1u << 3;
constexpr unsigned kAny = kNumeric | kText | kTimestamp | kBoolean;

static_assert(static_cast<int>(TypeClass::Numeric) == 0 && static_cast<int>(TypeClass::Text) == 1 &&
              static_cast<int>(TypeClass::Timestamp) == 2 && static_cast<int>(TypeClass::Boolean) == 3);

unsigned compatible_mask(TypeClass c) {
    switch (c) {
        case TypeClass::Numeric:
            return kNumeric;
        case TypeClass::Boolean:
            return kBoolean;
        default:
            return kText | kTimestamp;
    }
}

AstNode comparison(std::string op, AstNode lhs, AstNode rhs) {
    return AstNode(NodeKind::Comparison, std::move(op), {std::move(lhs), std::move(rhs)});
}

AstNode conjunction(std::vector<AstNode> parts, NodeKind kind) {
    if (parts.size() == 1) return std::move(parts.front());
    return AstNode(kind, "", std::move(parts));
}

}  // namespace

Grounder::Grounder(const SandboxDatabase& db) : impl_(std::make_unique<Impl>(db)) {}
Grounder::~Grounder() = default;

const SandboxDatabase& Grounder::database() const { return impl_->db; }

SqlQuery Grounder::ground(const Derivation& skeleton, Rng& rng) const {
    const auto& g = *impl_;
    const auto plan = read_plan(skeleton);
    const auto& schema = g.schema;
    if (schema.tables.empty()) throw GroundingError("schema has no tables");

    // FROM and JOIN tables: each join brings a new table, preferring foreign-key neighbours.
    std::vector<std::size_t> scope{rng.index(schema.tables.size())};
    AstNode from(NodeKind::From, "", {AstNode(NodeKind::TableRef, schema.tables[scope[0]].name)});
    std::vector<Bound> found;
    for (const auto& jp : plan.joins) {
        std::vector<std::size_t> adjacent, unused;
        for (std::size_t t = 0; t < schema.tables.size(); ++t) {
            if (std::find(scope.begin(), scope.end(), t) != scope.end()) continue;
            unused.push_back(t);
            for (const auto& e : g.edges) {
                const bool linked = (e.from_table == t && std::find(scope.begin(), scope.end(), e.to_table) != scope.end()) ||
                                    (e.to_table == t && std::find(scope.begin(), scope.end(), e.from_table) != scope.end());
                if (linked) {
                    adjacent.push_back(t);
                    break;
                }
            }
        }
        if (unused.empty()) throw GroundingError("no table left to join");
        const auto& pool = adjacent.empty() ? unused : adjacent;
        const std::size_t added = pool[rng.index(pool.size())];
        const std::vector<std::size_t> prior = scope;
        scope.push_back(added);
        const std::vector<std::size_t> newcomer{added};

        std::vector<AstNode> conds;
        for (std::size_t k = 0; k < jp.pairs.size(); ++k) {
            const auto& [ls, rs] = jp.pairs[k];
            std::optional<std::pair<Bound, Bound>> chosen;
            if (k == 0 && ls.fn.empty() && rs.fn.empty()) {
                std::vector<std::pair<Bound, Bound>> fk;
                for (const auto& e : g.edges) {
                    const bool prior_from = std::find(prior.begin(), prior.end(), e.from_table) != prior.end();
                    const bool prior_to = std::find(prior.begin(), prior.end(), e.to_table) != prior.end();
                    if (e.to_table == added && prior_from)
                        fk.push_back({{e.from_table, e.from_column, "", g.classes[e.from_table][e.from_column]},
                                      {e.to_table, e.to_column, "", g.classes[e.to_table][e.to_column]}});
                    else if (e.from_table == added && prior_to)
                        fk.push_back({{e.to_table, e.to_column, "", g.classes[e.to_table][e.to_column]},
                                      {e.from_table, e.from_column, "", g.classes[e.from_table][e.from_column]}});
                }
                if (!fk.empty()) chosen = fk[rng.index(fk.size())];
            }
            if (!chosen) {
                // Same-typed pairs across the prior scope and the new table; booleans last.
                std::vector<Bound> lefts, rights;
                std::vector<std::pair<Bound, Bound>> exact, loose, fallback;
                g.candidates(ls, prior, kAny, lefts);
                g.candidates(rs, newcomer, kAny, rights);
                const bool both_aggregates = !ls.fn.empty() && !rs.fn.empty();
                for (const auto& l : lefts) {
                    for (const auto& r : rights) {
                        if (!comparable(l.cls, r.cls)) continue;
                        if (both_aggregates) {
                            // Two equal whole-table scalars would join every row with every row.
                            const auto& a = g.scalars[l.table][l.column][aggregate_index(l.fn)];
                            const auto& b = g.scalars[r.table][r.column][aggregate_index(r.fn)];
                            if (values_equal(a, b)) {
                                fallback.push_back({l, r});
                                continue;
                            }
                        }
                        if (l.cls == TypeClass::Boolean) fallback.push_back({l, r});
                        else if (l.fn.empty() && r.fn.empty() &&
                                 schema.tables[l.table].columns[l.column].data_type ==
                                     schema.tables[r.table].columns[r.column].data_type)
                            exact.push_back({l, r});
                        else loose.push_back({l, r});
                    }
                }
                for (auto* list : {&exact, &loose, &fallback}) {
                    if (!list->empty()) {
                        chosen = (*list)[rng.index(list->size())];
                        break;
                    }
                }
            }
            if (!chosen) {
                const auto l = g.pick(ls, scope, {kNumeric | kText | kTimestamp, kAny}, rng);
                const auto r = g.pick(rs, scope, {compatible_mask(l.cls)}, rng);
                chosen = std::make_pair(l, r);
            }
            conds.push_back(comparison("=", g.node(chosen->first), g.node(chosen->second)));
        }
        AstNode join(NodeKind::Join);
        join.children.emplace_back(NodeKind::JoinType, jp.type);
        join.children.emplace_back(NodeKind::TableRef, schema.tables[added].name);
        join.children.emplace_back(NodeKind::On, "", std::vector<AstNode>{conjunction(std::move(conds), NodeKind::And)});
        from.children.push_back(std::move(join));
    }

    // GROUP BY first so that plain SELECT/ORDER BY columns can be restricted to grouped ones.
    std::vector<Bound> group;
    for (const auto& s : plan.group) group.push_back(g.pick(s, scope, {kAny}, rng));
    std::vector<Bound> grouped_plain;
    for (const auto& b : group)
        if (b.fn.empty()) grouped_plain.push_back(b);
    const auto pick_output = [&](const Slot& s) {
        if (s.fn.empty() && !grouped_plain.empty()) return grouped_plain[rng.index(grouped_plain.size())];
        return g.pick(s, scope, {kAny}, rng);
    };

    AstNode select(NodeKind::Select);
    if (plan.distinct) select.children.emplace_back(NodeKind::Distinct);
    for (const auto& s : plan.select) select.children.push_back(g.node(pick_output(s)));

    AstNode query(NodeKind::Query);
    query.children.push_back(std::move(select));
    query.children.push_back(std::move(from));

    if (plan.has_where) {
        std::vector<AstNode> comparisons;
        comparisons.reserve(plan.leaves.size());
        for (const auto& leaf : plan.leaves) {
            if (leaf.value == ValueKind::Column) {
                if (leaf.op == "LIKE") {
                    const auto l = g.pick(leaf.lhs, scope, {kNumeric | kText | kTimestamp, kAny}, rng);
                    const auto r = g.pick(leaf.rhs, scope, {kNumeric | kText | kTimestamp, kAny}, rng);
                    comparisons.push_back(comparison(leaf.op, g.node(l), g.node(r)));
                    continue;
                }
                // Choose the left side among bindings that leave the right side a compatible partner.
                unsigned reachable = 0;
                g.candidates(leaf.rhs, scope, kAny, found);
                for (const auto& r : found) reachable |= compatible_mask(r.cls);
                const auto l = g.pick(leaf.lhs, scope, {reachable & ~kBoolean, reachable}, rng);
                const auto r = g.pick(leaf.rhs, scope, {compatible_mask(l.cls)}, rng);
                comparisons.push_back(comparison(leaf.op, g.node(l), g.node(r)));
                continue;
            }
            Bound l;
            if (leaf.value == ValueKind::Number) l = g.pick(leaf.lhs, scope, {kNumeric}, rng);
            else l = g.pick(leaf.lhs, scope, {kText | kTimestamp, kNumeric}, rng);
            comparisons.push_back(comparison(leaf.op, g.node(l), g.literal(l, leaf.op, leaf.value, rng)));
        }
        // AND binds tighter than OR: split the flat sequence at every OR.
        std::vector<AstNode> disjuncts;
        std::vector<AstNode> run;
        for (std::size_t i = 0; i < comparisons.size(); ++i) {
            run.push_back(std::move(comparisons[i]));
            if (i == comparisons.size() - 1 || plan.connectives[i] == "OR") {
                disjuncts.push_back(conjunction(std::move(run), NodeKind::And));
                run.clear();
            }
        }
        query.children.emplace_back(NodeKind::Where, "",
                                    std::vector<AstNode>{conjunction(std::move(disjuncts), NodeKind::Or)});
    }

    if (plan.has_group) {
        AstNode node(NodeKind::GroupBy);
        for (const auto& b : group) node.children.push_back(g.node(b));
        query.children.push_back(std::move(node));
    }
    if (plan.has_order) {
        AstNode node(NodeKind::OrderBy);
        for (const auto& s : plan.order) node.children.push_back(g.node(pick_output(s)));
        if (!plan.direction.empty()) node.children.emplace_back(NodeKind::SortDir, plan.direction);
        query.children.push_back(std::move(node));
    }

    auto serialized = serialize(query);
    return {std::move(serialized.text), std::move(query), std::move(serialized.spans)};
}

SqlQuery ground(const Derivation& skeleton, const SandboxDatabase& db, Rng& rng) {
    return Grounder(db).ground(skeleton, rng);
}

SampleOutcome sample_query(const Grammar& grammar, const Grounder& grounder, const SamplerConfig& config, Rng& rng) {
    std::optional<SampleOutcome> last;
    std::string last_error = "no attempts made";
    const std::size_t attempts = std::max<std::size_t>(1, config.max_rejection_attempts);
    for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
        SqlQuery query;
        try {
            const auto skeleton = sample_structure(grammar, rng, config.optional_probabilities, config.max_expansions);
            query = grounder.ground(skeleton, rng);
        } catch (const SamplingError& e) {
            last_error = e.what();
            continue;
        } catch (const GroundingError& e) {
            last_error = e.what();
            continue;
        }
        if (!config.require_nonempty_result) return {std::move(query), attempt, false};
        try {
            const auto result = execute_query(grounder.database(), query);
            if (!result.rows.empty()) return {std::move(query), attempt, true};
            last = SampleOutcome{std::move(query), attempt, false};
        } catch (const ExecutionError& e) {
            last_error = e.what();
        }
    }
    if (last) {
        last->attempts = attempts;
        return std::move(*last);
    }
    throw SamplingError(fmt::format("no executable query after {} attempts: {}", attempts, last_error));
}

SqlQuery sample_query(const Grammar& grammar, const SandboxDatabase& db, const SamplerConfig& config, Rng& rng) {
    const Grounder grounder(db);
    return sample_query(grammar, grounder, config, rng).query;
}

// ---------------------------------------------------------------------------
// Learning.

namespace {

class Recovery {
public:
    Recovery(const Grammar& grammar, ProductionCounts& counts) : g_(grammar), counts_(counts) {}

    void query(const AstNode& q) {
        use("Query", {"SelectClause", "FromClause", "[WhereClause]", "[GroupByClause]", "[OrderByClause]"});
        bool where = false, group = false, order = false;
        for (const auto& c : q.children) {
            switch (c.kind) {
                case NodeKind::Select:
                    select(c);
                    break;
                case NodeKind::From:
                    from(c);
                    break;
                case NodeKind::Where:
                    where = true;
                    use("WhereClause", {"WHERE", "Condition"});
                    condition(c.children.at(0));
                    break;
                case NodeKind::GroupBy:
                    group = true;
                    use("GroupByClause", {"GROUP BY", "ColumnList"});
                    column_list(c.children, c.children.size());
                    break;
                case NodeKind::OrderBy:
                    order = true;
                    order_by(c);
                    break;
                default:
                    fail("unexpected clause");
            }
        }
        optional("WhereClause", where);
        optional("GroupByClause", group);
        optional("OrderByClause", order);
    }

private:
    [[noreturn]] static void fail(const std::string& why) { throw ValidationError("", why); }

    void use(const std::string& nt, const std::vector<std::string>& rhs, std::size_t n = 1) {
        if (n == 0) return;
        const auto idx = g_.find_production(nt, rhs);
        if (idx == static_cast<std::size_t>(-1)) {
            std::string spelled;
            for (const auto& s : rhs) spelled += (spelled.empty() ? "" : " ") + s;
            fail(fmt::format("grammar has no production {} -> {}", nt, spelled));
        }
        counts_.add(g_, nt, idx, n);
    }

    void optional(const std::string& nt, bool present) {
        auto& o = counts_.optional[optional_key(nt)];
        ++o.second;
        if (present) ++o.first;
    }

    void column(const AstNode& n) {
        if (n.kind == NodeKind::ColumnRef) {
            if (n.lexeme == "*") fail("'*' has no production");
            use("Column", {"<TableName>", ".", "<ColumnName>"});
        } else if (n.kind == NodeKind::Aggregate) {
            if (n.children.at(0).lexeme == "*") fail(fmt::format("{}(*) has no production", n.lexeme));
            use("Column", {"AggregateFunction", "(", "<TableName>", ".", "<ColumnName>", ")"});
            use("AggregateFunction", {n.lexeme});
        } else {
            fail(fmt::format("{} is not a column", to_string(n.kind)));
        }
    }

    void column_list(const std::vector<AstNode>& items, std::size_t count, std::size_t first = 0) {
        if (count == 0) fail("empty column list");
        use("ColumnList", {"Column", ",", "ColumnList"}, count - 1);
        use("ColumnList", {"Column"});
        for (std::size_t i = first; i < first + count; ++i) column(items[i]);
    }

    void select(const AstNode& s) {
        const bool distinct = !s.children.empty() && s.children[0].kind == NodeKind::Distinct;
        use("SelectClause", {distinct ? "SELECT DISTINCT" : "SELECT", "ColumnList"});
        const std::size_t first = distinct ? 1 : 0;
        column_list(s.children, s.children.size() - first, first);
    }

    void from(const AstNode& f) {
        const std::size_t joins = f.children.size() - 1;
        if (joins == 0) {
            use("FromClause", {"FROM", "<TableName>"});
            return;
        }
        use("FromClause", {"FROM", "<TableName>", "JoinClause"});
        use("JoinClause", {"JoinType", "JOIN", "<TableName>", "ON", "JoinCondition", "JoinClause"}, joins - 1);
        use("JoinClause", {"JoinType", "JOIN", "<TableName>", "ON", "JoinCondition"});
        for (std::size_t j = 1; j < f.children.size(); ++j) {
            const auto& join = f.children[j];
            use("JoinType", {join.children.at(0).lexeme});
            const auto& cond = join.children.at(2).children.at(0);
            std::vector<const AstNode*> pairs;
            if (cond.kind == NodeKind::And) {
                for (const auto& c : cond.children) pairs.push_back(&c);
            } else {
                pairs.push_back(&cond);
            }
            use("JoinCondition", {"JoinCondition", "AND", "JoinCondition"}, pairs.size() - 1);
            use("JoinCondition", {"Column", "=", "Column"}, pairs.size());
            for (const auto* p : pairs) {
                if (p->kind != NodeKind::Comparison || p->lexeme != "=" || p->children.size() != 2)
                    fail("join condition is not an equality of two columns");
                column(p->children[0]);
                column(p->children[1]);
            }
        }
    }

    void comparison(const AstNode& c) {
        if (c.kind != NodeKind::Comparison) fail("malformed condition");
        if (c.children.size() != 2) fail("IN with several values has no production");
        use("Condition", {"Column", "Operator", "Value"});
        column(c.children[0]);
        use("Operator", {c.lexeme});
        const auto& v = c.children[1];
        if (v.kind == NodeKind::Literal) {
            use("Value", {is_string_literal(v) ? "<String>" : "<Number>"});
        } else {
            use("Value", {"Column"});
            column(v);
        }
    }

    void conjunction(const AstNode& n) {
        if (n.kind == NodeKind::And) {
            use("Condition", {"Condition", "AND", "Condition"}, n.children.size() - 1);
            for (const auto& c : n.children) comparison(c);
        } else {
            comparison(n);
        }
    }

    void condition(const AstNode& n) {
        if (n.kind == NodeKind::Or) {
            use("Condition", {"Condition", "OR", "Condition"}, n.children.size() - 1);
            for (const auto& c : n.children) conjunction(c);
        } else {
            conjunction(n);
        }
    }

    void order_by(const AstNode& o) {
        use("OrderByClause", {"ORDER BY", "ColumnList", "[SortDirection]"});
        std::size_t items = o.children.size();
        const bool has_dir = items > 0 && o.children.back().kind == NodeKind::SortDir;
        if (has_dir) --items;
        column_list(o.children, items);
        optional("SortDirection", has_dir);
        if (has_dir) use("SortDirection", {o.children.back().lexeme});
    }

    const Grammar& g_;
    ProductionCounts& counts_;
};

}  // namespace

ProductionCounts derivation_counts(const Grammar& grammar, const AstNode& query) {
    ProductionCounts counts;
    Recovery(grammar, counts).query(query);
    return counts;
}

LearnResult learn_probabilities(const Grammar& grammar, const std::vector<SqlQuery>& corpus) {
    LearnResult result;
    result.grammar = grammar;
    if (corpus.empty()) {
        result.empty_corpus = true;
        return result;
    }
    ProductionCounts total;
    for (const auto& q : corpus) {
        try {
            total.merge(derivation_counts(grammar, q.ast));
            ++result.used;
        } catch (const ValidationError& e) {
            ++result.skipped;
            result.skipped_reasons.push_back(fmt::format("{}: {}", q.text, e.what()));
        }
    }
    for (auto& [nt, prods] : result.grammar.rules) {
        std::vector<std::size_t> uses(prods.size(), 0);
        if (auto it = total.uses.find(nt); it != total.uses.end())
            for (std::size_t i = 0; i < prods.size() && i < it->second.size(); ++i) uses[i] = it->second[i];
        std::size_t sum = 0;
        for (auto u : uses) sum += u;
        for (std::size_t i = 0; i < prods.size(); ++i)
            prods[i].probability = static_cast<double>(uses[i] + 1) / static_cast<double>(sum + prods.size());
    }
    for (auto& [key, p] : result.grammar.optional) {
        const auto it = total.optional.find(key);
        const std::size_t present = it == total.optional.end() ? 0 : it->second.first;
        const std::size_t offered = it == total.optional.end() ? 0 : it->second.second;
        p = static_cast<double>(present + 1) / static_cast<double>(offered + 2);
    }
    return result;
}

}  // namespace sqlpair
