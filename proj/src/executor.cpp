#include "sqlpair/executor.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>

#include <fmt/format.h>

#include "json_util.hpp"
#include "sqlpair/error.hpp"

namespace sqlpair {

TypeClass type_class(DataType type) {
    switch (type) {
        case DataType::Int:
        case DataType::Float:
        case DataType::Double:
        case DataType::Decimal:
            return TypeClass::Numeric;
        case DataType::Timestamp:
            return TypeClass::Timestamp;
        case DataType::Boolean:
            return TypeClass::Boolean;
        case DataType::Text:
        case DataType::Enum:
            return TypeClass::Text;
    }
    return TypeClass::Text;
}

bool comparable(TypeClass a, TypeClass b) {
    if (a == b) return true;
    const auto stringy = [](TypeClass t) { return t == TypeClass::Text || t == TypeClass::Timestamp; };
    return stringy(a) && stringy(b);
}

namespace {

std::string_view class_name(TypeClass c) {
    switch (c) {
        case TypeClass::Numeric:
            return "numeric";
        case TypeClass::Text:
            return "text";
        case TypeClass::Timestamp:
            return "timestamp";
        case TypeClass::Boolean:
            return "boolean";
    }
    return "text";
}

struct Scope {
    const Schema* schema = nullptr;
    std::vector<std::size_t> tables;   // schema indices in FROM/JOIN order
    std::vector<std::size_t> offsets;  // first combined column of each table
    std::size_t width = 0;

    void add(std::size_t table) {
        tables.push_back(table);
        offsets.push_back(width);
        width += schema->tables[table].columns.size();
    }
};

struct Resolved {
    std::size_t index;
    std::size_t table;  // schema index
    const Column* column;
};

Resolved resolve(const Scope& scope, const AstNode& ref) {
    const auto table_name = column_table(ref);
    const auto col_name = column_name(ref);
    const auto ti = scope.schema->table_index(table_name);
    if (!ti) throw ExecutionError(fmt::format("unknown table {}", table_name));
    const auto& table = scope.schema->tables[*ti];
    const auto ci = table.column_index(col_name);
    if (!ci) throw ExecutionError(fmt::format("unknown column {}", ref.lexeme));
    for (std::size_t k = 0; k < scope.tables.size(); ++k)
        if (scope.tables[k] == *ti) return {scope.offsets[k] + *ci, *ti, &table.columns[*ci]};
    throw ExecutionError(fmt::format("table {} is not in the FROM clause", table.name));
}

Value aggregate(std::string_view fn, const std::vector<const Value*>& values, bool star) {
    if (fn == "COUNT") {
        std::int64_t n = 0;
        for (const auto* v : values)
            if (star || !is_null(*v)) ++n;
        return n;
    }
    std::vector<const Value*> present;
    for (const auto* v : values)
        if (!is_null(*v)) present.push_back(v);
    if (present.empty()) return std::monostate{};
    if (fn == "SUM" || fn == "AVG") {
        bool all_int = true;
        std::int64_t isum = 0;
        double dsum = 0.0;
        for (const auto* v : present) {
            if (const auto* i = std::get_if<std::int64_t>(v)) isum += *i;
            else all_int = false;
            dsum += as_double(*v);
        }
        if (fn == "AVG") return dsum / static_cast<double>(present.size());
        if (all_int) return isum;
        return dsum;
    }
    const Value* best = present.front();
    for (const auto* v : present) {
        const auto c = compare_values(*v, *best);
        if ((fn == "MIN" && c < 0) || (fn == "MAX" && c > 0)) best = v;
    }
    return *best;
}

struct Operand {
    enum class Kind { Column, Constant, GroupAggregate } kind = Kind::Constant;
    std::size_t index = 0;
    bool star = false;
    std::string fn;
    Value constant;
    TypeClass cls = TypeClass::Text;
};

struct Condition {
    NodeKind kind = NodeKind::Comparison;
    std::vector<Condition> children;
    std::string op;
    Operand lhs;
    std::vector<Operand> rhs;
};

class Compiler {
public:
    Compiler(const SandboxDatabase& db, const Scope& scope) : db_(db), scope_(scope) {}

    // Operand for a per-row context: aggregates collapse to base-table scalars.
    Operand row_operand(const AstNode& n) const {
        Operand op;
        if (n.kind == NodeKind::Literal) {
            op.kind = Operand::Kind::Constant;
            op.constant = literal_value(n);
            op.cls = is_string_literal(n) ? TypeClass::Text : TypeClass::Numeric;
            return op;
        }
        if (n.kind == NodeKind::ColumnRef) {
            if (n.lexeme == "*") throw ExecutionError("'*' is only allowed in SELECT and COUNT(*)");
            const auto r = resolve(scope_, n);
            op.kind = Operand::Kind::Column;
            op.index = r.index;
            op.cls = type_class(r.column->data_type);
            return op;
        }
        if (n.kind == NodeKind::Aggregate) {
            const auto [cls, star] = check_aggregate(n);
            op.kind = Operand::Kind::Constant;
            op.cls = cls;
            if (star) {
                op.constant = static_cast<std::int64_t>(db_.tables[scope_.tables.front()].records.size());
                return op;
            }
            const auto values = db_.column_values(column_table(n.children[0]), column_name(n.children[0]));
            std::vector<const Value*> ptrs;
            for (const auto& v : values) ptrs.push_back(&v);
            op.constant = aggregate(n.lexeme, ptrs, false);
            return op;
        }
        throw ExecutionError(fmt::format("unexpected {} in expression", to_string(n.kind)));
    }

    // Operand for a grouped context.
    Operand group_operand(const AstNode& n) const {
        if (n.kind != NodeKind::Aggregate) return row_operand(n);
        const auto [cls, star] = check_aggregate(n);
        Operand op;
        op.kind = Operand::Kind::GroupAggregate;
        op.fn = n.lexeme;
        op.star = star;
        op.cls = cls;
        if (!star) op.index = resolve(scope_, n.children[0]).index;
        return op;
    }

    Condition condition(const AstNode& n) const {
        Condition c;
        c.kind = n.kind;
        if (n.kind == NodeKind::And || n.kind == NodeKind::Or) {
            for (const auto& child : n.children) c.children.push_back(condition(child));
            return c;
        }
        if (n.kind != NodeKind::Comparison) throw ExecutionError("malformed condition");
        c.op = n.lexeme;
        c.lhs = row_operand(n.children.at(0));
        for (std::size_t i = 1; i < n.children.size(); ++i) {
            auto rhs = row_operand(n.children[i]);
            if (c.op != "LIKE" && c.lhs.cls == TypeClass::Numeric) coerce_numeric_text(rhs);
            if (c.op != "LIKE" && !comparable(c.lhs.cls, rhs.cls))
                throw ExecutionError(fmt::format("type mismatch: cannot compare {} ({}) with {} ({})",
                                                 serialize(n.children[0]).text, class_name(c.lhs.cls),
                                                 serialize(n.children[i]).text, class_name(rhs.cls)));
            c.rhs.push_back(std::move(rhs));
        }
        return c;
    }

private:
    // A quoted literal holding a number compares numerically with numeric operands.
    static void coerce_numeric_text(Operand& op) {
        if (op.kind != Operand::Kind::Constant || op.cls != TypeClass::Text) return;
        const auto& text = std::get<std::string>(op.constant);
        double d = 0.0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
        if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) return;
        op.constant = literal_value(AstNode(NodeKind::Literal, text));
        op.cls = TypeClass::Numeric;
    }

    std::pair<TypeClass, bool> check_aggregate(const AstNode& n) const {
        const auto& arg = n.children.at(0);
        if (arg.lexeme == "*") {
            if (n.lexeme != "COUNT") throw ExecutionError(fmt::format("{}(*) is not supported", n.lexeme));
            return {TypeClass::Numeric, true};
        }
        const auto r = resolve(scope_, arg);
        const auto cls = type_class(r.column->data_type);
        if ((n.lexeme == "SUM" || n.lexeme == "AVG") && cls != TypeClass::Numeric)
            throw ExecutionError(fmt::format("{} requires a numeric column, {} is {}", n.lexeme, arg.lexeme,
                                             to_string(r.column->data_type)));
        if (n.lexeme == "COUNT" || n.lexeme == "SUM" || n.lexeme == "AVG") return {TypeClass::Numeric, false};
        return {cls, false};
    }

    const SandboxDatabase& db_;
    const Scope& scope_;
};

const Value& row_value(const Operand& op, const Record& row) {
    return op.kind == Operand::Kind::Column ? row[op.index] : op.constant;
}

bool compare_op(std::string_view op, const Value& a, const Value& b) {
    if (is_null(a) || is_null(b)) return false;
    if (op == "LIKE") return like_match(value_to_text(a), value_to_text(b));
    const auto c = compare_values(a, b);
    if (op == "=" || op == "IN") return c == 0;
    if (op == "<>") return c != 0;
    if (op == "<") return c < 0;
    if (op == ">") return c > 0;
    if (op == "<=") return c <= 0;
    if (op == ">=") return c >= 0;
    return false;
}

bool eval(const Condition& c, const Record& row) {
    switch (c.kind) {
        case NodeKind::And:
            for (const auto& child : c.children)
                if (!eval(child, row)) return false;
            return true;
        case NodeKind::Or:
            for (const auto& child : c.children)
                if (eval(child, row)) return true;
            return false;
        default: {
            const auto& lhs = row_value(c.lhs, row);
            for (const auto& r : c.rhs)
                if (compare_op(c.op, lhs, row_value(r, row))) return true;
            return false;
        }
    }
}

Value group_value(const Operand& op, const std::vector<const Record*>& rows) {
    switch (op.kind) {
        case Operand::Kind::Constant:
            return op.constant;
        case Operand::Kind::Column:
            return rows.empty() ? Value{} : (*rows.front())[op.index];
        case Operand::Kind::GroupAggregate: {
            std::vector<const Value*> values;
            values.reserve(rows.size());
            static const Value null_value;
            for (const auto* r : rows) values.push_back(op.star ? &null_value : &(*r)[op.index]);
            return aggregate(op.fn, values, op.star);
        }
    }
    return {};
}

struct KeyLess {
    bool operator()(const std::vector<Value>& a, const std::vector<Value>& b) const {
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                            [](const Value& x, const Value& y) { return compare_values(x, y) < 0; });
    }
};

bool contains_aggregate(const AstNode& select) {
    for (const auto& c : select.children)
        if (c.kind == NodeKind::Aggregate) return true;
    return false;
}

}  // namespace

bool like_match(std::string_view text, std::string_view pattern) {
    // Iterative wildcard match with backtracking to the last '%'.
    std::size_t t = 0, p = 0, star_p = std::string_view::npos, star_t = 0;
    const auto eq = [](char a, char b) {
        return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
    };
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '_' || (pattern[p] != '%' && eq(pattern[p], text[t])))) {
            ++t;
            ++p;
        } else if (p < pattern.size() && pattern[p] == '%') {
            star_p = p++;
            star_t = t;
        } else if (star_p != std::string_view::npos) {
            p = star_p + 1;
            t = ++star_t;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '%') ++p;
    return p == pattern.size();
}

Value literal_value(const AstNode& literal) {
    if (is_string_literal(literal)) return literal_text(literal);
    const auto& s = literal.lexeme;
    if (s.find_first_of(".eE") == std::string::npos) {
        std::int64_t i = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
        if (ec == std::errc() && ptr == s.data() + s.size()) return i;
    }
    double d = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ExecutionError(fmt::format("bad numeric literal {}", s));
    return d;
}

ResultTable execute_query(const SandboxDatabase& db, const SqlQuery& query) { return execute_query(db, query.ast); }

ResultTable execute_query(const SandboxDatabase& db, const AstNode& query) {
    const AstNode* select = nullptr;
    const AstNode* from = nullptr;
    const AstNode* where = nullptr;
    const AstNode* group_by = nullptr;
    const AstNode* order_by = nullptr;
    for (const auto& c : query.children) {
        switch (c.kind) {
            case NodeKind::Select:
                select = &c;
                break;
            case NodeKind::From:
                from = &c;
                break;
            case NodeKind::Where:
                where = &c;
                break;
            case NodeKind::GroupBy:
                group_by = &c;
                break;
            case NodeKind::OrderBy:
                order_by = &c;
                break;
            default:
                throw ExecutionError("malformed query tree");
        }
    }
    if (!select || !from) throw ExecutionError("query needs SELECT and FROM");

    Scope scope;
    scope.schema = &db.schema;
    const auto base_name = from->children.at(0).lexeme;
    const auto base = db.schema.table_index(base_name);
    if (!base) throw ExecutionError(fmt::format("unknown table {}", base_name));
    scope.add(*base);

    std::vector<Record> rows = db.tables[*base].records;

    for (std::size_t j = 1; j < from->children.size(); ++j) {
        const auto& join = from->children[j];
        const auto& type = join.children.at(0).lexeme;
        const auto& name = join.children.at(1).lexeme;
        const auto ti = db.schema.table_index(name);
        if (!ti) throw ExecutionError(fmt::format("unknown table {}", name));
        const std::size_t left_width = scope.width;
        scope.add(*ti);
        const std::size_t right_width = scope.width - left_width;
        const auto cond = Compiler(db, scope).condition(join.children.at(2).children.at(0));

        const auto& right = db.tables[*ti].records;
        const bool keep_left = type == "LEFT" || type == "FULL";
        const bool keep_right = type == "RIGHT" || type == "FULL";
        std::vector<char> right_matched(right.size(), 0);
        std::vector<Record> joined;
        Record combined(scope.width);
        for (const auto& l : rows) {
            std::copy(l.begin(), l.end(), combined.begin());
            bool matched = false;
            for (std::size_t r = 0; r < right.size(); ++r) {
                std::copy(right[r].begin(), right[r].end(), combined.begin() + static_cast<std::ptrdiff_t>(left_width));
                if (eval(cond, combined)) {
                    if ((joined.size() + 1) * scope.width > kMaxJoinCells)
                        throw ExecutionError(fmt::format("join result exceeds {} cells", kMaxJoinCells));
                    joined.push_back(combined);
                    matched = true;
                    right_matched[r] = 1;
                }
            }
            if (!matched && keep_left) {
                Record padded(l);
                padded.resize(scope.width);
                joined.push_back(std::move(padded));
            }
        }
        if (keep_right) {
            for (std::size_t r = 0; r < right.size(); ++r) {
                if (right_matched[r]) continue;
                Record padded(left_width);
                padded.insert(padded.end(), right[r].begin(), right[r].end());
                joined.push_back(std::move(padded));
            }
        }
        (void)right_width;
        rows = std::move(joined);
    }

    const Compiler compiler(db, scope);
    if (where) {
        const auto cond = compiler.condition(where->children.at(0));
        std::vector<Record> kept;
        for (auto& r : rows)
            if (eval(cond, r)) kept.push_back(std::move(r));
        rows = std::move(kept);
    }

    // Output columns; '*' expands to every column in scope.
    struct OutItem {
        std::string label;
        const AstNode* node = nullptr;
        std::size_t star_index = 0;
    };
    std::vector<OutItem> items;
    bool distinct = false;
    for (const auto& item : select->children) {
        if (item.kind == NodeKind::Distinct) {
            distinct = true;
        } else if (item.kind == NodeKind::ColumnRef && item.lexeme == "*") {
            for (std::size_t k = 0; k < scope.tables.size(); ++k) {
                const auto& t = db.schema.tables[scope.tables[k]];
                for (std::size_t c = 0; c < t.columns.size(); ++c)
                    items.push_back({t.name + "." + t.columns[c].name, nullptr, scope.offsets[k] + c});
            }
        } else {
            items.push_back({serialize(item).text, &item, 0});
        }
    }

    std::vector<const AstNode*> order_items;
    bool descending = false;
    if (order_by) {
        for (const auto& c : order_by->children) {
            if (c.kind == NodeKind::SortDir) descending = c.lexeme == "DESC";
            else order_items.push_back(&c);
        }
    }

    // Each output unit (a row, or a group when aggregated) yields projected values and sort keys.
    struct Unit {
        std::vector<Value> out;
        std::vector<Value> keys;
    };
    std::vector<Unit> units;

    const bool aggregated = group_by != nullptr || contains_aggregate(*select);
    if (aggregated) {
        std::vector<std::vector<const Record*>> groups;
        if (group_by) {
            std::vector<Operand> key_ops;
            for (const auto& g : group_by->children) key_ops.push_back(compiler.row_operand(g));
            std::map<std::vector<Value>, std::size_t, KeyLess> index;
            for (const auto& r : rows) {
                std::vector<Value> key;
                for (const auto& op : key_ops) key.push_back(row_value(op, r));
                auto [it, inserted] = index.emplace(std::move(key), groups.size());
                if (inserted) groups.emplace_back();
                groups[it->second].push_back(&r);
            }
        } else {
            groups.emplace_back();
            for (const auto& r : rows) groups.back().push_back(&r);
        }
        std::vector<Operand> out_ops, key_ops;
        for (const auto& item : items) {
            if (item.node) {
                out_ops.push_back(compiler.group_operand(*item.node));
            } else {
                Operand op;
                op.kind = Operand::Kind::Column;
                op.index = item.star_index;
                out_ops.push_back(op);
            }
        }
        for (const auto* o : order_items) key_ops.push_back(compiler.group_operand(*o));
        for (const auto& g : groups) {
            Unit u;
            for (const auto& op : out_ops) u.out.push_back(group_value(op, g));
            for (const auto& op : key_ops) u.keys.push_back(group_value(op, g));
            units.push_back(std::move(u));
        }
    } else {
        std::vector<Operand> out_ops, key_ops;
        for (const auto& item : items) {
            if (item.node) {
                out_ops.push_back(compiler.row_operand(*item.node));
            } else {
                Operand op;
                op.kind = Operand::Kind::Column;
                op.index = item.star_index;
                out_ops.push_back(op);
            }
        }
        for (const auto* o : order_items) key_ops.push_back(compiler.row_operand(*o));
        units.reserve(rows.size());
        for (const auto& r : rows) {
            Unit u;
            for (const auto& op : out_ops) u.out.push_back(row_value(op, r));
            for (const auto& op : key_ops) u.keys.push_back(row_value(op, r));
            units.push_back(std::move(u));
        }
    }

    if (!order_items.empty()) {
        std::stable_sort(units.begin(), units.end(), [descending](const Unit& a, const Unit& b) {
            for (std::size_t k = 0; k < a.keys.size(); ++k) {
                auto c = compare_values(a.keys[k], b.keys[k]);
                if (c == 0) continue;
                const bool last = k + 1 == a.keys.size();
                return (last && descending) ? c > 0 : c < 0;
            }
            return false;
        });
    }

    ResultTable result;
    for (const auto& item : items) result.columns.push_back(item.label);
    if (distinct) {
        std::map<std::vector<Value>, bool, KeyLess> seen;
        for (auto& u : units)
            if (seen.emplace(u.out, true).second) result.rows.push_back(std::move(u.out));
    } else {
        for (auto& u : units) result.rows.push_back(std::move(u.out));
    }
    return result;
}

std::string result_to_json(const ResultTable& table) {
    detail::ordered_json j;
    j["columns"] = table.columns;
    auto rows = detail::ordered_json::array();
    for (const auto& r : table.rows) {
        auto row = detail::ordered_json::array();
        for (const auto& v : r) {
            std::visit(
                [&row](const auto& x) {
                    using T = std::decay_t<decltype(x)>;
                    if constexpr (std::is_same_v<T, std::monostate>) row.push_back(nullptr);
                    else row.push_back(x);
                },
                v);
        }
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    return j.dump();
}

}  // namespace sqlpair
