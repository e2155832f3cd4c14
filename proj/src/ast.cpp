#include "sqlpair/ast.hpp"

#include <array>
#include <cctype>
#include <stdexcept>

#include <fmt/format.h>

#include "sqlpair/error.hpp"
#include "sqlpair/schema.hpp"

namespace sqlpair {

namespace {

constexpr std::array<std::string_view, 18> kKindNames{
    "Query", "Select", "Distinct", "ColumnRef", "Aggregate", "From",    "Join",    "JoinType", "On",
    "Where", "And",    "Or",       "Comparison", "GroupBy",  "OrderBy", "SortDir", "Literal",  "TableRef",
};

enum class Tok { Ident, Keyword, Number, String, Symbol, End };

struct Token {
    Tok kind;
    std::string text;  // keywords upper-cased; strings keep their quotes
    std::size_t offset;
};

constexpr std::array<std::string_view, 24> kKeywords{
    "SELECT", "DISTINCT", "FROM", "WHERE", "AND",   "OR",   "GROUP", "BY",
    "ORDER",  "ASC",      "DESC", "JOIN",  "INNER", "LEFT", "RIGHT", "FULL",
    "ON",     "LIKE",     "IN",   "COUNT", "SUM",   "AVG",  "MIN",   "MAX",
};

bool is_keyword(std::string_view upper) {
    for (auto k : kKeywords)
        if (k == upper) return true;
    return false;
}

std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (std::isalpha(c) || c == '_') {
            while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
            std::string word(s.substr(start, i - start));
            const auto upper = to_upper(word);
            if (is_keyword(upper)) out.push_back({Tok::Keyword, upper, start});
            else out.push_back({Tok::Ident, std::move(word), start});
        } else if (std::isdigit(c)) {
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            if (i + 1 < s.size() && s[i] == '.' && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
                ++i;
                while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            }
            if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
                std::size_t j = i + 1;
                if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
                if (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
                    i = j;
                    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
                }
            }
            out.push_back({Tok::Number, std::string(s.substr(start, i - start)), start});
        } else if (c == '\'') {
            ++i;
            bool closed = false;
            while (i < s.size()) {
                if (s[i] == '\'') {
                    if (i + 1 < s.size() && s[i + 1] == '\'') {
                        i += 2;
                        continue;
                    }
                    ++i;
                    closed = true;
                    break;
                }
                ++i;
            }
            if (!closed) throw SqlSyntaxError(start, {"'"}, fmt::format("unterminated string literal at offset {}", start));
            out.push_back({Tok::String, std::string(s.substr(start, i - start)), start});
        } else if (c == '<' || c == '>') {
            ++i;
            if (i < s.size() && (s[i] == '=' || (c == '<' && s[i] == '>'))) ++i;
            out.push_back({Tok::Symbol, std::string(s.substr(start, i - start)), start});
        } else if (c == '=' || c == ',' || c == '.' || c == '(' || c == ')' || c == '*' || c == '-' || c == ';') {
            ++i;
            out.push_back({Tok::Symbol, std::string(1, static_cast<char>(c)), start});
        } else {
            throw SqlSyntaxError(start, {}, fmt::format("unexpected character '{}' at offset {}", static_cast<char>(c), start));
        }
    }
    out.push_back({Tok::End, "", s.size()});
    return out;
}

class Parser {
public:
    explicit Parser(std::string_view text) : tokens_(tokenize(text)) {}

    AstNode parse_query() {
        AstNode query(NodeKind::Query);
        expect_keyword("SELECT");
        AstNode select(NodeKind::Select);
        if (accept_keyword("DISTINCT")) select.children.emplace_back(NodeKind::Distinct);
        do {
            select.children.push_back(parse_select_item());
        } while (accept_symbol(","));
        query.children.push_back(std::move(select));

        expect_keyword("FROM");
        AstNode from(NodeKind::From);
        from.children.emplace_back(NodeKind::TableRef, expect_ident());
        while (true) {
            const auto& t = peek();
            std::string type;
            if (t.kind == Tok::Keyword && (t.text == "INNER" || t.text == "LEFT" || t.text == "RIGHT" || t.text == "FULL")) {
                type = t.text;
                advance();
                expect_keyword("JOIN");
            } else if (accept_keyword("JOIN")) {
                type = "INNER";
            } else {
                break;
            }
            AstNode join(NodeKind::Join);
            join.children.emplace_back(NodeKind::JoinType, type);
            join.children.emplace_back(NodeKind::TableRef, expect_ident());
            expect_keyword("ON");
            join.children.emplace_back(NodeKind::On, "", std::vector<AstNode>{parse_condition()});
            from.children.push_back(std::move(join));
        }
        query.children.push_back(std::move(from));

        if (accept_keyword("WHERE")) query.children.emplace_back(NodeKind::Where, "", std::vector<AstNode>{parse_condition()});
        if (accept_keyword("GROUP")) {
            expect_keyword("BY");
            AstNode group(NodeKind::GroupBy);
            do {
                group.children.push_back(parse_column_expr());
            } while (accept_symbol(","));
            query.children.push_back(std::move(group));
        }
        if (accept_keyword("ORDER")) {
            expect_keyword("BY");
            AstNode order(NodeKind::OrderBy);
            do {
                order.children.push_back(parse_column_expr());
            } while (accept_symbol(","));
            if (accept_keyword("ASC")) order.children.emplace_back(NodeKind::SortDir, "ASC");
            else if (accept_keyword("DESC")) order.children.emplace_back(NodeKind::SortDir, "DESC");
            query.children.push_back(std::move(order));
        }
        accept_symbol(";");
        if (peek().kind != Tok::End) fail({"end of input"});
        return query;
    }

private:
    const Token& peek() const { return tokens_[pos_]; }
    const Token& peek2() const { return tokens_[std::min(pos_ + 1, tokens_.size() - 1)]; }
    void advance() {
        if (pos_ + 1 < tokens_.size()) ++pos_;
    }

    [[noreturn]] void fail(std::vector<std::string> expected) const {
        const auto& t = peek();
        std::string found = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
        std::string want;
        for (const auto& e : expected) want += (want.empty() ? "" : ", ") + e;
        throw SqlSyntaxError(t.offset, std::move(expected),
                             fmt::format("syntax error at offset {}: expected {}, found {}", t.offset, want, found));
    }

    bool accept_keyword(std::string_view kw) {
        if (peek().kind == Tok::Keyword && peek().text == kw) {
            advance();
            return true;
        }
        return false;
    }
    void expect_keyword(std::string_view kw) {
        if (!accept_keyword(kw)) fail({std::string(kw)});
    }
    bool accept_symbol(std::string_view sym) {
        if (peek().kind == Tok::Symbol && peek().text == sym) {
            advance();
            return true;
        }
        return false;
    }
    void expect_symbol(std::string_view sym) {
        if (!accept_symbol(sym)) fail({std::string(sym)});
    }
    std::string expect_ident() {
        if (peek().kind != Tok::Ident) fail({"identifier"});
        auto text = peek().text;
        advance();
        return text;
    }

    static bool is_aggregate(const Token& t) {
        return t.kind == Tok::Keyword &&
               (t.text == "COUNT" || t.text == "SUM" || t.text == "AVG" || t.text == "MIN" || t.text == "MAX");
    }

    AstNode parse_column_ref() {
        auto table = expect_ident();
        expect_symbol(".");
        auto column = expect_ident();
        return AstNode(NodeKind::ColumnRef, table + "." + column);
    }

    AstNode parse_column_expr(bool allow_star_in_count = false) {
        if (is_aggregate(peek())) {
            const auto fn = peek().text;
            advance();
            expect_symbol("(");
            AstNode agg(NodeKind::Aggregate, fn);
            if (allow_star_in_count && fn == "COUNT" && accept_symbol("*"))
                agg.children.emplace_back(NodeKind::ColumnRef, "*");
            else
                agg.children.push_back(parse_column_ref());
            expect_symbol(")");
            return agg;
        }
        if (peek().kind != Tok::Ident) fail({"identifier", "aggregate function"});
        return parse_column_ref();
    }

    AstNode parse_select_item() {
        if (accept_symbol("*")) return AstNode(NodeKind::ColumnRef, "*");
        if (peek().kind != Tok::Ident && !is_aggregate(peek())) fail({"*", "identifier", "aggregate function"});
        return parse_column_expr(true);
    }

    AstNode parse_condition() {
        AstNode first = parse_and();
        if (!(peek().kind == Tok::Keyword && peek().text == "OR")) return first;
        AstNode node(NodeKind::Or);
        node.children.push_back(std::move(first));
        while (accept_keyword("OR")) node.children.push_back(parse_and());
        return node;
    }

    AstNode parse_and() {
        AstNode first = parse_comparison();
        if (!(peek().kind == Tok::Keyword && peek().text == "AND")) return first;
        AstNode node(NodeKind::And);
        node.children.push_back(std::move(first));
        while (accept_keyword("AND")) node.children.push_back(parse_comparison());
        return node;
    }

    AstNode parse_value() {
        const auto& t = peek();
        if (t.kind == Tok::Number) {
            auto text = t.text;
            advance();
            return AstNode(NodeKind::Literal, std::move(text));
        }
        if (t.kind == Tok::Symbol && t.text == "-" && peek2().kind == Tok::Number &&
            peek2().offset == t.offset + 1) {
            advance();
            auto text = "-" + peek().text;
            advance();
            return AstNode(NodeKind::Literal, std::move(text));
        }
        if (t.kind == Tok::String) {
            auto text = t.text;
            advance();
            return AstNode(NodeKind::Literal, std::move(text));
        }
        if (t.kind == Tok::Ident || is_aggregate(t)) return parse_column_expr();
        fail({"number", "string", "column"});
    }

    AstNode parse_comparison() {
        AstNode lhs = parse_column_expr();
        const auto& t = peek();
        std::string op;
        if (t.kind == Tok::Symbol && (t.text == "=" || t.text == "<" || t.text == ">" || t.text == "<=" ||
                                      t.text == ">=" || t.text == "<>")) {
            op = t.text;
        } else if (t.kind == Tok::Keyword && (t.text == "LIKE" || t.text == "IN")) {
            op = t.text;
        } else {
            fail({"=", "<", ">", "<=", ">=", "<>", "LIKE", "IN"});
        }
        advance();
        AstNode cmp(NodeKind::Comparison, op);
        cmp.children.push_back(std::move(lhs));
        if (op == "IN") {
            expect_symbol("(");
            do {
                cmp.children.push_back(parse_value());
            } while (accept_symbol(","));
            expect_symbol(")");
        } else {
            cmp.children.push_back(parse_value());
        }
        return cmp;
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

class Writer {
public:
    SerializedSql run(const AstNode& root) {
        write(root);
        return {std::move(text_), std::move(spans_)};
    }

private:
    std::size_t open() {
        spans_.push_back({text_.size(), text_.size()});
        return spans_.size() - 1;
    }
    void close(std::size_t id) { spans_[id].end = text_.size(); }

    void write_list(const std::vector<AstNode>& nodes, std::size_t from, std::size_t to) {
        for (std::size_t i = from; i < to; ++i) {
            if (i > from) text_ += ", ";
            write(nodes[i]);
        }
    }

    void write(const AstNode& n) {
        const auto id = open();
        switch (n.kind) {
            case NodeKind::Query:
                for (std::size_t i = 0; i < n.children.size(); ++i) {
                    if (i > 0) text_ += ' ';
                    write(n.children[i]);
                }
                break;
            case NodeKind::Select: {
                text_ += "SELECT ";
                std::size_t first = 0;
                if (!n.children.empty() && n.children[0].kind == NodeKind::Distinct) {
                    write(n.children[0]);
                    text_ += ' ';
                    first = 1;
                }
                write_list(n.children, first, n.children.size());
                break;
            }
            case NodeKind::Distinct:
                text_ += "DISTINCT";
                break;
            case NodeKind::ColumnRef:
            case NodeKind::TableRef:
            case NodeKind::Literal:
            case NodeKind::JoinType:
            case NodeKind::SortDir:
                text_ += n.lexeme;
                break;
            case NodeKind::Aggregate:
                text_ += n.lexeme;
                text_ += '(';
                write(n.children.at(0));
                text_ += ')';
                break;
            case NodeKind::From:
                text_ += "FROM ";
                for (std::size_t i = 0; i < n.children.size(); ++i) {
                    if (i > 0) text_ += ' ';
                    write(n.children[i]);
                }
                break;
            case NodeKind::Join:
                write(n.children.at(0));
                text_ += " JOIN ";
                write(n.children.at(1));
                text_ += ' ';
                write(n.children.at(2));
                break;
            case NodeKind::On:
                text_ += "ON ";
                write(n.children.at(0));
                break;
            case NodeKind::Where:
                text_ += "WHERE ";
                write(n.children.at(0));
                break;
            case NodeKind::And:
            case NodeKind::Or:
                for (std::size_t i = 0; i < n.children.size(); ++i) {
                    const auto& c = n.children[i];
                    if (c.kind == NodeKind::Or || (n.kind == NodeKind::And && c.kind == NodeKind::And))
                        throw std::logic_error("condition tree cannot be written without parentheses");
                    if (i > 0) text_ += n.kind == NodeKind::And ? " AND " : " OR ";
                    write(c);
                }
                break;
            case NodeKind::Comparison:
                write(n.children.at(0));
                text_ += ' ';
                text_ += n.lexeme;
                if (n.lexeme == "IN") {
                    text_ += " (";
                    write_list(n.children, 1, n.children.size());
                    text_ += ')';
                } else {
                    text_ += ' ';
                    write(n.children.at(1));
                }
                break;
            case NodeKind::GroupBy:
                text_ += "GROUP BY ";
                write_list(n.children, 0, n.children.size());
                break;
            case NodeKind::OrderBy: {
                text_ += "ORDER BY ";
                std::size_t items = n.children.size();
                const bool has_dir = items > 0 && n.children.back().kind == NodeKind::SortDir;
                if (has_dir) --items;
                write_list(n.children, 0, items);
                if (has_dir) {
                    text_ += ' ';
                    write(n.children.back());
                }
                break;
            }
        }
        close(id);
    }

    std::string text_;
    std::vector<Span> spans_;
};

}  // namespace

std::string_view to_string(NodeKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::string AstNode::label() const {
    std::string out(to_string(kind));
    if (lexeme.empty()) return out;
    out += ':';
    if (kind == NodeKind::ColumnRef || kind == NodeKind::TableRef) out += to_lower(lexeme);
    else out += lexeme;
    return out;
}

std::size_t AstNode::size() const {
    std::size_t n = 1;
    for (const auto& c : children) n += c.size();
    return n;
}

SqlQuery parse_sql(std::string_view text) {
    Parser parser(text);
    AstNode ast = parser.parse_query();
    auto serialized = serialize(ast);
    return {std::move(serialized.text), std::move(ast), std::move(serialized.spans)};
}

SerializedSql serialize(const AstNode& root) { return Writer{}.run(root); }

const AstNode& node_at(const AstNode& root, const AstPath& path) {
    const AstNode* n = &root;
    for (auto i : path) n = &n->children.at(i);
    return *n;
}

std::size_t preorder_index(const AstNode& root, const AstPath& path) {
    std::size_t index = 0;
    const AstNode* n = &root;
    for (auto i : path) {
        index += 1;
        for (std::size_t k = 0; k < i; ++k) index += n->children.at(k).size();
        n = &n->children.at(i);
    }
    return index;
}

Span span_of(const SqlQuery& query, const AstPath& path) { return query.spans.at(preorder_index(query.ast, path)); }

bool is_string_literal(const AstNode& literal) {
    return literal.kind == NodeKind::Literal && !literal.lexeme.empty() && literal.lexeme.front() == '\'';
}

std::string column_table(const AstNode& column_ref) {
    const auto dot = column_ref.lexeme.find('.');
    return dot == std::string::npos ? std::string() : column_ref.lexeme.substr(0, dot);
}

std::string column_name(const AstNode& column_ref) {
    const auto dot = column_ref.lexeme.find('.');
    return dot == std::string::npos ? column_ref.lexeme : column_ref.lexeme.substr(dot + 1);
}

std::string literal_text(const AstNode& literal) {
    if (!is_string_literal(literal)) return literal.lexeme;
    std::string out;
    const auto& s = literal.lexeme;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        out += s[i];
        if (s[i] == '\'' && i + 1 < s.size() - 1 && s[i + 1] == '\'') ++i;
    }
    return out;
}

std::string quote_string(std::string_view raw) {
    std::string out = "'";
    for (char c : raw) {
        out += c;
        if (c == '\'') out += '\'';
    }
    out += '\'';
    return out;
}

}  // namespace sqlpair
