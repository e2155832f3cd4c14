#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sqlpair {

enum class NodeKind {
    Query,
    Select,
    Distinct,
    ColumnRef,
    Aggregate,
    From,
    Join,
    JoinType,
    On,
    Where,
    And,
    Or,
    Comparison,
    GroupBy,
    OrderBy,
    SortDir,
    Literal,
    TableRef,
};

std::string_view to_string(NodeKind kind);

// Tree shapes produced by the parser:
//   Query      -> Select From [Where] [GroupBy] [OrderBy]
//   Select     -> [Distinct] item+            item := ColumnRef | Aggregate
//   Aggregate  -> ColumnRef                   lexeme COUNT|SUM|AVG|MIN|MAX
//   From       -> TableRef Join*
//   Join       -> JoinType TableRef On
//   On, Where  -> condition                   condition := Or | And | Comparison
//   Or, And    -> condition{2,}               (n-ary, AND binds tighter)
//   Comparison -> operand operand+            lexeme is the operator; IN may carry several values
//   GroupBy    -> item+
//   OrderBy    -> item+ [SortDir]
// ColumnRef lexemes are "Table.column" or "*"; Literal lexemes keep their SQL form ('text' or 42).
struct AstNode {
    NodeKind kind = NodeKind::Query;
    std::string lexeme;
    std::vector<AstNode> children;

    AstNode() = default;
    AstNode(NodeKind k, std::string lex = {}, std::vector<AstNode> kids = {})
        : kind(k), lexeme(std::move(lex)), children(std::move(kids)) {}

    // Label compared by tree edit distance: kind plus lexeme, identifiers folded to lower case.
    std::string label() const;
    std::size_t size() const;
    bool operator==(const AstNode&) const = default;
};

using AstPath = std::vector<std::size_t>;

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool operator==(const Span&) const = default;
};

// Canonical text plus the byte span of every node, indexed in preorder.
struct SerializedSql {
    std::string text;
    std::vector<Span> spans;
};

struct SqlQuery {
    std::string text;  // canonical form
    AstNode ast;
    std::vector<Span> spans;  // preorder-indexed node spans in `text`
};

// Parses the supported subset; throws SqlSyntaxError with offset and expected tokens.
SqlQuery parse_sql(std::string_view text);
SerializedSql serialize(const AstNode& root);

const AstNode& node_at(const AstNode& root, const AstPath& path);
std::size_t preorder_index(const AstNode& root, const AstPath& path);
Span span_of(const SqlQuery& query, const AstPath& path);

bool is_string_literal(const AstNode& literal);
// "Table" and "column" halves of a ColumnRef lexeme.
std::string column_table(const AstNode& column_ref);
std::string column_name(const AstNode& column_ref);
// Unquoted content of a string literal ('it''s' -> it's).
std::string literal_text(const AstNode& literal);
std::string quote_string(std::string_view raw);

}  // namespace sqlpair
