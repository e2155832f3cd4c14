#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sqlpair/rng.hpp"
#include "sqlpair/schema.hpp"

namespace sqlpair {

struct Symbol {
    enum class Kind { Terminal, Placeholder, Nonterminal, Optional };
    Kind kind = Kind::Terminal;
    std::string text;  // terminal text, placeholder name (TableName...), or nonterminal name

    // Spelling used in grammar documents: "SELECT", "<TableName>", "ColumnList", "[WhereClause]".
    std::string spelling() const;
    bool operator==(const Symbol&) const = default;
};

struct Production {
    std::vector<Symbol> rhs;
    double probability = 0.0;
    bool operator==(const Production&) const = default;
};

struct Grammar {
    std::string start;
    std::vector<std::string> order;  // nonterminals in document order
    std::map<std::string, std::vector<Production>> rules;
    // Inclusion probability of each optional nonterminal, keyed by optional_key().
    std::map<std::string, double> optional;

    const std::vector<Production>& productions(const std::string& nonterminal) const;
    // Index of the production whose spelled rhs equals `rhs`, or npos.
    std::size_t find_production(const std::string& nonterminal, const std::vector<std::string>& rhs) const;
    double optional_probability(const std::string& nonterminal) const;
    bool operator==(const Grammar&) const = default;
};

// WhereClause -> WHERE, GroupByClause -> GROUP_BY, SortDirection -> SORT_DIRECTION.
std::string optional_key(std::string_view nonterminal);

inline constexpr std::string_view kPlaceholders[] = {"TableName", "ColumnName", "Number", "String"};

// The grammar of SELECT queries with the production weights shipped by default.
Grammar default_grammar();

std::vector<std::string> validate_grammar(const Grammar& grammar);

// {"start":..., "rules":{NT:[{"rhs":[...],"prob":p}]}, "optional":{KEY:p}}.
// Throws DocumentError (malformed) or ValidationError (invalid grammar).
Grammar load_grammar(std::string_view document);
std::string save_grammar(const Grammar& grammar);

// A sampled derivation. Nonterminal nodes carry the chosen production and one child per
// rhs symbol; leaves are terminals and placeholders. An Optional node that was not
// included has present == false and no children.
struct Derivation {
    Symbol symbol;
    std::size_t production = 0;
    bool present = true;
    std::vector<Derivation> children;
};

// Leftmost top-down expansion. `optional_overrides` replaces the grammar's inclusion
// probabilities by key. Throws SamplingError after max_expansions nonterminal expansions.
Derivation sample_structure(const Grammar& grammar, Rng& rng,
                            const std::map<std::string, double>& optional_overrides = {},
                            std::size_t max_expansions = 10000);

// Terminal yield with placeholders left as <TableName> etc., tokens separated by spaces.
std::string skeleton_text(const Derivation& derivation);

// Usage tallies: per nonterminal, per production index; per optional key, (present, offered).
struct ProductionCounts {
    std::map<std::string, std::vector<std::size_t>> uses;
    std::map<std::string, std::pair<std::size_t, std::size_t>> optional;

    void add(const Grammar& grammar, const std::string& nonterminal, std::size_t production, std::size_t n = 1);
    void merge(const ProductionCounts& other);
};

void count_productions(const Grammar& grammar, const Derivation& derivation, ProductionCounts& counts);

}  // namespace sqlpair
