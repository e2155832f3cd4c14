#include "sqlpair/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "json_util.hpp"
#include "sqlpair/error.hpp"

namespace sqlpair {

namespace {

using detail::json;
using detail::ordered_json;

bool is_placeholder_name(std::string_view name) {
    for (auto p : kPlaceholders)
        if (p == name) return true;
    return false;
}

Symbol parse_symbol(const std::string& spelled, const std::set<std::string>& nonterminals) {
    if (spelled.size() > 2 && spelled.front() == '<' && spelled.back() == '>') {
        auto name = spelled.substr(1, spelled.size() - 2);
        if (!is_placeholder_name(name)) throw ValidationError("", fmt::format("unknown placeholder {}", spelled));
        return {Symbol::Kind::Placeholder, std::move(name)};
    }
    if (spelled.size() > 2 && spelled.front() == '[' && spelled.back() == ']')
        return {Symbol::Kind::Optional, spelled.substr(1, spelled.size() - 2)};
    if (nonterminals.count(spelled)) return {Symbol::Kind::Nonterminal, spelled};
    return {Symbol::Kind::Terminal, spelled};
}

Production prod(std::initializer_list<const char*> rhs, double p, const std::set<std::string>& nts) {
    Production out;
    out.probability = p;
    for (const char* s : rhs) out.rhs.push_back(parse_symbol(s, nts));
    return out;
}

}  // namespace

std::string Symbol::spelling() const {
    switch (kind) {
        case Kind::Placeholder:
            return "<" + text + ">";
        case Kind::Optional:
            return "[" + text + "]";
        default:
            return text;
    }
}

const std::vector<Production>& Grammar::productions(const std::string& nonterminal) const {
    auto it = rules.find(nonterminal);
    if (it == rules.end()) throw SamplingError(fmt::format("undefined nonterminal {}", nonterminal));
    return it->second;
}

std::size_t Grammar::find_production(const std::string& nonterminal, const std::vector<std::string>& rhs) const {
    auto it = rules.find(nonterminal);
    if (it == rules.end()) return static_cast<std::size_t>(-1);
    for (std::size_t i = 0; i < it->second.size(); ++i) {
        const auto& p = it->second[i].rhs;
        if (p.size() != rhs.size()) continue;
        bool same = true;
        for (std::size_t k = 0; k < p.size() && same; ++k) same = p[k].spelling() == rhs[k];
        if (same) return i;
    }
    return static_cast<std::size_t>(-1);
}

double Grammar::optional_probability(const std::string& nonterminal) const {
    auto it = optional.find(optional_key(nonterminal));
    return it == optional.end() ? 1.0 : it->second;
}

std::string optional_key(std::string_view nonterminal) {
    std::string_view base = nonterminal;
    constexpr std::string_view suffix = "Clause";
    if (base.size() > suffix.size() && base.substr(base.size() - suffix.size()) == suffix)
        base.remove_suffix(suffix.size());
    std::string out;
    for (std::size_t i = 0; i < base.size(); ++i) {
        const auto c = static_cast<unsigned char>(base[i]);
        if (std::isupper(c) && i > 0) out += '_';
        out += static_cast<char>(std::toupper(c));
    }
    return out;
}

Grammar default_grammar() {
    Grammar g;
    g.start = "Query";
    g.order = {"Query",         "SelectClause",  "ColumnList", "Column",        "FromClause",
               "JoinClause",    "JoinType",      "JoinCondition", "WhereClause", "Condition",
               "GroupByClause", "OrderByClause", "SortDirection", "AggregateFunction", "Operator",
               "Value"};
    const std::set<std::string> nts(g.order.begin(), g.order.end());
    auto& r = g.rules;
    r["Query"] = {prod({"SelectClause", "FromClause", "[WhereClause]", "[GroupByClause]", "[OrderByClause]"}, 1.0, nts)};
    r["SelectClause"] = {prod({"SELECT", "ColumnList"}, 0.9, nts), prod({"SELECT DISTINCT", "ColumnList"}, 0.1, nts)};
    r["ColumnList"] = {prod({"Column"}, 0.6, nts), prod({"Column", ",", "ColumnList"}, 0.4, nts)};
    r["Column"] = {prod({"<TableName>", ".", "<ColumnName>"}, 0.7, nts),
                   prod({"AggregateFunction", "(", "<TableName>", ".", "<ColumnName>", ")"}, 0.3, nts)};
    r["FromClause"] = {prod({"FROM", "<TableName>"}, 0.4, nts), prod({"FROM", "<TableName>", "JoinClause"}, 0.6, nts)};
    r["JoinClause"] = {prod({"JoinType", "JOIN", "<TableName>", "ON", "JoinCondition"}, 0.7, nts),
                       prod({"JoinType", "JOIN", "<TableName>", "ON", "JoinCondition", "JoinClause"}, 0.3, nts)};
    r["JoinType"] = {prod({"INNER"}, 0.4, nts), prod({"LEFT"}, 0.3, nts), prod({"RIGHT"}, 0.2, nts),
                     prod({"FULL"}, 0.1, nts)};
    r["JoinCondition"] = {prod({"Column", "=", "Column"}, 0.8, nts),
                          prod({"JoinCondition", "AND", "JoinCondition"}, 0.2, nts)};
    r["WhereClause"] = {prod({"WHERE", "Condition"}, 1.0, nts)};
    r["Condition"] = {prod({"Column", "Operator", "Value"}, 0.5, nts), prod({"Condition", "AND", "Condition"}, 0.3, nts),
                      prod({"Condition", "OR", "Condition"}, 0.2, nts)};
    r["GroupByClause"] = {prod({"GROUP BY", "ColumnList"}, 1.0, nts)};
    r["OrderByClause"] = {prod({"ORDER BY", "ColumnList", "[SortDirection]"}, 1.0, nts)};
    r["SortDirection"] = {prod({"ASC"}, 0.5, nts), prod({"DESC"}, 0.5, nts)};
    r["AggregateFunction"] = {prod({"COUNT"}, 0.3, nts), prod({"SUM"}, 0.2, nts), prod({"AVG"}, 0.2, nts),
                              prod({"MIN"}, 0.15, nts), prod({"MAX"}, 0.15, nts)};
    r["Operator"] = {prod({"="}, 0.3, nts),  prod({"<"}, 0.1, nts),  prod({">"}, 0.1, nts),    prod({"<="}, 0.1, nts),
                     prod({">="}, 0.1, nts), prod({"<>"}, 0.1, nts), prod({"LIKE"}, 0.1, nts), prod({"IN"}, 0.1, nts)};
    r["Value"] = {prod({"<Number>"}, 0.4, nts), prod({"<String>"}, 0.4, nts), prod({"Column"}, 0.2, nts)};
    g.optional = {{"WHERE", 0.7}, {"GROUP_BY", 0.2}, {"ORDER_BY", 0.3}, {"SORT_DIRECTION", 1.0}};
    return g;
}

std::vector<std::string> validate_grammar(const Grammar& g) {
    std::vector<std::string> problems;
    if (!g.rules.count(g.start)) problems.push_back(fmt::format("start symbol {} is not defined", g.start));
    for (const auto& [nt, prods] : g.rules) {
        if (prods.empty()) {
            problems.push_back(fmt::format("{} has no productions", nt));
            continue;
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < prods.size(); ++i) {
            const auto& p = prods[i];
            if (!(p.probability > 0.0 && p.probability <= 1.0))
                problems.push_back(fmt::format("{} production {} has probability {} outside (0,1]", nt, i, p.probability));
            sum += p.probability;
            if (p.rhs.empty()) problems.push_back(fmt::format("{} production {} is empty", nt, i));
            for (const auto& s : p.rhs) {
                if ((s.kind == Symbol::Kind::Nonterminal || s.kind == Symbol::Kind::Optional) && !g.rules.count(s.text))
                    problems.push_back(fmt::format("{} uses undefined nonterminal {}", nt, s.text));
            }
        }
        if (std::abs(sum - 1.0) > 1e-9) problems.push_back(fmt::format("{} probabilities sum to {}", nt, sum));
    }
    for (const auto& [key, p] : g.optional)
        if (!(p >= 0.0 && p <= 1.0)) problems.push_back(fmt::format("optional {} probability {} outside [0,1]", key, p));

    // Every nonterminal must be able to terminate: fixpoint over productive symbols.
    std::set<std::string> productive;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& [nt, prods] : g.rules) {
            if (productive.count(nt)) continue;
            for (const auto& p : prods) {
                bool ok = true;
                for (const auto& s : p.rhs)
                    if (s.kind == Symbol::Kind::Nonterminal && !productive.count(s.text)) ok = false;
                if (ok) {
                    productive.insert(nt);
                    changed = true;
                    break;
                }
            }
        }
    }
    for (const auto& [nt, prods] : g.rules)
        if (!productive.count(nt)) problems.push_back(fmt::format("{} can never terminate", nt));
    return problems;
}

Grammar load_grammar(std::string_view document) {
    const ordered_json root = [&] {
        try {
            return ordered_json::parse(document.begin(), document.end());
        } catch (const ordered_json::parse_error& e) {
            throw DocumentError("", "grammar document is not valid JSON (byte " + std::to_string(e.byte) + ")");
        }
    }();
    if (!root.is_object()) throw DocumentError("", "expected an object");
    for (auto it = root.begin(); it != root.end(); ++it)
        if (it.key() != "start" && it.key() != "rules" && it.key() != "optional")
            throw DocumentError("", "unknown field '" + it.key() + "'");
    Grammar g;
    if (!root.contains("start") || !root["start"].is_string()) throw DocumentError("start", "expected a string");
    g.start = root["start"].get<std::string>();
    if (!root.contains("rules") || !root["rules"].is_object()) throw DocumentError("rules", "expected an object");
    std::set<std::string> nts;
    for (auto it = root["rules"].begin(); it != root["rules"].end(); ++it) {
        nts.insert(it.key());
        g.order.push_back(it.key());
    }
    for (auto it = root["rules"].begin(); it != root["rules"].end(); ++it) {
        const auto path = "rules." + it.key();
        if (!it->is_array()) throw DocumentError(path, "expected an array");
        auto& prods = g.rules[it.key()];
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto ppath = detail::index_path(path, i);
            const auto& pj = (*it)[i];
            if (!pj.is_object()) throw DocumentError(ppath, "expected an object");
            for (auto f = pj.begin(); f != pj.end(); ++f)
                if (f.key() != "rhs" && f.key() != "prob") throw DocumentError(ppath, "unknown field '" + f.key() + "'");
            if (!pj.contains("rhs") || !pj["rhs"].is_array()) throw DocumentError(ppath + ".rhs", "expected an array");
            if (!pj.contains("prob") || !pj["prob"].is_number()) throw DocumentError(ppath + ".prob", "expected a number");
            Production p;
            p.probability = pj["prob"].get<double>();
            for (const auto& s : pj["rhs"]) {
                if (!s.is_string()) throw DocumentError(ppath + ".rhs", "expected strings");
                try {
                    p.rhs.push_back(parse_symbol(s.get<std::string>(), nts));
                } catch (const ValidationError& e) {
                    throw ValidationError(ppath + ".rhs", e.what());
                }
            }
            prods.push_back(std::move(p));
        }
    }
    if (root.contains("optional")) {
        const auto& oj = root["optional"];
        if (!oj.is_object()) throw DocumentError("optional", "expected an object");
        for (auto it = oj.begin(); it != oj.end(); ++it) {
            if (!it->is_number()) throw DocumentError("optional." + it.key(), "expected a number");
            g.optional[it.key()] = it->get<double>();
        }
    }
    const auto problems = validate_grammar(g);
    if (!problems.empty()) throw ValidationError("", problems.front());
    return g;
}

std::string save_grammar(const Grammar& g) {
    ordered_json root;
    root["start"] = g.start;
    ordered_json rules = ordered_json::object();
    std::vector<std::string> names = g.order;
    for (const auto& [nt, prods] : g.rules)
        if (std::find(names.begin(), names.end(), nt) == names.end()) names.push_back(nt);
    for (const auto& nt : names) {
        auto it = g.rules.find(nt);
        if (it == g.rules.end()) continue;
        ordered_json list = ordered_json::array();
        for (const auto& p : it->second) {
            ordered_json pj;
            ordered_json rhs = ordered_json::array();
            for (const auto& s : p.rhs) rhs.push_back(s.spelling());
            pj["rhs"] = std::move(rhs);
            pj["prob"] = p.probability;
            list.push_back(std::move(pj));
        }
        rules[nt] = std::move(list);
    }
    root["rules"] = std::move(rules);
    ordered_json optional = ordered_json::object();
    for (const auto& [k, v] : g.optional) optional[k] = v;
    root["optional"] = std::move(optional);
    return root.dump(2) + "\n";
}

Derivation sample_structure(const Grammar& grammar, Rng& rng, const std::map<std::string, double>& optional_overrides,
                            std::size_t max_expansions) {
    Derivation root;
    root.symbol = {Symbol::Kind::Nonterminal, grammar.start};
    std::vector<Derivation*> stack{&root};
    std::vector<double> weights;
    std::size_t expansions = 0;
    while (!stack.empty()) {
        Derivation* node = stack.back();
        stack.pop_back();
        if (node->symbol.kind == Symbol::Kind::Terminal || node->symbol.kind == Symbol::Kind::Placeholder) continue;
        if (node->symbol.kind == Symbol::Kind::Optional) {
            const auto key = optional_key(node->symbol.text);
            auto it = optional_overrides.find(key);
            const double p = it != optional_overrides.end() ? it->second : grammar.optional_probability(node->symbol.text);
            node->present = rng.bernoulli(p);
            if (!node->present) continue;
        }
        if (++expansions > max_expansions)
            throw SamplingError(fmt::format("derivation exceeded {} expansions", max_expansions));
        const auto& prods = grammar.productions(node->symbol.text);
        weights.clear();
        for (const auto& p : prods) weights.push_back(p.probability);
        node->production = prods.size() == 1 ? 0 : rng.weighted(weights);
        const auto& rhs = prods[node->production].rhs;
        node->children.resize(rhs.size());
        for (std::size_t i = 0; i < rhs.size(); ++i) node->children[i].symbol = rhs[i];
        for (std::size_t i = rhs.size(); i-- > 0;) stack.push_back(&node->children[i]);
    }
    return root;
}

std::string skeleton_text(const Derivation& d) {
    std::string out;
    std::vector<const Derivation*> stack{&d};
    while (!stack.empty()) {
        const auto* n = stack.back();
        stack.pop_back();
        if (n->symbol.kind == Symbol::Kind::Terminal || n->symbol.kind == Symbol::Kind::Placeholder) {
            if (!out.empty()) out += ' ';
            out += n->symbol.spelling();
            continue;
        }
        if (!n->present) continue;
        for (std::size_t i = n->children.size(); i-- > 0;) stack.push_back(&n->children[i]);
    }
    return out;
}

void ProductionCounts::add(const Grammar& grammar, const std::string& nonterminal, std::size_t production, std::size_t n) {
    auto& v = uses[nonterminal];
    if (v.empty()) v.assign(grammar.productions(nonterminal).size(), 0);
    v.at(production) += n;
}

void ProductionCounts::merge(const ProductionCounts& other) {
    for (const auto& [nt, v] : other.uses) {
        auto& mine = uses[nt];
        if (mine.size() < v.size()) mine.resize(v.size(), 0);
        for (std::size_t i = 0; i < v.size(); ++i) mine[i] += v[i];
    }
    for (const auto& [k, pr] : other.optional) {
        optional[k].first += pr.first;
        optional[k].second += pr.second;
    }
}

void count_productions(const Grammar& grammar, const Derivation& derivation, ProductionCounts& counts) {
    std::vector<const Derivation*> stack{&derivation};
    while (!stack.empty()) {
        const auto* n = stack.back();
        stack.pop_back();
        if (n->symbol.kind == Symbol::Kind::Terminal || n->symbol.kind == Symbol::Kind::Placeholder) continue;
        if (n->symbol.kind == Symbol::Kind::Optional) {
            auto& o = counts.optional[optional_key(n->symbol.text)];
            ++o.second;
            if (!n->present) continue;
            ++o.first;
        }
        counts.add(grammar, n->symbol.text, n->production);
        for (const auto& c : n->children) stack.push_back(&c);
    }
}

}  // namespace sqlpair
