// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any fails.
// Runs against the scripted mock provider only.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "fixtures.hpp"
#include "sqlpair/alignment.hpp"
#include "sqlpair/diversity.hpp"
#include "sqlpair/error.hpp"
#include "sqlpair/executor.hpp"
#include "sqlpair/explainer.hpp"
#include "sqlpair/parallel.hpp"
#include "sqlpair/pipeline.hpp"

using namespace sqlpair;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kFrequencyTolerance = 0.02;  // criteria 2 and 3, absolute
constexpr double kNonemptyFloor = 0.90;        // criterion 1
constexpr double kExact = 1e-12;               // criteria 6 and 10
constexpr double kSyntaxSeconds = 30.0;
constexpr double kFidelitySeconds = 60.0;
constexpr double kTedSeconds = 60.0;
constexpr double kAutoSeconds = 60.0;

struct Outcome {
    bool pass = true;
    std::string detail;
    void fail(const std::string& why) {
        if (pass) detail = why;  // first failure is the one reported
        pass = false;
    }
    void require(bool ok, const std::string& why) {
        if (!ok) fail(why);
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1

Outcome syntactic_guarantee() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto schema = fixtures::load("company");
    o.require(schema.tables.size() == 5, "company schema is not 5 tables");
    const auto db = fixtures::populated(schema, 60, 11);
    const Grounder grounder(db);
    SamplerConfig config;
    config.rng_seed = 1000;
    config.require_nonempty_result = true;
    const auto batch = parallel::sample_batch(default_grammar(), grounder, config, 1000);
    std::size_t parsed = 0, executed = 0, nonempty = 0;
    for (const auto& s : batch) {
        if (!s.error.empty()) continue;
        try {
            const auto q = parse_sql(s.query.text);
            ++parsed;
            const auto r = execute_query(db, q);
            ++executed;
            nonempty += !r.rows.empty();
        } catch (const Error&) {
        }
    }
    const double secs = seconds_since(t0);
    const auto d = fmt::format("parse {}/1000, execute {}/1000, non-empty {:.1f}%, {:.1f}s", parsed, executed,
                               nonempty / 10.0, secs);
    o.require(parsed == 1000 && executed == 1000, d);
    o.require(nonempty >= kNonemptyFloor * 1000, d);
    o.require(secs < kSyntaxSeconds, d);
    if (o.pass) o.detail = d;
    return o;
}

// ---------------------------------------------------------------------------
// 2 and 3

double share(const std::vector<std::size_t>& uses, std::size_t i) {
    const auto total = std::accumulate(uses.begin(), uses.end(), std::size_t{0});
    return total ? static_cast<double>(uses[i]) / static_cast<double>(total) : 0.0;
}

Outcome pcfg_fidelity() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto g = default_grammar();
    SamplerConfig config;
    config.rng_seed = 1;
    std::size_t capped = 0;
    const auto counts = parallel::structure_counts(g, config, 10000, &capped);
    double worst = 0;
    std::string worst_at;
    std::size_t checked = 0;
    for (const auto& [nt, prods] : g.rules) {
        const auto it = counts.uses.find(nt);
        if (it == counts.uses.end()) {
            o.fail(fmt::format("{} never expanded", nt));
            continue;
        }
        for (std::size_t i = 0; i < prods.size(); ++i) {
            const double dev = std::abs(share(it->second, i) - prods[i].probability);
            ++checked;
            if (dev > worst) worst = dev, worst_at = fmt::format("{} #{}", nt, i);
        }
    }
    for (const auto& [key, p] : g.optional) {
        const auto [present, offered] = counts.optional.at(key);
        const double dev = std::abs(static_cast<double>(present) / static_cast<double>(offered) - p);
        ++checked;
        if (dev > worst) worst = dev, worst_at = key;
    }
    const double secs = seconds_since(t0);
    const auto d = fmt::format("{} probabilities, max deviation {:.2f}pp at {}, {} capped, {:.1f}s", checked,
                               100 * worst, worst_at, capped, secs);
    o.require(worst <= kFrequencyTolerance, d);
    o.require(secs < kFidelitySeconds, d);
    if (o.pass) o.detail = d;
    return o;
}

// Company and retail side by side: enough tables for long join chains.
Schema merged_schema() {
    auto a = nlohmann::json::parse(fixtures::read_file(fixtures::data_path("schemas/company.json")));
    const auto b = nlohmann::json::parse(fixtures::read_file(fixtures::data_path("schemas/retail.json")));
    for (const auto& t : b.at("tables")) a["tables"].push_back(t);
    return load_schema(a.dump());
}

Outcome learning_round_trip() {
    Outcome o;
    const auto g = default_grammar();
    const auto schema = merged_schema();
    const auto db = fixtures::populated(schema, 40, 3);
    const Grounder grounder(db);
    SamplerConfig config;
    // Same documented seed as the fidelity check. SortDirection sees ~3,000 draws, so its
    // standard error is ~0.9pp and roughly one seed in twenty lands outside 2pp.
    config.rng_seed = 1;
    config.require_nonempty_result = false;
    std::vector<SqlQuery> corpus;
    for (auto& s : parallel::sample_batch(g, grounder, config, 10000))
        if (s.error.empty()) corpus.push_back(parse_sql(s.query.text));
    const auto learned = learn_probabilities(g, corpus);
    double worst = 0;
    std::string worst_at;
    for (const auto& [nt, prods] : g.rules)
        for (std::size_t i = 0; i < prods.size(); ++i) {
            const double dev = std::abs(learned.grammar.rules.at(nt).at(i).probability - prods[i].probability);
            if (dev > worst) worst = dev, worst_at = fmt::format("{} #{}", nt, i);
        }
    for (const auto& [key, p] : g.optional) {
        const double dev = std::abs(learned.grammar.optional.at(key) - p);
        if (dev > worst) worst = dev, worst_at = key;
    }
    const auto d = fmt::format("{} queries, {} used, {} skipped, max deviation {:.2f}pp at {}", corpus.size(),
                               learned.used, learned.skipped, 100 * worst, worst_at);
    o.require(corpus.size() >= 9900, d);
    o.require(learned.skipped == 0, d);
    o.require(worst <= kFrequencyTolerance, d);
    if (o.pass) o.detail = d;
    return o;
}

// ---------------------------------------------------------------------------
// 4

bool type_valid(const Value& v, const Column& c) {
    switch (c.data_type) {
        case DataType::Int:
            return std::holds_alternative<std::int64_t>(v);
        case DataType::Boolean:
            return std::holds_alternative<bool>(v);
        case DataType::Float:
        case DataType::Double:
            return std::holds_alternative<double>(v) && std::isfinite(std::get<double>(v));
        case DataType::Decimal: {
            if (!std::holds_alternative<double>(v)) return false;
            const double x = std::get<double>(v) * 100.0;
            return std::abs(x - std::round(x)) < 1e-6;
        }
        case DataType::Timestamp: {
            if (!std::holds_alternative<std::string>(v)) return false;
            const auto& s = std::get<std::string>(v);
            if (s.size() != 19) return false;
            for (std::size_t i = 0; i < s.size(); ++i) {
                const char want = i == 4 || i == 7 ? '-' : i == 10 ? 'T' : i == 13 || i == 16 ? ':' : '#';
                if (want == '#' ? !std::isdigit(static_cast<unsigned char>(s[i])) : s[i] != want) return false;
            }
            return true;
        }
        case DataType::Enum:
            return std::holds_alternative<std::string>(v) &&
                   std::find(c.enum_values.begin(), c.enum_values.end(), std::get<std::string>(v)) != c.enum_values.end();
        case DataType::Text:
            return std::holds_alternative<std::string>(v) && !std::get<std::string>(v).empty();
    }
    return false;
}

Outcome population_integrity() {
    Outcome o;
    const auto schema = fixtures::load("retail");
    std::set<DataType> types;
    std::size_t fk_edges = 0;
    for (const auto& t : schema.tables)
        for (const auto& c : t.columns) {
            types.insert(c.data_type);
            fk_edges += c.reference.has_value();
        }
    o.require(types.size() == 8 && fk_edges == 3, "retail schema must have 8 types and 3 foreign keys");

    PopulationConfig config;
    config.default_count = 1000;
    config.rng_seed = 404;
    const auto db = populate(schema, config);
    std::size_t values = 0, bad_type = 0, fk_values = 0, dangling = 0, dup_keys = 0;
    for (std::size_t ti = 0; ti < schema.tables.size(); ++ti) {
        const auto& table = schema.tables[ti];
        const auto& rows = db.tables[ti].records;
        o.require(rows.size() == 1000, fmt::format("{} has {} rows", table.name, rows.size()));
        for (std::size_t ci = 0; ci < table.columns.size(); ++ci) {
            const auto& col = table.columns[ci];
            std::set<std::string> keys, targets;
            if (col.reference)
                for (const auto& v : db.column_values(col.reference->table, col.reference->column))
                    targets.insert(value_to_text(v));
            for (const auto& row : rows) {
                ++values;
                bad_type += !type_valid(row.at(ci), col);
                if (col.is_primary_key) dup_keys += !keys.insert(value_to_text(row[ci])).second;
                if (col.reference) {
                    ++fk_values;
                    dangling += targets.count(value_to_text(row[ci])) == 0;
                }
            }
        }
    }
    const bool same = save_records(populate(schema, config)) == save_records(db);
    const auto d = fmt::format("{} values, {} type-invalid, {}/{} FK values resolve, {} duplicate keys, rerun {}",
                               values, bad_type, fk_values - dangling, fk_values, dup_keys,
                               same ? "byte-identical" : "differs");
    o.require(bad_type == 0 && dangling == 0 && dup_keys == 0 && same, d);
    if (o.pass) o.detail = d;
    return o;
}

// ---------------------------------------------------------------------------
// 5

// Every ordered tree with exactly n nodes over labels {a, b}.
std::vector<LabelTree> trees_of_size(std::size_t n);

std::vector<std::vector<LabelTree>> forests_of_size(std::size_t n) {
    if (n == 0) return {{}};
    std::vector<std::vector<LabelTree>> out;
    for (std::size_t first = 1; first <= n; ++first)
        for (const auto& t : trees_of_size(first))
            for (auto rest : forests_of_size(n - first)) {
                rest.insert(rest.begin(), t);
                out.push_back(std::move(rest));
            }
    return out;
}

std::vector<LabelTree> trees_of_size(std::size_t n) {
    std::vector<LabelTree> out;
    for (const auto& kids : forests_of_size(n - 1))
        for (const char* l : {"a", "b"}) out.push_back({l, kids});
    return out;
}

struct Flat {
    std::vector<std::string> label;
    std::vector<int> pre, post;
};

void flatten(const LabelTree& t, Flat& f, int& pre, int& post) {
    const auto me = f.label.size();
    f.label.push_back(t.label);
    f.pre.push_back(pre++);
    f.post.push_back(0);
    for (const auto& c : t.children) flatten(c, f, pre, post);
    f.post[me] = post++;
}

Flat flat(const LabelTree& t) {
    Flat f;
    int pre = 0, post = 0;
    flatten(t, f, pre, post);
    return f;
}

// Minimum cost over all edit mappings: one-to-one node pairs that keep both preorder
// and postorder relations (hence ancestry and sibling order).
std::size_t brute_force_ted(const Flat& a, const Flat& b) {
    const std::size_t n = a.label.size(), m = b.label.size();
    std::vector<int> map(n, -1);
    std::vector<bool> used(m, false);
    std::size_t best = n + m;
    std::function<void(std::size_t, std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t pairs,
                                                                         std::size_t relabels) {
        if (i == n) {
            best = std::min(best, relabels + (n - pairs) + (m - pairs));
            return;
        }
        go(i + 1, pairs, relabels);
        for (std::size_t j = 0; j < m; ++j) {
            if (used[j]) continue;
            bool ok = true;
            for (std::size_t k = 0; k < i && ok; ++k) {
                if (map[k] < 0) continue;
                const auto l = static_cast<std::size_t>(map[k]);
                ok = (a.pre[k] < a.pre[i]) == (b.pre[l] < b.pre[j]) && (a.post[k] < a.post[i]) == (b.post[l] < b.post[j]);
            }
            if (!ok) continue;
            map[i] = static_cast<int>(j);
            used[j] = true;
            go(i + 1, pairs + 1, relabels + (a.label[i] != b.label[j]));
            used[j] = false;
            map[i] = -1;
        }
    };
    go(0, 0, 0);
    return best;
}

Outcome ted_oracle() {
    Outcome o;
    const auto t0 = Clock::now();
    std::vector<LabelTree> all;
    for (std::size_t n = 1; n <= 4; ++n)
        for (auto& t : trees_of_size(n)) all.push_back(std::move(t));
    std::vector<Flat> flats;
    for (const auto& t : all) flats.push_back(flat(t));
    const auto N = all.size();
    std::vector<std::size_t> d(N * N);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            d[i * N + j] = tree_edit_distance(all[i], all[j]);
            mismatches += d[i * N + j] != brute_force_ted(flats[i], flats[j]);
        }
    std::size_t asymmetric = 0, triangle = 0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            asymmetric += d[i * N + j] != d[j * N + i];
            for (std::size_t k = 0; k < N; ++k) triangle += d[i * N + k] > d[i * N + j] + d[j * N + k];
        }
    const double secs = seconds_since(t0);
    const auto text = fmt::format("{} trees, {} pairs, {} mismatches, {} asymmetric, {} triangle violations, {:.1f}s",
                                  N, N * N, mismatches, asymmetric, triangle, secs);
    o.require(mismatches == 0 && asymmetric == 0 && triangle == 0, text);
    o.require(secs < kTedSeconds, text);
    if (o.pass) o.detail = text;
    return o;
}

// ---------------------------------------------------------------------------
// 6

LabelTree lt(std::string l, std::vector<LabelTree> kids = {}) { return {std::move(l), std::move(kids)}; }

Outcome retrieval_contract() {
    Outcome o;
    // Query tree: Query(Select(ColumnRef:t.a), From(TableRef:t)), 5 nodes.
    // Similarity is 1 - ted / (5 + |entry|).
    const auto query = parse_sql("SELECT T.a FROM T");
    std::vector<PoolEntry> pool;
    const auto sql_entry = [&](const char* sql) { pool.push_back(make_pool_entry(sql, parse_sql(sql), "q")); };
    const auto tree_entry = [&](const char* id, const LabelTree& t) {
        pool.push_back({id, query, "q", postorder(t)});
    };
    sql_entry("SELECT T.b FROM T");                   // 0: one relabel, 1 - 1/10
    sql_entry("SELECT T.a FROM T");                   // 1: identical, 1
    sql_entry("SELECT T.a FROM T WHERE T.a = 3");     // 2: four inserts, 1 - 4/14
    tree_entry("renamed", lt("q", {lt("s", {lt("c")}), lt("f", {lt("t")})}));  // 3: five relabels, 1 - 5/10
    tree_entry("leaf", lt("x"));                      // 4: four deletes and a relabel, 1 - 5/6
    sql_entry("SELECT T.a, T.b FROM T");              // 5: one insert, 1 - 1/11
    sql_entry("SELECT T.b FROM U");                   // 6: two relabels, 1 - 2/10
    tree_entry("two-off", lt("Query", {lt("Select", {lt("ColumnRef:t.zz")}), lt("From", {lt("TableRef:zz")})}));
                                                      // 7: two relabels, 1 - 2/10
    tree_entry("wide", lt("z0", {lt("z1", {lt("z2")}), lt("z3", {lt("z4")}), lt("z5")}));
                                                      // 8: five relabels and an insert, 1 - 6/11
    const std::vector<double> expected{1 - 1.0 / 10, 1.0, 1 - 4.0 / 14, 0.5, 1 - 5.0 / 6, 1 - 1.0 / 11,
                                       0.8,          0.8, 1 - 6.0 / 11};

    const auto scores = parallel::score_pool(postorder(query.ast), pool);
    for (std::size_t i = 0; i < pool.size(); ++i)
        o.require(std::abs(scores[i] - expected[i]) <= kExact,
                  fmt::format("entry {} scored {} instead of {}", i, scores[i], expected[i]));

    const auto order = [](const std::vector<Retrieved>& r) {
        std::vector<std::size_t> ids;
        for (const auto& x : r) ids.push_back(x.pool_index);
        return ids;
    };
    const auto top = retrieve_similar(query, pool);
    o.require(order(top) == std::vector<std::size_t>{1, 5, 0, 6, 7}, "default retrieval order");
    o.require(!top.empty() && top[0].similarity == 1.0, "exact match is not at 1.0");
    o.require(std::is_sorted(top.begin(), top.end(),
                             [](const Retrieved& a, const Retrieved& b) { return a.similarity > b.similarity; }),
              "not sorted descending");
    const auto wide = retrieve_similar(query, pool, {10, 0.5});
    o.require(order(wide) == std::vector<std::size_t>{1, 5, 0, 6, 7, 2, 3}, "uncapped retrieval set");
    if (o.pass)
        o.detail = fmt::format("{} entries, {} at or above 0.5, top 5 returned in order, exact match at 1.0",
                               pool.size(), wide.size());
    return o;
}

// ---------------------------------------------------------------------------
// 7

// Step count from the query text: FROM, one per JOIN, one per WHERE condition, GROUP BY,
// ORDER BY, SELECT.
std::size_t counted_steps(const std::string& sql) {
    const auto count = [](std::string_view s, std::string_view word) {
        std::size_t n = 0;
        for (auto at = s.find(word); at != std::string_view::npos; at = s.find(word, at + 1)) ++n;
        return n;
    };
    const auto where = sql.find(" WHERE ");
    const auto group = sql.find(" GROUP BY ");
    const auto order = sql.find(" ORDER BY ");
    const auto head_end = std::min({where, group, order, sql.size()});
    std::size_t n = 2 + count(std::string_view(sql).substr(0, head_end), " JOIN ");
    if (where != std::string::npos) {
        const auto end = std::min({group, order, sql.size()});
        const auto w = std::string_view(sql).substr(where, end - where);
        n += 1 + count(w, " AND ") + count(w, " OR ");
    }
    n += group != std::string::npos;
    n += order != std::string::npos;
    return n;
}

Outcome explanation_structure() {
    Outcome o;
    const auto schema = fixtures::load("company");
    const auto db = fixtures::populated(schema, 40, 7);
    const Grounder grounder(db);
    SamplerConfig config;
    config.rng_seed = 707;
    config.require_nonempty_result = false;
    std::size_t checked = 0;
    for (const auto& s : parallel::sample_batch(default_grammar(), grounder, config, 1000)) {
        if (!s.error.empty()) continue;
        const auto& q = s.query;
        Explanation e;
        try {
            e = explain(q, schema);
        } catch (const Error& err) {
            o.fail(fmt::format("no explanation for {}: {}", q.text, err.what()));
            continue;
        }
        ++checked;
        const auto& st = e.steps;
        o.require(st.size() == counted_steps(q.text),
                  fmt::format("{} steps, expected {}: {}", st.size(), counted_steps(q.text), q.text));
        o.require(!st.empty() && st.front().kind == StepKind::From && st.back().kind == StepKind::Select,
                  "FROM first and SELECT last: " + q.text);
        std::vector<int> owner(q.text.size(), 0);
        for (const auto& step : st)
            for (auto i = step.sql_span.begin; i < step.sql_span.end && i < owner.size(); ++i) ++owner[i];
        for (std::size_t i = 0; i < owner.size(); ++i) {
            if (owner[i] > 1) o.fail(fmt::format("overlapping spans at {}: {}", i, q.text));
            if (owner[i] == 0 && q.text[i] != ' ') o.fail(fmt::format("uncovered character {}: {}", i, q.text));
        }
    }
    o.require(checked >= 990, fmt::format("only {} queries sampled", checked));

    const auto ref = parse_sql(
        "SELECT Employees.name FROM Employees WHERE Employees.department_id = 5 AND Employees.salary > 50000");
    const auto e = explain(ref, fixtures::employees_fixture().schema);
    std::vector<std::string> texts;
    for (const auto& s : e.steps) texts.push_back(s.text);
    o.require(texts == std::vector<std::string>{"In employees", "Filter employees from department 5",
                                                "Keep employees with salary exceeding $50,000",
                                                "Return the names of employees"},
              "reference explanation differs");
    if (o.pass) o.detail = fmt::format("{} sampled queries checked, reference 4-step list reproduced", checked);
    return o;
}

// ---------------------------------------------------------------------------
// 8

Outcome alignment_scenario() {
    Outcome o;
    const auto schema = fixtures::employees_fixture().schema;
    const auto sql = parse_sql(
        "SELECT Employees.name FROM Employees WHERE Employees.department_id = 5 AND Employees.salary > 50000");
    const auto steps = explain(sql, schema);
    LlmBridge bridge(ScriptedMock::from_json(fixtures::read_file(fixtures::data_path("mock/scenario.json"))));
    const std::string q0 =
        "Who are the employees in the marketing department with a salary higher than $50,000 and have been with "
        "the company for over 5 years?";
    const auto map = align(q0, steps, sql, schema, bridge);
    const auto report = detect_misalignments(map, steps, q0);
    o.require(report.missing_steps.size() == 1 && report.missing_steps[0].first == 2, "step 2 is not the one missing");
    o.require(report.redundant_spans.size() == 2, "expected two redundant phrases");
    if (!o.pass) return o;
    o.require(report.redundant_spans[0].second.find("marketing") != std::string::npos, "marketing not flagged");
    o.require(report.redundant_spans[1].second.find("5 years") != std::string::npos, "5-years phrase not flagged");

    std::vector<Span> ranges;
    for (const auto& r : report.redundant_spans) ranges.push_back(r.first);
    const auto trimmed = remove_spans(q0, ranges);
    const auto after_cut = align(trimmed, steps, sql, schema, bridge);
    const auto revised = inject_text(trimmed, after_cut, steps.steps[1], sql, schema, bridge);
    const auto final_map = align(revised, steps, sql, schema, bridge);
    o.require(detect_misalignments(final_map, steps, revised).empty(), "re-align still reports misalignments");
    if (o.pass)
        o.detail = fmt::format("flagged \"{}\" and \"{}\", step 2 missing; final \"{}\" aligns cleanly",
                               report.redundant_spans[0].second, report.redundant_spans[1].second, revised);
    return o;
}

// ---------------------------------------------------------------------------
// 9

Outcome confidence_scoring() {
    Outcome o;
    const auto sql = parse_sql("SELECT Employees.name FROM Employees");
    const auto schema = fixtures::employees_fixture().schema;
    std::vector<int> rounds{90, 95, 100};
    std::set<int> seen;
    std::size_t perms = 0;
    do {
        std::vector<std::string> replies;
        for (int r : rounds) replies.push_back(fmt::format("```json\n{{\"analysis\":\"ok\",\"score\":{}}}\n```", r));
        auto mock = std::make_shared<ScriptedMock>();
        mock->add({"### task: equivalence", "", replies});
        LlmBridge bridge(mock);
        const auto r = score_equivalence(sql, "What are the names of all employees?", schema, bridge, 3);
        o.require(r.rounds == rounds, "rounds were not read in order");
        seen.insert(r.score);
        ++perms;
    } while (std::next_permutation(rounds.begin(), rounds.end()));
    // (90 + 100 + 95) / 3 = 95 exactly.
    o.require(seen == std::set<int>{95}, fmt::format("scores over permutations: {}", fmt::join(seen, ", ")));
    if (o.pass) o.detail = fmt::format("rounds 90, 100, 95 score 95 under all {} orders", perms);
    return o;
}

// ---------------------------------------------------------------------------
// 10

Outcome metrics() {
    Outcome o;
    o.require(simpson_index({{"only", 12}}) == 0.0, "single category");
    for (std::size_t k = 1; k <= 50; ++k) {
        std::map<std::string, std::size_t> uniform;
        for (std::size_t i = 0; i < k; ++i) uniform["c" + std::to_string(i)] = 3;
        o.require(std::abs(simpson_index(uniform) - (1.0 - 1.0 / static_cast<double>(k))) <= kExact,
                  fmt::format("uniform k={}", k));
    }
    o.require(std::abs(simpson_index({{"a", 2}, {"b", 2}}) - 0.5) <= kExact, "{2,2}");

    // Hand counts: words, sentences, syllables under the vowel-group heuristic with a
    // silent final e and consonant-le kept.
    struct Golden {
        const char* text;
        double words, sentences, syllables;
    };
    const Golden goldens[] = {
        {"The cat sat.", 3, 1, 3},
        {"university.", 1, 1, 5},
        {"Which employees earn more than fifty thousand dollars?", 8, 1, 12},
        {"List the table names. Sort them!", 6, 2, 8},
        {"Show the average salary of people who joined before 2020?", 10, 1, 17},
    };
    for (const auto& g : goldens) {
        const double hand = 206.835 - 1.015 * (g.words / g.sentences) - 84.6 * (g.syllables / g.words);
        const auto r = flesch_reading_ease(g.text);
        o.require(r.words == g.words && r.sentences == g.sentences && r.syllables == g.syllables,
                  fmt::format("counts for \"{}\": {} {} {}", g.text, r.words, r.sentences, r.syllables));
        o.require(std::abs(r.raw - hand) <= 1e-9, fmt::format("score for \"{}\": {} vs {}", g.text, r.raw, hand));
    }
    if (o.pass) o.detail = "Simpson exact on 52 distributions, Flesch matches 5 hand computations";
    return o;
}

// ---------------------------------------------------------------------------
// 11

Outcome end_to_end() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto ws = make_workspace(fixtures::populated(fixtures::load("company"), 50, 5), default_grammar());
    DatasetStore store({}, load_bundled_pool(fixtures::read_file(fixtures::data_path("pool/bundled.json"))));
    LlmBridge bridge(ScriptedMock::from_json(fixtures::read_file(fixtures::data_path("mock/pipeline.json"))));
    AutoAnnotateJob job;
    job.requested = 50;
    job.threshold = kDefaultAcceptThreshold;
    job.seed = 2026;
    const auto r = auto_annotate(*ws, store, bridge, {}, job);
    const double secs = seconds_since(t0);

    const auto pairs = store.pairs();
    std::size_t clean = 0;
    for (const auto& p : pairs) {
        bool ok = p.status == PairStatus::Accepted && p.confidence && *p.confidence >= job.threshold;
        try {
            execute_query(ws->database(), parse_sql(p.sql));
        } catch (const Error&) {
            ok = false;
        }
        clean += ok;
    }
    const auto first = store.export_dataset();
    DatasetStore copy;
    const auto imported = copy.import_dataset(first);
    const bool identical = copy.export_dataset() == first;

    const auto d = fmt::format("{} of {} produced in {} attempts, {} stored, {} clean, round trip {}, {:.1f}s",
                               r.produced, r.requested, r.attempts, pairs.size(), clean,
                               identical ? "byte-identical" : "differs", secs);
    o.require(r.state == JobState::Done && r.produced == 50 && pairs.size() == 50, d);
    o.require(clean == pairs.size(), d);
    o.require(imported.loaded == 50 && imported.errors.empty() && identical, d);
    o.require(secs < kAutoSeconds, d);
    if (o.pass) o.detail = d;
    return o;
}

}  // namespace

int main() {
    const std::pair<const char*, Outcome (*)()> criteria[] = {
        {"syntactic guarantee", syntactic_guarantee},
        {"grammar fidelity", pcfg_fidelity},
        {"grammar learning round trip", learning_round_trip},
        {"population integrity", population_integrity},
        {"tree edit distance oracle", ted_oracle},
        {"retrieval contract", retrieval_contract},
        {"explanation structure", explanation_structure},
        {"alignment scenario", alignment_scenario},
        {"confidence scoring", confidence_scoring},
        {"metrics", metrics},
        {"automated annotation end to end", end_to_end},
    };
    int failed = 0;
    int number = 0;
    for (const auto& [name, run] : criteria) {
        ++number;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o.fail(fmt::format("threw: {}", e.what()));
        }
        fmt::print("{} {:2d} {}: {}\n", o.pass ? "PASS" : "FAIL", number, name, o.detail);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
