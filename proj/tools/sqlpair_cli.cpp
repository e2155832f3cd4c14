// sqlpair: batch front end for the annotation engine.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <pthread.h>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "sqlpair/database.hpp"
#include "sqlpair/dataset.hpp"
#include "sqlpair/diversity.hpp"
#include "sqlpair/error.hpp"
#include "sqlpair/parallel.hpp"
#include "sqlpair/pipeline.hpp"
#include "sqlpair/service.hpp"

namespace fs = std::filesystem;
using namespace sqlpair;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot read {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// "-" or empty writes to stdout.
void write_text(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
        return;
    }
    const fs::path tmp = out + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(fmt::format("cannot write {}", out));
        f << text;
        if (!text.empty() && text.back() != '\n') f << '\n';
        if (!f.flush()) throw Error(fmt::format("cannot write {}", out));
    }
    fs::rename(tmp, out);
}

ServiceConfig read_config(const std::string& path) {
    return load_service_config(read_text(path), fs::path(path).parent_path());
}

SandboxDatabase database_for(const Schema& schema, const std::string& records, std::size_t rows, std::uint64_t seed) {
    if (!records.empty()) return load_records(schema, read_text(records));
    PopulationConfig pc;
    pc.default_count = rows;
    pc.rng_seed = seed;
    return populate(schema, pc);
}

std::set<PairStatus> statuses_from(const std::vector<std::string>& names) {
    std::set<PairStatus> out;
    for (const auto& n : names) {
        auto s = parse_pair_status(n);
        if (!s) throw ValidationError("status", fmt::format("unknown status '{}'", n));
        out.insert(*s);
    }
    return out;
}

// One SQL per line, or a dataset document {"pairs":[{"sql":...}]}.
std::vector<SqlQuery> read_corpus(const std::string& text, std::size_t& unparsed) {
    std::vector<std::string> lines;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        const auto doc = nlohmann::json::parse(text, nullptr, false);
        if (doc.is_discarded() || !doc.contains("pairs")) throw DocumentError("", "expected {\"pairs\":[...]}");
        for (const auto& p : doc.at("pairs")) lines.push_back(p.value("sql", ""));
    } else {
        std::istringstream in(text);
        for (std::string line; std::getline(in, line);)
            if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
    }
    std::vector<SqlQuery> out;
    for (const auto& sql : lines) {
        try {
            out.push_back(parse_sql(sql));
        } catch (const Error&) {
            ++unparsed;
        }
    }
    return out;
}

int run_serve(const std::string& config_path, std::optional<int> port) {
    auto config = read_config(config_path);
    if (port) config.port = *port;

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);  // before any server thread exists

    Service service(config);
    const int bound = service.start();
    fmt::print(stderr, "listening on {}:{}\n", config.host, bound);
    int sig = 0;
    sigwait(&signals, &sig);
    fmt::print(stderr, "stopping\n");
    service.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sqlpair: text-to-SQL annotation workbench"};
    app.require_subcommand(1);

    std::string config, schema_path, records_path, grammar_path, out, corpus, dataset, journal;
    std::size_t count = 10, n = 10, rows = 50;
    std::uint64_t seed = 0;
    double reuse = 0.3;
    int threshold = kDefaultAcceptThreshold;
    std::optional<int> port;
    bool automated = false, any_result = false;
    std::vector<std::string> table_counts, statuses;

    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--config", config, "Service config JSON")->required()->check(CLI::ExistingFile);
    serve->add_option("--port", port, "Override the configured port");

    auto* pop = app.add_subcommand("populate", "Fill a schema with synthetic records");
    pop->add_option("--schema", schema_path)->required()->check(CLI::ExistingFile);
    pop->add_option("--count", count, "Rows per table");
    pop->add_option("--table-count", table_counts, "Per-table override, TABLE=N");
    pop->add_option("--reuse", reuse, "Probability of reusing an existing value")->check(CLI::Range(0.0, 1.0));
    pop->add_option("--seed", seed);
    pop->add_option("--out", out, "Records JSON (stdout when omitted)");

    auto* sample = app.add_subcommand("sample", "Sample SQL queries, one per line");
    sample->add_option("--grammar", grammar_path, "Grammar JSON (built-in when omitted)")->check(CLI::ExistingFile);
    sample->add_option("--schema", schema_path)->required()->check(CLI::ExistingFile);
    sample->add_option("--records", records_path, "Records JSON (populated when omitted)")->check(CLI::ExistingFile);
    sample->add_option("--rows", rows, "Rows per table when populating");
    sample->add_option("--n", n)->required();
    sample->add_option("--seed", seed);
    sample->add_flag("--allow-empty", any_result, "Keep queries with empty results");
    sample->add_option("--out", out);

    auto* learn = app.add_subcommand("learn-grammar", "Fit production probabilities to a corpus");
    learn->add_option("--grammar", grammar_path, "Starting grammar (built-in when omitted)")->check(CLI::ExistingFile);
    learn->add_option("--corpus", corpus, "SQL per line, or a dataset export")->required()->check(CLI::ExistingFile);
    learn->add_option("--out", out);

    auto* annotate = app.add_subcommand("annotate", "Run the automated annotation pipeline");
    annotate->add_option("--config", config, "Service config JSON (schema, provider, journal)")
        ->required()
        ->check(CLI::ExistingFile);
    annotate->add_flag("--auto", automated, "Fully automated mode")->required();
    annotate->add_option("--n", n, "Pairs to produce")->required();
    annotate->add_option("--threshold", threshold, "Minimum confidence")->check(CLI::Range(0, 100));
    annotate->add_option("--seed", seed);
    annotate->add_option("--out", out, "Export of the accepted pairs after the run");

    auto* analyze = app.add_subcommand("analyze", "Diversity report for a dataset export");
    analyze->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
    analyze->add_option("--status", statuses, "Only these statuses")->delimiter(',');
    analyze->add_option("--out", out);

    auto* exp = app.add_subcommand("export", "Export stored pairs");
    exp->add_option("--config", config, "Service config naming the journal")->check(CLI::ExistingFile);
    exp->add_option("--journal", journal, "Journal file")->check(CLI::ExistingFile);
    exp->add_option("--status", statuses, "Only these statuses")->delimiter(',');
    exp->add_option("--out", out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) return run_serve(config, port);

        if (*pop) {
            const auto schema = load_schema(read_text(schema_path));
            PopulationConfig pc;
            pc.default_count = count;
            pc.rng_seed = seed;
            pc.reuse_probability = reuse;
            for (const auto& tc : table_counts) {
                const auto eq = tc.find('=');
                if (eq == std::string::npos) throw ValidationError("table-count", "expected TABLE=N");
                pc.record_counts[tc.substr(0, eq)] = std::stoul(tc.substr(eq + 1));
            }
            write_text(out, save_records(populate(schema, pc)));
            return 0;
        }

        if (*sample) {
            const auto schema = load_schema(read_text(schema_path));
            const auto db = database_for(schema, records_path, rows, seed);
            const auto grammar = grammar_path.empty() ? default_grammar() : load_grammar(read_text(grammar_path));
            const Grounder grounder(db);
            SamplerConfig sc;
            sc.rng_seed = seed;
            sc.require_nonempty_result = !any_result;
            std::string text;
            std::size_t failed = 0;
            for (const auto& s : parallel::sample_batch(grammar, grounder, sc, n)) {
                if (!s.error.empty()) {
                    ++failed;
                    fmt::print(stderr, "sample failed: {}\n", s.error);
                    continue;
                }
                text += s.query.text + "\n";
            }
            write_text(out, text);
            fmt::print(stderr, "{} sampled, {} failed\n", n - failed, failed);
            return failed == n && n > 0 ? 1 : 0;
        }

        if (*learn) {
            const auto base = grammar_path.empty() ? default_grammar() : load_grammar(read_text(grammar_path));
            std::size_t unparsed = 0;
            const auto queries = read_corpus(read_text(corpus), unparsed);
            const auto r = learn_probabilities(base, queries);
            for (const auto& reason : r.skipped_reasons) fmt::print(stderr, "skipped: {}\n", reason);
            fmt::print(stderr, "{} used, {} skipped, {} unparsed\n", r.used, r.skipped, unparsed);
            if (r.empty_corpus) fmt::print(stderr, "corpus is empty; probabilities are uniform\n");
            write_text(out, save_grammar(r.grammar));
            return 0;
        }

        if (*annotate) {
            const auto c = read_config(config);
            if (c.schema.empty()) throw ValidationError("schema", "the config must name a schema");
            const auto schema = load_schema(read_text(c.schema));
            auto ws = make_workspace(database_for(schema, c.records.string(), c.rows, c.seed),
                                     c.grammar.empty() ? default_grammar() : load_grammar(read_text(c.grammar)));
            DatasetStore store(c.journal, c.bundled_pool.empty() ? std::vector<PoolEntry>{}
                                                                 : load_bundled_pool(read_text(c.bundled_pool)));
            LlmBridge bridge(make_provider(c.provider));
            AutoAnnotateJob job{n, threshold, seed};
            const auto r = auto_annotate(*ws, store, bridge, c.pipeline, job, [](const JobProgress& p) {
                fmt::print(stderr, "\r{}/{} produced, {} attempts", p.produced, p.requested, p.attempts);
            });
            fmt::print(stderr, "\n");
            for (const auto& f : r.failures) fmt::print(stderr, "attempt {} failed at {}: {}\n", f.attempt, f.stage, f.reason);
            if (!out.empty()) write_text(out, store.export_dataset({PairStatus::Accepted}));
            std::cout << progress_to_json(r) << '\n';
            return r.state == JobState::Done ? 0 : 2;
        }

        if (*analyze) {
            const auto wanted = statuses_from(statuses);
            DatasetStore store;
            const auto imported = store.import_dataset(read_text(dataset));
            for (const auto& e : imported.errors) fmt::print(stderr, "row {} ({}): {}\n", e.row, e.id, e.reason);
            std::vector<DatasetRow> rows_in;
            for (const auto& p : store.pairs(wanted)) rows_in.push_back({p.sql, p.question});
            if (rows_in.empty()) throw AnalysisError("empty dataset");
            write_text(out, report_to_json(analyze_dataset(rows_in)));
            return 0;
        }

        if (*exp) {
            fs::path path = journal;
            if (path.empty() && !config.empty()) path = read_config(config).journal;
            if (path.empty()) throw ValidationError("journal", "pass --journal or a --config with a journal");
            if (!fs::exists(path)) throw Error(fmt::format("no journal at {}", path.string()));
            DatasetStore store(path);
            write_text(out, store.export_dataset(statuses_from(statuses)));
            return 0;
        }
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
