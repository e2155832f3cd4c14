#include "sqlpair/service.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "codec.hpp"
#include "sqlpair/database.hpp"
#include "sqlpair/diversity.hpp"
#include "sqlpair/error.hpp"
#include "sqlpair/executor.hpp"

namespace sqlpair {

namespace {

using detail::json;

constexpr const char* kDefaultSession = "default";
constexpr const char* kSessionHeader = "X-Session";

// Response body, already serialized.
struct Reply {
    std::string body;
    Reply(const json& j) : body(j.dump()) {}  // NOLINT: handlers return json directly
    static Reply text(std::string t) {
        Reply r(json{});
        r.body = std::move(t);
        return r;
    }
};

struct HttpError : Error {
    int status;
    HttpError(int s, const std::string& message) : Error(message), status(s) {}
};

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot read {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json value_json(const Value& v) {
    return std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>)
                return nullptr;
            else
                return x;
        },
        v);
}

const json& field(const json& body, const char* key) {
    if (!body.is_object()) throw DocumentError("", "request body must be a JSON object");
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) throw DocumentError(key, fmt::format("missing field '{}'", key));
    return *it;
}

std::string string_field(const json& body, const char* key) {
    const auto& v = field(body, key);
    if (!v.is_string()) throw DocumentError(key, "expected a string");
    return v.get<std::string>();
}

template <class T>
std::optional<T> optional_number(const json& body, const char* key) {
    if (!body.is_object() || !body.contains(key) || body.at(key).is_null()) return std::nullopt;
    const auto& v = body.at(key);
    if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw DocumentError(key, "expected an integer");
        if constexpr (std::is_unsigned_v<T>)
            if (v.get<long long>() < 0) throw DocumentError(key, "expected a non-negative integer");
    } else if (!v.is_number()) {
        throw DocumentError(key, "expected a number");
    }
    return v.get<T>();
}

json examples_json(const std::vector<FewShotExample>& examples) {
    json out = json::array();
    for (const auto& e : examples) out.push_back({{"sql", e.sql}, {"question", e.question}, {"similarity", e.similarity}});
    return out;
}

json report_json(const MisalignmentReport& r) {
    json missing = json::array();
    for (const auto& [step, text] : r.missing_steps) missing.push_back({{"step", step}, {"text", text}});
    json redundant = json::array();
    for (const auto& [span, text] : r.redundant_spans)
        redundant.push_back({{"range", {span.begin, span.end}}, {"text", text}});
    return {{"missing", missing}, {"redundant", redundant}};
}

std::set<PairStatus> status_filter(const httplib::Request& req) {
    std::set<PairStatus> out;
    if (!req.has_param("status")) return out;
    std::stringstream ss(req.get_param_value("status"));
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        const auto s = parse_pair_status(part);
        if (!s) throw DocumentError("status", fmt::format("unknown status '{}'", part));
        out.insert(*s);
    }
    return out;
}

std::string new_token() {
    std::random_device rd;
    return fmt::format("{:08x}{:08x}", rd(), rd());
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

ServiceConfig load_service_config(std::string_view document, const std::filesystem::path& base) {
    const auto root = detail::parse_json(document, "service config");
    detail::require_object(root, "");
    detail::reject_unknown(root, "",
                           {"host", "port", "journal", "bundled_pool", "schema", "records", "grammar", "rows", "seed",
                            "provider", "paraphrase", "scoring_rounds", "top_k", "similarity_threshold"});
    ServiceConfig c;
    const auto str = [&](const char* key) -> std::string {
        if (!root.contains(key)) return {};
        if (!root.at(key).is_string()) throw DocumentError(key, "expected a string");
        return root.at(key).get<std::string>();
    };
    if (root.contains("host")) c.host = str("host");
    if (auto p = optional_number<long long>(root, "port")) {
        if (*p < 0 || *p > 65535) throw ValidationError("port", "expected 0-65535");
        c.port = static_cast<int>(*p);
    }
    c.journal = resolve(base, str("journal"));
    c.bundled_pool = resolve(base, str("bundled_pool"));
    c.schema = resolve(base, str("schema"));
    c.records = resolve(base, str("records"));
    c.grammar = resolve(base, str("grammar"));
    if (auto v = optional_number<std::size_t>(root, "rows")) c.rows = *v;
    if (auto v = optional_number<std::uint64_t>(root, "seed")) c.seed = *v;
    if (root.contains("provider")) {
        c.provider = load_provider_config(root.at("provider").dump());
        if (!c.provider.script.empty()) c.provider.script = resolve(base, c.provider.script).string();
    }
    if (root.contains("paraphrase")) {
        if (!root.at("paraphrase").is_boolean()) throw DocumentError("paraphrase", "expected a boolean");
        c.pipeline.paraphrase = root.at("paraphrase").get<bool>();
    }
    if (auto v = optional_number<std::size_t>(root, "scoring_rounds")) {
        if (*v == 0) throw ValidationError("scoring_rounds", "must be at least 1");
        c.pipeline.scoring_rounds = *v;
    }
    if (auto v = optional_number<std::size_t>(root, "top_k")) c.pipeline.retriever.top_k = *v;
    if (auto v = optional_number<double>(root, "similarity_threshold")) {
        if (*v < 0 || *v > 1) throw ValidationError("similarity_threshold", "expected a fraction in [0, 1]");
        c.pipeline.retriever.similarity_threshold = *v;
    }
    return c;
}

struct Session {
    std::mutex mutex;
    std::optional<Schema> schema;
    std::shared_ptr<const Workspace> ws;
    std::shared_ptr<const SandboxDatabase> db;  // kept for grammar swaps
    Grammar grammar = default_grammar();
    std::uint64_t next_seed = 0;

    std::mutex job_mutex;
    std::optional<JobProgress> progress;
    std::atomic<bool> running{false};
    std::jthread job;
};

struct Service::Impl {
    ServiceConfig config;
    std::shared_ptr<Provider> provider;
    LlmBridge bridge;
    DatasetStore store;
    std::mutex sessions_mutex;
    std::map<std::string, std::shared_ptr<Session>> sessions;
    httplib::Server server;
    std::thread listener;
    int port = 0;

    Impl(ServiceConfig c, std::shared_ptr<Provider> p)
        : config(std::move(c)),
          provider(p ? std::move(p) : make_provider(config.provider)),
          bridge(provider, config.provider.max_in_flight),
          store(config.journal,
                config.bundled_pool.empty() ? std::vector<PoolEntry>{} : load_bundled_pool(read_text(config.bundled_pool))) {
        auto session = std::make_shared<Session>();
        session->next_seed = config.seed;
        if (!config.grammar.empty()) session->grammar = load_grammar(read_text(config.grammar));
        if (!config.schema.empty()) {
            session->schema = load_schema(read_text(config.schema));
            SandboxDatabase db;
            if (!config.records.empty()) {
                db = load_records(*session->schema, read_text(config.records));
            } else {
                PopulationConfig pc;
                pc.default_count = config.rows;
                pc.rng_seed = config.seed;
                db = populate(*session->schema, pc);
            }
            set_database(*session, std::move(db));
        }
        sessions[kDefaultSession] = std::move(session);
        routes();
    }

    ~Impl() {
        server.stop();
        if (listener.joinable()) listener.join();
        for (auto& [id, s] : sessions) {
            s->job.request_stop();
            if (s->job.joinable()) s->job.join();
        }
    }

    static void set_database(Session& s, SandboxDatabase db) {
        s.db = std::make_shared<const SandboxDatabase>(db);
        s.ws = make_workspace(std::move(db), s.grammar);
    }

    std::shared_ptr<Session> session_for(const httplib::Request& req) {
        const auto token = req.has_header(kSessionHeader) ? req.get_header_value(kSessionHeader) : kDefaultSession;
        std::lock_guard lock(sessions_mutex);
        auto it = sessions.find(token);
        if (it == sessions.end()) throw HttpError(404, fmt::format("unknown session '{}'", token));
        return it->second;
    }

    static void ensure_idle(const Session& s) {
        if (s.running) throw HttpError(409, "an auto-annotate job is running; try again when it finishes");
    }

    static std::shared_ptr<const Workspace> workspace(Session& s) {
        std::lock_guard lock(s.mutex);
        if (!s.ws) throw HttpError(409, s.schema ? "session has no populated database" : "session has no schema");
        return s.ws;
    }

    static const Schema& schema_of(const Workspace& ws) { return ws.schema(); }

    Explanation steps_for(const json& body, const SqlQuery& q, const Workspace& ws) {
        if (body.contains("steps") && !body.at("steps").is_null()) {
            const auto e = detail::explanation_from(body.at("steps"), "steps");
            if (const auto problems = check_explanation(e, q); !problems.empty())
                throw ValidationError("steps", problems.front());
            return e;
        }
        return explain_with_fallback(q, ws.schema(), bridge);
    }

    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    // Handlers may set res.status for non-200 successes.
    Handler wrap(std::function<Reply(const httplib::Request&, httplib::Response&)> fn) {
        return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
            json out;
            int status = 200;
            try {
                res.status = 200;
                auto reply = fn(req, res);
                res.set_content(std::move(reply.body), "application/json");
                return;
            } catch (const HttpError& e) {
                status = e.status;
                out = {{"error", e.what()}};
            } catch (const DocumentError& e) {
                status = 400;
                out = {{"error", e.what()}, {"field", e.path()}};
            } catch (const ValidationError& e) {
                status = 400;
                out = {{"error", e.what()}, {"field", e.path()}};
            } catch (const SqlSyntaxError& e) {
                status = 400;
                out = {{"error", e.what()}, {"offset", e.offset()}, {"expected", e.expected()}};
            } catch (const AlignmentError& e) {
                status = 400;
                out = {{"error", e.what()}};
            } catch (const ExecutionError& e) {
                status = 422;
                out = {{"error", e.what()}};
            } catch (const ExplanationError& e) {
                status = 422;
                out = {{"error", e.what()}};
            } catch (const SamplingError& e) {
                status = 422;
                out = {{"error", e.what()}};
            } catch (const GroundingError& e) {
                status = 422;
                out = {{"error", e.what()}};
            } catch (const StageError& e) {
                status = e.stage() == stage::kSample ? 422 : 502;
                out = {{"error", e.what()}, {"stage", e.stage()}};
            } catch (const ProviderError& e) {
                status = 502;
                out = {{"error", e.what()}};
            } catch (const ResponseFormatError& e) {
                status = 502;
                out = {{"error", e.what()}};
            } catch (const AnalysisError& e) {
                status = 409;
                out = {{"error", e.what()}};
            } catch (const StoreError& e) {
                status = 409;
                out = {{"error", e.what()}};
            } catch (const PopulationError& e) {
                status = 400;
                out = {{"error", e.what()}};
            } catch (const std::exception& e) {
                status = 500;
                out = {{"error", e.what()}};
            }
            res.status = status;
            res.set_content(out.dump(), "application/json");
        };
    }

    static json body_of(const httplib::Request& req) {
        if (req.body.empty()) return json::object();
        return detail::parse_json(req.body, "request body");
    }

    void routes() {
        server.Get("/health", wrap([](auto&, auto&) -> json { return {{"status", "ok"}}; }));

        server.Post("/session", wrap([this](auto&, auto&) -> json {
            auto s = std::make_shared<Session>();
            std::lock_guard lock(sessions_mutex);
            auto token = new_token();
            while (sessions.count(token)) token = new_token();
            sessions[token] = std::move(s);
            return {{"session", token}};
        }));

        server.Get("/schema", wrap([this](const httplib::Request& req, httplib::Response&) -> Reply {
            auto s = session_for(req);
            std::lock_guard lock(s->mutex);
            if (!s->schema) throw HttpError(404, "session has no schema");
            return Reply::text(save_schema(*s->schema));
        }));

        server.Post("/schema", wrap([this](const httplib::Request& req, httplib::Response&) -> Reply {
            auto s = session_for(req);
            auto schema = load_schema(req.body);
            std::lock_guard lock(s->mutex);
            ensure_idle(*s);
            s->schema = std::move(schema);
            s->ws.reset();
            s->db.reset();
            return Reply::text(save_schema(*s->schema));
        }));

        server.Post("/schema/validate", wrap([](const httplib::Request& req, auto&) -> json {
            const auto schema = parse_schema(req.body);
            json violations = json::array();
            for (const auto& v : validate_schema(schema)) violations.push_back({{"path", v.path}, {"message", v.message}});
            json out{{"valid", violations.empty()}, {"violations", violations}};
            if (violations.empty()) out["version"] = schema_version(schema);
            return out;
        }));

        server.Get("/grammar", wrap([this](const httplib::Request& req, httplib::Response&) -> Reply {
            auto s = session_for(req);
            std::lock_guard lock(s->mutex);
            return Reply::text(save_grammar(s->grammar));
        }));

        server.Post("/grammar", wrap([this](const httplib::Request& req, httplib::Response&) -> Reply {
            auto s = session_for(req);
            auto grammar = load_grammar(req.body);
            std::lock_guard lock(s->mutex);
            ensure_idle(*s);
            s->grammar = std::move(grammar);
            if (s->db) s->ws = make_workspace(*s->db, s->grammar);
            return Reply::text(save_grammar(s->grammar));
        }));

        server.Post("/populate", wrap([this](const httplib::Request& req, auto&) -> json {
            auto s = session_for(req);
            const auto body = body_of(req);
            PopulationConfig pc;
            pc.default_count = config.rows;
            pc.rng_seed = optional_number<std::uint64_t>(body, "seed").value_or(config.seed);
            if (body.contains("counts")) {
                const auto& counts = body.at("counts");
                if (counts.is_number_unsigned()) {
                    pc.default_count = counts.get<std::size_t>();
                } else if (counts.is_object()) {
                    for (auto it = counts.begin(); it != counts.end(); ++it) {
                        if (!it->is_number_unsigned())
                            throw DocumentError("counts." + it.key(), "expected a non-negative integer");
                        pc.record_counts[it.key()] = it->get<std::size_t>();
                    }
                } else {
                    throw DocumentError("counts", "expected a row count or an object of per-table counts");
                }
            }
            if (auto r = optional_number<double>(body, "reuse_probability")) {
                if (*r < 0 || *r > 1) throw ValidationError("reuse_probability", "expected a fraction in [0, 1]");
                pc.reuse_probability = *r;
            }
            std::lock_guard lock(s->mutex);
            ensure_idle(*s);
            if (!s->schema) throw HttpError(409, "session has no schema");
            for (const auto& [table, n] : pc.record_counts)
                if (!s->schema->find_table(table)) throw HttpError(404, fmt::format("unknown table '{}'", table));
            set_database(*s, populate(*s->schema, pc));
            json tables = json::object();
            for (std::size_t i = 0; i < s->schema->tables.size(); ++i)
                tables[s->schema->tables[i].name] = s->db->tables[i].records.size();
            return {{"tables", tables}, {"seed", pc.rng_seed}, {"version", s->ws->version()}};
        }));

        server.Get("/records", wrap([this](const httplib::Request& req, httplib::Response&) -> Reply {
            const auto ws = workspace(*session_for(req));
            const auto all = save_records(ws->database());
            if (!req.has_param("table")) return Reply::text(all);
            const auto name = req.get_param_value("table");
            const auto* t = ws->schema().find_table(name);
            if (!t) throw HttpError(404, fmt::format("unknown table '{}'", name));
            const auto doc = json::parse(all);
            return json{{t->name, doc.at(t->name)}};
        }));

        server.Post("/sample-sql", wrap([this](const httplib::Request& req, auto&) -> json {
            auto s = session_for(req);
            const auto body = body_of(req);
            const auto ws = workspace(*s);
            std::uint64_t seed;
            if (auto given = optional_number<std::uint64_t>(body, "seed")) {
                seed = *given;
            } else {
                std::lock_guard lock(s->mutex);
                seed = s->next_seed++;
            }
            const auto q = sample_candidate(*ws, config.pipeline.sampler, seed);
            return {{"sql", q.text}, {"seed", seed}};
        }));

        server.Post("/execute", wrap([this](const httplib::Request& req, auto&) -> json {
            const auto body = body_of(req);
            const auto q = parse_sql(string_field(body, "sql"));
            const auto ws = workspace(*session_for(req));
            const auto result = execute_query(ws->database(), q);
            json rows = json::array();
            for (const auto& r : result.rows) {
                json row = json::array();
                for (const auto& v : r) row.push_back(value_json(v));
                rows.push_back(std::move(row));
            }
            return {{"sql", q.text}, {"columns", result.columns}, {"rows", rows}};
        }));

        server.Post("/explain", wrap([this](const httplib::Request& req, auto&) -> json {
            const auto body = body_of(req);
            const auto q = parse_sql(string_field(body, "sql"));
            const auto ws = workspace(*session_for(req));
            auto e = detail::explanation_json(explain_with_fallback(q, ws->schema(), bridge));
            e["sql"] = q.text;
            return e;
        }));

        server.Post("/translate", wrap([this](const httplib::Request& req, auto&) -> json {
            const auto body = body_of(req);
            const auto q = parse_sql(string_field(body, "sql"));
            const auto ws = workspace(*session_for(req));
            const auto steps = steps_for(body, q, *ws);
            const auto pool = store.pool_snapshot();
            const auto examples = few_shot_examples(q, *pool, config.pipeline.retriever);
            const auto question = generate_question(q, ws->schema(), step_views(steps), examples, bridge);
            return {{"sql", q.text}, {"question", question}, {"examples", examples_json(examples)},
                    {"steps", detail::explanation_json(steps)}};
        }));

        server.Get("/similar", wrap([this](const httplib::Request& req, auto&) -> json {
            if (!req.has_param("sql")) throw DocumentError("sql", "missing query parameter 'sql'");
            const auto q = parse_sql(req.get_param_value("sql"));
            const auto pool = store.pool_snapshot();
            json out = json::array();
            for (const auto& r : retrieve_similar(q, *pool, config.pipeline.retriever)) {
                const auto& e = (*pool)[r.pool_index];
                out.push_back({{"id", e.id}, {"sql", e.query.text}, {"question", e.question}, {"similarity", r.similarity}});
            }
            return {{"examples", out}};
        }));

        server.Post("/align", wrap([this](const httplib::Request& req, auto&) -> json {
            const auto body = body_of(req);
            const auto sql = string_field(body, "sql");
            const auto question = string_field(body, "question");
            const auto q = parse_sql(sql);
            const auto ws = workspace(*session_for(req));
            const auto steps = steps_for(body, q, *ws);
            const auto map = align(question, steps, q, ws->schema(), bridge);
            return {{"question", question},
                    {"steps", detail::explanation_json(steps)},
                    {"alignment", detail::alignment_json(map)},
                    {"report", report_json(detect_misalignments(map, steps, question))}};
        }));

        server.Post("/inject", wrap([this](const httplib::Request& req, auto&) -> json {
            const auto body = body_of(req);
            const auto sql = string_field(body, "sql");
            const auto question = string_field(body, "question");
            const auto index = optional_number<std::size_t>(body, "step_index");
            if (!index) throw DocumentError("step_index", "missing field 'step_index'");
            const auto q = parse_sql(sql);
            const auto ws = workspace(*session_for(req));
            const auto steps = steps_for(body, q, *ws);
            if (*index < 1 || *index > steps.steps.size())
                throw ValidationError("step_index", fmt::format("expected 1-{}", steps.steps.size()));
            const auto map = body.contains("alignment")
                                 ? detail::alignment_from(body.at("alignment"), "alignment", question, steps.steps.size())
                                 : align(question, steps, q, ws->schema(), bridge);
            const auto rev = inject_step(question, map, steps.steps[*index - 1], steps, q, ws->schema(), bridge);
            return {{"question", rev.question},
                    {"alignment", detail::alignment_json(rev.alignment)},
                    {"report", report_json(detect_misalignments(rev.alignment, steps, rev.question))}};
        }));

        server.Post("/remove-spans", wrap([](const httplib::Request& req, auto&) -> json {
            const auto body = body_of(req);
            const auto question = string_field(body, "question");
            const auto& ranges = field(body, "ranges");
            if (!ranges.is_array()) throw DocumentError("ranges", "expected an array of [start, end] pairs");
            std::vector<Span> spans;
            for (std::size_t i = 0; i < ranges.size(); ++i) {
                const auto& r = ranges[i];
                if (!r.is_array() || r.size() != 2 || !r[0].is_number_unsigned() || !r[1].is_number_unsigned())
                    throw DocumentError(detail::index_path("ranges", i), "expected [start, end]");
                spans.push_back({r[0].get<std::size_t>(), r[1].get<std::size_t>()});
            }
            return {{"question", remove_spans(question, spans)}};
        }));

        server.Post("/score", wrap([this](const httplib::Request& req, auto&) -> json {
            const auto body = body_of(req);
            const auto sql = string_field(body, "sql");
            const auto question = string_field(body, "question");
            const auto rounds = optional_number<std::size_t>(body, "rounds").value_or(config.pipeline.scoring_rounds);
            if (rounds == 0) throw ValidationError("rounds", "must be at least 1");
            const auto q = parse_sql(sql);
            const auto ws = workspace(*session_for(req));
            const auto r = score_equivalence(q, question, ws->schema(), bridge, rounds);
            return {{"score", r.score}, {"rounds", r.rounds}, {"report", r.report}};
        }));

        const auto store_pair = [this](bool accept) {
            return wrap([this, accept](const httplib::Request& req, auto&) -> json {
                auto pair = pair_from_json(req.body);
                if (pair.schema_version.empty()) {
                    auto s = session_for(req);
                    std::lock_guard lock(s->mutex);
                    if (s->ws) pair.schema_version = s->ws->version();
                }
                const auto id = accept ? store.accept(std::move(pair)) : store.reject(std::move(pair));
                return {{"id", id}, {"pair", json::parse(pair_to_json(*store.find(id)))}};
            });
        };
        server.Post("/dataset/accept", store_pair(true));
        server.Post("/dataset/reject", store_pair(false));

        server.Get("/dataset/export", wrap([this](const httplib::Request& req, httplib::Response&) -> Reply {
            return Reply::text(store.export_dataset(status_filter(req)));
        }));

        server.Post("/dataset/import", wrap([this](const httplib::Request& req, auto&) -> json {
            const auto r = store.import_dataset(req.body);
            json errors = json::array();
            for (const auto& e : r.errors) errors.push_back({{"row", e.row}, {"id", e.id}, {"reason", e.reason}});
            return {{"loaded", r.loaded}, {"duplicates", r.duplicates}, {"errors", errors}};
        }));

        server.Get("/analysis/distributions", wrap([this](const httplib::Request& req, httplib::Response&) -> Reply {
            std::vector<DatasetRow> rows;
            for (const auto& p : store.pairs(status_filter(req))) rows.push_back({p.sql, p.question});
            return Reply::text(report_to_json(analyze_dataset(rows)));
        }));

        server.Post("/auto-annotate", wrap([this](const httplib::Request& req, httplib::Response& res) -> json {
            auto s = session_for(req);
            const auto body = body_of(req);
            AutoAnnotateJob job;
            const auto count = optional_number<std::size_t>(body, "count");
            if (!count) throw DocumentError("count", "missing field 'count'");
            job.requested = *count;
            job.threshold = optional_number<int>(body, "threshold").value_or(kDefaultAcceptThreshold);
            if (job.requested == 0) throw ValidationError("count", "must be at least 1");
            if (job.threshold < 0 || job.threshold > 100) throw ValidationError("threshold", "must be within 0-100");
            const auto ws = workspace(*s);
            std::lock_guard lock(s->mutex);
            if (s->running.exchange(true)) throw HttpError(409, "an auto-annotate job is already running");
            job.seed = optional_number<std::uint64_t>(body, "seed").value_or(s->next_seed);
            s->next_seed += kBudgetFactor * job.requested;
            {
                std::lock_guard jl(s->job_mutex);
                s->progress = JobProgress{};
                s->progress->requested = job.requested;
                s->progress->budget = kBudgetFactor * job.requested;
            }
            if (s->job.joinable()) s->job.join();
            s->job = std::jthread([this, s, ws, job](std::stop_token stop) {
                const auto update = [&](const JobProgress& p) {
                    std::lock_guard jl(s->job_mutex);
                    s->progress = p;
                };
                try {
                    auto final = auto_annotate(*ws, store, bridge, config.pipeline, job, update, stop);
                    std::lock_guard jl(s->job_mutex);
                    s->progress = std::move(final);
                    s->running = false;
                } catch (const std::exception& e) {
                    std::lock_guard jl(s->job_mutex);
                    s->progress->state = JobState::Failed;
                    s->progress->failures.push_back({s->progress->attempts, "job", e.what()});
                    s->running = false;
                }
            });
            res.status = 202;
            return {{"state", "running"}, {"requested", job.requested}, {"threshold", job.threshold}, {"seed", job.seed}};
        }));

        server.Get("/auto-annotate/status", wrap([this](const httplib::Request& req, httplib::Response&) -> Reply {
            auto s = session_for(req);
            std::lock_guard jl(s->job_mutex);
            if (!s->progress) return json{{"state", "idle"}};
            return Reply::text(progress_to_json(*s->progress));
        }));
    }
};

Service::Service(ServiceConfig config, std::shared_ptr<Provider> provider)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(provider))) {}

Service::~Service() = default;

int Service::start() {
    auto& i = *impl_;
    if (i.config.port == 0) {
        i.port = i.server.bind_to_any_port(i.config.host);
        if (i.port < 0) throw Error(fmt::format("cannot bind {}", i.config.host));
    } else {
        if (!i.server.bind_to_port(i.config.host, i.config.port))
            throw Error(fmt::format("cannot bind {}:{}", i.config.host, i.config.port));
        i.port = i.config.port;
    }
    i.listener = std::thread([&i] { i.server.listen_after_bind(); });
    i.server.wait_until_ready();
    return i.port;
}

void Service::wait() {
    if (impl_->listener.joinable()) impl_->listener.join();
}

void Service::stop() { impl_->server.stop(); }

}  // namespace sqlpair
