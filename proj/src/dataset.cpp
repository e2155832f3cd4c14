#include "sqlpair/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "codec.hpp"
#include "sqlpair/error.hpp"

namespace sqlpair {

namespace {

constexpr std::string_view kStatusNames[] = {"pending", "accepted", "rejected"};
constexpr std::string_view kProvenanceNames[] = {"interactive", "automated"};

detail::json pair_json(const AnnotatedPair& p) {
    detail::json j;
    j["id"] = p.id;
    j["sql"] = p.sql;
    j["question"] = p.question;
    j["schema_version"] = p.schema_version;
    if (p.confidence) j["confidence"] = *p.confidence;
    j["status"] = to_string(p.status);
    j["provenance"] = to_string(p.provenance);
    if (p.steps) {
        const auto e = detail::explanation_json(*p.steps);
        j["steps"] = e.at("steps");
        j["explanation_source"] = e.at("source");
    }
    if (p.alignment) j["alignment"] = detail::alignment_json(*p.alignment);
    j["created_at"] = p.created_at;
    if (p.override_missing) j["override"] = true;
    if (!p.pipeline.empty()) j["pipeline"] = p.pipeline;
    return j;
}

AnnotatedPair pair_from(const detail::json& j, const std::string& path) {
    using namespace detail;
    require_object(j, path);
    reject_unknown(j, path,
                   {"id", "sql", "question", "schema_version", "confidence", "status", "provenance", "steps",
                    "explanation_source", "alignment", "created_at", "override", "pipeline"});
    AnnotatedPair p;
    const auto opt_string = [&](const char* key) -> std::string {
        if (!j.contains(key)) return {};
        if (!j.at(key).is_string()) throw DocumentError(field_path(path, key), "expected a string");
        return j.at(key).get<std::string>();
    };
    p.id = opt_string("id");
    p.sql = require_string(j, path, "sql");
    p.question = require_string(j, path, "question");
    p.schema_version = opt_string("schema_version");
    p.created_at = opt_string("created_at");
    if (j.contains("confidence") && !j.at("confidence").is_null()) {
        if (!j.at("confidence").is_number_integer()) throw DocumentError(field_path(path, "confidence"), "expected an integer");
        p.confidence = j.at("confidence").get<int>();
    }
    if (j.contains("status")) {
        const auto s = parse_pair_status(opt_string("status"));
        if (!s) throw DocumentError(field_path(path, "status"), "expected pending, accepted or rejected");
        p.status = *s;
    }
    if (j.contains("provenance")) {
        const auto s = parse_provenance(opt_string("provenance"));
        if (!s) throw DocumentError(field_path(path, "provenance"), "expected interactive or automated");
        p.provenance = *s;
    }
    if (j.contains("override")) {
        if (!j.at("override").is_boolean()) throw DocumentError(field_path(path, "override"), "expected a boolean");
        p.override_missing = j.at("override").get<bool>();
    }
    if (j.contains("pipeline")) {
        const auto& a = j.at("pipeline");
        if (!a.is_array()) throw DocumentError(field_path(path, "pipeline"), "expected an array of stage names");
        for (const auto& s : a) {
            if (!s.is_string()) throw DocumentError(field_path(path, "pipeline"), "expected an array of stage names");
            p.pipeline.push_back(s.get<std::string>());
        }
    }
    if (j.contains("steps")) {
        json e{{"steps", j.at("steps")}};
        if (j.contains("explanation_source")) e["source"] = j.at("explanation_source");
        p.steps = explanation_from(e, path);
    }
    if (j.contains("alignment")) {
        if (!p.steps) throw ValidationError(field_path(path, "alignment"), "an alignment needs the explanation steps");
        p.alignment = alignment_from(j.at("alignment"), field_path(path, "alignment"), p.question, p.steps->steps.size());
    }
    return p;
}

std::optional<std::size_t> serial_of(const std::string& id) {
    if (id.size() <= 5 || id.rfind("pair-", 0) != 0) return std::nullopt;
    std::size_t n = 0;
    for (std::size_t i = 5; i < id.size(); ++i) {
        if (id[i] < '0' || id[i] > '9') return std::nullopt;
        n = n * 10 + static_cast<std::size_t>(id[i] - '0');
    }
    return n;
}

bool pair_before(const AnnotatedPair& a, const AnnotatedPair& b) {
    return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id);
}

}  // namespace

std::string_view to_string(PairStatus status) { return kStatusNames[static_cast<std::size_t>(status)]; }

std::optional<PairStatus> parse_pair_status(std::string_view text) {
    for (std::size_t i = 0; i < std::size(kStatusNames); ++i)
        if (kStatusNames[i] == text) return static_cast<PairStatus>(i);
    return std::nullopt;
}

std::string_view to_string(Provenance provenance) { return kProvenanceNames[static_cast<std::size_t>(provenance)]; }

std::optional<Provenance> parse_provenance(std::string_view text) {
    for (std::size_t i = 0; i < std::size(kProvenanceNames); ++i)
        if (kProvenanceNames[i] == text) return static_cast<Provenance>(i);
    return std::nullopt;
}

std::vector<std::string> check_pair(const AnnotatedPair& pair) {
    std::vector<std::string> problems;
    std::optional<SqlQuery> q;
    try {
        q = parse_sql(pair.sql);
    } catch (const SqlSyntaxError& e) {
        problems.push_back(fmt::format("sql: {}", e.what()));
    }
    if (pair.question.find_first_not_of(" \t\r\n") == std::string::npos) problems.push_back("question: empty");
    if (pair.confidence && (*pair.confidence < 0 || *pair.confidence > 100))
        problems.push_back(fmt::format("confidence: {} is outside 0-100", *pair.confidence));
    if (pair.steps && q) {
        for (const auto& p : check_explanation(*pair.steps, *q)) problems.push_back("steps: " + p);
    }
    if (pair.alignment) {
        if (!pair.steps) {
            problems.push_back("alignment: needs the explanation steps");
        } else {
            for (const auto& p : check_alignment(*pair.alignment, pair.question, pair.steps->steps.size()))
                problems.push_back("alignment: " + p);
            if (pair.status == PairStatus::Accepted && !pair.override_missing && !pair.alignment->unmapped_steps.empty())
                problems.push_back("alignment: steps missing from the question and no override");
        }
    }
    return problems;
}

std::string pair_to_json(const AnnotatedPair& pair) { return pair_json(pair).dump(); }

AnnotatedPair pair_from_json(std::string_view document) {
    return pair_from(detail::parse_json(document, "pair"), "");
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(t));
}

std::vector<PoolEntry> load_bundled_pool(std::string_view document) {
    const auto root = detail::parse_json(document, "bundled pool");
    detail::require_object(root, "");
    const auto& rows = detail::require_field(root, "", "pairs");
    if (!rows.is_array()) throw DocumentError("pairs", "expected an array");
    std::vector<PoolEntry> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto path = detail::index_path("pairs", i);
        detail::require_object(rows[i], path);
        const auto id = detail::require_string(rows[i], path, "id");
        const auto sql = detail::require_string(rows[i], path, "sql");
        try {
            out.push_back(make_pool_entry(id, parse_sql(sql), detail::require_string(rows[i], path, "question")));
        } catch (const SqlSyntaxError& e) {
            throw DocumentError(detail::field_path(path, "sql"), e.what());
        }
    }
    return out;
}

DatasetStore::DatasetStore(std::filesystem::path journal, std::vector<PoolEntry> bundled, Clock clock)
    : journal_(std::move(journal)), clock_(std::move(clock)) {
    auto pool = std::make_shared<std::vector<PoolEntry>>(std::move(bundled));
    if (!journal_.empty() && journal_.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(journal_.parent_path(), ec);
    }
    if (!journal_.empty() && std::filesystem::exists(journal_)) {
        std::ifstream in(journal_, std::ios::binary);
        if (!in) throw StoreError(fmt::format("cannot read journal {}", journal_.string()));
        std::string line;
        std::size_t line_no = 0;
        bool torn = false;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            AnnotatedPair p;
            try {
                p = pair_from(detail::parse_json(line, "journal line"), fmt::format("line {}", line_no));
            } catch (const DocumentError&) {
                if (in.peek() == std::char_traits<char>::eof()) {
                    torn = true;  // interrupted append
                    break;
                }
                throw StoreError(fmt::format("journal {} is corrupt at line {}", journal_.string(), line_no));
            }
            if (!ids_.insert(p.id).second)
                throw StoreError(fmt::format("journal {} repeats id {}", journal_.string(), p.id));
            if (auto n = serial_of(p.id)) next_serial_ = std::max(next_serial_, *n + 1);
            if (p.status == PairStatus::Accepted) pool->push_back(make_pool_entry(p.id, parse_sql(p.sql), p.question));
            pairs_.push_back(std::move(p));
        }
        pool_ = std::move(pool);
        if (torn) compact();
        return;
    }
    pool_ = std::move(pool);
}

std::string DatasetStore::next_id_locked() {
    std::string id;
    do {
        id = fmt::format("pair-{:06d}", next_serial_++);
    } while (ids_.count(id));
    return id;
}

void DatasetStore::append_locked(const AnnotatedPair& pair) {
    if (journal_.empty()) return;
    std::ofstream out(journal_, std::ios::binary | std::ios::app);
    out << pair_to_json(pair) << '\n';
    out.flush();
    if (!out) throw StoreError(fmt::format("cannot append to journal {}", journal_.string()));
}

std::string DatasetStore::store_locked(AnnotatedPair pair, PairStatus status) {
    pair.status = status;
    try {
        pair.sql = parse_sql(pair.sql).text;
    } catch (const SqlSyntaxError& e) {
        throw ValidationError("sql", e.what());
    }
    if (const auto problems = check_pair(pair); !problems.empty()) {
        const auto colon = problems.front().find(':');
        throw ValidationError(problems.front().substr(0, colon), problems.front().substr(colon + 2));
    }
    if (pair.id.empty()) pair.id = next_id_locked();
    if (ids_.count(pair.id)) throw StoreError(fmt::format("id conflict: {} is already stored", pair.id));
    if (pair.created_at.empty()) pair.created_at = clock_();
    append_locked(pair);
    ids_.insert(pair.id);
    if (auto n = serial_of(pair.id)) next_serial_ = std::max(next_serial_, *n + 1);
    if (status == PairStatus::Accepted) {
        // Copy on write: snapshots already handed out keep their view.
        auto next = std::make_shared<std::vector<PoolEntry>>(*pool_);
        next->push_back(make_pool_entry(pair.id, parse_sql(pair.sql), pair.question));
        pool_ = std::move(next);
    }
    const auto id = pair.id;
    pairs_.push_back(std::move(pair));
    return id;
}

std::string DatasetStore::accept(AnnotatedPair pair) {
    std::lock_guard lock(mutex_);
    return store_locked(std::move(pair), PairStatus::Accepted);
}

std::string DatasetStore::reject(AnnotatedPair pair) {
    std::lock_guard lock(mutex_);
    return store_locked(std::move(pair), PairStatus::Rejected);
}

std::vector<AnnotatedPair> DatasetStore::pairs(const std::set<PairStatus>& statuses) const {
    std::vector<AnnotatedPair> out;
    {
        std::lock_guard lock(mutex_);
        for (const auto& p : pairs_)
            if (statuses.empty() || statuses.count(p.status)) out.push_back(p);
    }
    std::stable_sort(out.begin(), out.end(), pair_before);
    return out;
}

std::optional<AnnotatedPair> DatasetStore::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    for (const auto& p : pairs_)
        if (p.id == id) return p;
    return std::nullopt;
}

std::size_t DatasetStore::size() const {
    std::lock_guard lock(mutex_);
    return pairs_.size();
}

std::string DatasetStore::export_dataset(const std::set<PairStatus>& statuses) const {
    detail::json rows = detail::json::array();
    for (const auto& p : pairs(statuses)) rows.push_back(pair_json(p));
    return detail::json{{"pairs", rows}}.dump(2) + "\n";
}

ImportResult DatasetStore::import_dataset(std::string_view document) {
    const auto root = detail::parse_json(document, "dataset");
    detail::require_object(root, "");
    const auto& rows = detail::require_field(root, "", "pairs");
    if (!rows.is_array()) throw DocumentError("pairs", "expected an array");
    ImportResult result;
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto path = detail::index_path("pairs", i);
        std::string id;
        if (rows[i].is_object() && rows[i].contains("id") && rows[i].at("id").is_string())
            id = rows[i].at("id").get<std::string>();
        try {
            auto p = pair_from(rows[i], path);
            if (!p.id.empty() && ids_.count(p.id)) {
                ++result.duplicates;
                result.errors.push_back({i, id, "duplicate id"});
                continue;
            }
            const auto status = p.status;
            store_locked(std::move(p), status);
            ++result.loaded;
        } catch (const Error& e) {
            result.errors.push_back({i, id, e.what()});
        }
    }
    return result;
}

PoolSnapshot DatasetStore::pool_snapshot() const {
    std::lock_guard lock(mutex_);
    return pool_;
}

void DatasetStore::compact() {
    std::lock_guard lock(mutex_);
    if (journal_.empty()) return;
    auto tmp = journal_;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        for (const auto& p : pairs_) out << pair_to_json(p) << '\n';
        out.flush();
        if (!out) throw StoreError(fmt::format("cannot write {}", tmp.string()));
    }
    std::filesystem::rename(tmp, journal_);
}

}  // namespace sqlpair
