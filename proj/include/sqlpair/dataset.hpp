#pragma once

// Annotated pairs, the journal that keeps them, and the retrieval pool built from bundled
// examples plus accepted pairs.

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sqlpair/alignment.hpp"
#include "sqlpair/explainer.hpp"
#include "sqlpair/ted.hpp"

namespace sqlpair {

enum class PairStatus { Pending, Accepted, Rejected };
enum class Provenance { Interactive, Automated };

std::string_view to_string(PairStatus status);
std::optional<PairStatus> parse_pair_status(std::string_view text);
std::string_view to_string(Provenance provenance);
std::optional<Provenance> parse_provenance(std::string_view text);

struct AnnotatedPair {
    std::string id;  // assigned on store when empty
    std::string sql;
    std::string question;
    std::string schema_version;
    std::optional<Explanation> steps;
    std::optional<AlignmentMap> alignment;
    std::optional<int> confidence;
    PairStatus status = PairStatus::Pending;
    Provenance provenance = Provenance::Interactive;
    std::string created_at;  // UTC, 2026-01-31T12:00:00Z; assigned on store when empty
    bool override_missing = false;       // accept despite steps missing from the question
    std::vector<std::string> pipeline;  // stage names that produced the pair, in order
    bool operator==(const AnnotatedPair&) const = default;
};

// Problems that keep the pair out of the store: sql that does not parse, confidence outside
// 0-100, steps or alignment that do not fit the sql and question, or (for accepted pairs) an
// alignment with missing steps and no override.
std::vector<std::string> check_pair(const AnnotatedPair& pair);

std::string pair_to_json(const AnnotatedPair& pair);
AnnotatedPair pair_from_json(std::string_view document);

std::string utc_now();

struct ImportResult {
    std::size_t loaded = 0;
    std::size_t duplicates = 0;
    struct RowError {
        std::size_t row = 0;
        std::string id;
        std::string reason;
    };
    std::vector<RowError> errors;  // duplicates included
};

using PoolSnapshot = std::shared_ptr<const std::vector<PoolEntry>>;

// Reads {"pairs":[{"id","sql","question"}]}. Throws DocumentError on malformed input or
// unparseable sql.
std::vector<PoolEntry> load_bundled_pool(std::string_view document);

// One writer at a time, any number of readers; every method locks. The journal is one JSON
// object per line; a torn last line (crash mid-write) is dropped and the file rewritten.
class DatasetStore {
public:
    using Clock = std::function<std::string()>;

    // An empty journal path keeps everything in memory.
    explicit DatasetStore(std::filesystem::path journal = {}, std::vector<PoolEntry> bundled = {},
                          Clock clock = utc_now);

    // Canonicalizes the sql, fills id and created_at if empty, sets the status and appends
    // to the journal. Throws ValidationError naming the first problem, StoreError on an id
    // conflict or a failed write.
    std::string accept(AnnotatedPair pair);
    std::string reject(AnnotatedPair pair);

    // Ordered by created_at, then id. An empty filter means every status.
    std::vector<AnnotatedPair> pairs(const std::set<PairStatus>& statuses = {}) const;
    std::optional<AnnotatedPair> find(const std::string& id) const;
    std::size_t size() const;

    // {"pairs":[...]} in the order of pairs(); byte-identical for identical contents.
    std::string export_dataset(const std::set<PairStatus>& statuses = {}) const;
    // Throws DocumentError when the document is not {"pairs":[...]}; bad rows are reported.
    ImportResult import_dataset(std::string_view document);

    // Bundled entries followed by accepted pairs as of this call.
    PoolSnapshot pool_snapshot() const;

    // Rewrites the journal with one line per stored pair.
    void compact();

private:
    std::string store_locked(AnnotatedPair pair, PairStatus status);
    void append_locked(const AnnotatedPair& pair);
    std::string next_id_locked();

    mutable std::mutex mutex_;
    std::filesystem::path journal_;
    Clock clock_;
    std::vector<AnnotatedPair> pairs_;
    std::set<std::string> ids_;
    std::size_t next_serial_ = 1;
    std::shared_ptr<const std::vector<PoolEntry>> pool_;
};

}  // namespace sqlpair
