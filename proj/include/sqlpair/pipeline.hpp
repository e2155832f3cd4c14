#pragma once

// The annotation pipeline and the automated mode built on it.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

#include "sqlpair/alignment.hpp"
#include "sqlpair/dataset.hpp"
#include "sqlpair/explainer.hpp"
#include "sqlpair/grammar.hpp"
#include "sqlpair/llm.hpp"
#include "sqlpair/sampler.hpp"
#include "sqlpair/ted.hpp"

namespace sqlpair {

namespace stage {
inline constexpr const char* kSample = "sample_query";
inline constexpr const char* kExplain = "explain";
inline constexpr const char* kParaphrase = "paraphrase";
inline constexpr const char* kRetrieve = "retrieve_similar";
inline constexpr const char* kGenerate = "generate_question";
inline constexpr const char* kAlign = "align";
inline constexpr const char* kRepair = "repair";
inline constexpr const char* kScore = "score_equivalence";
inline constexpr const char* kAccept = "accept";
}  // namespace stage

// Sandbox database (which carries its schema), grammar, and the grounder over them.
// Immutable; share it through make_workspace.
class Workspace {
public:
    Workspace(SandboxDatabase db, Grammar grammar);
    Workspace(const Workspace&) = delete;
    Workspace& operator=(const Workspace&) = delete;

    const Schema& schema() const { return db_.schema; }
    const SandboxDatabase& database() const { return db_; }
    const Grammar& grammar() const { return grammar_; }
    const Grounder& grounder() const { return grounder_; }
    const std::string& version() const { return version_; }

private:
    SandboxDatabase db_;
    Grammar grammar_;
    Grounder grounder_;
    std::string version_;
};

std::shared_ptr<const Workspace> make_workspace(SandboxDatabase db, Grammar grammar);

struct PipelineConfig {
    SamplerConfig sampler;
    RetrieverConfig retriever;
    bool paraphrase = false;
    std::size_t scoring_rounds = kDefaultScoringRounds;
    std::size_t repair_iterations = kMaxRepairIterations;
};

struct PipelineRun {
    AnnotatedPair pair;  // pending, provenance automated, created_at left empty
    std::vector<FewShotExample> examples;
    RepairOutcome repair;
    EquivalenceResult score;
    std::optional<std::string> warning;  // paraphrase kept the original steps
};

// Sampling with this seed; throws StageError("sample_query").
SqlQuery sample_candidate(const Workspace& ws, const SamplerConfig& config, std::uint64_t seed);

std::vector<FewShotExample> few_shot_examples(const SqlQuery& query, std::span<const PoolEntry> pool,
                                              const RetrieverConfig& config);

// explain (-> paraphrase) -> retrieve_similar -> generate_question -> align -> repair ->
// score_equivalence for a given query. Throws StageError naming the failed stage.
PipelineRun annotate_query(const Workspace& ws, const SqlQuery& query, std::span<const PoolEntry> pool,
                           LlmBridge& bridge, const PipelineConfig& config);

// sample_candidate followed by annotate_query.
PipelineRun run_pipeline_once(const Workspace& ws, std::span<const PoolEntry> pool, LlmBridge& bridge,
                              const PipelineConfig& config, std::uint64_t seed);

enum class JobState { Running, Done, Failed };
std::string_view to_string(JobState state);

inline constexpr int kDefaultAcceptThreshold = 80;
inline constexpr std::size_t kPresampleDepth = 2;
inline constexpr std::size_t kBudgetFactor = 3;

struct AutoAnnotateJob {
    std::size_t requested = 1;
    int threshold = kDefaultAcceptThreshold;
    std::uint64_t seed = 0;  // attempt i samples with stream_seed(seed, i)
};

struct StageFailure {
    std::size_t attempt = 0;
    std::string stage;
    std::string reason;
};

struct JobProgress {
    JobState state = JobState::Running;
    std::size_t requested = 0;
    std::size_t budget = 0;
    std::size_t attempts = 0;
    std::size_t produced = 0;
    std::vector<StageFailure> failures;
    std::vector<std::string> accepted_ids;
};

std::string progress_to_json(const JobProgress& progress);

using ProgressFn = std::function<void(const JobProgress&)>;

// Runs up to kBudgetFactor * requested attempts and accepts every pair whose confidence is
// at least the threshold and whose alignment has no missing step. Queries are sampled
// ahead of the provider calls, at most kPresampleDepth at a time. Done when the quota is
// met; failed (accepted pairs kept) when the budget runs out or a stop is requested.
// Throws ValidationError for requested == 0 or a threshold outside 0-100.
JobProgress auto_annotate(const Workspace& ws, DatasetStore& store, LlmBridge& bridge, const PipelineConfig& config,
                          const AutoAnnotateJob& job, const ProgressFn& progress = {}, std::stop_token stop = {});

}  // namespace sqlpair
