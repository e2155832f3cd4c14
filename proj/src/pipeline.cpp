#include "sqlpair/pipeline.hpp"

#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>
#include <variant>

#include <fmt/format.h>

#include "json_util.hpp"
#include "sqlpair/error.hpp"
#include "sqlpair/rng.hpp"

namespace sqlpair {

namespace {

template <class F>
auto in_stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

// Bounded queue of pre-sampled queries, filled by one producer thread in attempt order.
class Presampler {
public:
    using Item = std::variant<SqlQuery, std::string>;  // query or sampling error

    Presampler(const Workspace& ws, const SamplerConfig& config, std::uint64_t seed, std::size_t total)
        : thread_([this, &ws, config, seed, total](std::stop_token st) { produce(st, ws, config, seed, total); }) {}

    ~Presampler() {
        {
            std::lock_guard lock(mutex_);
            thread_.request_stop();
        }
        cv_.notify_all();
    }

    Item next() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return !queue_.empty(); });
        auto item = std::move(queue_.front());
        queue_.pop_front();
        cv_.notify_all();
        return item;
    }

private:
    void produce(std::stop_token st, const Workspace& ws, const SamplerConfig& config, std::uint64_t seed,
                 std::size_t total) {
        for (std::size_t i = 0; i < total; ++i) {
            Item item;
            try {
                item = sample_candidate(ws, config, stream_seed(seed, i));
            } catch (const std::exception& e) {
                item = std::string(e.what());
            }
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [&] { return queue_.size() < kPresampleDepth || st.stop_requested(); });
            if (st.stop_requested()) return;
            queue_.push_back(std::move(item));
            cv_.notify_all();
        }
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Item> queue_;
    std::jthread thread_;  // last: joins before the queue goes away
};

}  // namespace

Workspace::Workspace(SandboxDatabase db, Grammar grammar)
    : db_(std::move(db)), grammar_(std::move(grammar)), grounder_(db_), version_(schema_version(db_.schema)) {}

std::shared_ptr<const Workspace> make_workspace(SandboxDatabase db, Grammar grammar) {
    return std::make_shared<const Workspace>(std::move(db), std::move(grammar));
}

SqlQuery sample_candidate(const Workspace& ws, const SamplerConfig& config, std::uint64_t seed) {
    return in_stage(stage::kSample, [&] {
        Rng rng(seed);
        return sample_query(ws.grammar(), ws.grounder(), config, rng).query;
    });
}

std::vector<FewShotExample> few_shot_examples(const SqlQuery& query, std::span<const PoolEntry> pool,
                                              const RetrieverConfig& config) {
    std::vector<FewShotExample> out;
    for (const auto& r : retrieve_similar(query, pool, config))
        out.push_back({pool[r.pool_index].query.text, pool[r.pool_index].question, r.similarity});
    return out;
}

PipelineRun annotate_query(const Workspace& ws, const SqlQuery& query, std::span<const PoolEntry> pool,
                           LlmBridge& bridge, const PipelineConfig& config) {
    PipelineRun run;
    auto& p = run.pair;
    p.sql = query.text;
    p.schema_version = ws.version();
    p.provenance = Provenance::Automated;
    const auto& schema = ws.schema();

    auto steps = in_stage(stage::kExplain, [&] { return explain_with_fallback(query, schema, bridge); });
    p.pipeline.push_back(stage::kExplain);
    if (config.paraphrase) {
        auto r = in_stage(stage::kParaphrase, [&] { return paraphrase_steps(steps, query, schema, bridge); });
        steps = std::move(r.explanation);
        run.warning = std::move(r.warning);
        p.pipeline.push_back(stage::kParaphrase);
    }
    run.examples = in_stage(stage::kRetrieve, [&] { return few_shot_examples(query, pool, config.retriever); });
    p.pipeline.push_back(stage::kRetrieve);
    const auto question = in_stage(stage::kGenerate, [&] {
        return generate_question(query, schema, step_views(steps), run.examples, bridge);
    });
    p.pipeline.push_back(stage::kGenerate);
    const auto map = in_stage(stage::kAlign, [&] { return align(question, steps, query, schema, bridge); });
    p.pipeline.push_back(stage::kAlign);
    run.repair = in_stage(stage::kRepair, [&] {
        return auto_repair(question, map, steps, query, schema, bridge, config.repair_iterations);
    });
    p.pipeline.push_back(stage::kRepair);
    run.score = in_stage(stage::kScore, [&] {
        return score_equivalence(query, run.repair.question, schema, bridge, config.scoring_rounds);
    });
    p.pipeline.push_back(stage::kScore);

    p.question = run.repair.question;
    p.alignment = run.repair.alignment;
    p.steps = std::move(steps);
    p.confidence = run.score.score;
    return run;
}

PipelineRun run_pipeline_once(const Workspace& ws, std::span<const PoolEntry> pool, LlmBridge& bridge,
                              const PipelineConfig& config, std::uint64_t seed) {
    const auto query = sample_candidate(ws, config.sampler, seed);
    auto run = annotate_query(ws, query, pool, bridge, config);
    run.pair.pipeline.insert(run.pair.pipeline.begin(), stage::kSample);
    return run;
}

std::string_view to_string(JobState state) {
    switch (state) {
        case JobState::Running:
            return "running";
        case JobState::Done:
            return "done";
        case JobState::Failed:
            return "failed";
    }
    return "";
}

std::string progress_to_json(const JobProgress& progress) {
    detail::json failures = detail::json::array();
    for (const auto& f : progress.failures)
        failures.push_back({{"attempt", f.attempt}, {"stage", f.stage}, {"reason", f.reason}});
    return detail::json{{"state", to_string(progress.state)},
                        {"requested", progress.requested},
                        {"budget", progress.budget},
                        {"attempts", progress.attempts},
                        {"produced", progress.produced},
                        {"failures", failures},
                        {"accepted_ids", progress.accepted_ids}}
        .dump();
}

JobProgress auto_annotate(const Workspace& ws, DatasetStore& store, LlmBridge& bridge, const PipelineConfig& config,
                          const AutoAnnotateJob& job, const ProgressFn& progress, std::stop_token stop) {
    if (job.requested == 0) throw ValidationError("count", "must be at least 1");
    if (job.threshold < 0 || job.threshold > 100) throw ValidationError("threshold", "must be within 0-100");

    JobProgress state;
    state.requested = job.requested;
    state.budget = kBudgetFactor * job.requested;
    const auto report = [&] {
        if (progress) progress(state);
    };
    report();

    Presampler presampler(ws, config.sampler, job.seed, state.budget);
    while (state.produced < job.requested && state.attempts < state.budget && !stop.stop_requested()) {
        const auto attempt = state.attempts++;
        auto item = presampler.next();
        if (auto* err = std::get_if<std::string>(&item)) {
            state.failures.push_back({attempt, stage::kSample, *err});
            report();
            continue;
        }
        const auto& query = std::get<SqlQuery>(item);
        try {
            const auto pool = store.pool_snapshot();
            auto run = annotate_query(ws, query, *pool, bridge, config);
            run.pair.pipeline.insert(run.pair.pipeline.begin(), stage::kSample);
            if (*run.pair.confidence < job.threshold) {
                state.failures.push_back(
                    {attempt, stage::kScore,
                     fmt::format("confidence {} is below the threshold {}", *run.pair.confidence, job.threshold)});
            } else if (!run.pair.alignment->unmapped_steps.empty()) {
                state.failures.push_back({attempt, stage::kRepair, "steps still missing from the question after repair"});
            } else {
                state.accepted_ids.push_back(in_stage(stage::kAccept, [&] { return store.accept(run.pair); }));
                ++state.produced;
            }
        } catch (const StageError& e) {
            state.failures.push_back({attempt, e.stage(), e.reason()});
        }
        report();
    }
    state.state = state.produced >= job.requested ? JobState::Done : JobState::Failed;
    report();
    return state;
}

}  // namespace sqlpair
