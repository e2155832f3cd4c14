#include <doctest.h>

#include <algorithm>


#include "fixtures.hpp"
#include "sqlpair/error.hpp"
#include "sqlpair/executor.hpp"
#include "sqlpair/pipeline.hpp"

using namespace sqlpair;

namespace {

std::string mock_script() { return fixtures::read_file(fixtures::data_path("mock/pipeline.json")); }

std::shared_ptr<ScriptedMock> mock_scoring(int score) {
    auto text = mock_script();
    const auto at = text.find("\\\"score\\\":95");
    REQUIRE(at != std::string::npos);
    text.replace(at, 13, "\\\"score\\\":" + std::to_string(score));
    return ScriptedMock::from_json(text);
}

std::shared_ptr<const Workspace> company() {
    static const auto ws = make_workspace(fixtures::populated(fixtures::load("company"), 40, 11), default_grammar());
    return ws;
}

const std::vector<std::string> kStages{"sample_query", "explain",          "retrieve_similar", "generate_question",
                                       "align",        "repair",           "score_equivalence"};

}  // namespace

TEST_CASE("one pipeline run fills every field of a pending pair") {
    auto mock = ScriptedMock::from_json(mock_script());
    LlmBridge bridge(mock);
    const auto run = run_pipeline_once(*company(), {}, bridge, {}, 5);
    const auto& p = run.pair;
    CHECK(p.status == PairStatus::Pending);
    CHECK(p.provenance == Provenance::Automated);
    CHECK(p.schema_version == company()->version());
    REQUIRE(p.steps);
    CHECK(p.steps->steps.size() == expected_step_count(parse_sql(p.sql).ast));
    REQUIRE(p.alignment);
    CHECK(p.alignment->unmapped_steps.empty());
    CHECK(p.confidence == 95);
    CHECK(p.pipeline == kStages);
    CHECK(p.question.find(p.sql) != std::string::npos);
    CHECK(check_pair(p).empty());
    CHECK(run.score.rounds == std::vector<int>{95, 95, 95});
    CHECK(run.repair.iterations == 0);
    CHECK_NOTHROW(execute_query(company()->database(), parse_sql(p.sql)));
}

TEST_CASE("same seed and script give the same pair") {
    LlmBridge a(ScriptedMock::from_json(mock_script()));
    LlmBridge b(ScriptedMock::from_json(mock_script()));
    for (std::uint64_t seed : {1u, 2u, 3u}) CHECK(run_pipeline_once(*company(), {}, a, {}, seed).pair ==
                                                  run_pipeline_once(*company(), {}, b, {}, seed).pair);
}

TEST_CASE("retrieval feeds similar pool entries to the question prompt") {
    auto mock = ScriptedMock::from_json(mock_script());
    LlmBridge bridge(mock);
    const auto q = sample_candidate(*company(), {}, 4);
    const std::vector<PoolEntry> pool{make_pool_entry("same", q, "The very same question?")};
    const auto run = annotate_query(*company(), q, pool, bridge, {});
    REQUIRE(run.examples.size() == 1);
    CHECK(run.examples[0].similarity == 1.0);
    bool seen = false;
    for (const auto& prompt : mock->prompts()) seen = seen || prompt.find("The very same question?") != std::string::npos;
    CHECK(seen);
    CHECK(run.pair.pipeline.front() == "explain");
}

TEST_CASE("a failing stage is named") {
    // No question generation entry.
    auto mock = std::make_shared<ScriptedMock>();
    LlmBridge bridge(mock);
    try {
        run_pipeline_once(*company(), {}, bridge, {}, 5);
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "generate_question");
    }

    auto no_score = std::make_shared<ScriptedMock>();
    for (const auto& text : {"### task: question_generation", "### task: alignment"})
        no_score->add({text, "", {"```json\n{\"mapping\":[]}\n```"}});
    LlmBridge b2(no_score);
    try {
        run_pipeline_once(*company(), {}, b2, {}, 5);
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        // Nothing maps, so repair injects first and the mock has no inject entry.
        CHECK(e.stage() == "repair");
    }
}

TEST_CASE("paraphrase stage is recorded and a failed paraphrase keeps the rule steps") {
    LlmBridge bridge(ScriptedMock::from_json(mock_script()));
    PipelineConfig config;
    config.paraphrase = true;
    const auto run = run_pipeline_once(*company(), {}, bridge, config, 5);
    CHECK(run.warning);
    CHECK(run.pair.pipeline.at(2) == "paraphrase");
    CHECK(run.pair.steps->source == ExplanationSource::RuleBased);
}

TEST_CASE("auto annotate meets the quota with a passing mock") {
    DatasetStore store;
    LlmBridge bridge(ScriptedMock::from_json(mock_script()));
    std::vector<std::size_t> seen;
    AutoAnnotateJob job;
    job.requested = 12;
    job.seed = 21;
    const auto r = auto_annotate(*company(), store, bridge, {}, job, [&](const JobProgress& p) {
        seen.push_back(p.produced);
        CHECK(p.produced <= p.requested);
    });
    CHECK(r.state == JobState::Done);
    CHECK(r.produced == 12);
    CHECK(r.attempts == 12);
    CHECK(r.failures.empty());
    CHECK(std::is_sorted(seen.begin(), seen.end()));
    CHECK(seen.back() == 12);
    const auto pairs = store.pairs({PairStatus::Accepted});
    REQUIRE(pairs.size() == 12);
    for (const auto& p : pairs) {
        CHECK(p.confidence >= 80);
        CHECK(p.pipeline == kStages);
        CHECK_NOTHROW(execute_query(company()->database(), parse_sql(p.sql)));
    }
    CHECK(store.pool_snapshot()->size() == 12);
    CHECK(progress_to_json(r).find(R"("state":"done")") != std::string::npos);
}

TEST_CASE("auto annotate fails after the budget when nothing passes") {
    DatasetStore store;
    LlmBridge bridge(mock_scoring(10));
    AutoAnnotateJob job;
    job.requested = 4;
    const auto r = auto_annotate(*company(), store, bridge, {}, job);
    CHECK(r.state == JobState::Failed);
    CHECK(r.produced == 0);
    CHECK(r.attempts == 12);
    REQUIRE(r.failures.size() == 12);
    std::size_t below = 0;
    for (const auto& f : r.failures) {
        // An occasional oversized sample exceeds the prompt budget before scoring.
        CHECK((f.stage == "score_equivalence" || f.stage == "generate_question"));
        below += f.stage == "score_equivalence";
    }
    CHECK(below >= 10);
    CHECK(store.size() == 0);

    // Threshold 0: every attempt that reaches scoring is accepted.
    job.threshold = 0;
    const auto z = auto_annotate(*company(), store, bridge, {}, job);
    CHECK(z.state == JobState::Done);
    CHECK(z.produced == 4);
    CHECK(z.attempts == z.produced + z.failures.size());
    for (const auto& f : z.failures) CHECK(f.stage != "score_equivalence");

    // Seed 21 draws no oversized query in its first attempts: exactly `requested` attempts.
    job.seed = 21;
    const auto exact = auto_annotate(*company(), store, bridge, {}, job);
    CHECK(exact.produced == 4);
    CHECK(exact.attempts == 4);
}

TEST_CASE("auto annotate input checks and stop") {
    DatasetStore store;
    LlmBridge bridge(ScriptedMock::from_json(mock_script()));
    CHECK_THROWS_AS(auto_annotate(*company(), store, bridge, {}, {0, 80, 0}), ValidationError);
    CHECK_THROWS_AS(auto_annotate(*company(), store, bridge, {}, {1, 101, 0}), ValidationError);

    std::stop_source stop;
    const auto r = auto_annotate(*company(), store, bridge, {}, {10, 80, 0}, [&](const JobProgress& p) {
        if (p.produced == 2) stop.request_stop();
    }, stop.get_token());
    CHECK(r.state == JobState::Failed);
    CHECK(r.produced == 2);
}
