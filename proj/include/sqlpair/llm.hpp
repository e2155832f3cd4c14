#pragma once

// Provider-agnostic LLM access: prompt templates, a scripted mock, an HTTP provider for
// OpenAI-compatible endpoints, and the bridge that limits concurrent calls.

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "sqlpair/ast.hpp"
#include "sqlpair/schema.hpp"

namespace sqlpair {

// Implementations must accept concurrent invoke() calls.
class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string name() const = 0;
    virtual std::string invoke(const std::string& prompt, double temperature) = 0;
};

// Entries are tried in order; the first whose matcher fits the prompt answers. An entry
// with several responses returns them in sequence and then repeats the last one.
// `pattern` entries are ECMAScript regexes; their responses may use $1..$9 for capture
// groups and $$ for a literal dollar sign.
class ScriptedMock : public Provider {
public:
    struct Entry {
        std::string match;    // literal substring; empty means "match anything"
        std::string pattern;  // regex, used when non-empty
        std::vector<std::string> responses;
    };

    ScriptedMock() = default;
    explicit ScriptedMock(std::vector<Entry> entries);

    // {"entries":[{"match":"...","responses":["..."]}, {"pattern":"...","response":"..."}]}
    static std::shared_ptr<ScriptedMock> from_json(std::string_view document);

    void add(Entry entry);
    std::string name() const override { return "mock"; }
    std::string invoke(const std::string& prompt, double temperature) override;

    std::vector<std::string> prompts() const;  // every prompt received, in order
    std::size_t calls() const;

private:
    mutable std::mutex mutex_;
    std::vector<Entry> entries_;
    std::vector<std::size_t> served_;
    std::vector<std::string> log_;
};

struct ProviderConfig {
    std::string provider = "mock";
    std::string model;
    std::string api_key_env;
    std::string base_url;
    std::size_t max_in_flight = 4;
    double timeout_seconds = 60;
    std::string script;  // mock script path (mock provider only)
};

ProviderConfig load_provider_config(std::string_view document);
std::string save_provider_config(const ProviderConfig& config);

// POST {base_url}/chat/completions with a single user message. The key is read from the
// environment variable named in the config on every call and never stored.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(ProviderConfig config);
    std::string name() const override { return config_.provider; }
    std::string invoke(const std::string& prompt, double temperature) override;

private:
    ProviderConfig config_;
};

std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

// Limits in-flight calls and wraps provider failures in ProviderError.
class LlmBridge {
public:
    static constexpr std::size_t kDefaultBudget = 16000;

    explicit LlmBridge(std::shared_ptr<Provider> provider, std::size_t max_in_flight = 4,
                       std::size_t prompt_budget = kDefaultBudget);

    std::string invoke(const std::string& prompt, double temperature);
    std::size_t prompt_budget() const { return budget_; }
    Provider& provider() { return *provider_; }

private:
    std::shared_ptr<Provider> provider_;
    std::counting_semaphore<1024> slots_;
    std::size_t budget_;
};

inline constexpr double kGenerationTemperature = 0.7;
inline constexpr double kJudgeTemperature = 0.0;

enum class TemplateName {
    QuestionGeneration,
    ExplanationFallback,
    SubQuestion,
    AlignmentAnalysis,
    AlignmentMapping,
    Inject,
    Equivalence,
    Paraphrase,
};

std::string_view to_string(TemplateName name);
std::string_view template_body(TemplateName name);

// Replaces {slot} markers. Throws ValidationError naming the first slot with no value.
std::string render_prompt(TemplateName name, const std::map<std::string, std::string>& slots);

// Compact schema description used in every prompt.
std::string describe_schema(const Schema& schema);

// First fenced block (```json ... ``` or ``` ... ```), else the outermost {...}; nullopt if none.
std::optional<std::string> extract_structured_block(std::string_view response);

struct FewShotExample {
    std::string sql;
    std::string question;
    double similarity = 0;
};

struct ExplanationStepView {
    std::size_t index = 0;
    std::string text;
};

// Examples are kept in the given (ranked) order; over-budget prompts drop examples from
// the end. Returns the trimmed question; throws ProviderError on an empty answer.
std::string generate_question(const SqlQuery& sql, const Schema& schema, const std::vector<ExplanationStepView>& steps,
                              const std::vector<FewShotExample>& examples, LlmBridge& bridge);

struct EquivalenceResult {
    std::string report;  // last round's analysis
    int score = 0;
    std::vector<int> rounds;
};

inline constexpr std::size_t kDefaultScoringRounds = 3;

// Integer mean of per-round scores, halves rounded up.
int mean_rounded(const std::vector<int>& scores);

// Parses {"analysis":..., "score":N} from a fenced block, else a "score: N" line.
std::optional<std::pair<std::string, int>> parse_score(std::string_view response);

EquivalenceResult score_equivalence(const SqlQuery& sql, const std::string& question, const Schema& schema,
                                    LlmBridge& bridge, std::size_t rounds = kDefaultScoringRounds);

}  // namespace sqlpair
