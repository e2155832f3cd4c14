#include "sqlpair/llm.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>

#include "json_util.hpp"
#include "sqlpair/error.hpp"

namespace sqlpair {

// ---------------------------------------------------------------------------
// Scripted mock

namespace {

// $1..$9 become capture groups that exist, $$ becomes $; anything else (like $50,000) stays.
std::string substitute_groups(const std::string& text, const std::smatch& m) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '$' && i + 1 < text.size()) {
            const char n = text[i + 1];
            if (n == '$') {
                out += '$';
                ++i;
                continue;
            }
            if (n >= '1' && n <= '9' && static_cast<std::size_t>(n - '0') < m.size()) {
                out += m[static_cast<std::size_t>(n - '0')].str();
                ++i;
                continue;
            }
        }
        out += text[i];
    }
    return out;
}

}  // namespace

ScriptedMock::ScriptedMock(std::vector<Entry> entries) : entries_(std::move(entries)), served_(entries_.size(), 0) {}

std::shared_ptr<ScriptedMock> ScriptedMock::from_json(std::string_view document) {
    const auto root = detail::parse_json(document, "mock script");
    auto mock = std::make_shared<ScriptedMock>();
    const auto entries = root.find("entries");
    if (entries == root.end() || !entries->is_array()) throw DocumentError("entries", "expected an array of entries");
    for (std::size_t i = 0; i < entries->size(); ++i) {
        const auto& e = (*entries)[i];
        const auto path = fmt::format("entries[{}]", i);
        if (!e.is_object()) throw DocumentError(path, "expected an object");
        Entry entry;
        if (e.contains("match")) entry.match = e.at("match").get<std::string>();
        if (e.contains("pattern")) entry.pattern = e.at("pattern").get<std::string>();
        if (e.contains("response")) entry.responses.push_back(e.at("response").get<std::string>());
        if (e.contains("responses"))
            for (const auto& r : e.at("responses")) entry.responses.push_back(r.get<std::string>());
        if (entry.responses.empty()) throw DocumentError(path, "entry has no response");
        mock->add(std::move(entry));
    }
    return mock;
}

void ScriptedMock::add(Entry entry) {
    std::lock_guard lock(mutex_);
    entries_.push_back(std::move(entry));
    served_.push_back(0);
}

std::string ScriptedMock::invoke(const std::string& prompt, double) {
    std::lock_guard lock(mutex_);
    log_.push_back(prompt);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        std::smatch m;
        if (!e.pattern.empty()) {
            if (!std::regex_search(prompt, m, std::regex(e.pattern))) continue;
        } else if (!e.match.empty() && prompt.find(e.match) == std::string::npos) {
            continue;
        }
        const auto k = std::min(served_[i], e.responses.size() - 1);
        ++served_[i];
        const auto& response = e.responses[k];
        return e.pattern.empty() ? response : substitute_groups(response, m);
    }
    const auto first_line = prompt.substr(0, prompt.find('\n'));
    throw ProviderError(fmt::format("mock has no scripted response for prompt starting \"{}\"", first_line));
}

std::vector<std::string> ScriptedMock::prompts() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::size_t ScriptedMock::calls() const {
    std::lock_guard lock(mutex_);
    return log_.size();
}

// ---------------------------------------------------------------------------
// Provider config and HTTP provider

ProviderConfig load_provider_config(std::string_view document) {
    const auto root = detail::parse_json(document, "provider config");
    if (!root.is_object()) throw DocumentError("", "expected an object");
    ProviderConfig c;
    const auto get_string = [&](const char* key, std::string& out) {
        if (!root.contains(key)) return;
        if (!root.at(key).is_string()) throw DocumentError(key, "expected a string");
        out = root.at(key).get<std::string>();
    };
    get_string("provider", c.provider);
    get_string("model", c.model);
    get_string("api_key_env", c.api_key_env);
    get_string("base_url", c.base_url);
    get_string("script", c.script);
    if (root.contains("max_in_flight")) {
        const auto& v = root.at("max_in_flight");
        if (!v.is_number_unsigned() || v.get<std::size_t>() == 0)
            throw ValidationError("max_in_flight", "expected a positive integer");
        c.max_in_flight = v.get<std::size_t>();
    }
    if (root.contains("timeout_seconds")) {
        const auto& v = root.at("timeout_seconds");
        if (!v.is_number() || v.get<double>() <= 0) throw ValidationError("timeout_seconds", "expected a positive number");
        c.timeout_seconds = v.get<double>();
    }
    if (c.provider != "mock" && c.base_url.empty()) throw ValidationError("base_url", "required for HTTP providers");
    return c;
}

std::string save_provider_config(const ProviderConfig& c) {
    detail::ordered_json j;
    j["provider"] = c.provider;
    j["model"] = c.model;
    j["api_key_env"] = c.api_key_env;
    j["base_url"] = c.base_url;
    j["max_in_flight"] = c.max_in_flight;
    j["timeout_seconds"] = c.timeout_seconds;
    if (!c.script.empty()) j["script"] = c.script;
    return j.dump(2) + "\n";
}

HttpProvider::HttpProvider(ProviderConfig config) : config_(std::move(config)) {}

std::string HttpProvider::invoke(const std::string& prompt, double temperature) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.base_url, m, url_re))
        throw ProviderError(fmt::format("invalid base_url '{}'", config_.base_url));
    const std::string host = m[1].str();
    std::string path = m[2].matched ? m[2].str() : "";
    while (!path.empty() && path.back() == '/') path.pop_back();
    path += "/chat/completions";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (host.rfind("https://", 0) == 0) throw ProviderError("this build has no TLS support for https providers");
#endif
    httplib::Client client(host);
    const auto secs = static_cast<time_t>(config_.timeout_seconds);
    const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (!key || !*key) throw ProviderError(fmt::format("environment variable {} is not set", config_.api_key_env));
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    nlohmann::json body;
    body["model"] = config_.model;
    body["temperature"] = temperature;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    const auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) throw ProviderError(fmt::format("request to {} failed: {}", host, httplib::to_string(res.error())));
    if (res->status != 200) throw ProviderError(fmt::format("provider returned HTTP {}", res->status));
    try {
        const auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(fmt::format("unexpected provider response: {}", e.what()));
    }
}

std::shared_ptr<Provider> make_provider(const ProviderConfig& config) {
    if (config.provider == "mock") {
        if (config.script.empty()) return std::make_shared<ScriptedMock>();
        std::ifstream in(config.script, std::ios::binary);
        if (!in) throw DocumentError(config.script, "cannot open mock script");
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return ScriptedMock::from_json(text);
    }
    return std::make_shared<HttpProvider>(config);
}

// ---------------------------------------------------------------------------
// Bridge

LlmBridge::LlmBridge(std::shared_ptr<Provider> provider, std::size_t max_in_flight, std::size_t prompt_budget)
    : provider_(std::move(provider)),
      slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(max_in_flight, 1, 1024))),
      budget_(prompt_budget) {
    if (!provider_) throw std::invalid_argument("LlmBridge needs a provider");
}

std::string LlmBridge::invoke(const std::string& prompt, double temperature) {
    if (prompt.size() > budget_)
        throw ProviderError(fmt::format("prompt of {} characters exceeds the {} character budget", prompt.size(), budget_));
    slots_.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{slots_};
    try {
        return provider_->invoke(prompt, temperature);
    } catch (const ProviderError&) {
        throw;
    } catch (const std::exception& e) {
        throw ProviderError(e.what());
    }
}

// ---------------------------------------------------------------------------
// Templates

namespace {

constexpr std::string_view kQuestionGeneration = R"(### task: question_generation
You write natural-language questions for SQL queries.

Database schema:
{{schema}}
{{examples}}
Step-by-step explanation of the query:
{{steps}}

SQL:
{{sql}}

Write the one question a user would ask to get exactly this result. Mention every filter,
join, grouping and ordering the query applies and nothing it does not.
Answer with the question only, on a single line.
)";

constexpr std::string_view kExplanationFallback = R"(### task: explanation_fallback
Explain a SQL query step by step.

Database schema:
{{schema}}

Rules:
- One step per clause: FROM first, then each JOIN, then each WHERE condition, then GROUP BY,
  then ORDER BY, and SELECT last.
- "kind" is one of FROM, JOIN, WHERE_COND, GROUP_BY, ORDER_BY, SELECT.
- "sql" quotes the exact text of the query that the step explains.

Examples:
{{examples}}

SQL:
{{sql}}

Reply with one fenced json block:
```json
{"steps":[{"kind":"FROM","sql":"FROM ...","text":"...","sub_question":"..."}]}
```
)";

constexpr std::string_view kSubQuestion = R"(### task: sub_question
Database schema:
{{schema}}

SQL:
{{sql}}

Explanation step:
{{step}}

Write the short question this step answers. Answer with the question only.
)";

constexpr std::string_view kAlignmentAnalysis = R"(### task: alignment_analysis
Compare a natural-language question with the step-by-step explanation of a SQL query.

Database schema:
{{schema}}

SQL:
{{sql}}

Steps:
{{steps}}

Question:
{{question}}

For every step, say which words of the question express it, or that none do. Then name
every part of the question that no step supports.
)";

constexpr std::string_view kAlignmentMapping = R"(### task: alignment_mapping
Turn the analysis below into a mapping from explanation steps to words of the question.

Steps:
{{steps}}

Question:
{{question}}

Analysis:
{{analysis}}

Reply with one fenced json block. "quote" must copy the question text exactly; "range" is
[start, end) in characters of the question. Leave out steps the question does not express.
```json
{"mapping":[{"step":1,"quote":"...","range":[0,0]}]}
```
)";

constexpr std::string_view kInject = R"(### task: inject
Revise a question so that it also expresses one more step of the SQL query, keeping the
rest of its meaning and wording.

Database schema:
{{schema}}

SQL:
{{sql}}

Question:
{{question}}

Step to include:
{{step}}

Answer with the revised question only, on a single line.
)";

constexpr std::string_view kEquivalence = R"(### task: equivalence
Judge whether a natural-language question and a SQL query ask for the same thing.

Database schema:
{{schema}}

SQL:
{{sql}}

Question:
{{question}}

Write a short analysis of any differences, then rate equivalence from 0 to 100.
Reply with one fenced json block:
```json
{"analysis":"...","score":0}
```
)";

constexpr std::string_view kParaphrase = R"(### task: paraphrase
Rewrite each explanation step and its sub-question so they read naturally for this
database. Keep the meaning, the number of steps and their order.

Database schema:
{{schema}}

SQL:
{{sql}}

Steps:
{{steps}}

Reply with one fenced json block:
```json
{"steps":[{"index":1,"text":"...","sub_question":"..."}]}
```
)";

}  // namespace

std::string_view to_string(TemplateName name) {
    switch (name) {
        case TemplateName::QuestionGeneration:
            return "question_generation";
        case TemplateName::ExplanationFallback:
            return "explanation_fallback";
        case TemplateName::SubQuestion:
            return "sub_question";
        case TemplateName::AlignmentAnalysis:
            return "alignment_analysis";
        case TemplateName::AlignmentMapping:
            return "alignment_mapping";
        case TemplateName::Inject:
            return "inject";
        case TemplateName::Equivalence:
            return "equivalence";
        case TemplateName::Paraphrase:
            return "paraphrase";
    }
    return "";
}

std::string_view template_body(TemplateName name) {
    switch (name) {
        case TemplateName::QuestionGeneration:
            return kQuestionGeneration;
        case TemplateName::ExplanationFallback:
            return kExplanationFallback;
        case TemplateName::SubQuestion:
            return kSubQuestion;
        case TemplateName::AlignmentAnalysis:
            return kAlignmentAnalysis;
        case TemplateName::AlignmentMapping:
            return kAlignmentMapping;
        case TemplateName::Inject:
            return kInject;
        case TemplateName::Equivalence:
            return kEquivalence;
        case TemplateName::Paraphrase:
            return kParaphrase;
    }
    return "";
}

std::string render_prompt(TemplateName name, const std::map<std::string, std::string>& slots) {
    const auto body = template_body(name);
    std::string out;
    out.reserve(body.size() + 256);
    std::size_t pos = 0;
    while (true) {
        const auto open = body.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(body.substr(pos));
            break;
        }
        const auto close = body.find("}}", open);
        out.append(body.substr(pos, open - pos));
        const std::string slot(body.substr(open + 2, close - open - 2));
        const auto it = slots.find(slot);
        if (it == slots.end())
            throw ValidationError(slot, fmt::format("template {} needs slot '{}'", to_string(name), slot));
        out += it->second;
        pos = close + 2;
    }
    return out;
}

std::string describe_schema(const Schema& schema) {
    std::string out;
    for (const auto& t : schema.tables) {
        out += fmt::format("Table {}", t.name);
        if (t.description) out += fmt::format(" -- {}", *t.description);
        out += '\n';
        for (const auto& c : t.columns) {
            out += fmt::format("  {} {}", c.name, to_string(c.data_type));
            if (c.is_primary_key) out += " primary key";
            if (c.reference) out += fmt::format(" references {}.{}", c.reference->table, c.reference->column);
            if (!c.enum_values.empty()) {
                out += " (";
                for (std::size_t i = 0; i < c.enum_values.size(); ++i) out += (i ? ", " : "") + c.enum_values[i];
                out += ')';
            }
            if (c.description) out += fmt::format(" -- {}", *c.description);
            out += '\n';
        }
    }
    return out;
}

std::optional<std::string> extract_structured_block(std::string_view response) {
    const auto fence = response.find("```");
    if (fence != std::string_view::npos) {
        auto start = response.find('\n', fence);
        if (start != std::string_view::npos) {
            ++start;
            const auto end = response.find("```", start);
            if (end != std::string_view::npos) return std::string(response.substr(start, end - start));
        }
    }
    const auto open = response.find('{');
    const auto close = response.rfind('}');
    if (open != std::string_view::npos && close != std::string_view::npos && close > open)
        return std::string(response.substr(open, close - open + 1));
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Question generation and scoring

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string render_steps(const std::vector<ExplanationStepView>& steps) {
    std::string out;
    for (const auto& s : steps) out += fmt::format("{}. {}\n", s.index, s.text);
    return out;
}

std::string render_examples(const std::vector<FewShotExample>& examples, std::size_t count) {
    if (count == 0) return {};
    std::string out = "\nExamples of questions written for similar queries:\n";
    for (std::size_t i = 0; i < count; ++i)
        out += fmt::format("\nSQL: {}\nQuestion: {}\n", examples[i].sql, examples[i].question);
    return out;
}

}  // namespace

std::string generate_question(const SqlQuery& sql, const Schema& schema, const std::vector<ExplanationStepView>& steps,
                              const std::vector<FewShotExample>& examples, LlmBridge& bridge) {
    std::map<std::string, std::string> slots{
        {"schema", describe_schema(schema)}, {"steps", render_steps(steps)}, {"sql", sql.text}};
    std::size_t keep = examples.size();
    std::string prompt;
    while (true) {
        slots["examples"] = render_examples(examples, keep);
        prompt = render_prompt(TemplateName::QuestionGeneration, slots);
        if (prompt.size() <= bridge.prompt_budget() || keep == 0) break;
        --keep;
    }
    auto question = trim(bridge.invoke(prompt, kGenerationTemperature));
    if (question.empty()) throw ProviderError("provider returned an empty question");
    return question;
}

int mean_rounded(const std::vector<int>& scores) {
    if (scores.empty()) throw std::invalid_argument("mean of no scores");
    long long sum = 0;
    for (int s : scores) sum += s;
    const auto n = static_cast<long long>(scores.size());
    return static_cast<int>((2 * sum + n) / (2 * n));
}

std::optional<std::pair<std::string, int>> parse_score(std::string_view response) {
    if (auto block = extract_structured_block(response)) {
        try {
            const auto j = nlohmann::json::parse(*block);
            if (j.is_object() && j.contains("score") && j.at("score").is_number_integer()) {
                const int score = j.at("score").get<int>();
                if (score >= 0 && score <= 100) {
                    std::string analysis = j.contains("analysis") && j.at("analysis").is_string()
                                               ? j.at("analysis").get<std::string>()
                                               : std::string();
                    return std::make_pair(std::move(analysis), score);
                }
            }
        } catch (const nlohmann::json::exception&) {
        }
    }
    static const std::regex line(R"(score\W{0,3}(\d{1,3})\b)", std::regex::icase);
    std::match_results<std::string_view::const_iterator> m;
    if (std::regex_search(response.begin(), response.end(), m, line)) {
        const int score = std::stoi(m[1].str());
        if (score <= 100) return std::make_pair(trim(std::string_view(response.data(), static_cast<std::size_t>(m.position(0)))), score);
    }
    return std::nullopt;
}

EquivalenceResult score_equivalence(const SqlQuery& sql, const std::string& question, const Schema& schema,
                                    LlmBridge& bridge, std::size_t rounds) {
    if (rounds == 0) throw std::invalid_argument("score_equivalence needs at least one round");
    const auto prompt = render_prompt(TemplateName::Equivalence,
                                      {{"schema", describe_schema(schema)}, {"sql", sql.text}, {"question", question}});
    EquivalenceResult out;
    for (std::size_t r = 0; r < rounds; ++r) {
        auto parsed = parse_score(bridge.invoke(prompt, kJudgeTemperature));
        if (!parsed) {
            parsed = parse_score(bridge.invoke(
                prompt + "\nYour previous reply had no score. Reply only with the fenced json block.\n", kJudgeTemperature));
        }
        if (!parsed) throw ResponseFormatError(fmt::format("round {} returned no score 0-100", r + 1));
        out.rounds.push_back(parsed->second);
        out.report = std::move(parsed->first);
    }
    out.score = mean_rounded(out.rounds);
    return out;
}

}  // namespace sqlpair
