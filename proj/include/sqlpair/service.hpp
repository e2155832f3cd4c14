#pragma once

// HTTP front end for the workbench. Request and response bodies are JSON; errors come back
// as {"error": message, "field": path?} with 400 for bad input, 404 for unknown things,
// 409 for state conflicts and 502 for provider failures.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "sqlpair/llm.hpp"
#include "sqlpair/pipeline.hpp"

namespace sqlpair {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::filesystem::path journal;       // empty keeps the dataset in memory
    std::filesystem::path bundled_pool;  // {"pairs":[...]}; empty means no bundled examples
    // Optional startup state for the default session.
    std::filesystem::path schema;
    std::filesystem::path records;  // loaded instead of populating when set
    std::filesystem::path grammar;  // default grammar when empty
    std::size_t rows = 50;
    std::uint64_t seed = 0;
    ProviderConfig provider;
    PipelineConfig pipeline;
};

// {"host","port","journal","bundled_pool","schema","records","grammar","rows","seed",
//  "provider":{...},"paraphrase","scoring_rounds","top_k","similarity_threshold"}.
// Relative paths resolve against `base`.
ServiceConfig load_service_config(std::string_view document, const std::filesystem::path& base = {});

class Service {
public:
    // Uses `provider` when given, else make_provider(config.provider).
    explicit Service(ServiceConfig config, std::shared_ptr<Provider> provider = nullptr);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds and serves on a background thread; returns the bound port. Throws Error when
    // the address cannot be bound.
    int start();
    // Blocks until stop() is called from another thread or a signal handler.
    void wait();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace sqlpair
