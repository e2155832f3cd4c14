#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sqlpair {

// Root of every exception the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed structured-text document (schema, records, grammar, dataset).
class DocumentError : public Error {
public:
    DocumentError(std::string path, const std::string& message)
        : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
public:
    ValidationError(std::string path, const std::string& message)
        : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class SqlSyntaxError : public Error {
public:
    SqlSyntaxError(std::size_t offset, std::vector<std::string> expected, const std::string& message)
        : Error(message), offset_(offset), expected_(std::move(expected)) {}
    std::size_t offset() const noexcept { return offset_; }
    const std::vector<std::string>& expected() const noexcept { return expected_; }

private:
    std::size_t offset_;
    std::vector<std::string> expected_;
};

class ExecutionError : public Error {
public:
    using Error::Error;
};

class PopulationError : public Error {
public:
    using Error::Error;
};

// Thrown by grounding when a skeleton cannot be bound to the schema; callers resample.
class GroundingError : public Error {
public:
    using Error::Error;
};

class SamplingError : public Error {
public:
    using Error::Error;
};

class ExplanationError : public Error {
public:
    using Error::Error;
};

class ProviderError : public Error {
public:
    using Error::Error;
};

class ResponseFormatError : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

class AnalysisError : public Error {
public:
    using Error::Error;
};

class StoreError : public Error {
public:
    using Error::Error;
};

// A pipeline stage failed; `stage` is one of the names in pipeline.hpp.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& reason) : Error(stage + ": " + reason), stage_(std::move(stage)), reason_(reason) {}
    const std::string& stage() const { return stage_; }
    const std::string& reason() const { return reason_; }

private:
    std::string stage_;
    std::string reason_;
};

}  // namespace sqlpair
