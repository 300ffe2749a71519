#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace exsearch {

// Broad category used by the CLI to pick an exit code.
enum class ErrorCategory { Usage, Data, Endpoint };

class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message, ErrorCategory category = ErrorCategory::Data)
        : std::runtime_error(message), kind_(std::move(kind)), category_(category) {}

    /// Stable machine-readable error name, e.g. "DuplicateId".
    const std::string& kind() const noexcept { return kind_; }
    ErrorCategory category() const noexcept { return category_; }

private:
    std::string kind_;
    ErrorCategory category_;
};

#define EXSEARCH_DATA_ERROR(Name)                                                  \
    class Name : public Error {                                                    \
    public:                                                                        \
        explicit Name(const std::string& message) : Error(#Name, message) {}       \
    }

#define EXSEARCH_ENDPOINT_ERROR(Name)                                              \
    class Name : public Error {                                                    \
    public:                                                                        \
        explicit Name(const std::string& message)                                  \
            : Error(#Name, message, ErrorCategory::Endpoint) {}                    \
    }

EXSEARCH_DATA_ERROR(MalformedAction);
EXSEARCH_DATA_ERROR(DuplicateId);
EXSEARCH_DATA_ERROR(EmptyIndex);
EXSEARCH_DATA_ERROR(VersionMismatch);
EXSEARCH_DATA_ERROR(CorruptIndex);
EXSEARCH_DATA_ERROR(InfeasibleWorld);
EXSEARCH_DATA_ERROR(NoDocuments);
EXSEARCH_DATA_ERROR(UnrealizableTrajectory);
EXSEARCH_DATA_ERROR(MissingAnnotation);
EXSEARCH_DATA_ERROR(EmptyGolds);
EXSEARCH_DATA_ERROR(UnknownId);
EXSEARCH_DATA_ERROR(IoError);

EXSEARCH_ENDPOINT_ERROR(AuthError);
EXSEARCH_ENDPOINT_ERROR(EndpointError);
EXSEARCH_ENDPOINT_ERROR(Timeout);
EXSEARCH_ENDPOINT_ERROR(LogprobsUnsupported);

#undef EXSEARCH_DATA_ERROR
#undef EXSEARCH_ENDPOINT_ERROR

class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error("UsageError", message, ErrorCategory::Usage) {}
};

/// Malformed JSONL record. `line` is 1-based; `field` is empty when the
/// whole line failed to parse.
class SchemaError : public Error {
public:
    SchemaError(std::size_t line, std::string field, const std::string& message)
        : Error("SchemaError", "line " + std::to_string(line) + ": " + message),
          line_(line), field_(std::move(field)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

class EnumerationTooLarge : public Error {
public:
    EnumerationTooLarge(double bound, double cap)
        : Error("EnumerationTooLarge",
                "trajectory enumeration bound " + std::to_string(static_cast<std::uint64_t>(bound)) +
                    " exceeds cap " + std::to_string(static_cast<std::uint64_t>(cap))),
          bound_(bound) {}

    double bound() const noexcept { return bound_; }

private:
    double bound_;
};

} // namespace exsearch
