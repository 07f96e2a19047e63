#pragma once

#include <stdexcept>
#include <string>

namespace curricuweb {

// Broad error families. The CLI maps them onto process exit codes:
// config -> 2, data -> 3, transport -> 4.
enum class ErrorFamily { config, data, transport };

class Error : public std::runtime_error {
public:
    Error(ErrorFamily family, const std::string& what)
        : std::runtime_error(what), family_(family) {}

    ErrorFamily family() const noexcept { return family_; }

private:
    ErrorFamily family_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorFamily::config, what) {}
};

// Raised when a curriculum stage admits nothing.
struct ScheduleError : Error {
    explicit ScheduleError(const std::string& what) : Error(ErrorFamily::config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorFamily::data, what) {}
};

struct ParseError : DataError {
    ParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct IntegrityError : DataError {
    using DataError::DataError;
};

struct FormatError : DataError {
    using DataError::DataError;
};

struct ShapeError : DataError {
    using DataError::DataError;
};

struct DomainError : DataError {
    using DataError::DataError;
};

struct SizeError : DataError {
    using DataError::DataError;
};

struct EvaluationError : DataError {
    using DataError::DataError;
};

struct ProtocolError : DataError {
    using DataError::DataError;
};

class TransportError : public Error {
public:
    TransportError(const std::string& what, bool retryable)
        : Error(ErrorFamily::transport, what), retryable_(retryable) {}

    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

inline int exit_code_for(ErrorFamily family) {
    switch (family) {
    case ErrorFamily::config: return 2;
    case ErrorFamily::data: return 3;
    case ErrorFamily::transport: return 4;
    }
    return 1;
}

}  // namespace curricuweb
