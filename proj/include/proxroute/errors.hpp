#pragma once

#include <stdexcept>
#include <string>

namespace proxroute {

/// Error taxonomy. Each class maps to a distinct process exit code so shell
/// callers can tell configuration mistakes from bad data from I/O failures.
enum class ErrorClass { Config = 2, Validation = 3, Io = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, std::string msg) : std::runtime_error(std::move(msg)), cls_(cls) {}
    ErrorClass error_class() const { return cls_; }
    int exit_code() const { return static_cast<int>(cls_); }

private:
    ErrorClass cls_;
};

/// Caller asked for something impossible (K > corpus size, overlapping task
/// sets, unknown flag value, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(std::string msg) : Error(ErrorClass::Config, std::move(msg)) {}
};

/// Input data violates an invariant. `kind` distinguishes the violation so
/// tests and diagnostics can be precise about what was wrong.
class ValidationError : public Error {
public:
    enum class Kind {
        MalformedRecord,
        DimensionMismatch,
        UnknownModel,
        ValueOutOfRange,
        DegenerateInput,
        CorpusInconsistent,
        EmptyCorpus,
        Internal,
    };

    ValidationError(Kind kind, std::string msg)
        : Error(ErrorClass::Validation, std::move(msg)), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

class IoError : public Error {
public:
    explicit IoError(std::string msg) : Error(ErrorClass::Io, std::move(msg)) {}
};

}  // namespace proxroute
