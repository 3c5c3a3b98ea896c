#pragma once

#include <stdexcept>
#include <string>

namespace nmfg {

// Error categories surfaced through the C API and mapped to CLI exit codes.
// Input/configuration problems exit with 1, numeric failures with 2.
enum class ErrorCode {
    NotFound = 1,
    ParseError,
    ValidationError,
    FormatError,
    InsufficientData,
    FitError,
    UnknownCondition,
    ConfigurationError,
    NumericalError,
    Diverged,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

inline Error not_found(const std::string& m) { return Error(ErrorCode::NotFound, m); }
inline Error parse_error(const std::string& m) { return Error(ErrorCode::ParseError, m); }
inline Error validation_error(const std::string& m) { return Error(ErrorCode::ValidationError, m); }
inline Error format_error(const std::string& m) { return Error(ErrorCode::FormatError, m); }
inline Error insufficient_data(const std::string& m) { return Error(ErrorCode::InsufficientData, m); }
inline Error fit_error(const std::string& m) { return Error(ErrorCode::FitError, m); }
inline Error unknown_condition(const std::string& m) { return Error(ErrorCode::UnknownCondition, m); }
inline Error config_error(const std::string& m) { return Error(ErrorCode::ConfigurationError, m); }
inline Error numerical_error(const std::string& m) { return Error(ErrorCode::NumericalError, m); }
inline Error diverged_error(const std::string& m) { return Error(ErrorCode::Diverged, m); }

} // namespace nmfg
