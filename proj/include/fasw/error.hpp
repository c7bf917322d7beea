#pragma once

#include <stdexcept>
#include <string>

namespace fasw {

enum class ErrorKind {
    config,
    protocol_violation,
    schema,
    data,
    input,
    numerical,
    pipeline,
    metric,
    export_error,
    infeasible,
    usage,
    io,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; `kind()` selects the failure class
// named by each operation's contract.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        throw Error(kind, message);
    }
}

}  // namespace fasw
