#pragma once

#include <stdexcept>
#include <string>

namespace nestack {

/// Failure category. The CLI maps these onto distinct exit codes.
enum class ErrorKind {
    validation,  // malformed or out-of-range input
    degeneracy,  // numerically degenerate data (ties, rank loss, zero design)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& what) {
    throw Error(ErrorKind::validation, what);
}

[[noreturn]] inline void fail_degenerate(const std::string& what) {
    throw Error(ErrorKind::degeneracy, what);
}

}  // namespace nestack
