#pragma once

#include <stdexcept>
#include <string>

namespace coifnet {

enum class ErrorKind {
    usage,      // bad flags, bad API use
    config,     // invalid configuration values
    dimension,  // shape mismatch
    data,       // ingest / corrupt file
    numerical,  // NaN/Inf, singular systems, division by zero
    training,   // non-finite loss or gradient during a run
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Process exit code for an error kind: 2 usage/config, 3 data, 4 numerical/training.
inline int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage:
        case ErrorKind::config:
        case ErrorKind::dimension:
            return 2;
        case ErrorKind::data:
            return 3;
        case ErrorKind::numerical:
        case ErrorKind::training:
            return 4;
    }
    return 1;
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace coifnet
