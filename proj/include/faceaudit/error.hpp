#pragma once

#include <stdexcept>
#include <string>

namespace faceaudit {

enum class ErrorKind {
    corrupt_file,          // bad magic, malformed JSON, truncated tensor
    inconsistent_dataset,  // counts or dimensions disagree across files
    invalid_record,        // a specific record violates an invariant
    invalid_input,         // caller passed mismatched/ill-formed arguments
    insufficient_pool,     // matching needs more candidates than available
    infeasible,            // analysis cannot reach its target (variance, bins)
    degenerate,            // distribution or space has no usable variance
    io,                    // filesystem failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    // Process exit code convention: 2 = data error, 3 = infeasible analysis.
    int exit_code() const {
        switch (kind_) {
        case ErrorKind::corrupt_file:
        case ErrorKind::inconsistent_dataset:
        case ErrorKind::invalid_record:
        case ErrorKind::io:
            return 2;
        case ErrorKind::insufficient_pool:
        case ErrorKind::infeasible:
        case ErrorKind::degenerate:
            return 3;
        default:
            return 1;
        }
    }

private:
    ErrorKind kind_;
};

}  // namespace faceaudit
