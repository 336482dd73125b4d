#pragma once

#include <stdexcept>
#include <string>

namespace smplab {

enum class ErrorCode {
    invalid_argument,
    grid_mismatch,
    lineage_mismatch,
    non_finite,
    blow_up,
    rank_deficient,
    not_applicable,
    hypothesis_failed,
    optimizer_diverged,
    config,
};

/// Single exception type for the library; `code()` lets callers branch
/// without parsing the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[nodiscard]] const char* to_string(ErrorCode code) noexcept;

}  // namespace smplab
