#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace siamcheck {

enum class ErrorKind {
    Dimension,     // tensor shape mismatch
    Config,        // invalid configuration or argument
    Label,         // target outside {0,1}
    Contract,      // API misuse (non-scalar loss, missing grad, ...)
    Numerical,     // NaN / Inf encountered
    Uninitialized, // batchnorm inference before statistics exist
    Layout,        // dataset directory layout problem
    EmptyClass,    // a class with zero images
    Decode,        // image could not be decoded
    Load,          // weight file does not match the graph
    Corruption,    // checksum / truncation
    Format,        // container version or magic mismatch
    Io,            // filesystem failure
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind), message_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorKind kind_;
    std::string message_;
};

/// Process exit code for an error kind: 2 input/layout, 3 numerical, 4 config.
int exit_code_for(ErrorKind kind) noexcept;

} // namespace siamcheck
