#include "siamcheck/error.hpp"

namespace siamcheck {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Config: return "config";
    case ErrorKind::Label: return "label";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::Uninitialized: return "uninitialized-stats";
    case ErrorKind::Layout: return "layout";
    case ErrorKind::EmptyClass: return "empty-class";
    case ErrorKind::Decode: return "decode";
    case ErrorKind::Load: return "load";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Numerical: return 3;
    case ErrorKind::Config:
    case ErrorKind::Contract: return 4;
    default: return 2;
    }
}

} // namespace siamcheck
