#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace memrec {

enum class ErrorKind {
    MalformedRecord,
    DuplicateSessionId,
    EntityNotFound,
    ParseFailure,
    LlmUnavailable,
    MissingSlot,
    TemplateError,
    DimensionMismatch,
    StoreIo,
    CorruptRecord,
    MismatchedCuts,
    UnknownVariant,
    ConfigError,
    InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

// Every recoverable failure in the library is reported through this type.
// `detail` carries the raw LLM text for ParseFailure and the offending
// line for MalformedRecord/CorruptRecord.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string detail = {}, std::size_t line_no = 0)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message),
          kind_(kind), detail_(std::move(detail)), line_no_(line_no) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& detail() const noexcept { return detail_; }
    std::size_t line_no() const noexcept { return line_no_; }

private:
    ErrorKind kind_;
    std::string detail_;
    std::size_t line_no_;
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::MalformedRecord: return "MalformedRecord";
        case ErrorKind::DuplicateSessionId: return "DuplicateSessionId";
        case ErrorKind::EntityNotFound: return "EntityNotFound";
        case ErrorKind::ParseFailure: return "ParseFailure";
        case ErrorKind::LlmUnavailable: return "LlmUnavailable";
        case ErrorKind::MissingSlot: return "MissingSlot";
        case ErrorKind::TemplateError: return "TemplateError";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::StoreIo: return "StoreIo";
        case ErrorKind::CorruptRecord: return "CorruptRecord";
        case ErrorKind::MismatchedCuts: return "MismatchedCuts";
        case ErrorKind::UnknownVariant: return "UnknownVariant";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

}  // namespace memrec
