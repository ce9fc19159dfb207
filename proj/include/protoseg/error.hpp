#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace protoseg {

enum class ErrorKind {
    ShapeMismatch,
    NotScalar,
    NonFinite,
    EmptyForeground,
    EmptyDescriptorSet,
    EmptyList,
    WrongLevelCount,
    ImageTooSmall,
    MissingGradient,
    IndivisibleClassCount,
    InsufficientSamples,
    UnknownClass,
    FoldOverlap,
    ConfigError,
    IoError,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace protoseg
