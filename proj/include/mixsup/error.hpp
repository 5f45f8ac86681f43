#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mixsup {

enum class Errc {
    EmptyMask,
    EmptyBackground,
    OutOfBounds,
    ShapeMismatch,
    NoLabeledPixels,
    DegenerateContour,
    BadSize,
    MissingAnnotation,
    CorruptImage,
    SizeMismatch,
    EmptyDataset,
    EmptyInput,
    NonFiniteLoss,
    InvalidConfig,
    IoError,
    BadCheckpoint,
};

std::string_view to_string(Errc code);

/// Library-wide exception. `code()` identifies the failure class, `what()`
/// carries a human-readable message (file names, offending indices).
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace mixsup
