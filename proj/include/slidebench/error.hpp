#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace slidebench {

enum class ErrorCode {
    InvalidArgument,
    UnsupportedFormat,
    MissingResolutionMetadata,
    CorruptPyramid,
    OutOfBounds,
    InvalidSpec,
    IoError,
    InvariantViolation,
    MissingDataset,
    MissingAttribute,
    DtypeMismatch,
    ShapeMismatch,
    NonFinite,
    MissingTaskSettings,
    MalformedConfig,
    DuplicateSlideId,
    MissingTiles,
    EmptyBag,
    NonFiniteInput,
    TooFewPatients,
    MissingFeatures,
    NoLabeledSlides,
    ZeroVariance,
    CorruptCheckpoint,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

// Non-fatal diagnostics go to stderr; tests can silence them.
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);

}  // namespace slidebench
