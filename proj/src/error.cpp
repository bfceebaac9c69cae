#include "slidebench/error.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace slidebench {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::MissingResolutionMetadata: return "MissingResolutionMetadata";
        case ErrorCode::CorruptPyramid: return "CorruptPyramid";
        case ErrorCode::OutOfBounds: return "OutOfBounds";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvariantViolation: return "InvariantViolation";
        case ErrorCode::MissingDataset: return "MissingDataset";
        case ErrorCode::MissingAttribute: return "MissingAttribute";
        case ErrorCode::DtypeMismatch: return "DtypeMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::MissingTaskSettings: return "MissingTaskSettings";
        case ErrorCode::MalformedConfig: return "MalformedConfig";
        case ErrorCode::DuplicateSlideId: return "DuplicateSlideId";
        case ErrorCode::MissingTiles: return "MissingTiles";
        case ErrorCode::EmptyBag: return "EmptyBag";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::TooFewPatients: return "TooFewPatients";
        case ErrorCode::MissingFeatures: return "MissingFeatures";
        case ErrorCode::NoLabeledSlides: return "NoLabeledSlides";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    }
    return "Unknown";
}

namespace {
std::atomic<bool> g_warnings{true};
std::mutex g_warn_mutex;
}  // namespace

void warn(const std::string& message) {
    if (!g_warnings.load()) return;
    std::lock_guard lock(g_warn_mutex);
    std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }

}  // namespace slidebench
