#pragma once

#include <stdexcept>
#include <string>

namespace crowdscan {

/// Error codes shared across the toolkit. Each code belongs to one of three
/// CLI exit classes: usage/config (2), data (3), internal (4).
enum class Errc {
    // geometry
    InsufficientPoints,
    DegenerateConfiguration,
    PointAtInfinity,
    NonInvertible,
    LayoutMismatch,
    // motion
    InvalidPlan,
    DimensionMismatch,
    EmptyInput,
    // flowsum
    DegenerateTracklet,
    EmptyCluster,
    // congestion
    TrackletTooShort,
    // synth
    InvalidSpec,
    // cli / plumbing
    InvalidConfig,
    NoFrames,
    HomographyRequired,
    IoError,
    Internal,
};

inline const char* errc_name(Errc c) {
    switch (c) {
    case Errc::InsufficientPoints: return "InsufficientPoints";
    case Errc::DegenerateConfiguration: return "DegenerateConfiguration";
    case Errc::PointAtInfinity: return "PointAtInfinity";
    case Errc::NonInvertible: return "NonInvertible";
    case Errc::LayoutMismatch: return "LayoutMismatch";
    case Errc::InvalidPlan: return "InvalidPlan";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DegenerateTracklet: return "DegenerateTracklet";
    case Errc::EmptyCluster: return "EmptyCluster";
    case Errc::TrackletTooShort: return "TrackletTooShort";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NoFrames: return "NoFrames";
    case Errc::HomographyRequired: return "HomographyRequired";
    case Errc::IoError: return "IoError";
    case Errc::Internal: return "Internal";
    }
    return "Unknown";
}

/// Exit code class for the CLI: 2 usage/config, 3 data, 4 internal.
inline int errc_exit_code(Errc c) {
    switch (c) {
    case Errc::InsufficientPoints:
    case Errc::InvalidPlan:
    case Errc::InvalidSpec:
    case Errc::InvalidConfig:
    case Errc::NoFrames:
    case Errc::HomographyRequired:
        return 2;
    case Errc::DegenerateConfiguration:
    case Errc::PointAtInfinity:
    case Errc::NonInvertible:
    case Errc::LayoutMismatch:
    case Errc::DimensionMismatch:
    case Errc::EmptyInput:
    case Errc::DegenerateTracklet:
    case Errc::EmptyCluster:
    case Errc::TrackletTooShort:
    case Errc::IoError:
        return 3;
    case Errc::Internal:
        return 4;
    }
    return 4;
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }
    const char* name() const noexcept { return errc_name(code_); }
    int exit_code() const noexcept { return errc_exit_code(code_); }

private:
    Errc code_;
};

} // namespace crowdscan
