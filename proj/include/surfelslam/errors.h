#pragma once

#include <stdexcept>
#include <string>

namespace surfelslam {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidInputError : Error {
    using Error::Error;
};

struct BehindCameraError : Error {
    using Error::Error;
};

struct DegenerateAssociationError : Error {
    using Error::Error;
};

struct TrackingLostError : Error {
    using Error::Error;
};

struct GraphTooSmallError : Error {
    using Error::Error;
};

struct InvalidSceneError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct LoadError : Error {
    using Error::Error;
};

} // namespace surfelslam
