#ifndef MEMS_ERRORS_HPP
#define MEMS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mems {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotClamped : Error {
    using Error::Error;
};

struct BelowObstacle : Error {
    using Error::Error;
};

struct OutOfDomain : Error {
    using Error::Error;
};

// The mapped free-region mesh degenerates when the gap u + H drops below
// eps_gap * H; touchdown states cannot be meshed.
struct TouchdownGeometry : Error {
    using Error::Error;
};

struct SingularSystem : Error {
    using Error::Error;
};

struct ModelMismatch : Error {
    using Error::Error;
};

struct TraceUnavailable : Error {
    using Error::Error;
};

struct DegenerateRange : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace mems

#endif
