#pragma once

#include <stdexcept>

namespace rtb {

// Error taxonomy shared across the library. Configuration and input problems
// are distinguished from numerical failures during training so the CLI can
// map them to exit codes without string matching.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace rtb
