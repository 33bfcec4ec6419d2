#pragma once

#include <stdexcept>

namespace fedpsi {

// Invalid generator / training configuration.
struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// CSV or JSON input that cannot be parsed; message carries row/column context.
struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Partition protocol could not satisfy the per-client minimum within the
// retry budget.
struct InfeasiblePartition : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyFederation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// PSI requested on a pmf with zero mass; callers must smooth first.
struct NeedsSmoothing : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss during training; message names client and round.
struct DivergedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyShard : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed experiment config; the CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fedpsi
