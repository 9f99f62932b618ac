#pragma once

#include <stdexcept>
#include <string>

namespace ral {

// Base class for all library errors. The CLI maps subclasses to exit codes:
// validation/capacity -> 1, property violations -> 2, infeasible constructions -> 3.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct validation_error : error {
    using error::error;
};

// A size guard was hit (e.g. subset enumeration beyond n = 24).
struct capacity_error : error {
    using error::error;
};

// An adversarial construction cannot exist for the requested parameters.
struct construction_error : error {
    using error::error;
};

// The tailored attack found no candidate value that the rule would select.
struct attack_infeasible_error : error {
    using error::error;
};

// A quantity the theory guarantees was observed to be violated.
struct property_violation : error {
    using error::error;
};

} // namespace ral
