#pragma once

#include <stdexcept>
#include <string>

namespace streamgeo {

// Caller broke an operation's precondition (shape mismatch, NaN input, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Invalid model, scene or run configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BoundsError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// A cache entry from the current or a future frame was offered to temporal attention.
class CausalityError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class CapacityError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Frame pushed to a cache out of order.
class StreamDiscontinuityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed file on load (bad magic, truncated payload, unparsable config line).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace streamgeo
