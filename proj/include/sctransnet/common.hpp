#ifndef SCTRANSNET_COMMON_HPP
#define SCTRANSNET_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace scnet {

// Shape or dimension mismatch between operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// API misuse: non-scalar loss, repeated backward, missing gradient, ...
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Bad user-supplied input (files, config). CLI exit code 2.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file contents; reports coordinates where possible.
struct ParseError : InputError {
    using InputError::InputError;
};

// Inputs parsed but violate a semantic requirement.
struct ValidationError : InputError {
    using InputError::InputError;
};

// Non-finite values where finite ones are required. CLI exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unreadable or incompatible checkpoint. CLI exit code 4.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline bool is_finite(double x) { return std::isfinite(x); }

// FNV-1a, used for config snapshot hashes embedded in output files.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

// Shortest decimal form that round-trips a double (for reproducible CSVs).
std::string format_double(double v);

}  // namespace scnet

#endif
