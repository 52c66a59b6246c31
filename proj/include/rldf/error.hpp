#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rldf {

// Error kinds surfaced by the engine. Each maps to a stable machine-readable
// code used by the CLI when reporting failures.

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InvalidState : std::logic_error {
    using std::logic_error::logic_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UndefinedCorrelation : std::domain_error {
    using std::domain_error::domain_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VersionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Configuration problems; keys lists every offending "section.key".
struct ConfigError : InvalidArgument {
    ConfigError(const std::string& message, std::vector<std::string> bad_keys)
        : InvalidArgument(message), keys(std::move(bad_keys)) {}
    std::vector<std::string> keys;
};

}  // namespace rldf
