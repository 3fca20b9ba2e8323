#pragma once

#include <stdexcept>
#include <string>

namespace envclass {

/// Error raised by any library operation whose contract is violated.
/// The message is a single line, suitable for machine-parsable CLI output.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace envclass
