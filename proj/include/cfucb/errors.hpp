#pragma once

#include <stdexcept>
#include <string>

namespace cfucb {

// Invalid model or experiment configuration (dimension mismatches, empty
// user sets, non-positive rates). Thrown before any simulation work starts.
struct config_error : std::invalid_argument {
    explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

} // namespace cfucb
