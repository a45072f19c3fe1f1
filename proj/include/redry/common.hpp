#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace redry {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Error taxonomy. The CLI maps these onto distinct exit codes
// (see tools/redry_main.cpp): validation -> 2, I/O -> 3, divergence -> 4.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace redry
