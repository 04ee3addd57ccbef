#pragma once

#include <exception>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace fieldloom {

// Bad arguments or an invalid configuration. The CLI maps this to exit code 1.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Unusable input data: missing files, malformed records, degenerate sets. Exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values during evaluation or training. Exit code 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// CLI exit code for a caught exception.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const std::invalid_argument*>(&e)) return 1;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return 2;
    return 3;
}

}  // namespace fieldloom
