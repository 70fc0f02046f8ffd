#pragma once

#include <stdexcept>
#include <string>

namespace fusionbench {

// Exit-code mapping for the CLI: usage=1, data=2, numeric=3.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape violations. A kind of data error but raised by the
// engine with both shapes in the message.
struct ShapeError : DataError {
    explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

}  // namespace fusionbench
