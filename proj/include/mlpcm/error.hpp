// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mlpcm {

// Shape/dimension mismatch between operands.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Violated operation precondition (M > N, step out of range, ...).
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Out-of-range row or element index.
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Numerically degenerate input (zero std, zero extent, ...).
struct DegenerateInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed config file; line is 1-based, 0 when unknown.
struct ConfigError : std::runtime_error {
    int line = 0;
    ConfigError(const std::string& msg, int line_no = 0)
        : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line(line_no) {}
};

// File I/O or format failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A pipeline stage was invoked before its prerequisite produced a checkpoint.
struct MissingPrerequisiteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mlpcm
