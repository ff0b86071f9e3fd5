#pragma once

#include <stdexcept>
#include <string>

namespace pcp {

// Input files that fail to parse (CSV/JSON syntax, bad header, bad number).
// CLI maps this to exit code 2.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or value disagreements between otherwise well-formed inputs
// (vector length mismatch, label out of range, invalid simplex).
// CLI maps this to exit code 3.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Precondition violations on an operation's contract (degenerate batch,
// train-mode forward without a label, too few seeds). CLI maps this to
// exit code 3.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss during training; aborts the run with a diagnostic.
// CLI maps this to exit code 1.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace pcp
