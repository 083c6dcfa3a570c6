#pragma once

#include <stdexcept>
#include <string>

namespace pdiv {

// Bad knobs: invalid config fields, impossible topology requests, degenerate
// transforms. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Dimension mismatches between tensors, layers or datasets.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf surfacing from a forward/backward pass or a diverging run.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed external input (CSV rows, snapshot files).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Well-formed input that violates a contract (labels out of range, weights
// not summing to one).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pdiv
