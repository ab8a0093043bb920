#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace stps {

// Raised for malformed or degenerate input data (files, tables, configs).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a computation diverges (NaN loss, non-finite update).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. The workhorse container for flow-rate
// blocks and adjacency sub-blocks outside the differentiable graph.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    std::size_t size() const { return v.size(); }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace stps
