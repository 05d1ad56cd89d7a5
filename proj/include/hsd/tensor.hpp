#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hsd/errors.hpp"

namespace hsd {

// Dense row-major tensor of doubles. Rank is 1 (bias) or 2 (weight matrix)
// everywhere in this codebase.
struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::string n, std::vector<std::size_t> s)
        : name(std::move(n)), shape(std::move(s)),
          data(std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<>()),
               0.0) {}

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

} // namespace hsd
