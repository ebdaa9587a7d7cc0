#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gem/core/error.hpp"

namespace gem::autodiff {

// Dense row-major tensor of 64-bit reals.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> v)
        : shape(std::move(s)), values(std::move(v)) {
        if (values.size() != element_count(shape))
            throw ContractError("tensor: value count does not match shape");
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<std::size_t>());
    }

    static Tensor zeros(std::vector<std::size_t> shape) {
        std::size_t n = element_count(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    static Tensor vector(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return Tensor({rows, cols}, std::move(v));
    }

    std::size_t size() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const {
        if (rank() != 2) throw ContractError("tensor: rows() requires rank 2");
        return shape[0];
    }
    std::size_t cols() const {
        if (rank() != 2) throw ContractError("tensor: cols() requires rank 2");
        return shape[1];
    }

    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    double scalar_value() const {
        if (size() != 1) throw ContractError("tensor: scalar_value() requires one element");
        return values[0];
    }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

    bool operator==(const Tensor&) const = default;
};

inline Tensor random_uniform(std::vector<std::size_t> shape, double lo, double hi,
                             std::mt19937_64& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.values) v = dist(rng);
    return t;
}

// Uniform Glorot-style init scaled by fan-in/fan-out of a 2-D weight.
inline Tensor glorot_init(std::size_t fan_out, std::size_t fan_in, std::mt19937_64& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return random_uniform({fan_out, fan_in}, -limit, limit, rng);
}

}  // namespace gem::autodiff
