#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "redry/common.hpp"

namespace redry::nn {

// Dense row-major tensor of doubles. Shapes are small vectors of extents;
// rank 0 is represented as shape {} with one element.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), data(size_t(numel_of(shape)), 0.0) {}
    Tensor(std::vector<int64_t> s, double fill)
        : shape(std::move(s)), data(size_t(numel_of(shape)), fill) {}
    Tensor(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (int64_t(data.size()) != numel_of(shape)) throw ValidationError("Tensor: data/shape mismatch");
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t e : s) n *= e;
        return n;
    }

    int64_t numel() const { return int64_t(data.size()); }
    bool empty() const { return data.empty(); }
    int64_t dim(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

}  // namespace redry::nn
