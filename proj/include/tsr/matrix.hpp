#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace tsr {

// Tensor extents: {n} for flat vectors or {channels, height, width}.
struct Shape {
    std::vector<std::size_t> dims;

    static Shape flat(std::size_t n) { return Shape{{n}}; }
    static Shape chw(std::size_t c, std::size_t h, std::size_t w) { return Shape{{c, h, w}}; }

    std::size_t size() const {
        std::size_t p = 1;
        for (std::size_t d : dims) p *= d;
        return dims.empty() ? 0 : p;
    }
    bool is_chw() const { return dims.size() == 3; }

    bool operator==(const Shape&) const = default;

    std::string str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(dims[i]);
        }
        return s + ")";
    }
};

// Dense row-major matrix of doubles. Rows are batch samples throughout.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace tsr
