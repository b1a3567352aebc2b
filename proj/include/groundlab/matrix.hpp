#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "groundlab/rng.hpp"

namespace groundlab {

// Dense row-major matrix of doubles. Only the operations the scorer needs.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    static Matrix randn(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
        Matrix m(rows, cols);
        for (double& v : m.data_) v = normal(rng, 0.0, stddev);
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t r, std::size_t c) {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    double at(std::size_t r, std::size_t c) const {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Matrix& operator+=(const Matrix& o) {
        assert(rows_ == o.rows_ && cols_ == o.cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    assert(a.cols() == b.rows());
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// C = A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    assert(a.rows() == b.rows());
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* arow = a.row(k);
        const double* brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* crow = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

// C = A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    assert(a.cols() == b.cols());
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
            crow[j] = s;
        }
    }
    return c;
}

}  // namespace groundlab
