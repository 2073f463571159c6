#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace cdt {

// Dense row-major matrix of doubles. Row vectors are 1 x n matrices.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix row_vector(std::initializer_list<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
    const double* row_ptr(std::size_t i) const { return data_.data() + i * cols_; }
    std::span<double> row(std::size_t i) { return {row_ptr(i), cols_}; }
    std::span<const double> row(std::size_t i) const { return {row_ptr(i), cols_}; }

    void fill(double v) { data_.assign(data_.size(), v); }
    Matrix zeros_like() const { return Matrix(rows_, cols_); }
    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool all_finite() const;
    Matrix transposed() const;

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Largest absolute elementwise difference; matrices must have equal shape.
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace cdt
