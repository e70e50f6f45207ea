#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vqs {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    Matrix transposed() const;
    void fill(double v);
    std::string shape_string() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// All three products accumulate every output element in ascending order of
// the contracted index, so results are bitwise reproducible for a given build.

/// a · b
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);

struct ColumnStats {
    std::vector<double> means;
    std::vector<double> stds;  // population (divisor n)
};

ColumnStats column_stats(const Matrix& m);

struct EigenDecomposition {
    std::vector<double> values;  // descending
    Matrix vectors;              // n × k, column j pairs with values[j]
};

/// Top-k eigenpairs of a symmetric matrix by cyclic Jacobi rotations.
/// Each eigenvector is signed so its largest-magnitude entry is positive
/// (ties resolved at the lowest index).
EigenDecomposition sym_eigen(const Matrix& s, std::size_t top_k);

/// Flip `v` in place so its largest-magnitude entry is positive.
void canonicalize_sign(std::span<double> v);

bool all_finite(std::span<const double> v) noexcept;

}  // namespace vqs
