#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace narrownet {

struct Triplet {
    std::uint32_t row;
    std::uint32_t col;
    double value;
};

// Column-compressed matrix. Entries inside a column are sorted by row and
// never hold an explicit zero. Logically this is a dense rows x cols matrix.
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(std::size_t rows, std::size_t cols);

    static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                      std::vector<Triplet> entries);
    static SparseMatrix from_dense(const std::vector<std::vector<double>>& rows);
    static SparseMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return values_.size(); }

    double at(std::size_t r, std::size_t c) const;

    std::span<const std::uint32_t> col_rows(std::size_t c) const {
        return {row_idx_.data() + col_ptr_[c], col_ptr_[c + 1] - col_ptr_[c]};
    }
    std::span<const double> col_values(std::size_t c) const {
        return {values_.data() + col_ptr_[c], col_ptr_[c + 1] - col_ptr_[c]};
    }

    // this * rhs; entries of each result column are accumulated over rhs's
    // column entries in increasing inner index.
    SparseMatrix multiply(const SparseMatrix& rhs) const;

    // rows stacked on top of each other, sharing the column space
    static SparseMatrix vstack(const std::vector<const SparseMatrix*>& blocks);
    static SparseMatrix block_diag(const std::vector<const SparseMatrix*>& blocks);

    std::vector<std::vector<double>> to_dense() const;
    std::vector<Triplet> triplets() const;

    // y += this * x for a single dense vector
    void gemv_add(std::span<const double> x, std::span<double> y) const;

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> col_ptr_{0};
    std::vector<std::uint32_t> row_idx_;
    std::vector<double> values_;

    friend class ColumnBuilder;
};

// Appends columns one at a time; rows inside a column must arrive sorted.
class ColumnBuilder {
public:
    ColumnBuilder(std::size_t rows, std::size_t cols_hint = 0, std::size_t nnz_hint = 0);
    void push(std::uint32_t row, double value);
    void end_column();
    SparseMatrix finish();

private:
    SparseMatrix m_;
};

}  // namespace narrownet
