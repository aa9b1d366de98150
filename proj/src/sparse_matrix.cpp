#include "narrownet/sparse_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace narrownet {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), col_ptr_(cols + 1, 0) {
    if (rows > std::numeric_limits<std::uint32_t>::max()) {
        throw std::length_error("matrix row count exceeds 32-bit index range");
    }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> entries) {
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.col != b.col ? a.col < b.col : a.row < b.row;
    });
    ColumnBuilder b(rows, cols, entries.size());
    std::size_t k = 0;
    for (std::size_t c = 0; c < cols; ++c) {
        while (k < entries.size() && entries[k].col == c) {
            if (entries[k].row >= rows) throw std::out_of_range("triplet row out of range");
            double v = entries[k].value;
            std::uint32_t r = entries[k].row;
            ++k;
            // duplicates are summed in input order
            while (k < entries.size() && entries[k].col == c && entries[k].row == r) {
                v += entries[k].value;
                ++k;
            }
            b.push(r, v);
        }
        b.end_column();
    }
    if (k != entries.size()) throw std::out_of_range("triplet column out of range");
    return b.finish();
}

SparseMatrix SparseMatrix::from_dense(const std::vector<std::vector<double>>& rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows[0].size() : 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw std::invalid_argument("ragged dense matrix");
    }
    ColumnBuilder b(r, c);
    for (std::size_t j = 0; j < c; ++j) {
        for (std::size_t i = 0; i < r; ++i) b.push(static_cast<std::uint32_t>(i), rows[i][j]);
        b.end_column();
    }
    return b.finish();
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
    ColumnBuilder b(n, n, n);
    for (std::size_t j = 0; j < n; ++j) {
        b.push(static_cast<std::uint32_t>(j), 1.0);
        b.end_column();
    }
    return b.finish();
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
    auto rs = col_rows(c);
    auto it = std::lower_bound(rs.begin(), rs.end(), static_cast<std::uint32_t>(r));
    if (it == rs.end() || *it != r) return 0.0;
    return values_[col_ptr_[c] + static_cast<std::size_t>(it - rs.begin())];
}

SparseMatrix SparseMatrix::multiply(const SparseMatrix& rhs) const {
    if (cols_ != rhs.rows_) throw std::invalid_argument("matrix product dimension mismatch");
    ColumnBuilder b(rows_, rhs.cols_);
    std::vector<double> acc(rows_, 0.0);
    std::vector<char> mark(rows_, 0);
    std::vector<std::uint32_t> touched;
    for (std::size_t j = 0; j < rhs.cols_; ++j) {
        touched.clear();
        auto ks = rhs.col_rows(j);
        auto bv = rhs.col_values(j);
        for (std::size_t t = 0; t < ks.size(); ++t) {
            std::size_t k = ks[t];
            double bkj = bv[t];
            auto is = col_rows(k);
            auto av = col_values(k);
            for (std::size_t s = 0; s < is.size(); ++s) {
                std::uint32_t i = is[s];
                if (!mark[i]) {
                    mark[i] = 1;
                    acc[i] = av[s] * bkj;
                    touched.push_back(i);
                } else {
                    acc[i] += av[s] * bkj;
                }
            }
        }
        std::sort(touched.begin(), touched.end());
        for (auto i : touched) {
            b.push(i, acc[i]);
            mark[i] = 0;
        }
        b.end_column();
    }
    return b.finish();
}

SparseMatrix SparseMatrix::vstack(const std::vector<const SparseMatrix*>& blocks) {
    if (blocks.empty()) return SparseMatrix(0, 0);
    std::size_t cols = blocks[0]->cols_;
    std::size_t rows = 0;
    std::size_t nnz = 0;
    for (auto* m : blocks) {
        if (m->cols_ != cols) throw std::invalid_argument("vstack column mismatch");
        rows += m->rows_;
        nnz += m->nnz();
    }
    ColumnBuilder b(rows, cols, nnz);
    for (std::size_t j = 0; j < cols; ++j) {
        std::uint32_t offset = 0;
        for (auto* m : blocks) {
            auto rs = m->col_rows(j);
            auto vs = m->col_values(j);
            for (std::size_t t = 0; t < rs.size(); ++t) b.push(rs[t] + offset, vs[t]);
            offset += static_cast<std::uint32_t>(m->rows_);
        }
        b.end_column();
    }
    return b.finish();
}

SparseMatrix SparseMatrix::block_diag(const std::vector<const SparseMatrix*>& blocks) {
    std::size_t rows = 0, cols = 0, nnz = 0;
    for (auto* m : blocks) {
        rows += m->rows_;
        cols += m->cols_;
        nnz += m->nnz();
    }
    ColumnBuilder b(rows, cols, nnz);
    std::uint32_t offset = 0;
    for (auto* m : blocks) {
        for (std::size_t j = 0; j < m->cols_; ++j) {
            auto rs = m->col_rows(j);
            auto vs = m->col_values(j);
            for (std::size_t t = 0; t < rs.size(); ++t) b.push(rs[t] + offset, vs[t]);
            b.end_column();
        }
        offset += static_cast<std::uint32_t>(m->rows_);
    }
    return b.finish();
}

std::vector<std::vector<double>> SparseMatrix::to_dense() const {
    std::vector<std::vector<double>> out(rows_, std::vector<double>(cols_, 0.0));
    for (std::size_t j = 0; j < cols_; ++j) {
        auto rs = col_rows(j);
        auto vs = col_values(j);
        for (std::size_t t = 0; t < rs.size(); ++t) out[rs[t]][j] = vs[t];
    }
    return out;
}

std::vector<Triplet> SparseMatrix::triplets() const {
    std::vector<Triplet> out;
    out.reserve(nnz());
    for (std::size_t j = 0; j < cols_; ++j) {
        auto rs = col_rows(j);
        auto vs = col_values(j);
        for (std::size_t t = 0; t < rs.size(); ++t) {
            out.push_back({rs[t], static_cast<std::uint32_t>(j), vs[t]});
        }
    }
    return out;
}

void SparseMatrix::gemv_add(std::span<const double> x, std::span<double> y) const {
    for (std::size_t j = 0; j < cols_; ++j) {
        double xj = x[j];
        if (xj == 0.0) continue;
        auto rs = col_rows(j);
        auto vs = col_values(j);
        for (std::size_t t = 0; t < rs.size(); ++t) y[rs[t]] += vs[t] * xj;
    }
}

bool SparseMatrix::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ColumnBuilder::ColumnBuilder(std::size_t rows, std::size_t cols_hint, std::size_t nnz_hint) {
    if (rows > std::numeric_limits<std::uint32_t>::max()) {
        throw std::length_error("matrix row count exceeds 32-bit index range");
    }
    m_.rows_ = rows;
    m_.cols_ = 0;
    m_.col_ptr_.reserve(cols_hint + 1);
    m_.row_idx_.reserve(nnz_hint);
    m_.values_.reserve(nnz_hint);
}

void ColumnBuilder::push(std::uint32_t row, double value) {
    if (value == 0.0) return;
    m_.row_idx_.push_back(row);
    m_.values_.push_back(value);
}

void ColumnBuilder::end_column() {
    m_.col_ptr_.push_back(m_.values_.size());
    ++m_.cols_;
}

SparseMatrix ColumnBuilder::finish() {
    m_.row_idx_.shrink_to_fit();
    m_.values_.shrink_to_fit();
    return std::move(m_);
}

}  // namespace narrownet
