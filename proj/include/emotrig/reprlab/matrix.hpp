#pragma once

#include "emotrig/errors.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace emotrig::reprlab {

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rs) {
        if (rs.empty()) return {};
        Matrix m(rs.size(), rs.front().size());
        for (std::size_t i = 0; i < rs.size(); ++i) {
            if (rs[i].size() != m.cols) throw ArgumentError("ragged rows");
            std::copy(rs[i].begin(), rs[i].end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
        }
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const noexcept { return {data.data() + i * cols, cols}; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

inline Matrix squared_distances(const Matrix& x) {
    Matrix d(x.rows, x.rows);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = i + 1; j < x.rows; ++j) d(i, j) = d(j, i) = squared_distance(x.row(i), x.row(j));
    return d;
}

/// Stacks row blocks that share a column count.
inline Matrix vstack(std::span<const Matrix* const> parts) {
    std::size_t rows = 0, cols = 0;
    for (const auto* p : parts) {
        if (p->rows == 0) continue;
        if (cols && p->cols != cols) throw ArgumentError("vstack: column mismatch");
        cols = p->cols;
        rows += p->rows;
    }
    Matrix m(rows, cols);
    std::size_t at = 0;
    for (const auto* p : parts) {
        std::copy(p->data.begin(), p->data.end(), m.data.begin() + static_cast<std::ptrdiff_t>(at));
        at += p->data.size();
    }
    return m;
}

} // namespace emotrig::reprlab
