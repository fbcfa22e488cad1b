#ifndef SCTRANSNET_MATRIX_HPP
#define SCTRANSNET_MATRIX_HPP

#include <cstddef>
#include <vector>

#include "sctransnet/common.hpp"

namespace scnet {

// Plain row-major dense matrix. Used for data that never needs gradients:
// count matrices, recorded attention, pooling scores.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

    std::vector<double> row(std::size_t r) const {
        return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(r * cols),
                                   v.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
    }

    void set_row(std::size_t r, const std::vector<double>& x) {
        if (x.size() != cols) throw DimensionError("Matrix::set_row: width mismatch");
        for (std::size_t c = 0; c < cols; ++c) at(r, c) = x[c];
    }

    std::size_t size() const { return v.size(); }
};

}  // namespace scnet

#endif
