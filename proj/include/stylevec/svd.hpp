#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace stylevec {

/// Thin singular value decomposition M = U diag(s) V^T of a rows x cols
/// matrix, singular values in descending order. Columns are stored as
/// separate vectors; min(rows, cols) of each.
struct Svd {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> singular_values;
    std::vector<std::vector<double>> u; // each of length rows
    std::vector<std::vector<double>> v; // each of length cols
};

/// One-sided (Hestenes) Jacobi SVD in f64. Throws SvdNonConvergence when the
/// column rotations have not settled after `max_sweeps` sweeps.
Svd jacobi_svd(std::span<const double> row_major, std::size_t rows, std::size_t cols, int max_sweeps = 60);

} // namespace stylevec
