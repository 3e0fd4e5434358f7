#include "stylevec/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "stylevec/error.hpp"

namespace stylevec {

namespace {

using Column = std::vector<double>;

double dot(const Column& a, const Column& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void rotate(Column& p, Column& q, double c, double s) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double x = p[i];
        const double y = q[i];
        p[i] = c * x - s * y;
        q[i] = s * x + c * y;
    }
}

// Orthogonalizes the columns of a tall matrix (m >= n). On return the
// columns of `work` are U scaled by the singular values.
void orthogonalize(std::vector<Column>& work, std::vector<Column>& v, int max_sweeps) {
    constexpr double eps = 1e-15;
    const std::size_t n = work.size();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = dot(work[p], work[p]);
                const double beta = dot(work[q], work[q]);
                const double gamma = dot(work[p], work[q]);
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(work[p], work[q], c, s);
                rotate(v[p], v[q], c, s);
            }
        }
        if (!rotated) return;
    }
    throw Error(ErrorCode::SvdNonConvergence, "no convergence after " + std::to_string(max_sweeps) + " sweeps");
}

} // namespace

Svd jacobi_svd(std::span<const double> m, std::size_t rows, std::size_t cols, int max_sweeps) {
    if (m.size() != rows * cols) {
        throw Error(ErrorCode::ShapeMismatch, "svd input holds " + std::to_string(m.size()) + " values, expected " +
                                                  std::to_string(rows * cols));
    }
    const bool transposed = rows < cols;
    const std::size_t tall = transposed ? cols : rows;
    const std::size_t wide = transposed ? rows : cols;

    // columns of the tall matrix
    std::vector<Column> work(wide, Column(tall));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (transposed) {
                work[r][c] = m[r * cols + c];
            } else {
                work[c][r] = m[r * cols + c];
            }
        }
    }
    std::vector<Column> v(wide, Column(wide, 0.0));
    for (std::size_t i = 0; i < wide; ++i) v[i][i] = 1.0;

    orthogonalize(work, v, max_sweeps);

    std::vector<double> sigma(wide);
    for (std::size_t j = 0; j < wide; ++j) {
        sigma[j] = std::sqrt(dot(work[j], work[j]));
        if (sigma[j] > 0.0) {
            for (auto& x : work[j]) x /= sigma[j];
        }
    }
    std::vector<std::size_t> order(wide);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    Svd out;
    out.rows = rows;
    out.cols = cols;
    for (auto j : order) {
        out.singular_values.push_back(sigma[j]);
        // for the transposed problem M^T = U' S V'^T, so M = V' S U'^T
        if (transposed) {
            out.u.push_back(v[j]);
            out.v.push_back(work[j]);
        } else {
            out.u.push_back(work[j]);
            out.v.push_back(v[j]);
        }
    }
    return out;
}

} // namespace stylevec
