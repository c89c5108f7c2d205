#include "effuse/linalg.hpp"

#include <cmath>
#include <vector>

namespace effuse {

Tensor spd_solve(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || a.rows() != a.cols() || b.rank() != 2 || b.rows() != a.rows()) {
        throw DimensionError("spd_solve: shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }
    const std::int64_t n = a.rows();
    const std::int64_t m = b.cols();
    std::vector<double> l(a.data().begin(), a.data().end());
    // In-place lower Cholesky factor.
    for (std::int64_t j = 0; j < n; ++j) {
        double diag = l[static_cast<std::size_t>(j * n + j)];
        for (std::int64_t k = 0; k < j; ++k) {
            const double v = l[static_cast<std::size_t>(j * n + k)];
            diag -= v * v;
        }
        if (!(diag > 0.0) || !std::isfinite(diag)) {
            throw NumericError("spd_solve: matrix is not positive definite (pivot " + std::to_string(j) + ")");
        }
        const double root = std::sqrt(diag);
        l[static_cast<std::size_t>(j * n + j)] = root;
        for (std::int64_t i = j + 1; i < n; ++i) {
            double v = l[static_cast<std::size_t>(i * n + j)];
            for (std::int64_t k = 0; k < j; ++k) {
                v -= l[static_cast<std::size_t>(i * n + k)] * l[static_cast<std::size_t>(j * n + k)];
            }
            l[static_cast<std::size_t>(i * n + j)] = v / root;
        }
    }
    std::vector<double> x(b.data().begin(), b.data().end());
    // Forward substitution L z = B, then back substitution L^T X = z,
    // column by column over the row-major layout.
    for (std::int64_t c = 0; c < m; ++c) {
        for (std::int64_t i = 0; i < n; ++i) {
            double v = x[static_cast<std::size_t>(i * m + c)];
            for (std::int64_t k = 0; k < i; ++k) {
                v -= l[static_cast<std::size_t>(i * n + k)] * x[static_cast<std::size_t>(k * m + c)];
            }
            x[static_cast<std::size_t>(i * m + c)] = v / l[static_cast<std::size_t>(i * n + i)];
        }
        for (std::int64_t i = n - 1; i >= 0; --i) {
            double v = x[static_cast<std::size_t>(i * m + c)];
            for (std::int64_t k = i + 1; k < n; ++k) {
                v -= l[static_cast<std::size_t>(k * n + i)] * x[static_cast<std::size_t>(k * m + c)];
            }
            x[static_cast<std::size_t>(i * m + c)] = v / l[static_cast<std::size_t>(i * n + i)];
        }
    }
    return Tensor::from({n, m}, std::move(x));
}

Tensor gram(const Tensor& x) { return cross_gram(x, x); }

Tensor cross_gram(const Tensor& x, const Tensor& y) {
    if (x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows()) {
        throw DimensionError("cross_gram: shapes " + shape_string(x.shape()) + " and " +
                             shape_string(y.shape()));
    }
    const std::int64_t n = x.rows(), dx = x.cols(), dy = y.cols();
    std::vector<double> out(static_cast<std::size_t>(dx * dy), 0.0);
    const auto xd = x.data();
    const auto yd = y.data();
    for (std::int64_t t = 0; t < n; ++t) {
        const std::size_t xr = static_cast<std::size_t>(t * dx);
        const std::size_t yr = static_cast<std::size_t>(t * dy);
        for (std::int64_t i = 0; i < dx; ++i) {
            const double xv = xd[xr + static_cast<std::size_t>(i)];
            if (xv == 0.0) continue;
            const std::size_t orow = static_cast<std::size_t>(i * dy);
            for (std::int64_t j = 0; j < dy; ++j) {
                out[orow + static_cast<std::size_t>(j)] += xv * yd[yr + static_cast<std::size_t>(j)];
            }
        }
    }
    return Tensor::from({dx, dy}, std::move(out));
}

}  // namespace effuse
