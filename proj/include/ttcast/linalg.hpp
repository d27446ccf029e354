#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ttcast/errors.hpp"

namespace ttcast {

// Solves A x = b for a small dense system by Gaussian elimination with
// partial pivoting. A is row-major n*n and is consumed.
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b,
                                       std::size_t n) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::abs(a[col * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::abs(a[r * n + col]);
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best == 0.0)
            throw data_error("singular system in least-squares solve");
        if (pivot != col) {
            for (std::size_t c = col; c < n; ++c)
                std::swap(a[pivot * n + c], a[col * n + c]);
            std::swap(b[pivot], b[col]);
        }
        const double diag = a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / diag;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t ri = n; ri-- > 0;) {
        double sum = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) sum -= a[ri * n + c] * x[c];
        x[ri] = sum / a[ri * n + ri];
    }
    return x;
}

} // namespace ttcast
