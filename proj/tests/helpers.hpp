#pragma once

// Shared oracles and utilities for the test suite. Oracles here are kept
// deliberately independent of the library implementations they check:
// truncated scaled Taylor series instead of Padé, QR least squares instead of
// Cholesky normal equations, plain loops instead of Eigen expressions.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "keec/numkit.hpp"
#include "keec/rng.hpp"

namespace testutil {

using keec::Matrix;
using keec::Rng;
using keec::Vector;

// 30-term Taylor series with scaling-and-squaring: independent oracle for
// mat_exp. Accurate to ~1e-14 relative for the norms used in tests.
inline Matrix exp_series(const Matrix& a, int terms = 30) {
    const auto n = a.rows();
    double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
    int s = 0;
    if (norm1 > 0.5) s = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
    Matrix b = a / std::exp2(s);
    Matrix sum = Matrix::Identity(n, n);
    Matrix term = Matrix::Identity(n, n);
    for (int k = 1; k <= terms; ++k) {
        term = (term * b) / static_cast<double>(k);
        sum += term;
    }
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum;
}

// Series oracle for phi1(A) = sum_k A^k/(k+1)!. No scaling: callers keep
// ||A|| small (<= ~2), where 40 terms are exact to double precision.
inline Matrix phi1_series(const Matrix& a, int terms = 40) {
    const auto n = a.rows();
    Matrix sum = Matrix::Zero(n, n);
    Matrix term = Matrix::Identity(n, n);  // A^k
    double fact = 1.0;                     // becomes (k+1)! in the loop
    for (int k = 0; k <= terms; ++k) {
        fact *= static_cast<double>(k + 1);
        sum += term / fact;
        term = term * a;
    }
    return sum;
}

inline double spectral_norm(const Matrix& a) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

inline Matrix random_matrix(Rng& rng, int rows, int cols, double lo = -1.0,
                            double hi = 1.0) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
    return m;
}

// Random square matrix rescaled to a given spectral norm.
inline Matrix random_with_spectral_norm(Rng& rng, int n, double target) {
    Matrix m = random_matrix(rng, n, n);
    double s = spectral_norm(m);
    return m * (target / s);
}

inline double rel_err(const Matrix& got, const Matrix& want) {
    double denom = std::max(want.norm(), 1e-300);
    return (got - want).norm() / denom;
}

// Spearman rank correlation (ties get their first-seen rank; inputs in tests
// are continuous so ties do not occur in practice).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
        return r;
    };
    std::vector<double> rx = ranks(x), ry = ranks(y);
    double n = static_cast<double>(x.size());
    double mx = (n - 1.0) / 2.0;
    double num = 0.0, dx = 0.0, dy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - mx);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - mx) * (ry[i] - mx);
    }
    return num / std::sqrt(dx * dy);
}

// Central finite difference of a scalar functional with respect to one
// in-place parameter. Restores the parameter afterwards.
template <class F>
double central_diff(double* p, double h, F&& f) {
    const double orig = *p;
    *p = orig + h;
    const double fp = f();
    *p = orig - h;
    const double fm = f();
    *p = orig;
    return (fp - fm) / (2.0 * h);
}

}  // namespace testutil
