#pragma once

#include <Eigen/Dense>

namespace keec {

// All dense math in the project runs on row-major 64-bit Eigen matrices.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace numkit {

// Throws NumericError if any entry is non-finite. `what` names the operand in
// the message.
void require_finite(const Matrix& a, const char* what);
void require_finite(const Vector& a, const char* what);

// Matrix exponential by scaling-and-squaring with a Padé(13,13) kernel.
// Relative error stays far below 1e-10 for the operator norms this project
// produces (generators scaled by dt).
Matrix mat_exp(const Matrix& a);

// phi1(A) = sum_{k>=0} A^k / (k+1)!  =  A^{-1}(exp(A) - I) when A is
// invertible, but computed via the augmented matrix exp([[A, I], [0, 0]])
// (top-right block) so singular A needs no special-casing.
Matrix phi1(const Matrix& a);

struct RidgeInfo {
    double eps_used = 0.0;  // regularizer actually applied
    bool bumped = false;    // true if eps was raised to factor the Gram matrix
};

// Solves min_W ||X W - Y||_F^2 + eps ||W||_F^2 via the normal equations
// (X^T X + eps I) W = X^T Y with a Cholesky factorization. If the Gram matrix
// is not positive definite at the requested eps, the regularizer is raised
// (starting at 1e-12) until it is, and the outcome is reported through `info`.
// A singular system with eps == 0 and no recovery throws RankError.
Matrix ridge_lstsq(const Matrix& x, const Matrix& y, double eps,
                   RidgeInfo* info = nullptr);

// Row-wise Kronecker product: out(i, j*d + k) = z(i, j) * a(i, k) where
// d = a.cols(). Rows of `out` are vec(z_i a_i^T) in row-major order.
Matrix colwise_kron(const Matrix& z, const Matrix& a);

}  // namespace numkit
}  // namespace keec
