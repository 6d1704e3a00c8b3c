#include "keec/numkit.hpp"

#include <cmath>
#include <string>

#include "keec/errors.hpp"

namespace keec::numkit {

void require_finite(const Matrix& a, const char* what) {
    if (!a.allFinite()) {
        throw NumericError(std::string(what) + " contains non-finite entries");
    }
}

void require_finite(const Vector& a, const char* what) {
    if (!a.allFinite()) {
        throw NumericError(std::string(what) + " contains non-finite entries");
    }
}

Matrix mat_exp(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw DimensionError("mat_exp: matrix must be square, got " +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
    }
    require_finite(a, "mat_exp input");
    const auto n = a.rows();
    const Matrix ident = Matrix::Identity(n, n);
    if (n == 0) return Matrix(0, 0);

    // Padé(13,13) coefficients (Higham 2005). theta_13 is the 1-norm bound
    // under which the unscaled approximant already meets double precision.
    static const double b[] = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0,  129060195264000.0,   10559470521600.0,
        670442572800.0,      33522128640.0,       1323241920.0,
        40840800.0,          960960.0,            16380.0,
        182.0,               1.0};
    const double theta13 = 5.371920351148152;

    const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm1 > theta13) {
        squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
    }
    const Matrix as = a / std::exp2(squarings);

    const Matrix a2 = as * as;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a2 * a4;
    const Matrix u = as * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) +
                           b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
    const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) +
                     b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;

    // exp(as) ~= (V - U)^{-1} (V + U)
    Matrix e = (v - u).partialPivLu().solve(v + u);
    for (int i = 0; i < squarings; ++i) e = e * e;
    require_finite(e, "mat_exp result");
    return e;
}

Matrix phi1(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw DimensionError("phi1: matrix must be square");
    }
    const auto n = a.rows();
    Matrix aug = Matrix::Zero(2 * n, 2 * n);
    aug.topLeftCorner(n, n) = a;
    aug.topRightCorner(n, n) = Matrix::Identity(n, n);
    return mat_exp(aug).topRightCorner(n, n);
}

Matrix ridge_lstsq(const Matrix& x, const Matrix& y, double eps, RidgeInfo* info) {
    if (x.rows() != y.rows()) {
        throw DimensionError("ridge_lstsq: X has " + std::to_string(x.rows()) +
                             " rows, Y has " + std::to_string(y.rows()));
    }
    if (eps < 0.0 || !std::isfinite(eps)) {
        throw ConfigError("ridge_lstsq: eps must be finite and >= 0");
    }
    require_finite(x, "ridge_lstsq X");
    require_finite(y, "ridge_lstsq Y");

    const auto p = x.cols();
    const Matrix gram0 = x.transpose() * x;
    const Matrix xty = x.transpose() * y;
    const Matrix ident = Matrix::Identity(p, p);

    // An LLT success certifies positive definiteness. eps == 0 on a singular
    // system violates the caller contract and is a hard error; with eps > 0 a
    // failed factorization means eps is numerically too small, so it is raised
    // decade by decade (floor 1e-12) and the outcome reported to the caller.
    double eps_try = eps;
    for (int attempt = 0; attempt < 24; ++attempt) {
        Eigen::LLT<Matrix> llt(gram0 + eps_try * ident);
        if (llt.info() == Eigen::Success) {
            Matrix w = llt.solve(xty);
            require_finite(w, "ridge_lstsq solution");
            if (info) {
                info->eps_used = eps_try;
                info->bumped = eps_try != eps;
            }
            return w;
        }
        if (eps == 0.0) {
            throw RankError("ridge_lstsq: Gram matrix is rank-deficient and eps = 0");
        }
        eps_try = std::max(1e-12, eps_try * 10.0);
    }
    throw RankError("ridge_lstsq: Gram matrix not positive definite even after "
                    "raising eps to " + std::to_string(eps_try));
}

Matrix colwise_kron(const Matrix& z, const Matrix& a) {
    if (z.rows() != a.rows()) {
        throw DimensionError("colwise_kron: row counts differ (" +
                             std::to_string(z.rows()) + " vs " +
                             std::to_string(a.rows()) + ")");
    }
    const auto rows = z.rows(), n = z.cols(), d = a.cols();
    Matrix out(rows, n * d);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index k = 0; k < d; ++k) {
                out(i, j * d + k) = z(i, j) * a(i, k);
            }
        }
    }
    return out;
}

}  // namespace keec::numkit
