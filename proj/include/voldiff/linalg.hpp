#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "voldiff/errors.hpp"

namespace voldiff {

/// Small dense square matrix, row-major.
class Matrix {
  public:
    Matrix() = default;
    explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), a_(n * n, fill) {}

    std::size_t dim() const { return n_; }
    double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

    static Matrix identity(std::size_t n) {
        Matrix m(n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::vector<double> mul(const std::vector<double>& x) const {
        std::vector<double> y(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n_; ++j) s += a_[i * n_ + j] * x[j];
            y[i] = s;
        }
        return y;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : a_) m = std::max(m, std::abs(v));
        return m;
    }

  private:
    std::size_t n_ = 0;
    std::vector<double> a_;
};

struct GenEigenSolution {
    std::vector<double> values;              // ascending
    std::vector<std::vector<double>> vectors; // B-orthonormal columns
};

namespace detail {

/// Cholesky B = L L^T with a relative pivot floor; throws NotPositiveDefinite.
inline Matrix cholesky(const Matrix& B) {
    const std::size_t n = B.dim();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, B(i, i));
    const double floor = 1e-12 * max_diag;
    Matrix L(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = B(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
            if (i == j) {
                if (!(s > floor)) throw NotPositiveDefinite("matrix is not positive definite");
                L(i, i) = std::sqrt(s);
            } else {
                L(i, j) = s / L(j, j);
            }
        }
    }
    return L;
}

/// Cyclic Jacobi on a symmetric matrix; V accumulates rotations.
inline void jacobi(Matrix& C, Matrix& V) {
    const std::size_t n = C.dim();
    V = Matrix::identity(n);
    if (n < 2) return;
    const std::size_t max_rotations = 100 * n * n;
    std::size_t rotations = 0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += C(i, j) * C(i, j);
        double scale = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) scale += C(i, j) * C(i, j);
        if (off <= 1e-30 * std::max(scale, 1e-300)) return;
        for (std::size_t p = 0; p < n - 1; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = C(p, q);
                if (apq == 0.0) continue;
                double app = C(p, p), aqq = C(q, q);
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                        : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    double ckp = C(k, p), ckq = C(k, q);
                    C(k, p) = c * ckp - s * ckq;
                    C(k, q) = s * ckp + c * ckq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double cpk = C(p, k), cqk = C(q, k);
                    C(p, k) = c * cpk - s * cqk;
                    C(q, k) = s * cpk + c * cqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
                if (++rotations > max_rotations)
                    throw NoConvergence("Jacobi iteration cap exceeded");
            }
        }
    }
    throw NoConvergence("Jacobi sweeps did not reduce the off-diagonal norm");
}

} // namespace detail

/// Solve A v = lambda B v for symmetric A and SPD B.
/// Factor B = L L^T, reduce to the standard symmetric problem for
/// L^-1 A L^-T, diagonalize by Jacobi rotations, back-transform.
/// Values ascending; vectors are B-orthonormal.
inline GenEigenSolution gen_sym_eig(const Matrix& A, const Matrix& B) {
    const std::size_t n = A.dim();
    Matrix L = detail::cholesky(B);

    // C = L^-1 A L^-T
    Matrix W(n); // W = L^-1 A  (forward substitution per column)
    for (std::size_t col = 0; col < n; ++col) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = A(i, col);
            for (std::size_t k = 0; k < i; ++k) s -= L(i, k) * W(k, col);
            W(i, col) = s / L(i, i);
        }
    }
    Matrix C(n); // C = W L^-T, i.e. C^T = L^-1 W^T; use symmetry row-wise
    for (std::size_t row = 0; row < n; ++row) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = W(row, j);
            for (std::size_t k = 0; k < j; ++k) s -= L(j, k) * C(row, k);
            C(row, j) = s / L(j, j);
        }
    }
    for (std::size_t i = 0; i < n; ++i) // symmetrize roundoff
        for (std::size_t j = i + 1; j < n; ++j) {
            double m = 0.5 * (C(i, j) + C(j, i));
            C(i, j) = C(j, i) = m;
        }

    Matrix V;
    detail::jacobi(C, V);

    // back-transform columns: x = L^-T v
    GenEigenSolution sol;
    sol.values.resize(n);
    sol.vectors.assign(n, std::vector<double>(n, 0.0));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = C(i, i);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return diag[a] < diag[b]; });
    for (std::size_t idx = 0; idx < n; ++idx) {
        std::size_t col = order[idx];
        sol.values[idx] = diag[col];
        std::vector<double>& x = sol.vectors[idx];
        for (std::size_t ii = n; ii-- > 0;) {
            double s = V(ii, col);
            for (std::size_t k = ii + 1; k < n; ++k) s -= L(k, ii) * x[k];
            x[ii] = s / L(ii, ii);
        }
    }
    return sol;
}

} // namespace voldiff
