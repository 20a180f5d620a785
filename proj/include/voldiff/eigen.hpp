#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "voldiff/errors.hpp"
#include "voldiff/forms.hpp"
#include "voldiff/linalg.hpp"

namespace voldiff {

/// First nontrivial generalized eigenpair, with psi-basis coefficients.
/// Normalization: sum_{j>=1} c_j^2 = J (unit L2 derivative) and
/// sum_{j>=1} c_j >= 0. residual = max-abs of A c - value * B c.
struct Eigenpair {
    double value = 0.0;
    std::vector<double> coeffs; // c_0..c_J on the psi basis
    double residual = 0.0;
};

namespace detail {

inline void normalize_pair(Eigenpair& pair, int J) {
    double ss = 0.0, sum = 0.0;
    for (int j = 1; j <= J; ++j) {
        ss += pair.coeffs[static_cast<std::size_t>(j)] * pair.coeffs[static_cast<std::size_t>(j)];
        sum += pair.coeffs[static_cast<std::size_t>(j)];
    }
    if (!(ss > 0.0)) throw DegenerateSpectrum("eigenvector has no nonconstant part");
    double scale = std::sqrt(static_cast<double>(J) / ss);
    if (sum < 0.0) scale = -scale;
    for (double& c : pair.coeffs) c *= scale;
}

inline double pair_residual(const Matrix& A, const Matrix& B, const Eigenpair& pair) {
    std::vector<double> ax = A.mul(pair.coeffs);
    std::vector<double> bx = B.mul(pair.coeffs);
    double r = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i)
        r = std::max(r, std::abs(ax[i] - pair.value * bx[i]));
    return r;
}

} // namespace detail

/// Smallest nonzero eigenvalue of l u = gamma g u on V_J. The constant
/// eigenpair (gamma = 0) is dropped; the next value must be positive.
inline Eigenpair first_nontrivial_pair(const FormSet& forms) {
    const int J = forms.basis.J;
    GenEigenSolution sol = gen_sym_eig(forms.L, forms.G);
    // index 0 is the constant mode with eigenvalue ~0; take index 1
    const double scale = std::max(forms.L.max_abs(), 1e-300);
    if (std::abs(sol.values[0]) > 1e-6 * scale)
        throw DegenerateSpectrum("constant mode does not annihilate the Dirichlet form");
    if (!(sol.values[1] > 0.0))
        throw DegenerateSpectrum("first nontrivial eigenvalue is not positive");
    Eigenpair pair;
    pair.value = sol.values[1];
    pair.coeffs = sol.vectors[1];
    detail::normalize_pair(pair, J);
    pair.residual = detail::pair_residual(forms.L, forms.G, pair);
    if (pair.residual > 1e-8 * std::max(forms.L.max_abs(), 1.0))
        throw NoConvergence("eigenpair residual exceeds tolerance");
    return pair;
}

/// Smallest eigenvalue of f w = lambda g w on the centered space V_J^0,
/// with f the FZ-weighted diagonal stiffness and g represented by
/// M_ij = G_ij - o_i o_j. Returns psi-basis-style coefficients with c_0 = 0;
/// the eigenvector of the inverse problem is entrywise positive
/// (Perron-Frobenius) and is returned with positive sign.
inline Eigenpair eigen_fg(const FormSet& forms, const std::vector<double>& fz_values) {
    const int J = forms.basis.J;
    std::vector<double> fdiag = form_f_diag(forms, fz_values);
    Matrix A(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) A(j, j) = fdiag[static_cast<std::size_t>(j)];
    Matrix B(static_cast<std::size_t>(J));
    for (int i = 1; i <= J; ++i)
        for (int j = 1; j <= J; ++j)
            B(i - 1, j - 1) = forms.G(i, j) - forms.offsets[static_cast<std::size_t>(i)] *
                                                 forms.offsets[static_cast<std::size_t>(j)];
    GenEigenSolution sol = gen_sym_eig(A, B);
    if (!(sol.values[0] > 0.0))
        throw DegenerateSpectrum("leading f-g eigenvalue is not positive");
    Eigenpair pair;
    pair.value = sol.values[0];
    pair.coeffs.assign(static_cast<std::size_t>(J) + 1, 0.0);
    for (int j = 1; j <= J; ++j) pair.coeffs[static_cast<std::size_t>(j)] = sol.vectors[0][j - 1];
    detail::normalize_pair(pair, J);
    {
        std::vector<double> inner(pair.coeffs.begin() + 1, pair.coeffs.end());
        std::vector<double> ax = A.mul(inner), bx = B.mul(inner);
        double r = 0.0;
        for (std::size_t i = 0; i < ax.size(); ++i)
            r = std::max(r, std::abs(ax[i] - pair.value * bx[i]));
        pair.residual = r;
    }
    return pair;
}

namespace detail {

// Gauss-Legendre 16-point rule on [-1,1].
inline constexpr std::array<double, 8> kGauss16X = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
    0.7554044083550030, 0.8656312023878318, 0.9445750230732326, 0.9894009349916499};
inline constexpr std::array<double, 8> kGauss16W = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

template <class F>
double gauss16(F&& f, double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (int k = 0; k < 8; ++k) {
        s += kGauss16W[static_cast<std::size_t>(k)] *
             (f(mid - half * kGauss16X[static_cast<std::size_t>(k)]) +
              f(mid + half * kGauss16X[static_cast<std::size_t>(k)]));
    }
    return s * half;
}

} // namespace detail

/// Population analogue of the first eigenproblem on V_J: stiffness
/// (1/2) int psi_i' psi_j' sigma^2 mu (diagonal, since psi_j' = 1_j) against
/// mass int psi_i psi_j mu, both by 16-point Gauss per bin. The zero pair is
/// dropped and the first nontrivial pair normalized like the empirical one.
inline Eigenpair population_eigenpair(const std::function<double(double)>& sigma2,
                                      const std::function<double(double)>& mu, int J) {
    SplineBasis basis(J);
    const std::size_t dim = static_cast<std::size_t>(J) + 1;
    Matrix A(dim), B(dim);
    for (int j = 1; j <= J; ++j)
        A(j, j) = 0.5 * detail::gauss16([&](double x) { return sigma2(x) * mu(x); },
                                        basis.knot(j - 1), basis.knot(j));
    // mass matrix: integrate psi_i psi_j mu bin by bin (smooth on each bin)
    for (int i = 0; i <= J; ++i)
        for (int j = i; j <= J; ++j) {
            double s = 0.0;
            for (int k = std::max(j, 1); k <= J; ++k) // product vanishes below bin j
                s += detail::gauss16(
                    [&](double x) { return basis.psi(i, x) * basis.psi(j, x) * mu(x); },
                    basis.knot(k - 1), basis.knot(k));
            B(i, j) = B(j, i) = s;
        }
    GenEigenSolution sol = gen_sym_eig(A, B);
    if (std::abs(sol.values[0]) > 1e-8 * std::max(A.max_abs(), 1.0))
        throw DegenerateSpectrum("population zero mode missing");
    Eigenpair pair;
    pair.value = sol.values[1];
    pair.coeffs = sol.vectors[1];
    detail::normalize_pair(pair, J);
    pair.residual = detail::pair_residual(A, B, pair);
    return pair;
}

} // namespace voldiff
