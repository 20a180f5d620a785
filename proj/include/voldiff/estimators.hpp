#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "voldiff/eigen.hpp"
#include "voldiff/errors.hpp"
#include "voldiff/forms.hpp"
#include "voldiff/path.hpp"

namespace voldiff {

/// Piecewise-constant squared-volatility estimate on the J regular bins.
/// Bins where the estimator is undefined (empty or degenerate denominator)
/// are masked out.
struct PiecewiseVol {
    int J = 0;
    std::vector<double> values;  // size J, bin 1..J at index j-1
    std::vector<char> defined;   // size J

    double value_at(double x) const {
        int b = static_cast<int>(x * J) + 1;
        b = std::min(std::max(b, 1), J);
        return values[static_cast<std::size_t>(b - 1)];
    }
    bool defined_at(double x) const {
        int b = static_cast<int>(x * J) + 1;
        b = std::min(std::max(b, 1), J);
        return defined[static_cast<std::size_t>(b - 1)] != 0;
    }
};

/// Forward Florens-Zmirou on the regular bins: quadratic variation of the
/// steps started in a bin against the half-weighted occupation of that bin,
///   sigma2_j = (1/T) sum_{n<N} 1_j(X_n) (X_{n+1}-X_n)^2 / mu-hat(I_j).
inline PiecewiseVol fz_forward(const Sample& sample, int J) {
    SplineBasis basis(J);
    EmpiricalMeasure mu = empirical_measure(sample);
    const std::size_t N = sample.n();
    std::vector<Accum> num(static_cast<std::size_t>(J) + 1);
    std::vector<Accum> mass(static_cast<std::size_t>(J) + 1);
    for (std::size_t n = 0; n < N; ++n) {
        double dx = sample.values[n + 1] - sample.values[n];
        num[static_cast<std::size_t>(basis.bin(sample.values[n]))].add(dx * dx);
    }
    for (std::size_t i = 0; i < mu.atoms.size(); ++i)
        mass[static_cast<std::size_t>(basis.bin(mu.atoms[i]))].add(mu.weight(i));
    PiecewiseVol out{J, std::vector<double>(static_cast<std::size_t>(J), 0.0),
                     std::vector<char>(static_cast<std::size_t>(J), 0)};
    const double T = sample.horizon();
    for (int j = 1; j <= J; ++j) {
        double m = mass[static_cast<std::size_t>(j)].value();
        if (m > 0.0) {
            out.values[static_cast<std::size_t>(j - 1)] =
                num[static_cast<std::size_t>(j)].value() / (T * m);
            out.defined[static_cast<std::size_t>(j - 1)] = 1;
        }
    }
    return out;
}

/// Time-symmetric Florens-Zmirou: the average of the forward estimator on
/// the path and on the time-reversed path. Numerators pool the same squared
/// steps keyed at both endpoints; the occupation denominator is shared.
inline PiecewiseVol fz_symmetric(const Sample& sample, int J) {
    PiecewiseVol fwd = fz_forward(sample, J);
    Sample rev;
    rev.delta = sample.delta;
    rev.values.assign(sample.values.rbegin(), sample.values.rend());
    PiecewiseVol bwd = fz_forward(rev, J);
    PiecewiseVol out{J, std::vector<double>(static_cast<std::size_t>(J), 0.0),
                     std::vector<char>(static_cast<std::size_t>(J), 0)};
    for (int j = 0; j < J; ++j) {
        std::size_t u = static_cast<std::size_t>(j);
        if (fwd.defined[u] && bwd.defined[u]) {
            out.values[u] = 0.5 * (fwd.values[u] + bwd.values[u]);
            out.defined[u] = 1;
        }
    }
    return out;
}

/// Spectral quantities shared by the averaged and GHR estimators.
struct SpectralIntermediates {
    Eigenpair pair;           // (gamma1, u1) of l u = gamma g u
    double gamma1 = 0.0;
    double zeta1 = 0.0;       // log(1 - Delta gamma1)/Delta, 0 when undefined
    double kappa1 = 0.0;      // 1 - Delta gamma1
    bool zeta_undefined = false;
    bool near_singular = false;
};

inline SpectralIntermediates spectral_intermediates(const FormSet& forms) {
    SpectralIntermediates s;
    s.pair = first_nontrivial_pair(forms);
    s.gamma1 = s.pair.value;
    s.kappa1 = 1.0 - forms.delta * s.gamma1;
    if (s.kappa1 > 0.0) {
        s.zeta1 = std::log(s.kappa1) / forms.delta;
        s.near_singular = std::abs(s.zeta1) > 1e3 / forms.delta;
    } else {
        s.zeta_undefined = true;
    }
    return s;
}

namespace detail {

inline PiecewiseVol spectral_from_numden(const FormSet& forms, const std::vector<double>& num,
                                         const std::vector<double>& coeffs,
                                         std::optional<double> cap) {
    const int J = forms.basis.J;
    double cmax = 0.0;
    for (int j = 1; j <= J; ++j) cmax = std::max(cmax, std::abs(coeffs[static_cast<std::size_t>(j)]));
    PiecewiseVol out{J, std::vector<double>(static_cast<std::size_t>(J), 0.0),
                     std::vector<char>(static_cast<std::size_t>(J), 0)};
    for (int j = 1; j <= J; ++j) {
        double c = coeffs[static_cast<std::size_t>(j)];
        double m = forms.bin_mass[static_cast<std::size_t>(j)];
        if (m > 0.0 && std::abs(c) > 1e-12 * cmax) {
            double v = num[static_cast<std::size_t>(j)] / (c * m);
            if (cap) v = std::min(v, *cap);
            out.values[static_cast<std::size_t>(j - 1)] = v;
            out.defined[static_cast<std::size_t>(j - 1)] = 1;
        }
    }
    return out;
}

} // namespace detail

/// Locally averaged spectral estimator,
///   sigma2_j = -2 zeta1 g(psi_j, u1) / (c_j mu-hat(I_j)),
/// optionally clipped from above at `cap` (the a-priori bound D).
inline PiecewiseVol spectral_averaged(const FormSet& forms, const SpectralIntermediates& s,
                                      std::optional<double> cap = {}) {
    if (s.zeta_undefined) throw DegenerateSpectrum("zeta1 undefined: Delta * gamma1 >= 1");
    std::vector<double> gc = forms.G.mul(s.pair.coeffs);
    for (double& v : gc) v *= -2.0 * s.zeta1;
    return detail::spectral_from_numden(forms, gc, s.pair.coeffs, cap);
}

/// Companion estimator with the Dirichlet form in the numerator,
///   sigma2_j = 2 l(psi_j, u1) / (c_j mu-hat(I_j));
/// identical to spectral_averaged up to the factor -zeta1/gamma1.
inline PiecewiseVol spectral_tilde(const FormSet& forms, const SpectralIntermediates& s,
                                   std::optional<double> cap = {}) {
    std::vector<double> lc = forms.L.mul(s.pair.coeffs);
    for (double& v : lc) v *= 2.0;
    return detail::spectral_from_numden(forms, lc, s.pair.coeffs, cap);
}

inline PiecewiseVol spectral_averaged(const Sample& sample, int J, std::optional<double> cap = {}) {
    FormSet forms = build_forms(sample, SplineBasis(J));
    return spectral_averaged(forms, spectral_intermediates(forms), cap);
}

/// Pointwise GHR estimate,
///   sigma2(x) = 2 zeta1 * int_0^x u1 d(mu-hat) / (u1'(x) * mu-tilde(x)),
/// where mu-tilde is the L2(dx) projection of mu-hat onto the spline space.
class GhrEstimate {
  public:
    GhrEstimate(const Sample& sample, int J) : GhrEstimate(sample, build_forms(sample, SplineBasis(J))) {}

    GhrEstimate(const Sample& sample, const FormSet& forms)
        : GhrEstimate(sample, forms, spectral_intermediates(forms)) {}

    GhrEstimate(const Sample& sample, const FormSet& forms, const SpectralIntermediates& inter)
        : basis_(forms.basis), inter_(inter) {
        if (inter_.zeta_undefined)
            throw DegenerateSpectrum("zeta1 undefined: Delta * gamma1 >= 1");

        // numerator: atomic prefix sums of w_i * u1(x_i) over sorted atoms
        EmpiricalMeasure mu = empirical_measure(sample);
        std::vector<std::pair<double, double>> pts(mu.atoms.size());
        for (std::size_t i = 0; i < mu.atoms.size(); ++i) pts[i] = {mu.atoms[i], mu.weight(i)};
        std::sort(pts.begin(), pts.end());
        atom_x_.resize(pts.size());
        prefix_.resize(pts.size());
        Accum a;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            atom_x_[i] = pts[i].first;
            a.add(pts[i].second * u1(pts[i].first));
            prefix_[i] = a.value();
        }

        // denominator density: solve Gram * a = offsets in L2(dx)
        density_coeffs_ = detail_solve_gram(forms.offsets, basis_.J);
    }

    double zeta1() const { return inter_.zeta1; }
    const SpectralIntermediates& intermediates() const { return inter_; }

    double u1(double x) const {
        double v = inter_.pair.coeffs[0];
        for (int j = 1; j <= basis_.J; ++j)
            v += inter_.pair.coeffs[static_cast<std::size_t>(j)] * basis_.psi(j, x);
        return v;
    }

    double u1_prime(double x) const {
        return inter_.pair.coeffs[static_cast<std::size_t>(basis_.bin(x))];
    }

    double density(double x) const {
        double v = density_coeffs_[0];
        for (int j = 1; j <= basis_.J; ++j)
            v += density_coeffs_[static_cast<std::size_t>(j)] * basis_.psi(j, x);
        return v;
    }

    /// int_{[0,x)} u1 d(mu-hat)
    double numerator_integral(double x) const {
        auto it = std::lower_bound(atom_x_.begin(), atom_x_.end(), x);
        if (it == atom_x_.begin()) return 0.0;
        return prefix_[static_cast<std::size_t>(it - atom_x_.begin()) - 1];
    }

    std::optional<double> at(double x) const {
        double den = u1_prime(x) * density(x);
        if (std::abs(den) < 1e-12) return std::nullopt;
        return 2.0 * inter_.zeta1 * numerator_integral(x) / den;
    }

  private:
    // Analytic Lebesgue Gram of (psi_0..psi_J), Cholesky solve.
    static std::vector<double> detail_solve_gram(const std::vector<double>& rhs, int J) {
        const std::size_t dim = static_cast<std::size_t>(J) + 1;
        Matrix Gram(dim);
        const double invJ = 1.0 / J;
        Gram(0, 0) = 1.0;
        for (int j = 1; j <= J; ++j) {
            double tail = 1.0 - static_cast<double>(j) * invJ;
            Gram(0, j) = Gram(j, 0) = invJ * (tail + 0.5 * invJ);
            Gram(j, j) = invJ * invJ * (invJ / 3.0 + tail);
            for (int i = 1; i < j; ++i)
                Gram(i, j) = Gram(j, i) = invJ * invJ * (tail + 0.5 * invJ);
        }
        Matrix Lc = detail::cholesky(Gram);
        std::vector<double> y(dim), x(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            double s = rhs[i];
            for (std::size_t k = 0; k < i; ++k) s -= Lc(i, k) * y[k];
            y[i] = s / Lc(i, i);
        }
        for (std::size_t i = dim; i-- > 0;) {
            double s = y[i];
            for (std::size_t k = i + 1; k < dim; ++k) s -= Lc(k, i) * x[k];
            x[i] = s / Lc(i, i);
        }
        return x;
    }

    SplineBasis basis_;
    SpectralIntermediates inter_;
    std::vector<double> atom_x_, prefix_;
    std::vector<double> density_coeffs_;
};

/// Level-crossing statistics at level alpha over the coarse sample:
/// chi_n = 1_{[0,alpha)}(X_{n+1}) - 1_{[0,alpha)}(X_n), returning
/// (sum |chi_n| (X_{n+1}-X_n)^2, sum chi_n ((X_{n+1}-alpha)^2 - (X_n-alpha)^2)).
inline std::pair<double, double> crossing_stat(const Sample& sample, double alpha) {
    Accum uns, sgn;
    for (std::size_t n = 0; n < sample.n(); ++n) {
        double a = sample.values[n], b = sample.values[n + 1];
        int chi = (b < alpha ? 1 : 0) - (a < alpha ? 1 : 0);
        if (chi == 0) continue;
        double dx = b - a;
        uns.add(dx * dx);
        sgn.add(chi * ((b - alpha) * (b - alpha) - (a - alpha) * (a - alpha)));
    }
    return {uns.value(), sgn.value()};
}

/// Gap between the (fine, left-point) occupation time of [0,alpha) and its
/// coarse Riemann approximation over the sample times.
inline double occupation_riemann_gap(const FinePath& path, const Sample& sample, double alpha) {
    Accum fine;
    for (std::size_t k = 0; k < path.steps(); ++k)
        if (path.values[k] < alpha) fine.add(1.0);
    double occ = fine.value() / static_cast<double>(path.steps());
    Accum coarse;
    for (std::size_t n = 0; n < sample.n(); ++n)
        if (sample.values[n] < alpha) coarse.add(1.0);
    double riem = coarse.value() / static_cast<double>(sample.n());
    return occ - riem;
}

} // namespace voldiff
