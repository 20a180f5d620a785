#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "voldiff/errors.hpp"
#include "voldiff/linalg.hpp"
#include "voldiff/path.hpp"

namespace voldiff {

/// Linear-spline space V_J on J regular bins: psi_0 = 1 and the integrated
/// bin indicators psi_j(x) = int_0^x 1_j. Bins are half-open, the last one
/// closed so that the indicators sum to 1 on all of [0,1].
struct SplineBasis {
    int J;

    explicit SplineBasis(int j) : J(j) {
        if (j < 2) throw ConfigError("spline basis needs J >= 2");
    }

    /// 1-based bin index of x in [0,1].
    int bin(double x) const {
        int b = static_cast<int>(x * J) + 1;
        return std::min(std::max(b, 1), J);
    }

    double knot(int j) const { return static_cast<double>(j) / J; }

    double psi(int j, double x) const {
        if (j == 0) return 1.0;
        return std::clamp(x - knot(j - 1), 0.0, 1.0 / J);
    }

    /// psi_j'(x) = 1_j(x)
    double indicator(int j, double x) const { return bin(x) == j ? 1.0 : 0.0; }
};

/// Kahan compensated accumulator.
class Accum {
  public:
    void add(double v) {
        double y = v - c_;
        double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

  private:
    double s_ = 0.0, c_ = 0.0;
};

/// Atoms at the observations, endpoints half-weighted: (1/2N, 1/N, ..., 1/N, 1/2N).
struct EmpiricalMeasure {
    std::vector<double> atoms;
    std::size_t n = 0; // N

    double weight(std::size_t i) const {
        double w = 1.0 / static_cast<double>(n);
        return (i == 0 || i + 1 == atoms.size()) ? 0.5 * w : w;
    }
};

inline EmpiricalMeasure empirical_measure(const Sample& sample) {
    if (sample.n() < 2) throw TooFewObservations("empirical measure needs N >= 2");
    return EmpiricalMeasure{sample.values, sample.n()};
}

/// The bilinear forms of the spectral construction on V_J, with the centered
/// coordinate data for V_J^0. Matrices are (J+1)x(J+1) on the psi basis.
struct FormSet {
    SplineBasis basis;
    double delta = 0.0;
    std::size_t n = 0; // N

    Matrix G; // g-hat(psi_i, psi_j)
    Matrix L; // l-hat(psi_i, psi_j)
    Matrix P; // p-hat(psi_i, psi_j)

    std::vector<double> offsets;     // int psi_j d(mu-hat), j=0..J (offsets[0]=1)
    std::vector<double> bin_mass;    // mu-hat mass of bin j, index 1..J (index 0 unused)
    std::vector<long> visit_counts;  // observations per bin, index 1..J
    bool all_bins_visited_twice = true;

    double horizon() const { return delta * static_cast<double>(n); }
};

namespace detail {

/// g-hat from per-bin sufficient statistics: for atoms in bin k,
/// psi_i = 1/J for i<k, the ramp r for i=k, 0 above.
inline void build_g(const EmpiricalMeasure& mu, const SplineBasis& basis, Matrix& G,
                    std::vector<double>& bin_mass) {
    const int J = basis.J;
    std::vector<Accum> m(J + 1), s(J + 1), q(J + 1); // mass, sum w*r, sum w*r^2 per bin
    for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
        double x = mu.atoms[i];
        double w = mu.weight(i);
        int k = basis.bin(x);
        double r = x - basis.knot(k - 1);
        m[k].add(w);
        s[k].add(w * r);
        q[k].add(w * r * r);
    }
    bin_mass.assign(J + 1, 0.0);
    for (int k = 1; k <= J; ++k) bin_mass[k] = m[k].value();

    std::vector<double> mass_above(J + 2, 0.0); // sum of bin masses strictly above j
    for (int j = J; j >= 1; --j) mass_above[j] = mass_above[j + 1] + bin_mass[j];

    const double invJ = 1.0 / J;
    G = Matrix(static_cast<std::size_t>(J) + 1);
    G(0, 0) = 1.0;
    for (int j = 1; j <= J; ++j) {
        double off = s[j].value() + invJ * mass_above[j + 1];
        G(0, j) = G(j, 0) = off;
        G(j, j) = q[j].value() + invJ * invJ * mass_above[j + 1];
        for (int i = 1; i < j; ++i)
            G(i, j) = G(j, i) = invJ * s[j].value() + invJ * invJ * mass_above[j + 1];
    }
}

/// l-hat by per-step local increments (psi_i changes only between the two bins).
inline void build_l(const Sample& sample, const SplineBasis& basis, Matrix& L) {
    const int J = basis.J;
    const std::size_t N = sample.n();
    L = Matrix(static_cast<std::size_t>(J) + 1);
    std::vector<Accum> flat((J + 1) * (J + 1));
    std::vector<double> d(static_cast<std::size_t>(J) + 1, 0.0);
    for (std::size_t ni = 0; ni < N; ++ni) {
        double a = sample.values[ni], b = sample.values[ni + 1];
        int ka = basis.bin(a), kb = basis.bin(b);
        int lo = std::min(ka, kb), hi = std::max(ka, kb);
        for (int j = lo; j <= hi; ++j) d[j] = basis.psi(j, b) - basis.psi(j, a);
        for (int i = lo; i <= hi; ++i)
            for (int j = i; j <= hi; ++j) flat[i * (J + 1) + j].add(d[i] * d[j]);
    }
    const double scale = 1.0 / (2.0 * sample.horizon());
    for (int i = 1; i <= J; ++i)
        for (int j = i; j <= J; ++j) {
            double v = flat[i * (J + 1) + j].value() * scale;
            L(i, j) = L(j, i) = v;
        }
    // row/col 0 are exactly zero: psi_0 has no increments
}

/// p-hat directly from its definition via suffix sums over the joint
/// (bin, ramp) statistics of consecutive pairs; O(N + J^2).
inline void build_p(const Sample& sample, const SplineBasis& basis, Matrix& P) {
    const int J = basis.J;
    const std::size_t N = sample.n();
    const double invJ = 1.0 / J;
    const std::size_t dim = static_cast<std::size_t>(J) + 1;

    // joint statistics over pairs (k = bin(x_n), l = bin(x_{n+1})), 1-based
    std::vector<double> cnt(dim * dim, 0.0), rm(dim * dim, 0.0), sm(dim * dim, 0.0),
        rs(dim * dim, 0.0);
    for (std::size_t ni = 0; ni < N; ++ni) {
        double a = sample.values[ni], b = sample.values[ni + 1];
        int k = basis.bin(a), l = basis.bin(b);
        double r = a - basis.knot(k - 1);
        double s = b - basis.knot(l - 1);
        std::size_t id = static_cast<std::size_t>(k) * dim + static_cast<std::size_t>(l);
        cnt[id] += 1.0;
        rm[id] += r;
        sm[id] += s;
        rs[id] += r * s;
    }
    // 2D suffix count: cnt2[i][j] = #{pairs with k>i, l>j}
    std::vector<double> cnt2((J + 2) * (J + 2), 0.0);
    auto C2 = [&](int i, int j) -> double& { return cnt2[i * (J + 2) + j]; };
    for (int i = J; i >= 1; --i)
        for (int j = J; j >= 1; --j)
            C2(i, j) = cnt[static_cast<std::size_t>(i) * dim + j] + C2(i + 1, j) + C2(i, j + 1) -
                       C2(i + 1, j + 1);
    // row suffix of rm over l, column suffix of sm over k
    std::vector<double> rm_suf(dim * (J + 2), 0.0), sm_suf((J + 2) * dim, 0.0);
    for (int k = 1; k <= J; ++k)
        for (int j = J; j >= 1; --j)
            rm_suf[k * (J + 2) + j] = rm[static_cast<std::size_t>(k) * dim + j] + rm_suf[k * (J + 2) + j + 1];
    for (int l = 1; l <= J; ++l)
        for (int i = J; i >= 1; --i)
            sm_suf[i * dim + l] = sm[static_cast<std::size_t>(i) * dim + l] + sm_suf[(i + 1) * dim + l];

    P = Matrix(dim);
    auto T = [&](int i, int j) { // sum_n psi_i(x_n) psi_j(x_{n+1})
        return invJ * invJ * C2(i + 1, j + 1)      // k>i, l>j
               + invJ * rm_suf[i * (J + 2) + j + 1] // k=i, l>j
               + invJ * sm_suf[(i + 1) * dim + j]   // k>i, l=j
               + rs[static_cast<std::size_t>(i) * dim + j];
    };
    const double half_n = 0.5 / static_cast<double>(N);
    for (int i = 1; i <= J; ++i)
        for (int j = i; j <= J; ++j) {
            double v = half_n * (T(i, j) + T(j, i));
            P(i, j) = P(j, i) = v;
        }
    // rows with psi_0 == 1
    P(0, 0) = 1.0;
    for (int j = 1; j <= J; ++j) {
        Accum a;
        for (std::size_t ni = 0; ni < N; ++ni)
            a.add(basis.psi(j, sample.values[ni]) + basis.psi(j, sample.values[ni + 1]));
        P(0, j) = P(j, 0) = half_n * a.value();
    }
}

} // namespace detail

inline std::vector<long> visit_counts(const Sample& sample, const SplineBasis& basis) {
    std::vector<long> counts(static_cast<std::size_t>(basis.J) + 1, 0);
    for (double x : sample.values) ++counts[static_cast<std::size_t>(basis.bin(x))];
    return counts;
}

inline FormSet build_forms(const Sample& sample, const SplineBasis& basis) {
    if (sample.n() < 2) throw TooFewObservations("forms need N >= 2");
    FormSet f{basis};
    f.delta = sample.delta;
    f.n = sample.n();

    EmpiricalMeasure mu = empirical_measure(sample);
    detail::build_g(mu, basis, f.G, f.bin_mass);
    detail::build_l(sample, basis, f.L);
    detail::build_p(sample, basis, f.P);

    f.offsets.resize(static_cast<std::size_t>(basis.J) + 1);
    for (int j = 0; j <= basis.J; ++j) f.offsets[static_cast<std::size_t>(j)] = f.G(0, j);

    f.visit_counts = visit_counts(sample, basis);
    for (int j = 1; j <= basis.J; ++j)
        if (f.visit_counts[static_cast<std::size_t>(j)] < 2) f.all_bins_visited_twice = false;

    // identity l = (g - p)/Delta, checked entrywise on construction
    const double tol = 1e-10 * std::max(1.0, f.L.max_abs());
    for (int i = 0; i <= basis.J; ++i)
        for (int j = 0; j <= basis.J; ++j) {
            double lhs = f.L(i, j);
            double rhs = (f.G(i, j) - f.P(i, j)) / f.delta;
            if (std::abs(lhs - rhs) > tol)
                throw Error("form identity l = (g - p)/Delta violated during assembly");
        }
    return f;
}

inline std::vector<double> centered_offsets(const FormSet& forms) {
    return {forms.offsets.begin() + 1, forms.offsets.end()};
}

/// Gram matrix of the centered splines psi_j^0 under mu-hat; equals the exact
/// double integral of empirical CDF x survival over bin pairs.
/// Computed here exactly from the atoms (piecewise-polynomial integrand).
inline Matrix matrix_M(const EmpiricalMeasure& mu, const SplineBasis& basis) {
    const int J = basis.J;
    // sorted atoms with weights
    std::vector<std::pair<double, double>> pts(mu.atoms.size());
    for (std::size_t i = 0; i < mu.atoms.size(); ++i) pts[i] = {mu.atoms[i], mu.weight(i)};
    std::sort(pts.begin(), pts.end());

    // For each bin: u_j = int_bin F(y) dy, v_j = int_bin S(y) dy, and the
    // diagonal term 2 int_bin S(y) int_{left}^{y} F dz dy, all exact between
    // consecutive breakpoints (atoms and bin edges).
    std::vector<double> u(J + 1, 0.0), v(J + 1, 0.0), diag(J + 1, 0.0);
    std::size_t p = 0;
    double F_before = 0.0; // total weight of atoms strictly left of current position
    for (int j = 1; j <= J; ++j) {
        double left = basis.knot(j - 1), right = basis.knot(j);
        // advance over atoms at or before 'left' (atoms exactly at bin edge count as < y for y>left)
        while (p < pts.size() && pts[p].first <= left) F_before += pts[p++].second;
        double y = left;
        double F = F_before;
        double A = 0.0; // int_left^y F
        std::size_t pp = p;
        while (y < right) {
            double next = right;
            if (pp < pts.size() && pts[pp].first < right) next = pts[pp].first;
            double h = next - y;
            double S = 1.0 - F; // atoms >= y side; F counts atoms < y
            u[j] += F * h;
            v[j] += S * h;
            diag[j] += 2.0 * S * (A * h + 0.5 * F * h * h);
            A += F * h;
            y = next;
            while (pp < pts.size() && pts[pp].first == next && next < right) F += pts[pp++].second;
        }
        F_before = F;
        p = pp;
    }

    Matrix M(static_cast<std::size_t>(J));
    for (int i = 1; i <= J; ++i) {
        M(i - 1, i - 1) = diag[i];
        for (int j = i + 1; j <= J; ++j) M(i - 1, j - 1) = M(j - 1, i - 1) = u[i] * v[j];
    }
    return M;
}

/// Diagonal of the FZ-weighted stiffness form f-hat: entry j is
/// (1/2) * fz_j * mu-hat(bin j). Off-diagonals vanish since 1_i 1_j = 0.
inline std::vector<double> form_f_diag(const FormSet& forms, const std::vector<double>& fz_values) {
    const int J = forms.basis.J;
    if (static_cast<int>(fz_values.size()) != J)
        throw ConfigError("form_f: fz must be defined on the same J bins");
    std::vector<double> diag(static_cast<std::size_t>(J));
    for (int j = 1; j <= J; ++j)
        diag[static_cast<std::size_t>(j - 1)] =
            0.5 * fz_values[static_cast<std::size_t>(j - 1)] * forms.bin_mass[static_cast<std::size_t>(j)];
    return diag;
}

} // namespace voldiff
