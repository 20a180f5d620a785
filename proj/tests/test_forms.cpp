#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "voldiff/forms.hpp"
#include "voldiff/rng.hpp"

using namespace voldiff;

namespace {

Sample make_sample(std::vector<double> xs, double delta) {
    Sample s;
    s.delta = delta;
    s.values = std::move(xs);
    return s;
}

// Direct O(N J^2) evaluation of all three forms from their definitions.
struct BruteForms {
    Matrix G, L, P;
};

BruteForms brute_forms(const Sample& s, const SplineBasis& basis) {
    const int J = basis.J;
    const std::size_t N = s.n();
    const std::size_t dim = static_cast<std::size_t>(J) + 1;
    BruteForms b{Matrix(dim), Matrix(dim), Matrix(dim)};
    EmpiricalMeasure mu = empirical_measure(s);
    for (int i = 0; i <= J; ++i)
        for (int j = 0; j <= J; ++j) {
            double g = 0.0, l = 0.0, p = 0.0;
            for (std::size_t k = 0; k < mu.atoms.size(); ++k)
                g += mu.weight(k) * basis.psi(i, mu.atoms[k]) * basis.psi(j, mu.atoms[k]);
            for (std::size_t n = 0; n < N; ++n) {
                double du = basis.psi(i, s.values[n + 1]) - basis.psi(i, s.values[n]);
                double dv = basis.psi(j, s.values[n + 1]) - basis.psi(j, s.values[n]);
                l += du * dv;
                p += basis.psi(i, s.values[n]) * basis.psi(j, s.values[n + 1]) +
                     basis.psi(j, s.values[n]) * basis.psi(i, s.values[n + 1]);
            }
            b.G(i, j) = g;
            b.L(i, j) = l / (2.0 * s.horizon());
            b.P(i, j) = p / (2.0 * static_cast<double>(N));
        }
    return b;
}

double max_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i)
        for (std::size_t j = 0; j < a.dim(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
    return m;
}

} // namespace

TEST_CASE("spline basis: bins, knots and hat integrals") {
    SplineBasis b(4);
    CHECK(b.bin(0.0) == 1);
    CHECK(b.bin(0.24) == 1);
    CHECK(b.bin(0.25) == 2);
    CHECK(b.bin(0.999) == 4);
    CHECK(b.bin(1.0) == 4); // last bin closed
    CHECK(b.psi(0, 0.37) == doctest::Approx(1.0));
    CHECK(b.psi(2, 0.2) == doctest::Approx(0.0));
    CHECK(b.psi(2, 0.3) == doctest::Approx(0.05));
    CHECK(b.psi(2, 0.6) == doctest::Approx(0.25));
    CHECK(b.psi(2, 1.0) == doctest::Approx(0.25));
    CHECK_THROWS_AS(SplineBasis(1), ConfigError);
}

TEST_CASE("empirical measure half-weights the endpoints") {
    Sample s = make_sample({0.2, 0.3, 0.7}, 0.5);
    EmpiricalMeasure mu = empirical_measure(s);
    CHECK(mu.weight(0) == doctest::Approx(0.25));
    CHECK(mu.weight(1) == doctest::Approx(0.5));
    CHECK(mu.weight(2) == doctest::Approx(0.25));
    CHECK_THROWS_AS(empirical_measure(make_sample({0.1, 0.2}, 0.5)), TooFewObservations);
}

TEST_CASE("hand-computed forms on a three-point sample") {
    Sample s = make_sample({0.2, 0.3, 0.7}, 0.5);
    FormSet f = build_forms(s, SplineBasis(2));

    CHECK(f.G(0, 0) == doctest::Approx(1.0));
    CHECK(f.G(0, 1) == doctest::Approx(0.325));
    CHECK(f.G(0, 2) == doctest::Approx(0.05));
    CHECK(f.G(1, 1) == doctest::Approx(0.1175));
    CHECK(f.G(1, 2) == doctest::Approx(0.025));
    CHECK(f.G(2, 2) == doctest::Approx(0.01));

    CHECK(f.L(0, 0) == doctest::Approx(0.0));
    CHECK(f.L(0, 1) == doctest::Approx(0.0));
    CHECK(f.L(1, 1) == doctest::Approx(0.025));
    CHECK(f.L(1, 2) == doctest::Approx(0.02));
    CHECK(f.L(2, 2) == doctest::Approx(0.02));

    CHECK(f.P(1, 1) == doctest::Approx(0.105));
    CHECK(f.P(0, 1) == doctest::Approx(0.325));
    CHECK(f.P(0, 0) == doctest::Approx(1.0));

    CHECK(f.offsets[1] == doctest::Approx(0.325));
    CHECK(f.offsets[2] == doctest::Approx(0.05));
    CHECK(f.bin_mass[1] == doctest::Approx(0.75));
    CHECK(f.bin_mass[2] == doctest::Approx(0.25));
    CHECK(f.visit_counts[1] == 2);
    CHECK(f.visit_counts[2] == 1);
    CHECK_FALSE(f.all_bins_visited_twice);
}

TEST_CASE("fast assembly agrees with the brute-force definitions") {
    RngStream rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        int N = 3 + static_cast<int>(rng.uniform() * 400);
        int J = 2 + static_cast<int>(rng.uniform() * 14);
        Sample s;
        s.delta = 0.01 + rng.uniform();
        s.values.resize(static_cast<std::size_t>(N) + 1);
        for (double& x : s.values) x = rng.uniform();
        SplineBasis basis(J);
        FormSet f = build_forms(s, basis);
        BruteForms b = brute_forms(s, basis);
        CHECK(max_diff(f.G, b.G) < 1e-12);
        CHECK(max_diff(f.L, b.L) < 1e-10);
        CHECK(max_diff(f.P, b.P) < 1e-12);
    }
}

TEST_CASE("centered Gram matrix equals G - offsets outer product") {
    RngStream rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        int N = 5 + static_cast<int>(rng.uniform() * 200);
        int J = 2 + static_cast<int>(rng.uniform() * 10);
        Sample s;
        s.delta = 0.1;
        s.values.resize(static_cast<std::size_t>(N) + 1);
        for (double& x : s.values) x = rng.uniform();
        FormSet f = build_forms(s, SplineBasis(J));
        Matrix M = matrix_M(empirical_measure(s), f.basis);
        for (int i = 1; i <= J; ++i)
            for (int j = 1; j <= J; ++j) {
                double expect = f.G(i, j) - f.offsets[static_cast<std::size_t>(i)] *
                                                f.offsets[static_cast<std::size_t>(j)];
                CHECK(M(i - 1, j - 1) == doctest::Approx(expect).epsilon(1e-10).scale(1.0));
            }
    }
}

TEST_CASE("centered Gram matches the CDF-survival double integral") {
    // g(psi_i^0, psi_j^0) = int_{I_i} int_{I_j} F(y^z) S(y v z) dy dz with
    // F the empirical CDF and S its survival; checked by midpoint quadrature.
    Sample s = make_sample({0.15, 0.42, 0.65, 0.88, 0.33}, 0.5);
    SplineBasis basis(3);
    EmpiricalMeasure mu = empirical_measure(s);
    Matrix M = matrix_M(mu, basis);
    auto F = [&](double y) {
        double acc = 0.0;
        for (std::size_t i = 0; i < mu.atoms.size(); ++i)
            if (mu.atoms[i] < y) acc += mu.weight(i);
        return acc;
    };
    const int Q = 600; // midpoint nodes per bin and axis
    const double cell = (1.0 / (3.0 * Q)) * (1.0 / (3.0 * Q));
    for (int i = 1; i <= 3; ++i)
        for (int j = 1; j <= 3; ++j) {
            double acc = 0.0;
            for (int a = 0; a < Q; ++a) {
                double y = (i - 1) / 3.0 + (a + 0.5) / (3.0 * Q);
                double Fy = F(y);
                for (int b = 0; b < Q; ++b) {
                    double z = (j - 1) / 3.0 + (b + 0.5) / (3.0 * Q);
                    double Fz = F(z);
                    double lo = std::min(Fy, Fz), hi = std::max(Fy, Fz);
                    acc += lo * (1.0 - hi);
                }
            }
            acc *= cell;
            CHECK(M(i - 1, j - 1) == doctest::Approx(acc).epsilon(2e-3).scale(0.001));
        }
}

TEST_CASE("positive empirical Gram has strictly positive entries for spread samples") {
    RngStream rng(99);
    Sample s;
    s.delta = 0.1;
    s.values.resize(201);
    for (double& x : s.values) x = rng.uniform();
    Matrix M = matrix_M(empirical_measure(s), SplineBasis(6));
    for (std::size_t i = 0; i < M.dim(); ++i)
        for (std::size_t j = 0; j < M.dim(); ++j) CHECK(M(i, j) > 0.0);
}

TEST_CASE("FZ-weighted stiffness diagonal halves mass-weighted values") {
    Sample s = make_sample({0.2, 0.3, 0.7}, 0.5);
    FormSet f = build_forms(s, SplineBasis(2));
    std::vector<double> diag = form_f_diag(f, {1.0, 1.0});
    CHECK(diag[0] == doctest::Approx(0.375));
    CHECK(diag[1] == doctest::Approx(0.125));
    std::vector<double> diag2 = form_f_diag(f, {2.0, 4.0});
    CHECK(diag2[0] == doctest::Approx(0.75));
    CHECK(diag2[1] == doctest::Approx(0.5));
    CHECK_THROWS_AS(form_f_diag(f, {1.0}), ConfigError);
}
