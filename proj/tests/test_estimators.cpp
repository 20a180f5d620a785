#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "voldiff/estimators.hpp"
#include "voldiff/model.hpp"
#include "voldiff/norms.hpp"

using namespace voldiff;

namespace {

Sample make_sample(std::vector<double> xs, double delta) {
    Sample s;
    s.delta = delta;
    s.values = std::move(xs);
    return s;
}

Sample bm_sample(double T, double delta, std::uint64_t seed, double dt_sub = 1e-4) {
    DiffusionModel bm = validate_model(CoefficientFn::constant(1.0), CoefficientFn::constant(0.0),
                                       0.5, 2.0);
    RngStream rng(seed);
    return subsample(simulate_path(bm, T, dt_sub, rng), delta);
}

// exact integral over [lo,hi] of the step function x -> sum_{atom < x} w*f(atom)
double integrate_prefix(const GhrEstimate& g, double lo, double hi, int n_grid = 40000) {
    // midpoint on a fine grid; the integrand is a bounded step function, so
    // the error is (number of jumps in the bin) * O(h); n_grid keeps it tiny
    double acc = 0.0;
    for (int k = 0; k < n_grid; ++k) {
        double x = lo + (hi - lo) * (k + 0.5) / n_grid;
        acc += g.numerator_integral(x);
    }
    return acc * (hi - lo) / n_grid;
}

} // namespace

TEST_CASE("forward FZ on the hand example") {
    Sample s = make_sample({0.2, 0.3, 0.7}, 0.5);
    PiecewiseVol f = fz_forward(s, 2);
    CHECK(f.values[0] == doctest::Approx(0.17 / 0.75).epsilon(1e-12));
    CHECK(f.values[1] == doctest::Approx(0.0));
    CHECK(f.defined[0] == 1);
    CHECK(f.defined[1] == 1); // visited by an atom, zero quadratic variation
    CHECK(f.value_at(0.2) == doctest::Approx(0.17 / 0.75));
}

TEST_CASE("symmetric FZ averages the forward and reversed estimates") {
    Sample s = make_sample({0.2, 0.3, 0.7}, 0.5);
    PiecewiseVol sym = fz_symmetric(s, 2);
    CHECK(sym.values[0] == doctest::Approx(0.12).epsilon(1e-12)); // (0.17+0.01)/2 / 0.75
    CHECK(sym.values[1] == doctest::Approx(0.32).epsilon(1e-12)); // (0+0.16)/2 / 0.25

    // random samples: definition vs explicit average
    RngStream rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        int N = 3 + static_cast<int>(rng.uniform() * 200);
        int J = 2 + static_cast<int>(rng.uniform() * 10);
        Sample r;
        r.delta = 0.05 + rng.uniform();
        r.values.resize(N + 1);
        for (double& x : r.values) x = rng.uniform();
        PiecewiseVol fwd = fz_forward(r, J);
        Sample rev;
        rev.delta = r.delta;
        rev.values.assign(r.values.rbegin(), r.values.rend());
        PiecewiseVol bwd = fz_forward(rev, J);
        PiecewiseVol sym2 = fz_symmetric(r, J);
        for (int j = 0; j < J; ++j) {
            if (!sym2.defined[j]) continue;
            CHECK(sym2.values[j] ==
                  doctest::Approx(0.5 * (fwd.values[j] + bwd.values[j])).epsilon(1e-10));
        }
    }
}

TEST_CASE("unvisited bins are masked") {
    Sample s = make_sample({0.1, 0.15, 0.2, 0.12}, 0.5);
    PiecewiseVol f = fz_forward(s, 4);
    CHECK(f.defined[0] == 1);
    CHECK(f.defined[1] == 0);
    CHECK(f.defined[2] == 0);
    CHECK(f.defined[3] == 0);
}

TEST_CASE("spectral averaged and tilde variants differ by -zeta1/gamma1") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        Sample s = bm_sample(5.0, 1e-3, seed);
        for (int J : {4, 9}) {
            FormSet forms = build_forms(s, SplineBasis(J));
            SpectralIntermediates inter = spectral_intermediates(forms);
            REQUIRE_FALSE(inter.zeta_undefined);
            PiecewiseVol hat = spectral_averaged(forms, inter);
            PiecewiseVol tilde = spectral_tilde(forms, inter);
            double factor = -inter.zeta1 / inter.gamma1;
            for (int j = 0; j < J; ++j) {
                REQUIRE(hat.defined[j] == tilde.defined[j]);
                if (hat.defined[j])
                    CHECK(hat.values[j] ==
                          doctest::Approx(factor * tilde.values[j]).epsilon(1e-10));
            }
            // kappa relation and the log expansion bound |1 + zeta/gamma| <= Delta gamma
            CHECK(inter.kappa1 == doctest::Approx(1.0 - forms.delta * inter.gamma1));
            if (forms.delta * inter.gamma1 < 0.5)
                CHECK(std::abs(1.0 + inter.zeta1 / inter.gamma1) <= forms.delta * inter.gamma1);
        }
    }
}

TEST_CASE("FZ representation through the weighted stiffness form") {
    // For any v with v_j != 0: sigma2_fz_j = 2 f(v, psi_j) / (v_j m_j),
    // where f is diagonal with entries (1/2) sigma2_fz_j m_j.
    Sample s = bm_sample(2.0, 1e-3, 8);
    const int J = 6;
    FormSet forms = build_forms(s, SplineBasis(J));
    PiecewiseVol fz = fz_symmetric(s, J);
    std::vector<double> fdiag = form_f_diag(forms, fz.values);
    RngStream rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> v(J);
        for (double& c : v) c = rng.uniform() + 0.1;
        for (int j = 1; j <= J; ++j) {
            double fvpsi = fdiag[j - 1] * v[j - 1]; // diagonal form
            double recon = 2.0 * fvpsi / (v[j - 1] * forms.bin_mass[j]);
            CHECK(recon == doctest::Approx(fz.values[j - 1]).epsilon(1e-10));
        }
    }
}

TEST_CASE("spectral estimator recovers sigma^2=1 for reflected BM") {
    Sample s = bm_sample(10.0, 1e-3, 21);
    PiecewiseVol hat = spectral_averaged(s, 8);
    auto one = [](double) { return 1.0; };
    NormResult err = error_norm(hat, one, 0.1, 0.9, 1);
    CHECK(err.masked_measure == 0.0);
    CHECK(err.value < 0.25); // single replicate, loose band
}

TEST_CASE("threshold cap clips the spectral estimate") {
    Sample s = bm_sample(5.0, 1e-3, 33);
    PiecewiseVol capped = spectral_averaged(s, 8, 0.5);
    for (int j = 0; j < 8; ++j)
        if (capped.defined[j]) CHECK(capped.values[j] <= 0.5);
}

TEST_CASE("GHR local average identity against the spectral estimator") {
    // sigma2_S_j = 2 zeta1 int_{I_j} (int_0^x u1 dmu) dx / (c_j m_j)
    Sample s = bm_sample(5.0, 1e-3, 13);
    const int J = 6;
    FormSet forms = build_forms(s, SplineBasis(J));
    SpectralIntermediates inter = spectral_intermediates(forms);
    GhrEstimate g(s, forms, inter);
    PiecewiseVol hat = spectral_averaged(forms, inter);
    for (int j = 1; j <= J; ++j) {
        if (!hat.defined[j - 1]) continue;
        double lo = (j - 1.0) / J, hi = static_cast<double>(j) / J;
        double avg = integrate_prefix(g, lo, hi);
        double lhs = 2.0 * inter.zeta1 * avg /
                     (inter.pair.coeffs[j] * forms.bin_mass[j]);
        CHECK(lhs == doctest::Approx(hat.values[j - 1]).epsilon(5e-4));
    }
}

TEST_CASE("GHR tracks sigma^2=1 in the interior for reflected BM") {
    Sample s = bm_sample(10.0, 1e-3, 55);
    GhrEstimate g(s, 10);
    auto one = [](double) { return 1.0; };
    NormResult err = error_norm([&](double x) { return g.at(x); }, one, 0.2, 0.8, 1);
    CHECK(err.value / 0.6 < 0.35);
    // density projection integrates to ~1 and is positive in the bulk
    double mass = 0.0;
    const int Q = 2000;
    for (int k = 0; k < Q; ++k) mass += g.density((k + 0.5) / Q) / Q;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("crossing statistics on hand examples") {
    Sample s = make_sample({0.4, 0.6, 0.4}, 1.0);
    auto [uns, sgn] = crossing_stat(s, 0.5);
    CHECK(uns == doctest::Approx(0.08).epsilon(1e-12));
    CHECK(sgn == doctest::Approx(0.0).epsilon(1e-12));

    // monotone path within one side: no crossings at all
    Sample mono = make_sample({0.1, 0.2, 0.3, 0.4}, 1.0);
    auto [u2, s2] = crossing_stat(mono, 0.5);
    CHECK(u2 == 0.0);
    CHECK(s2 == 0.0);

    // asymmetric crossing: one up-cross of 0.5 from 0.3 to 0.8
    Sample once = make_sample({0.3, 0.8}, 1.0);
    auto [u3, s3] = crossing_stat(once, 0.5);
    CHECK(u3 == doctest::Approx(0.25));
    CHECK(s3 == doctest::Approx(-(0.09 - 0.04))); // chi=-1, (b-a)^2 terms
}

TEST_CASE("occupation Riemann gap on a hand example") {
    FinePath p;
    p.dt_sub = 0.25;
    p.t_end = 1.0;
    p.values = {0.1, 0.7, 0.2, 0.8, 0.6}; // left points: 0.1,0.7,0.2,0.8
    Sample s = make_sample({0.1, 0.2, 0.8}, 0.5);
    double gap = occupation_riemann_gap(p, s, 0.5);
    CHECK(gap == doctest::Approx(0.5 - 1.0)); // fine 2/4, coarse 2/2
}

TEST_CASE("zeta1 becomes undefined for anti-correlated coarse chains") {
    // alternating jumps between two narrow clusters: every direction of the
    // spline space is anti-correlated step to step, so Delta*gamma1 >= 1
    Sample s = make_sample({0.100, 0.900, 0.104, 0.905, 0.101, 0.902, 0.106, 0.908, 0.103,
                            0.901, 0.108, 0.906, 0.102, 0.903, 0.107, 0.909, 0.105, 0.904,
                            0.109, 0.907, 0.1055},
                           1.0);
    FormSet forms = build_forms(s, SplineBasis(2));
    SpectralIntermediates inter = spectral_intermediates(forms);
    CHECK(inter.zeta_undefined);
    CHECK_THROWS_AS(spectral_averaged(forms, inter), DegenerateSpectrum);
}
