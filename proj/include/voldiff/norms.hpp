#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>

#include "voldiff/eigen.hpp"
#include "voldiff/errors.hpp"
#include "voldiff/estimators.hpp"

namespace voldiff {

struct NormResult {
    double value = 0.0;          // L^p distance over the unmasked part
    double masked_measure = 0.0; // Lebesgue measure of [a,b] left out
};

namespace detail {

inline void check_norm_args(double a, double b, int p) {
    if (!(0.0 <= a && a < b && b <= 1.0)) throw ConfigError("norm interval must satisfy 0 <= a < b <= 1");
    if (p != 1 && p != 2) throw ConfigError("only L1 and L2 norms are supported");
}

// 64-point composite rule: 16-point Gauss on 4 equal subpieces.
template <class F>
double quad64(F&& f, double a, double b) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) {
        double lo = a + (b - a) * k / 4.0;
        double hi = a + (b - a) * (k + 1) / 4.0;
        s += gauss16(f, lo, hi);
    }
    return s;
}

} // namespace detail

/// L^p([a,b]) distance between a piecewise-constant estimate and a smooth
/// truth, integrating bin by bin. Masked bins are excluded and their
/// intersection with [a,b] is reported; throws AllMasked if nothing remains.
inline NormResult error_norm(const PiecewiseVol& est, const std::function<double(double)>& truth,
                             double a, double b, int p) {
    detail::check_norm_args(a, b, p);
    const int J = est.J;
    double integral = 0.0, masked = 0.0;
    for (int j = 1; j <= J; ++j) {
        double lo = std::max(a, static_cast<double>(j - 1) / J);
        double hi = std::min(b, static_cast<double>(j) / J);
        if (!(hi > lo)) continue;
        if (!est.defined[static_cast<std::size_t>(j - 1)]) {
            masked += hi - lo;
            continue;
        }
        double v = est.values[static_cast<std::size_t>(j - 1)];
        integral += detail::quad64(
            [&](double x) {
                double d = std::abs(v - truth(x));
                return (p == 1) ? d : d * d;
            },
            lo, hi);
    }
    if (!(masked < b - a)) throw AllMasked("estimate is undefined on all of [a,b]");
    NormResult r;
    r.masked_measure = masked;
    r.value = (p == 1) ? integral : std::sqrt(integral);
    return r;
}

/// Same for a pointwise-defined estimate (e.g. GHR): [a,b] is cut into
/// n_cells equal cells; a cell with any undefined quadrature node is masked.
inline NormResult error_norm(const std::function<std::optional<double>(double)>& est,
                             const std::function<double(double)>& truth, double a, double b, int p,
                             int n_cells = 256) {
    detail::check_norm_args(a, b, p);
    if (n_cells < 8) throw ConfigError("error_norm needs n_cells >= 8");
    double integral = 0.0, masked = 0.0;
    for (int k = 0; k < n_cells; ++k) {
        double lo = a + (b - a) * k / n_cells;
        double hi = a + (b - a) * (k + 1) / n_cells;
        bool ok = true;
        double cell = detail::gauss16(
            [&](double x) {
                std::optional<double> v = est(x);
                if (!v) {
                    ok = false;
                    return 0.0;
                }
                double d = std::abs(*v - truth(x));
                return (p == 1) ? d : d * d;
            },
            lo, hi);
        if (ok)
            integral += cell;
        else
            masked += hi - lo;
    }
    if (!(masked < b - a)) throw AllMasked("estimate is undefined on all of [a,b]");
    NormResult r;
    r.masked_measure = masked;
    r.value = (p == 1) ? integral : std::sqrt(integral);
    return r;
}

} // namespace voldiff
