#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "voldiff/errors.hpp"
#include "voldiff/rng.hpp"

namespace voldiff {

/// A coefficient function on [0,1]: a closed-form registry entry
/// (constant / linear / quadratic in x) or a piecewise-linear grid.
class CoefficientFn {
  public:
    enum class Kind { Constant, Linear, Quadratic, PiecewiseLinear };

    static CoefficientFn constant(double c) { return {Kind::Constant, {c}, {}}; }
    // c0 + c1*x
    static CoefficientFn linear(double c0, double c1) { return {Kind::Linear, {c0, c1}, {}}; }
    // c0 + c1*x + c2*x^2
    static CoefficientFn quadratic(double c0, double c1, double c2) {
        return {Kind::Quadratic, {c0, c1, c2}, {}};
    }
    static CoefficientFn piecewise_linear(std::vector<double> knots, std::vector<double> values) {
        if (knots.size() < 2 || knots.size() != values.size())
            throw ConfigError("piecewise-linear coefficient needs matching knots/values, >= 2 points");
        if (knots.front() != 0.0 || knots.back() != 1.0)
            throw ConfigError("piecewise-linear knots must cover [0,1]");
        for (std::size_t i = 1; i < knots.size(); ++i)
            if (!(knots[i] > knots[i - 1]))
                throw ConfigError("piecewise-linear knots must be strictly increasing");
        for (double v : values)
            if (!std::isfinite(v)) throw ConfigError("piecewise-linear values must be finite");
        CoefficientFn f{Kind::PiecewiseLinear, std::move(values), std::move(knots)};
        return f;
    }

    static CoefficientFn from_registry(const std::string& kind, const std::vector<double>& params) {
        if (kind == "constant" && params.size() == 1) return constant(params[0]);
        if (kind == "linear" && params.size() == 2) return linear(params[0], params[1]);
        if (kind == "quadratic" && params.size() == 3) return quadratic(params[0], params[1], params[2]);
        throw ConfigError("unknown coefficient kind '" + kind + "' or wrong parameter count");
    }

    double operator()(double x) const {
        switch (kind_) {
            case Kind::Constant: return params_[0];
            case Kind::Linear: return params_[0] + params_[1] * x;
            case Kind::Quadratic: return params_[0] + x * (params_[1] + x * params_[2]);
            case Kind::PiecewiseLinear: {
                auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
                std::size_t hi = std::min<std::size_t>(
                    std::max<std::ptrdiff_t>(it - knots_.begin(), 1), knots_.size() - 1);
                double x0 = knots_[hi - 1], x1 = knots_[hi];
                double t = (x - x0) / (x1 - x0);
                return params_[hi - 1] + t * (params_[hi] - params_[hi - 1]);
            }
        }
        return 0.0;
    }

    Kind kind() const { return kind_; }

  private:
    CoefficientFn(Kind k, std::vector<double> p, std::vector<double> kn)
        : kind_(k), params_(std::move(p)), knots_(std::move(kn)) {}

    Kind kind_;
    std::vector<double> params_;
    std::vector<double> knots_;
};

// All membership checks in Theta(d,D) are run on this grid.
inline constexpr int kModelGridPoints = 2048;

struct DiffusionModel {
    CoefficientFn sigma2;
    CoefficientFn drift;
    double d = 0.0;
    double D = 0.0;

    double sigma(double x) const { return std::sqrt(sigma2(x)); }

    /// Test-only escape hatch: builds the model without the Theta(d,D) checks.
    static DiffusionModel unchecked(CoefficientFn sigma2, CoefficientFn drift, double d, double D) {
        return DiffusionModel{std::move(sigma2), std::move(drift), d, D};
    }
};

/// Grid-checked membership in Theta(d,D):
///   inf sigma^2 >= d,  sup|b| < D,  ||sigma^2||_{H1} < D  (discretized).
inline DiffusionModel validate_model(CoefficientFn sigma2, CoefficientFn drift, double d, double D) {
    if (!(d > 0.0)) throw ConfigError("d must be positive");
    if (!(D > d)) throw ConfigError("D must exceed d");

    const int n = kModelGridPoints;
    const double h = 1.0 / (n - 1);
    double inf_s2 = std::numeric_limits<double>::infinity();
    double sup_b = 0.0;
    double l2_sq = 0.0, dl2_sq = 0.0;
    double prev_s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = i * h;
        double s2 = sigma2(x);
        double b = drift(x);
        if (!std::isfinite(s2) || !std::isfinite(b))
            throw QuadratureFailure("non-finite coefficient value on [0,1]");
        inf_s2 = std::min(inf_s2, s2);
        sup_b = std::max(sup_b, std::abs(b));
        double w = (i == 0 || i == n - 1) ? 0.5 : 1.0; // trapezoid
        l2_sq += w * h * s2 * s2;
        if (i > 0) {
            double ds = (s2 - prev_s2) / h;
            dl2_sq += h * ds * ds;
        }
        prev_s2 = s2;
    }
    if (inf_s2 < d)
        throw EllipticityViolation("sigma^2 dips below d on the check grid");
    double h1_norm = std::sqrt(l2_sq) + std::sqrt(dl2_sq);
    if (!(sup_b < D))
        throw NormViolation("sup |b| reaches D");
    if (!(h1_norm < D))
        throw NormViolation("H1 norm of sigma^2 reaches D");
    return DiffusionModel{std::move(sigma2), std::move(drift), d, D};
}

/// Normalized density on a regular grid with its cumulative values.
struct DensityGrid {
    std::vector<double> knots;  // regular grid on [0,1]
    std::vector<double> values; // density, trapezoid-normalized to 1
    std::vector<double> cdf;    // cdf[0]=0, cdf.back()=1, nondecreasing

    double density_at(double x) const { return interp(values, x); }
    double cdf_at(double x) const { return interp(cdf, x); }

    /// Inverse CDF by linear interpolation (u in [0,1]).
    double quantile(double u) const {
        u = std::clamp(u, 0.0, 1.0);
        auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.begin()) return knots.front();
        if (it == cdf.end()) return knots.back();
        std::size_t hi = it - cdf.begin();
        double c0 = cdf[hi - 1], c1 = cdf[hi];
        double t = (c1 > c0) ? (u - c0) / (c1 - c0) : 0.0;
        return knots[hi - 1] + t * (knots[hi] - knots[hi - 1]);
    }

  private:
    double interp(const std::vector<double>& v, double x) const {
        x = std::clamp(x, 0.0, 1.0);
        double pos = x * static_cast<double>(knots.size() - 1);
        std::size_t lo = std::min<std::size_t>(static_cast<std::size_t>(pos), knots.size() - 2);
        double t = pos - static_cast<double>(lo);
        return v[lo] + t * (v[lo + 1] - v[lo]);
    }
};

/// Stationary density of the reflected diffusion (zero-flux Neumann balance):
///   mu(x) ~ sigma^-2(x) * exp(int_0^x 2 b / sigma^2), normalized on [0,1].
inline DensityGrid invariant_density(const DiffusionModel& model, int n_grid = kModelGridPoints) {
    if (n_grid < 64) throw ConfigError("invariant_density needs n_grid >= 64");
    const int n = n_grid;
    const double h = 1.0 / n;
    DensityGrid g;
    g.knots.resize(n + 1);
    g.values.resize(n + 1);
    g.cdf.resize(n + 1);

    // exponent by trapezoid accumulation of 2 b / sigma^2
    double expo = 0.0;
    double prev_integrand = 2.0 * model.drift(0.0) / model.sigma2(0.0);
    for (int i = 0; i <= n; ++i) {
        double x = static_cast<double>(i) / n;
        double s2 = model.sigma2(x);
        double integrand = 2.0 * model.drift(x) / s2;
        if (i > 0) expo += 0.5 * h * (prev_integrand + integrand);
        prev_integrand = integrand;
        double v = std::exp(expo) / s2;
        if (!std::isfinite(v)) throw QuadratureFailure("non-finite invariant-density integrand");
        g.knots[i] = x;
        g.values[i] = v;
    }
    // normalize (trapezoid) and accumulate cdf
    double total = 0.0;
    for (int i = 1; i <= n; ++i) total += 0.5 * h * (g.values[i - 1] + g.values[i]);
    g.cdf[0] = 0.0;
    for (int i = 0; i <= n; ++i) g.values[i] /= total;
    for (int i = 1; i <= n; ++i) g.cdf[i] = g.cdf[i - 1] + 0.5 * h * (g.values[i - 1] + g.values[i]);
    g.cdf[n] = 1.0;
    return g;
}

/// Inverse-CDF draw from the invariant density on the standard grid.
inline double sample_stationary(const DensityGrid& density, double u) { return density.quantile(u); }

inline double sample_stationary(const DiffusionModel& model, RngStream& rng) {
    // callers on a hot path should precompute the DensityGrid and use the overload
    return invariant_density(model).quantile(rng.uniform());
}

} // namespace voldiff
