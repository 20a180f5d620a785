#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <vector>

#include "voldiff/errors.hpp"
#include "voldiff/model.hpp"
#include "voldiff/rng.hpp"

namespace voldiff {

/// 2-periodic tent map folding R onto [0,1]:
///   y - 2n on [2n, 2n+1),  2(n+1) - y on [2n+1, 2n+2).
inline double fold(double y) {
    double r = std::fmod(y, 2.0);
    if (r < 0.0) r += 2.0;
    return (r <= 1.0) ? r : 2.0 - r;
}

struct FinePath {
    double dt_sub = 0.0;
    std::vector<double> values; // length round(T/dt_sub)+1, all in [0,1]
    double t_end = 0.0;

    std::size_t steps() const { return values.size() - 1; }
};

struct Sample {
    double delta = 0.0;
    std::vector<double> values; // X_0, X_Delta, ..., X_{N Delta}
    std::size_t n() const { return values.size() - 1; }
    double horizon() const { return delta * static_cast<double>(n()); }
};

/// Euler-Maruyama with reflection by folding after each step.
/// x_{k+1} = fold(x_k + b(x_k) dt + sigma(x_k) sqrt(dt) Z_k).
/// The start is stationary unless an explicit x0 is supplied.
inline FinePath simulate_path(const DiffusionModel& model, double T, double dt_sub, RngStream& rng,
                              const DensityGrid& stationary, std::optional<double> x0 = {}) {
    if (!(dt_sub > 0.0) || dt_sub > T) throw InvalidStep("dt_sub must lie in (0, T]");
    const std::size_t n_steps = static_cast<std::size_t>(std::llround(T / dt_sub));
    FinePath path;
    path.dt_sub = dt_sub;
    path.t_end = T;
    path.values.resize(n_steps + 1);
    double x = x0 ? *x0 : stationary.quantile(rng.uniform());
    path.values[0] = x;
    const double sqdt = std::sqrt(dt_sub);
    for (std::size_t k = 0; k < n_steps; ++k) {
        double s2 = model.sigma2(x);
        x = fold(x + model.drift(x) * dt_sub + std::sqrt(s2) * sqdt * rng.normal());
        path.values[k + 1] = x;
    }
    return path;
}

inline FinePath simulate_path(const DiffusionModel& model, double T, double dt_sub, RngStream& rng,
                              std::optional<double> x0 = {}) {
    if (x0) {
        DensityGrid unused; // stationary draw not needed
        unused.knots = {0.0, 1.0};
        unused.values = {1.0, 1.0};
        unused.cdf = {0.0, 1.0};
        return simulate_path(model, T, dt_sub, rng, unused, x0);
    }
    return simulate_path(model, T, dt_sub, rng, invariant_density(model), x0);
}

/// Every round(delta/dt_sub)-th value; delta must be an integer multiple of dt_sub.
inline Sample subsample(const FinePath& path, double delta) {
    const double ratio = delta / path.dt_sub;
    const long long m = std::llround(ratio);
    if (m < 1 || std::abs(ratio - static_cast<double>(m)) > 1e-9 * ratio)
        throw StepMismatch("delta is not an integer multiple of dt_sub");
    Sample s;
    s.delta = delta;
    const std::size_t n = path.steps() / static_cast<std::size_t>(m); // N = floor(T/delta)
    s.values.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) s.values[i] = path.values[i * m];
    return s;
}

/// Time-fraction histogram of the fine path (left-point Riemann convention:
/// the terminal value carries no mass). masses sum to 1 exactly.
struct OccupationGrid {
    double bin_width = 0.0;
    std::vector<double> masses;  // time fractions, sum to 1
    std::vector<double> density; // masses / bin_width
};

inline OccupationGrid occupation_density(const FinePath& path, int n_bins) {
    if (n_bins < 4) throw ConfigError("occupation_density needs n_bins >= 4");
    OccupationGrid g;
    g.bin_width = 1.0 / n_bins;
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_bins), 0);
    const std::size_t K = path.steps();
    for (std::size_t k = 0; k < K; ++k) {
        int b = static_cast<int>(path.values[k] * n_bins);
        if (b >= n_bins) b = n_bins - 1;
        ++counts[static_cast<std::size_t>(b)];
    }
    g.masses.resize(counts.size());
    g.density.resize(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        g.masses[i] = static_cast<double>(counts[i]) / static_cast<double>(K);
        g.density[i] = g.masses[i] * n_bins;
    }
    return g;
}

inline double min_occupation(const FinePath& path, int n_bins) {
    OccupationGrid g = occupation_density(path, n_bins);
    double m = g.density[0];
    for (double v : g.density) m = std::min(m, v);
    return m;
}

/// Whole-path rejection sampling of the event {inf occupation density >= v}.
inline FinePath simulate_conditioned(const DiffusionModel& model, double T, double dt_sub, double v,
                                     int n_bins, RngStream& rng, const DensityGrid& stationary,
                                     int max_tries = 200) {
    if (v < 0.0) throw ConfigError("conditioning level v must be >= 0");
    for (int attempt = 0; attempt < max_tries; ++attempt) {
        FinePath p = simulate_path(model, T, dt_sub, rng, stationary);
        if (v == 0.0 || min_occupation(p, n_bins) >= v) return p;
    }
    throw ConditioningExhausted("no path met the occupation floor within max_tries");
}

inline FinePath simulate_conditioned(const DiffusionModel& model, double T, double dt_sub, double v,
                                     int n_bins, RngStream& rng, int max_tries = 200) {
    return simulate_conditioned(model, T, dt_sub, v, n_bins, rng, invariant_density(model), max_tries);
}

/// Max oscillation over every window of the given lag, by monotone deques; O(length).
inline double modulus_of_continuity(const FinePath& path, double lag) {
    if (lag < path.dt_sub) throw ConfigError("lag must be >= dt_sub");
    const std::size_t w = static_cast<std::size_t>(std::llround(lag / path.dt_sub));
    const auto& x = path.values;
    std::deque<std::size_t> maxq, minq;
    double osc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        while (!maxq.empty() && x[maxq.back()] <= x[i]) maxq.pop_back();
        maxq.push_back(i);
        while (!minq.empty() && x[minq.back()] >= x[i]) minq.pop_back();
        minq.push_back(i);
        std::size_t lo = (i >= w) ? i - w : 0;
        while (maxq.front() < lo) maxq.pop_front();
        while (minq.front() < lo) minq.pop_front();
        osc = std::max(osc, x[maxq.front()] - x[minq.front()]);
    }
    return osc;
}

} // namespace voldiff
