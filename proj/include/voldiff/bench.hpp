#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "voldiff/csv.hpp"
#include "voldiff/errors.hpp"
#include "voldiff/estimators.hpp"
#include "voldiff/model.hpp"
#include "voldiff/norms.hpp"
#include "voldiff/path.hpp"
#include "voldiff/rng.hpp"

namespace voldiff {

inline constexpr int kConditioningBins = 50;

/// One (T, Delta) cell of the experiment grid.
struct RegimePoint {
    double T = 0.0;
    double delta = 0.0;
};

enum class EstimatorId { Fz, Ghr, Spectral, SpectralThresholded };

inline std::string estimator_name(EstimatorId id) {
    switch (id) {
        case EstimatorId::Fz: return "fz";
        case EstimatorId::Ghr: return "ghr";
        case EstimatorId::Spectral: return "spectral";
        case EstimatorId::SpectralThresholded: return "spectral_thresholded";
    }
    return "?";
}

inline double default_dt_sub(double delta) { return std::min(delta / 100.0, 1e-3); }

struct ExperimentConfig {
    CoefficientFn sigma2 = CoefficientFn::constant(1.0);
    CoefficientFn drift = CoefficientFn::constant(0.0);
    double d = 0.1;
    double D = 10.0;

    std::string regime_type;         // "high_frequency" or "low_frequency"
    std::vector<RegimePoint> points; // expanded grid

    std::vector<EstimatorId> estimators;
    std::vector<int> J_grid;
    int replicates = 100;
    double v = 0.0; // occupation-density floor for conditioning
    double a = 0.1, b = 0.9;
    std::uint64_t seed = 0;
    std::optional<double> dt_sub_override;

    DiffusionModel model() const { return validate_model(sigma2, drift, d, D); }

    double dt_sub_for(double delta) const {
        return dt_sub_override ? *dt_sub_override : default_dt_sub(delta);
    }
};

namespace detail {

inline CoefficientFn coefficient_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind"))
        throw ConfigError("coefficient spec needs {kind, params}");
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "piecewise_linear")
        return CoefficientFn::piecewise_linear(j.at("knots").get<std::vector<double>>(),
                                               j.at("values").get<std::vector<double>>());
    return CoefficientFn::from_registry(kind, j.at("params").get<std::vector<double>>());
}

} // namespace detail

/// Parse the experiment JSON:
/// {model:{sigma2:{kind,params}, drift:{kind,params}, d, D} | model:"reference"|"reflected_bm",
///  regime:{type, T|delta, deltas|Ts}, estimators:[...], J_grid:[...],
///  replicates, v, interval:[a,b], seed, dt_sub?}
inline ExperimentConfig parse_config(const nlohmann::json& j) {
    try {
        ExperimentConfig c;
        const nlohmann::json& m = j.at("model");
        if (m.is_string()) {
            std::string name = m.get<std::string>();
            if (name == "reference") {
                c.sigma2 = CoefficientFn::quadratic(0.15, 1.0, -1.0); // 0.4 - (x-1/2)^2
                c.drift = CoefficientFn::linear(0.2, -0.4);
                c.d = 0.1;
                c.D = 1.0;
            } else if (name == "reflected_bm") {
                c.sigma2 = CoefficientFn::constant(1.0);
                c.drift = CoefficientFn::constant(0.0);
                c.d = 0.5;
                c.D = 2.0;
            } else {
                throw ConfigError("unknown named model: " + name);
            }
        } else {
            c.sigma2 = detail::coefficient_from_json(m.at("sigma2"));
            c.drift = detail::coefficient_from_json(m.at("drift"));
            c.d = m.at("d").get<double>();
            c.D = m.at("D").get<double>();
        }

        const nlohmann::json& r = j.at("regime");
        c.regime_type = r.at("type").get<std::string>();
        if (c.regime_type == "high_frequency") {
            double T = r.at("T").get<double>();
            for (double dlt : r.at("deltas").get<std::vector<double>>())
                c.points.push_back({T, dlt});
        } else if (c.regime_type == "low_frequency") {
            double dlt = r.at("delta").get<double>();
            for (double T : r.at("Ts").get<std::vector<double>>()) c.points.push_back({T, dlt});
        } else {
            throw ConfigError("regime.type must be high_frequency or low_frequency");
        }
        if (c.points.empty()) throw ConfigError("empty regime grid");

        for (const auto& name : j.at("estimators").get<std::vector<std::string>>()) {
            if (name == "fz") c.estimators.push_back(EstimatorId::Fz);
            else if (name == "ghr") c.estimators.push_back(EstimatorId::Ghr);
            else if (name == "spectral") c.estimators.push_back(EstimatorId::Spectral);
            else if (name == "spectral_thresholded") c.estimators.push_back(EstimatorId::SpectralThresholded);
            else throw ConfigError("unknown estimator: " + name);
        }
        if (c.estimators.empty()) throw ConfigError("no estimators selected");

        c.J_grid = j.at("J_grid").get<std::vector<int>>();
        if (c.J_grid.empty()) throw ConfigError("empty J_grid");
        for (int J : c.J_grid)
            if (J < 2) throw ConfigError("J_grid values must be >= 2");

        c.replicates = j.at("replicates").get<int>();
        if (c.replicates < 1) throw ConfigError("replicates must be >= 1");
        c.v = j.value("v", 0.0);
        if (j.contains("interval")) {
            auto iv = j.at("interval").get<std::vector<double>>();
            if (iv.size() != 2) throw ConfigError("interval must be [a,b]");
            c.a = iv[0];
            c.b = iv[1];
        }
        if (!(0.0 <= c.a && c.a < c.b && c.b <= 1.0)) throw ConfigError("need 0 <= a < b <= 1");
        c.seed = j.value("seed", 0ULL);
        if (j.contains("dt_sub")) c.dt_sub_override = j.at("dt_sub").get<double>();

        for (const RegimePoint& p : c.points) {
            double dt = c.dt_sub_for(p.delta);
            double ratio = p.delta / dt;
            if (std::abs(ratio - std::llround(ratio)) > 1e-9 * ratio)
                throw ConfigError("each delta must be an integer multiple of dt_sub");
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

struct ErrorRow {
    RegimePoint point;
    std::string estimator;
    int oracle_J = 0;
    double mean_error = 0.0;
    double std_error = 0.0;      // sample std / sqrt(replicates)
    double mean_masked_bins = 0.0;
    int n_failed = 0;            // replicates with +inf risk at the oracle J
};

struct ErrorTable {
    std::vector<ErrorRow> rows;
    // per (point, estimator, J): mean risk across replicates, for rate work
    std::vector<std::vector<std::vector<double>>> mean_risk_by_J;
};

namespace detail {

struct ReplicateRisk {
    double risk = std::numeric_limits<double>::infinity();
    double masked = 0.0; // masked measure within [a,b]
};

/// All estimator risks for one subsampled replicate at one J.
inline void evaluate_replicate(const ExperimentConfig& cfg, const Sample& sample, int J,
                               const std::function<double(double)>& truth,
                               std::vector<ReplicateRisk>& out /* per estimator */) {
    const std::size_t n_est = cfg.estimators.size();
    out.assign(n_est, ReplicateRisk{});

    std::optional<FormSet> maybe_forms;
    try {
        maybe_forms.emplace(build_forms(sample, SplineBasis(J)));
    } catch (const Error&) {
        return; // all estimators fail at this (J, replicate)
    }
    const FormSet& forms = *maybe_forms;

    std::optional<SpectralIntermediates> inter;
    auto spectral_inter = [&]() -> const SpectralIntermediates& {
        if (!inter) inter = spectral_intermediates(forms);
        if (inter->zeta_undefined)
            throw DegenerateSpectrum("zeta1 undefined");
        return *inter;
    };

    for (std::size_t e = 0; e < n_est; ++e) {
        try {
            NormResult nr;
            switch (cfg.estimators[e]) {
                case EstimatorId::Fz:
                    nr = error_norm(fz_symmetric(sample, J), truth, cfg.a, cfg.b, 1);
                    break;
                case EstimatorId::Spectral:
                    nr = error_norm(spectral_averaged(forms, spectral_inter()), truth, cfg.a, cfg.b, 1);
                    break;
                case EstimatorId::SpectralThresholded:
                    nr = error_norm(spectral_averaged(forms, spectral_inter(), cfg.D), truth, cfg.a,
                                    cfg.b, 1);
                    break;
                case EstimatorId::Ghr: {
                    GhrEstimate g(sample, forms, spectral_inter());
                    nr = error_norm([&](double x) { return g.at(x); }, truth, cfg.a, cfg.b, 1);
                    break;
                }
            }
            out[e].risk = nr.value;
            out[e].masked = nr.masked_measure;
        } catch (const Error&) {
            // +inf risk already in place
        }
    }
}

template <class Fn>
void parallel_for(int n, int jobs, Fn&& body) {
    if (jobs <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    int workers = std::min(jobs, n);
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
        });
    for (auto& t : pool) t.join();
}

} // namespace detail

/// Stream id for replicate `rep` of regime point `point_idx`; replicates own
/// disjoint counter ranges so results do not depend on scheduling.
inline std::uint64_t replicate_stream(std::size_t point_idx, int rep) {
    return (static_cast<std::uint64_t>(point_idx) << 32) | static_cast<std::uint32_t>(rep);
}

/// Full Monte Carlo sweep. For each regime point: simulate conditioned
/// replicates, score every estimator on every J, oracle-select J by mean
/// risk (ties toward smaller J), aggregate mean and MC standard error.
inline ErrorTable mc_experiment(const ExperimentConfig& cfg, int jobs = 1) {
    const DiffusionModel model = cfg.model();
    const DensityGrid stationary = invariant_density(model);
    auto truth = [&](double x) { return model.sigma2(x); };
    const std::size_t n_est = cfg.estimators.size();
    const std::size_t n_J = cfg.J_grid.size();
    const int R = cfg.replicates;

    ErrorTable table;
    table.mean_risk_by_J.resize(cfg.points.size());

    for (std::size_t pi = 0; pi < cfg.points.size(); ++pi) {
        const RegimePoint pt = cfg.points[pi];
        const double dt = cfg.dt_sub_for(pt.delta);

        // risks[e][jx][rep]
        std::vector<std::vector<std::vector<detail::ReplicateRisk>>> risks(
            n_est, std::vector<std::vector<detail::ReplicateRisk>>(
                       n_J, std::vector<detail::ReplicateRisk>(static_cast<std::size_t>(R))));

        std::string conditioning_failure;
        std::mutex fail_mutex;
        detail::parallel_for(R, jobs, [&](int rep) {
            RngStream rng(cfg.seed, replicate_stream(pi, rep));
            FinePath path;
            try {
                path = simulate_conditioned(model, pt.T, dt, cfg.v, kConditioningBins, rng,
                                            stationary);
            } catch (const ConditioningExhausted&) {
                std::lock_guard<std::mutex> lock(fail_mutex);
                if (conditioning_failure.empty())
                    conditioning_failure = "conditioning exhausted at replicate " + std::to_string(rep);
                return;
            }
            Sample sample = subsample(path, pt.delta);
            std::vector<detail::ReplicateRisk> per_est;
            for (std::size_t jx = 0; jx < n_J; ++jx) {
                detail::evaluate_replicate(cfg, sample, cfg.J_grid[jx], truth, per_est);
                for (std::size_t e = 0; e < n_est; ++e)
                    risks[e][jx][static_cast<std::size_t>(rep)] = per_est[e];
            }
        });
        if (!conditioning_failure.empty()) throw ConditioningExhausted(conditioning_failure);

        table.mean_risk_by_J[pi].assign(n_est, std::vector<double>(n_J, 0.0));
        for (std::size_t e = 0; e < n_est; ++e) {
            // oracle J: minimize mean risk (deterministic fold in replicate order)
            std::size_t best = 0;
            double best_mean = std::numeric_limits<double>::infinity();
            for (std::size_t jx = 0; jx < n_J; ++jx) {
                double s = 0.0;
                for (int rep = 0; rep < R; ++rep) s += risks[e][jx][static_cast<std::size_t>(rep)].risk;
                double mean = s / R;
                table.mean_risk_by_J[pi][e][jx] = mean;
                if (mean < best_mean) {
                    best_mean = mean;
                    best = jx;
                }
            }
            if (!std::isfinite(best_mean))
                throw NoConvergence("all J values failed for estimator " +
                                    estimator_name(cfg.estimators[e]));

            ErrorRow row;
            row.point = pt;
            row.estimator = estimator_name(cfg.estimators[e]);
            row.oracle_J = cfg.J_grid[best];
            double sum = 0.0, sumsq = 0.0, masked = 0.0;
            int failed = 0;
            for (int rep = 0; rep < R; ++rep) {
                const detail::ReplicateRisk& rr = risks[e][best][static_cast<std::size_t>(rep)];
                if (!std::isfinite(rr.risk)) {
                    ++failed;
                    continue;
                }
                sum += rr.risk;
                sumsq += rr.risk * rr.risk;
                masked += rr.masked * cfg.J_grid[best];
            }
            int n_ok = R - failed;
            row.n_failed = failed;
            row.mean_error = sum / n_ok;
            double var = (n_ok > 1) ? std::max(0.0, (sumsq - sum * sum / n_ok) / (n_ok - 1)) : 0.0;
            row.std_error = std::sqrt(var / n_ok);
            row.mean_masked_bins = masked / n_ok;
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

struct RateFit {
    double slope = 0.0;
    double std_error = 0.0;
};

/// Least-squares slope of log(error) against log(scale).
inline RateFit rate_regression(const std::vector<std::pair<double, double>>& points) {
    const std::size_t n = points.size();
    if (n < 3) throw DegenerateDesign("rate regression needs >= 3 points");
    double sx = 0.0, sy = 0.0;
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(points[i].first > 0.0) || !(points[i].second > 0.0))
            throw DegenerateDesign("rate regression needs positive scales and errors");
        lx[i] = std::log(points[i].first);
        ly[i] = std::log(points[i].second);
        sx += lx[i];
        sy += ly[i];
    }
    double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) throw DegenerateDesign("all scales coincide");
    RateFit fit;
    fit.slope = sxy / sxx;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = (ly[i] - my) - fit.slope * (lx[i] - mx);
        rss += r * r;
    }
    fit.std_error = (n > 2) ? std::sqrt(rss / (static_cast<double>(n) - 2.0) / sxx) : 0.0;
    return fit;
}

struct DiagRow {
    double alpha = 0.0;
    double delta = 0.0;
    double mean_unsigned = 0.0; // mean of sum |chi| (dX)^2
    double rms_signed = 0.0;    // RMS of the signed cancellation statistic
    double rms_gap = 0.0;       // RMS of the occupation Riemann gap
};

struct DiagnosticsResult {
    std::vector<DiagRow> rows;
    // per alpha: fitted slopes of the three statistics against delta
    std::vector<double> alphas;
    std::vector<RateFit> slope_unsigned, slope_signed, slope_gap;
};

/// Crossing and occupation diagnostics on [0,T]=[0,1] paths.
inline DiagnosticsResult diagnostics_sweep(const DiffusionModel& model,
                                           const std::vector<double>& alphas,
                                           const std::vector<double>& deltas, int replicates,
                                           std::uint64_t seed, int jobs = 1) {
    if (alphas.empty() || deltas.empty() || replicates < 1)
        throw ConfigError("diagnostics sweep needs alphas, deltas and replicates >= 1");
    const double T = 1.0;
    const DensityGrid stationary = invariant_density(model);
    DiagnosticsResult res;
    res.alphas = alphas;

    std::vector<std::vector<DiagRow>> grid(deltas.size(),
                                           std::vector<DiagRow>(alphas.size()));
    for (std::size_t di = 0; di < deltas.size(); ++di) {
        const double delta = deltas[di];
        const double dt = default_dt_sub(delta);
        std::vector<std::vector<std::array<double, 3>>> stats(
            static_cast<std::size_t>(replicates),
            std::vector<std::array<double, 3>>(alphas.size()));
        detail::parallel_for(replicates, jobs, [&](int rep) {
            RngStream rng(seed, replicate_stream(1000 + di, rep));
            FinePath path = simulate_path(model, T, dt, rng, stationary);
            Sample sample = subsample(path, delta);
            for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
                auto [uns, sgn] = crossing_stat(sample, alphas[ai]);
                double gap = occupation_riemann_gap(path, sample, alphas[ai]);
                stats[static_cast<std::size_t>(rep)][ai] = {uns, sgn, gap};
            }
        });
        for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
            double su = 0.0, ss = 0.0, sg = 0.0;
            for (int rep = 0; rep < replicates; ++rep) {
                const auto& s = stats[static_cast<std::size_t>(rep)][ai];
                su += s[0];
                ss += s[1] * s[1];
                sg += s[2] * s[2];
            }
            DiagRow row;
            row.alpha = alphas[ai];
            row.delta = delta;
            row.mean_unsigned = su / replicates;
            row.rms_signed = std::sqrt(ss / replicates);
            row.rms_gap = std::sqrt(sg / replicates);
            grid[di][ai] = row;
            res.rows.push_back(row);
        }
    }
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        std::vector<std::pair<double, double>> pu, ps, pg;
        for (std::size_t di = 0; di < deltas.size(); ++di) {
            const DiagRow& r = grid[di][ai];
            if (r.mean_unsigned > 0.0) pu.push_back({r.delta, r.mean_unsigned});
            if (r.rms_signed > 0.0) ps.push_back({r.delta, r.rms_signed});
            if (r.rms_gap > 0.0) pg.push_back({r.delta, r.rms_gap});
        }
        auto fit_or_zero = [](const std::vector<std::pair<double, double>>& p) {
            return (p.size() >= 3) ? rate_regression(p) : RateFit{};
        };
        res.slope_unsigned.push_back(fit_or_zero(pu));
        res.slope_signed.push_back(fit_or_zero(ps));
        res.slope_gap.push_back(fit_or_zero(pg));
    }
    return res;
}

/// errors.csv
inline void write_error_table(const ErrorTable& table, const std::string& path) {
    CsvWriter w(path);
    w.row({"T", "delta", "estimator", "oracle_J", "mean_error", "std_error", "mean_masked_bins",
           "n_failed"});
    for (const ErrorRow& r : table.rows)
        w.row({csv_double(r.point.T), csv_double(r.point.delta), r.estimator,
               std::to_string(r.oracle_J), csv_double(r.mean_error), csv_double(r.std_error),
               csv_double(r.mean_masked_bins), std::to_string(r.n_failed)});
}

/// diagnostics.csv
inline void write_diagnostics(const DiagnosticsResult& res, const std::string& path) {
    CsvWriter w(path);
    w.row({"alpha", "delta", "mean_unsigned", "rms_signed", "rms_gap"});
    for (const DiagRow& r : res.rows)
        w.row({csv_double(r.alpha), csv_double(r.delta), csv_double(r.mean_unsigned),
               csv_double(r.rms_signed), csv_double(r.rms_gap)});
    w.row({"alpha", "slope_unsigned", "slope_signed", "slope_gap", ""});
    for (std::size_t ai = 0; ai < res.alphas.size(); ++ai)
        w.row({csv_double(res.alphas[ai]), csv_double(res.slope_unsigned[ai].slope),
               csv_double(res.slope_signed[ai].slope), csv_double(res.slope_gap[ai].slope), ""});
}

/// estimates/<replicate>.csv for the first min(20, replicates) replicates of
/// the first regime point, re-simulated with the same streams at the oracle J.
inline void write_estimates(const ExperimentConfig& cfg, const ErrorTable& table,
                            const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "estimates");
    const DiffusionModel model = cfg.model();
    const DensityGrid stationary = invariant_density(model);
    const RegimePoint pt = cfg.points[0];
    const double dt = cfg.dt_sub_for(pt.delta);
    const int n_out = std::min(20, cfg.replicates);

    // oracle J per estimator for point 0
    std::vector<int> oracle(cfg.estimators.size(), cfg.J_grid[0]);
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e)
        for (const ErrorRow& r : table.rows)
            if (r.point.T == pt.T && r.point.delta == pt.delta &&
                r.estimator == estimator_name(cfg.estimators[e]))
                oracle[e] = r.oracle_J;

    for (int rep = 0; rep < n_out; ++rep) {
        RngStream rng(cfg.seed, replicate_stream(0, rep));
        FinePath path = simulate_conditioned(model, pt.T, dt, cfg.v, kConditioningBins, rng,
                                             stationary);
        Sample sample = subsample(path, pt.delta);
        CsvWriter w((fs::path(out_dir) / "estimates" / (std::to_string(rep) + ".csv")).string());
        w.row({"estimator", "bin_left", "bin_right", "value", "defined"});
        for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
            const int J = oracle[e];
            EstimatorId id = cfg.estimators[e];
            try {
                if (id == EstimatorId::Ghr) {
                    GhrEstimate g(sample, J);
                    const int n_pts = 200;
                    for (int k = 0; k < n_pts; ++k) {
                        double x = (k + 0.5) / n_pts;
                        std::optional<double> v = g.at(x);
                        w.row({"ghr", csv_double(x), csv_double(x),
                               csv_double(v.value_or(0.0)), v ? "1" : "0"});
                    }
                } else {
                    PiecewiseVol pv;
                    if (id == EstimatorId::Fz) pv = fz_symmetric(sample, J);
                    else if (id == EstimatorId::Spectral) pv = spectral_averaged(sample, J);
                    else pv = spectral_averaged(sample, J, cfg.D);
                    for (int jb = 1; jb <= J; ++jb) {
                        w.row({estimator_name(id), csv_double((jb - 1.0) / J), csv_double(jb / static_cast<double>(J)),
                               csv_double(pv.values[static_cast<std::size_t>(jb - 1)]),
                               pv.defined[static_cast<std::size_t>(jb - 1)] ? "1" : "0"});
                    }
                }
            } catch (const Error&) {
                w.row({estimator_name(id), "", "", "", "failed"});
            }
        }
    }
}

} // namespace voldiff
