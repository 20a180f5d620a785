#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "voldiff/bench.hpp"

using namespace voldiff;

namespace {

nlohmann::json base_config() {
    return nlohmann::json{
        {"model", "reflected_bm"},
        {"regime", {{"type", "high_frequency"}, {"T", 2.0}, {"deltas", {0.01}}}},
        {"estimators", {"fz", "spectral", "spectral_thresholded", "ghr"}},
        {"J_grid", {4, 6}},
        {"replicates", 3},
        {"v", 0.0},
        {"interval", {0.1, 0.9}},
        {"seed", 12345},
    };
}

} // namespace

TEST_CASE("rate regression recovers exact power laws") {
    std::vector<std::pair<double, double>> pts;
    for (double d : {1e-3, 5e-4, 2e-4, 1e-4}) pts.push_back({d, std::cbrt(d)});
    RateFit fit = rate_regression(pts);
    CHECK(fit.slope == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(fit.std_error == doctest::Approx(0.0).epsilon(1e-10));

    // scaled power laws keep the slope
    for (auto& p : pts) p.second *= 7.3;
    CHECK(rate_regression(pts).slope == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("reference error columns regress to the expected slopes") {
    // spectral high-frequency column
    std::vector<std::pair<double, double>> spectral = {
        {1e-3, 0.0195}, {7.5e-4, 0.0174}, {5e-4, 0.0149},
        {3.5e-4, 0.0131}, {2e-4, 0.0108}, {1e-4, 0.0088}};
    CHECK(rate_regression(spectral).slope == doctest::Approx(0.35).epsilon(0.03));
    // FZ high-frequency column
    std::vector<std::pair<double, double>> fz = {
        {1e-3, 0.0169}, {7.5e-4, 0.0153}, {5e-4, 0.0133},
        {3.5e-4, 0.0119}, {2e-4, 0.0100}, {1e-4, 0.0080}};
    CHECK(rate_regression(fz).slope == doctest::Approx(0.32).epsilon(0.03));
}

TEST_CASE("rate regression rejects degenerate designs") {
    CHECK_THROWS_AS(rate_regression({{1.0, 1.0}, {2.0, 2.0}}), DegenerateDesign);
    CHECK_THROWS_AS(rate_regression({{1.0, 1.0}, {1.0, 2.0}, {1.0, 3.0}}), DegenerateDesign);
    CHECK_THROWS_AS(rate_regression({{1.0, 1.0}, {2.0, -2.0}, {3.0, 3.0}}), DegenerateDesign);
}

TEST_CASE("config parsing accepts the documented schema") {
    ExperimentConfig cfg = parse_config(base_config());
    CHECK(cfg.points.size() == 1);
    CHECK(cfg.points[0].T == doctest::Approx(2.0));
    CHECK(cfg.points[0].delta == doctest::Approx(0.01));
    CHECK(cfg.estimators.size() == 4);
    CHECK(cfg.J_grid == std::vector<int>{4, 6});
    CHECK(cfg.replicates == 3);
    CHECK(cfg.seed == 12345);
    CHECK(cfg.a == doctest::Approx(0.1));
    CHECK(cfg.b == doctest::Approx(0.9));
    CHECK(cfg.dt_sub_for(0.01) == doctest::Approx(1e-4));

    nlohmann::json low = base_config();
    low["regime"] = {{"type", "low_frequency"}, {"delta", 0.25}, {"Ts", {100.0, 200.0}}};
    ExperimentConfig lcfg = parse_config(low);
    CHECK(lcfg.points.size() == 2);
    CHECK(lcfg.points[1].T == doctest::Approx(200.0));
    CHECK(lcfg.dt_sub_for(0.25) == doctest::Approx(1e-3));

    nlohmann::json named = base_config();
    named["model"] = {{"sigma2", {{"kind", "quadratic"}, {"params", {0.15, 1.0, -1.0}}}},
                      {"drift", {{"kind", "linear"}, {"params", {0.2, -0.4}}}},
                      {"d", 0.1},
                      {"D", 1.0}};
    CHECK_NOTHROW(parse_config(named).model());
}

TEST_CASE("config parsing rejects malformed documents") {
    auto reject = [](nlohmann::json j) { CHECK_THROWS_AS(parse_config(j), ConfigError); };
    nlohmann::json j = base_config();
    j.erase("model");
    reject(j);
    j = base_config();
    j["estimators"] = {"kernel"};
    reject(j);
    j = base_config();
    j["J_grid"] = nlohmann::json::array();
    reject(j);
    j = base_config();
    j["J_grid"] = {1};
    reject(j);
    j = base_config();
    j["replicates"] = 0;
    reject(j);
    j = base_config();
    j["interval"] = {0.9, 0.1};
    reject(j);
    j = base_config();
    j["regime"]["type"] = "medium";
    reject(j);
    j = base_config();
    j["dt_sub"] = 0.003; // 0.01 not an integer multiple
    reject(j);
    j = base_config();
    j["model"] = "heston";
    reject(j);
}

TEST_CASE("mc_experiment is deterministic and invariant to worker count") {
    ExperimentConfig cfg = parse_config(base_config());
    ErrorTable t1 = mc_experiment(cfg, 1);
    ErrorTable t2 = mc_experiment(cfg, 1);
    ErrorTable t4 = mc_experiment(cfg, 4);
    REQUIRE(t1.rows.size() == 4);
    for (std::size_t i = 0; i < t1.rows.size(); ++i) {
        CHECK(t1.rows[i].mean_error == t2.rows[i].mean_error);
        CHECK(t1.rows[i].mean_error == t4.rows[i].mean_error);
        CHECK(t1.rows[i].std_error == t4.rows[i].std_error);
        CHECK(t1.rows[i].oracle_J == t4.rows[i].oracle_J);
        CHECK(t1.rows[i].mean_error >= 0.0);
        CHECK(std::isfinite(t1.rows[i].std_error));
    }
}

TEST_CASE("oracle J minimizes the mean risk over the grid") {
    nlohmann::json j = base_config();
    j["J_grid"] = {4, 6, 8};
    j["replicates"] = 4;
    ExperimentConfig cfg = parse_config(j);
    ErrorTable t = mc_experiment(cfg, 1);
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
        const auto& risks = t.mean_risk_by_J[0][e];
        double at_oracle = 1e300;
        for (std::size_t jx = 0; jx < cfg.J_grid.size(); ++jx)
            if (cfg.J_grid[jx] == t.rows[e].oracle_J) at_oracle = risks[jx];
        for (double r : risks) CHECK(at_oracle <= r + 1e-15);
    }

    // single-element grid selects that J
    j["J_grid"] = {5};
    ErrorTable ts = mc_experiment(parse_config(j), 1);
    for (const ErrorRow& r : ts.rows) CHECK(r.oracle_J == 5);
}

TEST_CASE("diagnostics sweep emits grid rows and fitted slopes") {
    DiffusionModel bm = validate_model(CoefficientFn::constant(1.0), CoefficientFn::constant(0.0),
                                       0.5, 2.0);
    DiagnosticsResult res = diagnostics_sweep(bm, {0.3, 0.5}, {1e-1, 3e-2, 1e-2}, 10, 7);
    CHECK(res.rows.size() == 6);
    CHECK(res.slope_unsigned.size() == 2);
    for (const DiagRow& r : res.rows) {
        CHECK(r.mean_unsigned >= 0.0);
        CHECK(r.rms_signed >= 0.0);
        CHECK(r.rms_gap >= 0.0);
    }
    // unsigned statistic shrinks with delta at fixed alpha
    CHECK(res.rows[0].mean_unsigned > res.rows[4].mean_unsigned);
    // slope estimates are positive (statistics vanish as delta -> 0)
    for (const RateFit& f : res.slope_unsigned) CHECK(f.slope > 0.0);
}

TEST_CASE("csv outputs are written with headers and quoting") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "voldiff_test_csv";
    fs::create_directories(dir);

    ExperimentConfig cfg = parse_config(base_config());
    ErrorTable t = mc_experiment(cfg, 1);
    write_error_table(t, (dir / "errors.csv").string());
    std::ifstream in(dir / "errors.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "T,delta,estimator,oracle_J,mean_error,std_error,mean_masked_bins,n_failed");
    int lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    CHECK(lines == 4);

    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_double(0.1) == "0.10000000000000001");

    write_estimates(cfg, t, dir.string());
    CHECK(fs::exists(dir / "estimates" / "0.csv"));
    CHECK(fs::exists(dir / "estimates" / "2.csv"));
    fs::remove_all(dir);
}
