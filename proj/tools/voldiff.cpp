// Command-line front end: simulation, single-sample estimation, Monte Carlo
// benchmarking, path diagnostics and spectrum dumps, all driven by one JSON
// config (see README for the schema).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "voldiff/bench.hpp"
#include "voldiff/csv.hpp"
#include "voldiff/eigen.hpp"
#include "voldiff/errors.hpp"
#include "voldiff/estimators.hpp"
#include "voldiff/norms.hpp"

namespace fs = std::filesystem;
using namespace voldiff;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    int jobs = 0; // 0: resolve from VOLDIFF_JOBS, else 1
    bool dump_forms = false;
    bool dump_spectrum = false;
};

int resolve_jobs(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("VOLDIFF_JOBS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

ExperimentConfig load(const Options& opt) {
    ExperimentConfig cfg = parse_config_file(opt.config_path);
    if (opt.seed) cfg.seed = *opt.seed;
    return cfg;
}

nlohmann::json raw_config(const Options& opt) {
    std::ifstream in(opt.config_path);
    nlohmann::json j;
    in >> j;
    return j;
}

void write_path_csv(const FinePath& path, const std::string& file) {
    CsvWriter w(file);
    w.row({"t", "x"});
    for (std::size_t k = 0; k < path.values.size(); ++k)
        w.row({csv_double(static_cast<double>(k) * path.dt_sub), csv_double(path.values[k])});
}

void write_sample_csv(const Sample& sample, const std::string& file) {
    CsvWriter w(file);
    w.row({"t", "x"});
    for (std::size_t k = 0; k < sample.values.size(); ++k)
        w.row({csv_double(static_cast<double>(k) * sample.delta), csv_double(sample.values[k])});
}

void write_forms_csv(const FormSet& forms, const std::string& file) {
    CsvWriter w(file);
    w.row({"matrix", "i", "j", "value"});
    auto dump = [&](const char* name, const Matrix& m) {
        for (std::size_t i = 0; i < m.dim(); ++i)
            for (std::size_t j = 0; j < m.dim(); ++j)
                w.row({name, std::to_string(i), std::to_string(j), csv_double(m(i, j))});
    };
    dump("G", forms.G);
    dump("L", forms.L);
    dump("P", forms.P);
}

void write_spectrum_csv(const FormSet& forms, const std::string& file) {
    GenEigenSolution sol = gen_sym_eig(forms.L, forms.G);
    CsvWriter w(file);
    w.row({"index", "gamma"});
    for (std::size_t i = 0; i < sol.values.size(); ++i)
        w.row({std::to_string(i), csv_double(sol.values[i])});
}

Sample one_sample(const ExperimentConfig& cfg, const DiffusionModel& model, FinePath* keep_path) {
    const RegimePoint pt = cfg.points[0];
    RngStream rng(cfg.seed, replicate_stream(0, 0));
    FinePath path = simulate_conditioned(model, pt.T, cfg.dt_sub_for(pt.delta), cfg.v,
                                         kConditioningBins, rng);
    Sample s = subsample(path, pt.delta);
    if (keep_path) *keep_path = std::move(path);
    return s;
}

int cmd_simulate(const Options& opt) {
    ExperimentConfig cfg = load(opt);
    DiffusionModel model = cfg.model();
    fs::create_directories(opt.out_dir);
    FinePath path;
    Sample sample = one_sample(cfg, model, &path);
    write_path_csv(path, (fs::path(opt.out_dir) / "path.csv").string());
    write_sample_csv(sample, (fs::path(opt.out_dir) / "sample.csv").string());
    return 0;
}

int cmd_estimate(const Options& opt) {
    ExperimentConfig cfg = load(opt);
    DiffusionModel model = cfg.model();
    fs::create_directories(opt.out_dir);
    Sample sample = one_sample(cfg, model, nullptr);
    const int J = cfg.J_grid[0];
    FormSet forms = build_forms(sample, SplineBasis(J));
    if (opt.dump_forms) write_forms_csv(forms, (fs::path(opt.out_dir) / "forms.csv").string());
    if (opt.dump_spectrum)
        write_spectrum_csv(forms, (fs::path(opt.out_dir) / "spectrum.csv").string());

    CsvWriter w((fs::path(opt.out_dir) / "estimate.csv").string());
    w.row({"estimator", "bin_left", "bin_right", "value", "defined"});
    SpectralIntermediates inter = spectral_intermediates(forms);
    for (EstimatorId id : cfg.estimators) {
        if (id == EstimatorId::Ghr) {
            GhrEstimate g(sample, forms, inter);
            for (int k = 0; k < 200; ++k) {
                double x = (k + 0.5) / 200.0;
                std::optional<double> v = g.at(x);
                w.row({"ghr", csv_double(x), csv_double(x), csv_double(v.value_or(0.0)),
                       v ? "1" : "0"});
            }
            continue;
        }
        PiecewiseVol pv;
        if (id == EstimatorId::Fz) pv = fz_symmetric(sample, J);
        else if (id == EstimatorId::Spectral) pv = spectral_averaged(forms, inter);
        else pv = spectral_averaged(forms, inter, cfg.D);
        for (int j = 1; j <= J; ++j)
            w.row({estimator_name(id), csv_double((j - 1.0) / J),
                   csv_double(static_cast<double>(j) / J),
                   csv_double(pv.values[static_cast<std::size_t>(j - 1)]),
                   pv.defined[static_cast<std::size_t>(j - 1)] ? "1" : "0"});
    }
    return 0;
}

int cmd_bench(const Options& opt) {
    ExperimentConfig cfg = load(opt);
    fs::create_directories(opt.out_dir);
    ErrorTable table = mc_experiment(cfg, resolve_jobs(opt.jobs));
    write_error_table(table, (fs::path(opt.out_dir) / "errors.csv").string());
    write_estimates(cfg, table, opt.out_dir);
    for (const ErrorRow& r : table.rows)
        std::cout << "T=" << r.point.T << " delta=" << r.point.delta << " " << r.estimator
                  << " J=" << r.oracle_J << " error=" << r.mean_error << " +/- " << r.std_error
                  << "\n";
    return 0;
}

int cmd_diagnose(const Options& opt) {
    ExperimentConfig cfg = load(opt);
    DiffusionModel model = cfg.model();
    nlohmann::json raw = raw_config(opt);
    std::vector<double> alphas = raw.value("alphas", std::vector<double>{0.5});
    std::vector<double> deltas;
    for (const RegimePoint& p : cfg.points) deltas.push_back(p.delta);
    fs::create_directories(opt.out_dir);
    DiagnosticsResult res =
        diagnostics_sweep(model, alphas, deltas, cfg.replicates, cfg.seed, resolve_jobs(opt.jobs));
    write_diagnostics(res, (fs::path(opt.out_dir) / "diagnostics.csv").string());
    return 0;
}

int cmd_spectrum(const Options& opt) {
    ExperimentConfig cfg = load(opt);
    DiffusionModel model = cfg.model();
    fs::create_directories(opt.out_dir);
    Sample sample = one_sample(cfg, model, nullptr);
    FormSet forms = build_forms(sample, SplineBasis(cfg.J_grid[0]));
    write_spectrum_csv(forms, (fs::path(opt.out_dir) / "spectrum.csv").string());
    if (opt.dump_forms) write_forms_csv(forms, (fs::path(opt.out_dir) / "forms.csv").string());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reflected-diffusion volatility estimation toolkit"};
    app.require_subcommand(1);

    Options opt;
    std::uint64_t seed_flag = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "JSON experiment config")->required();
        sub->add_option("--seed", seed_flag, "master seed override")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--out", opt.out_dir, "output directory");
        sub->add_option("--jobs", opt.jobs, "worker threads (default: VOLDIFF_JOBS or 1)");
        sub->add_flag("--dump-forms", opt.dump_forms, "emit the form matrices as CSV");
        sub->add_flag("--dump-spectrum", opt.dump_spectrum, "emit all eigenvalues as CSV");
        return sub;
    };

    CLI::App* simulate = add_common(app.add_subcommand("simulate", "emit a path and its sample"));
    CLI::App* estimate = add_common(app.add_subcommand("estimate", "estimate one sample"));
    CLI::App* bench = add_common(app.add_subcommand("bench", "full Monte Carlo error table"));
    CLI::App* diagnose = add_common(app.add_subcommand("diagnose", "crossing/occupation sweeps"));
    CLI::App* spectrum = add_common(app.add_subcommand("spectrum", "dump the eigenvalue spectrum"));

    CLI11_PARSE(app, argc, argv);
    if (seed_set) opt.seed = seed_flag;

    try {
        if (simulate->parsed()) return cmd_simulate(opt);
        if (estimate->parsed()) return cmd_estimate(opt);
        if (bench->parsed()) return cmd_bench(opt);
        if (diagnose->parsed()) return cmd_diagnose(opt);
        if (spectrum->parsed()) return cmd_spectrum(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ConditioningExhausted& e) {
        std::cerr << "conditioning error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
