#pragma once

// Command-line front end: `fit`, `bootstrap` and `simulate`.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 convergence failure,
// 4 too many failed replicates/runs.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "icecore/bootstrap.hpp"
#include "icecore/data.hpp"
#include "icecore/model.hpp"
#include "icecore/simulation.hpp"

namespace icecore::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kConvergence = 3, kExcessFailures = 4 };

using json = nlohmann::json;

/// Shortest decimal that round-trips; "nan"/"inf" spelled out.
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
    }

    template <class... Cols>
    void header(const Cols&... cols) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cols, first = false), ...);
        out_ << '\n';
    }

    CsvWriter& cell(double v) { return raw(fmt_double(v)); }
    CsvWriter& cell(std::size_t v) { return raw(std::to_string(v)); }
    CsvWriter& cell(int v) { return raw(std::to_string(v)); }
    CsvWriter& cell(const std::string& s) { return raw(s); }

    void end_row() {
        out_ << '\n';
        first_ = true;
    }

private:
    CsvWriter& raw(const std::string& s) {
        if (!first_) out_ << ',';
        out_ << s;
        first_ = false;
        return *this;
    }

    std::ofstream out_;
    bool first_ = true;
};

inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline std::string noise_mode_name(NoiseMode m) {
    return m == NoiseMode::ar1_reconstruction ? "ar1" : "verbatim";
}

/// Parses "start:stop:step" (stop inclusive) or a comma-separated list.
inline std::vector<double> parse_h_grid(const std::string& spec) {
    std::vector<double> out;
    auto to_double = [&](std::string_view s) {
        double v = 0.0;
        if (!detail::parse_double(detail::trim(s), v) || !std::isfinite(v))
            throw std::invalid_argument("bad --h-grid value '" + std::string(s) + "'");
        return v;
    };
    if (spec.find(':') != std::string::npos) {
        const auto parts = detail::split(spec, ':');
        if (parts.size() != 3) throw std::invalid_argument("--h-grid expects start:stop:step");
        const double a = to_double(parts[0]), b = to_double(parts[1]), step = to_double(parts[2]);
        if (!(step > 0.0) || b < a) throw std::invalid_argument("--h-grid needs step > 0 and stop >= start");
        const auto count = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9)) + 1;
        for (std::size_t k = 0; k < count; ++k) out.push_back(a + step * static_cast<double>(k));
    } else {
        for (const auto part : detail::split(spec, ',')) out.push_back(to_double(part));
    }
    for (const double h : out)
        if (h < 0.0) throw std::invalid_argument("--h-grid values must be >= 0");
    return out;
}

struct Options {
    std::string input;
    std::string out_dir = ".";
    double bandwidth = 28.0;
    double margin = 0.05;
    std::size_t B = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 20240601;
    std::uint64_t design_seed = 1;
    std::string noise_mode = "ar1";
    double rel_tol = FitConfig{}.rel_tol;
    int max_iters = FitConfig{}.max_outer_iters;
    std::string h_grid;
    std::size_t runs = 200;
    std::vector<std::size_t> n{3000};
    unsigned threads = 0;

    bool B_set(const CLI::App* boot, const CLI::App* sim) const {
        return (boot->parsed() && boot->count("--B") > 0) || (sim->parsed() && sim->count("--B") > 0);
    }
};

struct Context {
    std::ostream& out;
    std::ostream& err;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    std::string started = utc_now();
};

inline FitConfig fit_config(const Options& o) {
    FitConfig cfg;
    cfg.rel_tol = o.rel_tol;
    cfg.max_outer_iters = o.max_iters;
    cfg.validate();
    return cfg;
}

inline NoiseMode noise_mode(const Options& o) {
    return o.noise_mode == "verbatim" ? NoiseMode::verbatim : NoiseMode::ar1_reconstruction;
}

inline void write_manifest(const Context& ctx, const std::filesystem::path& dir, const std::string& command,
                           const Options& o, json config) {
    json m;
    m["command"] = command;
    m["inputs"] = o.input.empty() ? json::array() : json::array({o.input});
    m["config"] = std::move(config);
    m["threads"] = resolve_threads(o.threads);
    m["software"] = {{"name", "icecore"}, {"version", kVersion}};
    m["started_utc"] = ctx.started;
    m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.start).count();
    write_json(dir / "manifest.json", m);
}

struct LoadedFit {
    DerivedSeries series;
    TempBand band;
    KernelSpec spec;
    FitConfig cfg;
    ModelFit model;
    bool noise_ok = false;
    std::vector<std::string> warnings;
};

/// Load, derive, fit. Noise estimation failures are downgraded to warnings
/// (tiny or exactly fitted inputs have no usable residual correlation).
inline LoadedFit load_and_fit(const Options& o, Context& ctx) {
    LoadedFit lf;
    lf.series = derive(load_core_file(o.input));
    if (lf.series.size() < 10) {
        lf.warnings.push_back("tiny sample: n=" + std::to_string(lf.series.size()));
    }
    lf.band = default_temp_band(lf.series.x, o.margin);
    lf.spec = KernelSpec{KernelKind::epanechnikov, o.bandwidth};
    lf.spec.validate();
    lf.cfg = fit_config(o);
    lf.model.step = alternate_fit(lf.series, lf.band, lf.cfg);
    lf.model.smooth = smooth_fit(lf.series.y, lf.series.x, lf.model.step, lf.spec, lf.band, lf.cfg);
    try {
        lf.model.noise = estimate_noise(lf.series.y, lf.series.x, lf.model.gamma_tilde(), lf.model.smooth.at_knots());
        lf.noise_ok = true;
        if (lf.model.noise.phi_outside_unit) lf.warnings.push_back("estimated phi outside (-1, 1)");
    } catch (const std::exception& e) {
        lf.model.noise.residuals =
            residuals(lf.series.y, lf.series.x, lf.model.gamma_tilde(), lf.model.smooth.at_knots());
        lf.warnings.push_back(std::string("noise estimation failed: ") + e.what());
    }
    if (!lf.model.step.converged) lf.warnings.push_back("alternating fit did not converge");
    if (!lf.model.smooth.refit().converged) lf.warnings.push_back("gamma refit did not converge");
    for (const auto& w : lf.warnings) ctx.err << "warning: " << w << '\n';
    return lf;
}

inline bool converged(const LoadedFit& lf) { return lf.model.step.converged && lf.model.smooth.refit().converged; }

inline json fit_json(const LoadedFit& lf) {
    const ModelFit& m = lf.model;
    json j;
    j["n"] = lf.series.size();
    j["gamma_tilde"] = num(m.gamma_tilde());
    j["gamma_hat"] = num(m.step.gamma_hat);
    j["phi_tilde"] = lf.noise_ok ? num(m.noise.phi_tilde) : json(nullptr);
    j["sigma2_tilde"] = lf.noise_ok ? num(m.noise.sigma2_tilde) : json(nullptr);
    j["gamma_interval"] = {num(lf.band.gamma_lo()), num(lf.band.gamma_hi())};
    j["temp_band"] = {{"x_m", num(lf.band.x_m)}, {"x_M", num(lf.band.x_M)}};
    j["bandwidth"] = num(lf.spec.bandwidth);
    j["kernel"] = "epanechnikov";
    j["iterations"] = m.step.iterations;
    j["converged"] = converged(lf);
    json trace = json::array();
    for (const double q : m.step.loss_trace) trace.push_back(num(q));
    j["loss_trace"] = trace;
    j["warnings"] = lf.warnings;
    return j;
}

inline void write_curves(const std::filesystem::path& path, const LoadedFit& lf) {
    const DerivedSeries& s = lf.series;
    const ModelFit& m = lf.model;
    CsvWriter csv(path);
    csv.header("z", "x", "log_aar", "log_g_step", "log_g_smooth", "fitted_log_aar", "residual");
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double smooth = m.smooth.at_knots()[i];
        const double fitted = std::log1p(m.gamma_tilde() * s.x[i]) + smooth;
        csv.cell(s.z[i]).cell(s.x[i]).cell(s.y[i]).cell(m.step.log_g_hat.levels()[i]).cell(smooth).cell(fitted).cell(
            s.y[i] - fitted);
        csv.end_row();
    }
}

inline json fit_config_json(const Options& o) {
    return {{"bandwidth", o.bandwidth}, {"rel_tol", o.rel_tol}, {"max_iters", o.max_iters}, {"margin", o.margin}};
}

inline int cmd_fit(const Options& o, Context& ctx) {
    const std::filesystem::path dir(o.out_dir);
    std::filesystem::create_directories(dir);
    const LoadedFit lf = load_and_fit(o, ctx);
    write_json(dir / "fit.json", fit_json(lf));
    write_curves(dir / "curves.csv", lf);
    write_manifest(ctx, dir, "fit", o, fit_config_json(o));
    ctx.out << "gamma_tilde = " << fmt_double(lf.model.gamma_tilde()) << " (n=" << lf.series.size() << ")\n";
    return converged(lf) ? kOk : kConvergence;
}

inline int cmd_bootstrap(const Options& o, Context& ctx) {
    const std::filesystem::path dir(o.out_dir);
    std::filesystem::create_directories(dir);
    LoadedFit lf = load_and_fit(o, ctx);
    if (!lf.noise_ok) throw DataError("cannot bootstrap: noise parameters could not be estimated");

    BootstrapConfig bcfg;
    bcfg.B = o.B;
    bcfg.alpha = o.alpha;
    bcfg.seed = o.seed;
    bcfg.mode = noise_mode(o);
    bcfg.threads = o.threads;
    if (bcfg.B < 100) ctx.err << "warning: low replicate count B=" << bcfg.B << '\n';

    const DerivedSeries& s = lf.series;
    const BootstrapSummary bs = run_bootstrap(s.y, s.x, s.z, lf.model, lf.spec, lf.band, lf.cfg, bcfg);

    json j;
    j["fit"] = fit_json(lf);
    j["gamma_tilde"] = num(lf.model.gamma_tilde());
    j["se_gamma"] = bs.se_defined ? num(bs.se_gamma) : json(nullptr);
    j["se_defined"] = bs.se_defined;
    j["ci_gamma"] = {num(bs.ci_gamma.lo), num(bs.ci_gamma.hi)};
    j["alpha"] = o.alpha;
    j["B"] = o.B;
    j["replicates_used"] = bs.replicates();
    j["failed_replicates"] = bs.failed_ids;
    j["seed"] = o.seed;
    j["noise_mode"] = noise_mode_name(bcfg.mode);
    json table = json::array();
    for (std::size_t i = 0; i < s.size(); ++i)
        table.push_back({{"z", num(s.z[i])},
                         {"log_g", num(lf.model.smooth.at_knots()[i])},
                         {"se", num(bs.se_log_g[i])},
                         {"lo", num(bs.pointwise_ci_log_g[i].lo)},
                         {"hi", num(bs.pointwise_ci_log_g[i].hi)}});
    j["pointwise_log_g"] = table;
    write_json(dir / "bootstrap.json", j);

    CsvWriter csv(dir / "replicates.csv");
    csv.header("replicate", "gamma", "innovation_variance");
    for (std::size_t r = 0; r < bs.replicates(); ++r) {
        csv.cell(bs.replicate_ids[r]).cell(bs.gamma_reps[r]).cell(bs.resample_variances[r]);
        csv.end_row();
    }

    json cfgj = fit_config_json(o);
    cfgj["B"] = o.B;
    cfgj["alpha"] = o.alpha;
    cfgj["seed"] = o.seed;
    cfgj["noise_mode"] = noise_mode_name(bcfg.mode);
    write_manifest(ctx, dir, "bootstrap", o, cfgj);
    ctx.out << "gamma_tilde = " << fmt_double(lf.model.gamma_tilde()) << ", se = " << fmt_double(bs.se_gamma)
            << ", ci = (" << fmt_double(bs.ci_gamma.lo) << ", " << fmt_double(bs.ci_gamma.hi) << ")\n";
    return converged(lf) ? kOk : kConvergence;
}

inline int cmd_simulate(const Options& o, Context& ctx) {
    const std::filesystem::path dir(o.out_dir);
    std::filesystem::create_directories(dir);
    const std::vector<double> h_grid = o.h_grid.empty() ? std::vector<double>{o.bandwidth} : parse_h_grid(o.h_grid);

    CsvWriter table(dir / "table2.csv");
    table.header("n", "h", "runs", "failed", "gamma_bias", "gamma_sd", "gamma_mc_se", "phi_bias", "phi_sd",
                 "phi_mc_se", "sigma2_bias", "sigma2_sd", "sigma2_mc_se");
    CsvWriter logg(dir / "logg_bias_sd.csv");
    logg.header("n", "z", "bias", "sd");
    CsvWriter coverage(dir / "coverage.csv");
    coverage.header("n", "h", "runs", "failed", "B", "coverage", "mean_bootstrap_se", "direct_sd");
    CsvWriter logg_cov(dir / "logg_coverage.csv");
    logg_cov.header("n", "h", "z", "coverage");
    CsvWriter se_hist(dir / "bootstrap_se.csv");
    se_hist.header("n", "h", "run", "se", "covered");

    json summary;
    summary["bias_sd"] = json::array();
    summary["coverage"] = json::array();
    for (const std::size_t n : o.n) {
        SimConfig cfg;
        cfg.n = n;
        cfg.runs = o.runs;
        cfg.B = o.B;
        cfg.h = o.bandwidth;
        cfg.alpha = o.alpha;
        cfg.design_seed = o.design_seed;
        cfg.run_seed = o.seed;
        cfg.threads = o.threads;
        cfg.mode = noise_mode(o);
        cfg.fit = fit_config(o);

        const BiasSdResult r = run_bias_sd_study(cfg);
        table.cell(n).cell(r.h).cell(r.runs).cell(r.failed);
        for (const EstimatorStats* st : {&r.gamma, &r.phi, &r.sigma2}) table.cell(st->bias).cell(st->sd).cell(st->mc_se);
        table.end_row();
        for (std::size_t k = 0; k < r.grid.size(); ++k) {
            logg.cell(n).cell(r.grid[k]).cell(r.logg_bias[k]).cell(r.logg_sd[k]);
            logg.end_row();
        }
        summary["bias_sd"].push_back({{"n", n},
                                      {"h", r.h},
                                      {"runs", r.runs},
                                      {"failed", r.failed},
                                      {"gamma", {{"bias", num(r.gamma.bias)}, {"sd", num(r.gamma.sd)}}},
                                      {"phi", {{"bias", num(r.phi.bias)}, {"sd", num(r.phi.sd)}}},
                                      {"sigma2", {{"bias", num(r.sigma2.bias)}, {"sd", num(r.sigma2.sd)}}}});

        if (o.B == 0) continue;
        const CoverageResult cr = run_coverage_study(cfg, h_grid);
        if (cr.below_recommended) ctx.err << "warning: runs < 50 or B < 100; coverage estimates are rough\n";
        for (const CoverageRow& row : cr.rows) {
            coverage.cell(n).cell(row.h).cell(row.runs).cell(row.failed).cell(cr.B).cell(row.coverage).cell(
                row.mean_se).cell(row.direct_sd);
            coverage.end_row();
            for (std::size_t k = 0; k < cr.grid.size(); ++k) {
                logg_cov.cell(n).cell(row.h).cell(cr.grid[k]).cell(row.grid_coverage[k]);
                logg_cov.end_row();
            }
            for (std::size_t r2 = 0; r2 < row.se_values.size(); ++r2) {
                se_hist.cell(n).cell(row.h).cell(r2).cell(row.se_values[r2]).cell(static_cast<int>(row.covered[r2]));
                se_hist.end_row();
            }
            summary["coverage"].push_back({{"n", n},
                                           {"h", row.h},
                                           {"coverage", num(row.coverage)},
                                           {"mean_bootstrap_se", num(row.mean_se)},
                                           {"direct_sd", num(row.direct_sd)},
                                           {"failed", row.failed}});
        }
    }
    write_json(dir / "summary.json", summary);

    json cfgj = fit_config_json(o);
    cfgj["n"] = o.n;
    cfgj["runs"] = o.runs;
    cfgj["B"] = o.B;
    cfgj["alpha"] = o.alpha;
    cfgj["h_grid"] = h_grid;
    cfgj["seed"] = o.seed;
    cfgj["design_seed"] = o.design_seed;
    cfgj["noise_mode"] = o.noise_mode;
    write_manifest(ctx, dir, "simulate", o, cfgj);
    ctx.out << "simulation outputs written to " << dir.string() << '\n';
    return kOk;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Semiparametric accumulation-temperature model for ice-core series"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Options o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
        sub->add_option("--rel-tol", o.rel_tol, "Relative loss change stopping threshold")->capture_default_str();
        sub->add_option("--max-iters", o.max_iters, "Maximum outer iterations")->capture_default_str();
        sub->add_option("--threads", o.threads, "Worker threads (0 = all cores)")->capture_default_str();
    };
    auto add_bootstrap = [&](CLI::App* sub, std::size_t default_B) {
        sub->add_option("--B", o.B, "Bootstrap replicates (default " + std::to_string(default_B) + ")");
        sub->add_option("--alpha", o.alpha, "Miscoverage of the percentile interval")
            ->check(CLI::Range(0.0, 1.0))
            ->capture_default_str();
        sub->add_option("--seed", o.seed, "Base random seed")->capture_default_str();
        sub->add_option("--noise-mode", o.noise_mode, "Replicate noise: ar1 or verbatim")
            ->check(CLI::IsMember({"ar1", "verbatim"}))
            ->capture_default_str();
    };

    CLI::App* fit = app.add_subcommand("fit", "Fit the model to a core CSV");
    CLI::App* boot = app.add_subcommand("bootstrap", "Fit and bootstrap a core CSV");
    CLI::App* sim = app.add_subcommand("simulate", "Run the synthetic bias/sd and coverage study");
    sim->set_help_flag("--help", "Print this help message and exit");
    for (CLI::App* sub : {fit, boot}) {
        sub->add_option("--input", o.input, "CSV with depth_m, age_kyrbp, temp_c")->required();
        sub->add_option("--bandwidth", o.bandwidth, "Kernel bandwidth, KYr (0 = no smoothing)")->capture_default_str();
        sub->add_option("--margin", o.margin, "Relative margin of the temperature band")->capture_default_str();
        add_common(sub);
    }
    add_bootstrap(boot, 1000);

    sim->add_option("--h,--bandwidth", o.bandwidth, "Bandwidth for the bias/sd table")->capture_default_str();
    sim->add_option("--h-grid", o.h_grid, "Coverage bandwidths: start:stop:step or comma list");
    sim->add_option("--n", o.n, "Sample size(s)")->delimiter(',')->capture_default_str();
    sim->add_option("--runs", o.runs, "Simulation runs")->capture_default_str();
    sim->add_option("--design-seed", o.design_seed, "Seed of the fixed temperature jitter")->capture_default_str();
    add_common(sim);
    add_bootstrap(sim, 200);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    if (!o.B_set(boot, sim)) o.B = boot->parsed() ? 1000 : 200;

    Context ctx{out, err};
    try {
        if (fit->parsed()) return cmd_fit(o, ctx);
        if (boot->parsed()) return cmd_bootstrap(o, ctx);
        return cmd_simulate(o, ctx);
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const DomainError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const ExcessFailureError& e) {
        err << "error: " << e.what() << '\n';
        return kExcessFailures;
    } catch (const ConvergenceError& e) {
        err << "convergence failure: " << e.what() << '\n';
        return kConvergence;
    } catch (const std::invalid_argument& e) {
        err << "invalid argument: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
}

} // namespace icecore::cli
