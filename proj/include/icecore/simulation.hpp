#pragma once

// Synthetic finite-sample study.
//
// Depths are a uniform grid d_i = i*delta/n. Ages follow z = 7e-5 d^2 and
// temperatures x = -3 + 8 cos(14 pi 1e-7 d^2) + theta_i with theta standard
// normal, drawn once per design seed. Responses are
// log(1 + gamma0 x) + log(25 exp(-z/100) + 1) plus stationary Gaussian AR(1)
// noise. Every run refits the full pipeline; coverage runs add a bootstrap.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "icecore/bootstrap.hpp"
#include "icecore/data.hpp"
#include "icecore/errors.hpp"
#include "icecore/model.hpp"
#include "icecore/parallel.hpp"

namespace icecore {

struct SimConfig {
    std::size_t n = 3000;
    double delta = 3000.0; ///< depth span, m
    double gamma0 = 0.05;
    double phi = 0.95;
    double sigma2 = 0.01;
    std::size_t runs = 200;
    std::size_t B = 200;
    double h = 28.0;
    double alpha = 0.05;
    std::uint64_t design_seed = 1;
    std::uint64_t run_seed = 2;
    unsigned threads = 1;
    NoiseMode mode = NoiseMode::ar1_reconstruction;
    FitConfig fit;
    std::size_t grid_points = 101;
    double max_failure_fraction = 0.05;

    void validate() const {
        if (n < 2) throw std::invalid_argument("SimConfig: n must be >= 2");
        if (!(delta > 0.0)) throw std::invalid_argument("SimConfig: delta must be positive");
        if (!(std::abs(phi) > 0.0 && std::abs(phi) < 1.0)) throw std::invalid_argument("SimConfig: need 0 < |phi| < 1");
        if (!(sigma2 > 0.0)) throw std::invalid_argument("SimConfig: sigma2 must be positive");
        if (grid_points < 2) throw std::invalid_argument("SimConfig: grid_points must be >= 2");
        fit.validate();
    }

    /// Oldest age of the design, i.e. z at d = delta.
    double z_max() const { return 7e-5 * delta * delta; }
};

struct Design {
    std::vector<double> d;
    std::vector<double> z;
    std::vector<double> x;
};

inline Design make_design(const SimConfig& cfg) {
    if (cfg.n < 2) throw std::invalid_argument("make_design: n must be >= 2");
    Design des;
    des.d.resize(cfg.n);
    des.z.resize(cfg.n);
    des.x.resize(cfg.n);
    Rng rng(cfg.design_seed);
    std::normal_distribution<double> theta(0.0, 1.0);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        const double d = static_cast<double>(i + 1) * cfg.delta / static_cast<double>(cfg.n);
        des.d[i] = d;
        des.z[i] = 7e-5 * d * d;
        des.x[i] = -3.0 + 8.0 * std::cos(14.0 * std::numbers::pi * 1e-7 * d * d) + theta(rng);
    }
    return des;
}

inline double log_g0(double z) { return std::log(25.0 * std::exp(-z / 100.0) + 1.0); }

inline std::vector<double> true_mean(std::span<const double> z, std::span<const double> x, double gamma0) {
    if (z.size() != x.size()) throw std::invalid_argument("true_mean: length mismatch");
    std::vector<double> m(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) m[i] = detail::log1p_checked(gamma0, x[i]) + log_g0(z[i]);
    return m;
}

/// Stationary Gaussian AR(1): eps_1 ~ N(0, sigma2/(1-phi^2)), then
/// eps_i = phi eps_{i-1} + U_i with U_i ~ N(0, sigma2).
inline std::vector<double> simulate_ar1(std::size_t n, double phi, double sigma2, Rng& rng) {
    if (!(std::abs(phi) < 1.0)) throw std::invalid_argument("simulate_ar1: need |phi| < 1");
    if (!(sigma2 >= 0.0)) throw std::invalid_argument("simulate_ar1: sigma2 must be >= 0");
    std::vector<double> eps(n, 0.0);
    if (n == 0 || sigma2 == 0.0) return eps;
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(sigma2);
    eps[0] = sd / std::sqrt(1.0 - phi * phi) * normal(rng);
    for (std::size_t i = 1; i < n; ++i) eps[i] = phi * eps[i - 1] + sd * normal(rng);
    return eps;
}

/// Uniform evaluation grid for log g curves, [0, z_max].
inline std::vector<double> study_grid(const SimConfig& cfg) {
    std::vector<double> g(cfg.grid_points);
    const double step = cfg.z_max() / static_cast<double>(cfg.grid_points - 1);
    for (std::size_t k = 0; k < cfg.grid_points; ++k) g[k] = step * static_cast<double>(k);
    return g;
}

/// Response series of run `run` at the configured sample size.
inline std::vector<double> simulate_responses(const SimConfig& cfg, const Design& des, std::size_t run) {
    Rng rng = make_stream(cfg.run_seed, {cfg.n, run});
    std::vector<double> y = true_mean(des.z, des.x, cfg.gamma0);
    const std::vector<double> eps = simulate_ar1(cfg.n, cfg.phi, cfg.sigma2, rng);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += eps[i];
    return y;
}

struct EstimatorStats {
    double mean = 0.0;
    double bias = 0.0;
    double sd = 0.0;
    double mc_se = 0.0; ///< Monte-Carlo standard error of the mean, sd/sqrt(runs)
};

inline EstimatorStats summarize(std::span<const double> values, double truth) {
    EstimatorStats s;
    const auto m = static_cast<double>(values.size());
    for (const double v : values) s.mean += v;
    s.mean /= m;
    s.bias = s.mean - truth;
    s.sd = detail::sample_sd(values);
    s.mc_se = s.sd / std::sqrt(m);
    return s;
}

struct BiasSdResult {
    std::size_t n = 0;
    double h = 0.0;
    std::size_t runs = 0;
    std::size_t failed = 0;
    std::vector<double> gamma_values; ///< gamma-tilde per successful run
    std::vector<double> phi_values;
    std::vector<double> sigma2_values;
    EstimatorStats gamma;
    EstimatorStats phi;
    EstimatorStats sigma2;
    std::vector<double> grid;
    std::vector<double> logg_bias;
    std::vector<double> logg_sd;
};

struct CoverageRow {
    double h = 0.0;
    std::size_t runs = 0;
    std::size_t failed = 0;
    double coverage = 0.0;        ///< fraction of runs whose interval covers gamma0
    double mean_se = 0.0;         ///< average bootstrap standard error
    double direct_sd = 0.0;       ///< sd of gamma-tilde across runs
    std::vector<double> se_values;
    std::vector<unsigned char> covered;
    std::vector<double> grid_coverage; ///< pointwise coverage of log g0 on the grid
};

struct CoverageResult {
    std::size_t n = 0;
    std::size_t B = 0;
    std::vector<double> grid;
    std::vector<CoverageRow> rows;
    bool below_recommended = false; ///< runs < 50 or B < 100
};

struct StudyResult {
    std::vector<BiasSdResult> bias_sd;
    std::vector<CoverageResult> coverage;
};

namespace detail {

inline void check_failures(std::size_t failed, std::size_t total, double fraction, const char* who) {
    if (static_cast<double>(failed) > fraction * static_cast<double>(total) || failed == total)
        throw ExcessFailureError(std::string(who) + ": " + std::to_string(failed) + " of " + std::to_string(total) +
                                     " runs failed",
                                 failed, total);
}

} // namespace detail

/// Bias and sd of gamma-tilde, phi-tilde, sigma2-tilde and the log g curve
/// across `cfg.runs` simulated data sets at bandwidth `cfg.h`.
inline BiasSdResult run_bias_sd_study(const SimConfig& cfg) {
    cfg.validate();
    if (cfg.runs < 2) throw std::invalid_argument("run_bias_sd_study: runs must be >= 2");
    const Design des = make_design(cfg);
    const TempBand band = default_temp_band(des.x);
    const KernelSpec spec{KernelKind::epanechnikov, cfg.h};
    const std::vector<double> grid = study_grid(cfg);

    struct Outcome {
        bool ok = false;
        double gamma = 0.0, phi = 0.0, sigma2 = 0.0;
        std::vector<double> curve;
    };
    std::vector<Outcome> out(cfg.runs);
    parallel_for(cfg.runs, cfg.threads, [&](std::size_t r) {
        try {
            const std::vector<double> y = simulate_responses(cfg, des, r);
            const ModelFit m = fit_model(y, des.x, des.z, spec, band, cfg.fit);
            out[r].gamma = m.gamma_tilde();
            out[r].phi = m.noise.phi_tilde;
            out[r].sigma2 = m.noise.sigma2_tilde;
            out[r].curve.resize(grid.size());
            for (std::size_t k = 0; k < grid.size(); ++k) out[r].curve[k] = m.smooth.value_or_step(grid[k]);
            out[r].ok = true;
        } catch (const std::exception&) {
            out[r].ok = false;
        }
    });

    BiasSdResult res;
    res.n = cfg.n;
    res.h = cfg.h;
    res.runs = cfg.runs;
    res.grid = grid;
    std::vector<const Outcome*> good;
    for (const Outcome& o : out) {
        if (!o.ok) {
            ++res.failed;
            continue;
        }
        good.push_back(&o);
        res.gamma_values.push_back(o.gamma);
        res.phi_values.push_back(o.phi);
        res.sigma2_values.push_back(o.sigma2);
    }
    detail::check_failures(res.failed, cfg.runs, cfg.max_failure_fraction, "bias/sd study");

    res.gamma = summarize(res.gamma_values, cfg.gamma0);
    res.phi = summarize(res.phi_values, cfg.phi);
    res.sigma2 = summarize(res.sigma2_values, cfg.sigma2);
    res.logg_bias.resize(grid.size());
    res.logg_sd.resize(grid.size());
    std::vector<double> column(good.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        for (std::size_t r = 0; r < good.size(); ++r) column[r] = good[r]->curve[k];
        const EstimatorStats st = summarize(column, log_g0(grid[k]));
        res.logg_bias[k] = st.bias;
        res.logg_sd[k] = st.sd;
    }
    return res;
}

/// Empirical coverage of the bootstrap percentile interval for gamma0 (and
/// pointwise for log g0 on the study grid), for each bandwidth in `h_grid`.
/// Each run simulates one data set, fits the step estimate once and then
/// smooths, refits and bootstraps at every bandwidth with the same bootstrap
/// seed.
inline CoverageResult run_coverage_study(const SimConfig& cfg, std::span<const double> h_grid) {
    cfg.validate();
    if (cfg.runs < 2 || cfg.B < 2) throw std::invalid_argument("run_coverage_study: need runs >= 2 and B >= 2");
    if (h_grid.empty()) throw std::invalid_argument("run_coverage_study: empty bandwidth grid");
    const Design des = make_design(cfg);
    const TempBand band = default_temp_band(des.x);
    const std::vector<double> grid = study_grid(cfg);
    std::vector<double> truth_grid(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) truth_grid[k] = log_g0(grid[k]);

    const std::size_t H = h_grid.size();
    struct Cell {
        bool ok = false;
        double gamma = 0.0;
        double se = 0.0;
        bool covered = false;
        std::vector<unsigned char> grid_covered;
    };
    std::vector<Cell> cells(cfg.runs * H);

    parallel_for(cfg.runs, cfg.threads, [&](std::size_t r) {
        std::vector<double> y;
        StepFit step;
        try {
            y = simulate_responses(cfg, des, r);
            step = alternate_fit(y, des.x, des.z, band, cfg.fit);
        } catch (const std::exception&) {
            return;
        }
        BootstrapConfig bcfg;
        bcfg.B = cfg.B;
        bcfg.alpha = cfg.alpha;
        bcfg.seed = stream_seed(cfg.run_seed, {cfg.n, r, 0xB0075ULL});
        bcfg.mode = cfg.mode;
        bcfg.threads = 1;
        bcfg.max_failure_fraction = cfg.max_failure_fraction;
        for (std::size_t j = 0; j < H; ++j) {
            Cell& c = cells[r * H + j];
            try {
                const KernelSpec spec{KernelKind::epanechnikov, h_grid[j]};
                ModelFit m;
                m.step = step;
                m.smooth = smooth_fit(y, des.x, step, spec, band, cfg.fit);
                m.noise = estimate_noise(y, des.x, m.smooth.gamma_tilde(), m.smooth.at_knots());
                const BootstrapSummary bs = run_bootstrap(y, des.x, des.z, m, spec, band, cfg.fit, bcfg, grid);
                c.gamma = m.gamma_tilde();
                c.se = bs.se_gamma;
                c.covered = bs.ci_gamma.contains(cfg.gamma0);
                c.grid_covered.resize(grid.size());
                for (std::size_t k = 0; k < grid.size(); ++k) c.grid_covered[k] = bs.grid_ci[k].contains(truth_grid[k]);
                c.ok = true;
            } catch (const std::exception&) {
                c.ok = false;
            }
        }
    });

    CoverageResult res;
    res.n = cfg.n;
    res.B = cfg.B;
    res.grid = grid;
    res.below_recommended = cfg.runs < 50 || cfg.B < 100;
    for (std::size_t j = 0; j < H; ++j) {
        CoverageRow row;
        row.h = h_grid[j];
        row.runs = cfg.runs;
        row.grid_coverage.assign(grid.size(), 0.0);
        std::vector<double> gammas;
        std::size_t hits = 0;
        for (std::size_t r = 0; r < cfg.runs; ++r) {
            const Cell& c = cells[r * H + j];
            if (!c.ok) {
                ++row.failed;
                continue;
            }
            gammas.push_back(c.gamma);
            row.se_values.push_back(c.se);
            row.covered.push_back(c.covered ? 1 : 0);
            hits += c.covered ? 1 : 0;
            for (std::size_t k = 0; k < grid.size(); ++k) row.grid_coverage[k] += c.grid_covered[k];
        }
        detail::check_failures(row.failed, cfg.runs, cfg.max_failure_fraction, "coverage study");
        const auto good = static_cast<double>(gammas.size());
        row.coverage = static_cast<double>(hits) / good;
        double se_sum = 0.0;
        for (const double v : row.se_values) se_sum += v;
        row.mean_se = se_sum / good;
        row.direct_sd = detail::sample_sd(gammas);
        for (double& v : row.grid_coverage) v /= good;
        res.rows.push_back(std::move(row));
    }
    return res;
}

} // namespace icecore
