#pragma once

// Model-based bootstrap for the smoothed estimates.
//
// Each replicate resamples the estimated AR(1) innovations with replacement
// (redrawing until the resample is at least as dispersed as the originals),
// rebuilds a response series around the fitted mean, and reruns the whole
// estimation pipeline on it. Standard errors are replicate standard
// deviations; intervals are the middle (1 - alpha) of the replicates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "icecore/errors.hpp"
#include "icecore/model.hpp"
#include "icecore/parallel.hpp"

namespace icecore {

enum class NoiseMode {
    ar1_reconstruction, ///< eps*_i = phi eps*_{i-1} + U*_i
    verbatim,           ///< noise U*_i - phi U*_{i-1}
};

struct BootstrapConfig {
    std::size_t B = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 20240601;
    NoiseMode mode = NoiseMode::ar1_reconstruction;
    unsigned threads = 1; ///< 0 = hardware concurrency
    int max_resample_retries = 1000;
    double max_failure_fraction = 0.05;

    void validate() const {
        if (B < 1) throw std::invalid_argument("BootstrapConfig: B must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("BootstrapConfig: alpha must be in (0,1)");
        if (max_resample_retries < 0) throw std::invalid_argument("BootstrapConfig: negative retry cap");
    }
};

struct Interval {
    double lo = std::numeric_limits<double>::quiet_NaN();
    double hi = std::numeric_limits<double>::quiet_NaN();

    bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

struct BootstrapSummary {
    std::size_t n = 0;                       ///< series length
    std::size_t requested = 0;               ///< B
    std::vector<std::size_t> replicate_ids;  ///< indices of successful replicates, ascending
    std::vector<std::size_t> failed_ids;
    std::vector<double> gamma_reps;
    std::vector<double> log_g_reps;          ///< row-major, one row of n values per replicate
    std::vector<double> resample_variances;  ///< sample variance of each accepted innovation draw
    double innovation_variance = 0.0;        ///< sample variance of the estimated innovations

    double se_gamma = std::numeric_limits<double>::quiet_NaN();
    bool se_defined = false; ///< false with fewer than two replicates
    Interval ci_gamma;
    std::vector<double> se_log_g;
    std::vector<Interval> pointwise_ci_log_g;

    std::vector<double> grid;           ///< optional extra evaluation points
    std::vector<double> grid_reps;      ///< row-major, one row of grid.size() values per replicate
    std::vector<Interval> grid_ci;

    std::size_t replicates() const noexcept { return gamma_reps.size(); }
    double log_g_rep(std::size_t r, std::size_t i) const { return log_g_reps[r * n + i]; }
};

namespace detail {

/// Unbiased sample variance, shifted by the first element so that constant
/// input gives exactly zero.
inline double sample_variance(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double k = v.front();
    double s = 0.0, ss = 0.0;
    for (const double u : v) {
        const double d = u - k;
        s += d;
        ss += d * d;
    }
    const double m = static_cast<double>(v.size());
    return std::max(0.0, (ss - s * s / m) / (m - 1.0));
}

inline double sample_sd(std::span<const double> v) {
    if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double mean = 0.0;
    for (const double u : v) mean += u;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (const double u : v) ss += (u - mean) * (u - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace detail

/// Middle (1 - alpha) of the values: with k = floor(B alpha / 2), the
/// (k+1)-th and (B-k)-th order statistics.
inline Interval percentile_interval(std::vector<double> values, double alpha) {
    if (values.empty()) return {};
    std::sort(values.begin(), values.end());
    const std::size_t B = values.size();
    auto k = static_cast<std::size_t>(std::floor(alpha / 2.0 * static_cast<double>(B) + 1e-9));
    k = std::min(k, (B - 1) / 2);
    return {values[k], values[B - 1 - k]};
}

/// U_i = eps_i - phi eps_{i-1}, i = 2..n.
inline std::vector<double> innovations(std::span<const double> eps, double phi) {
    if (eps.size() < 2) throw std::invalid_argument("innovations: need at least 2 residuals");
    std::vector<double> u(eps.size() - 1);
    for (std::size_t i = 1; i < eps.size(); ++i) u[i - 1] = eps[i] - phi * eps[i - 1];
    return u;
}

/// True when a draw may be used: its sample variance is not below that of
/// the innovations it was drawn from.
inline bool resample_accepted(std::span<const double> draw, double innovation_variance) {
    return detail::sample_variance(draw) >= innovation_variance;
}

/// Draws `size` values with replacement from U, redrawing until the draw is
/// accepted. Throws ConvergenceError after `max_retries` rejected redraws.
/// `attempts`, if given, receives the number of draws made.
inline std::vector<double> resample_innovations(std::span<const double> U, std::size_t size, Rng& rng,
                                                int max_retries = 1000, int* attempts = nullptr) {
    if (U.empty()) throw std::invalid_argument("resample_innovations: empty innovation sample");
    const double target = detail::sample_variance(U);
    std::uniform_int_distribution<std::size_t> pick(0, U.size() - 1);
    std::vector<double> draw(size);
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        for (double& d : draw) d = U[pick(rng)];
        if (resample_accepted(draw, target)) {
            if (attempts) *attempts = attempt + 1;
            return draw;
        }
    }
    throw ConvergenceError("resample_innovations: no acceptable draw after " + std::to_string(max_retries) +
                           " retries");
}

/// Replicate responses for i = 2..n (length n - 1) around the fitted mean
/// log(1 + gamma x_i) + log g_i, from n resampled innovations.
inline std::vector<double> generate_replicate(std::span<const double> x, std::span<const double> log_g_values,
                                              double gamma, double phi, std::span<const double> U_star,
                                              NoiseMode mode) {
    const std::size_t n = x.size();
    if (log_g_values.size() != n || U_star.size() != n)
        throw std::invalid_argument("generate_replicate: length mismatch");
    if (n < 2) throw std::invalid_argument("generate_replicate: need at least 2 points");
    std::vector<double> y(n - 1);
    double eps = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        double noise;
        if (mode == NoiseMode::ar1_reconstruction) {
            eps = (i == 1) ? U_star[1] : phi * eps + U_star[i];
            noise = eps;
        } else {
            noise = U_star[i] - phi * U_star[i - 1];
        }
        y[i - 1] = detail::log1p_checked(gamma, x[i]) + log_g_values[i] + noise;
    }
    return y;
}

/// Runs `cfg.B` replicates of the full pipeline around `fit`. Replicate r
/// draws from its own stream (seed, r), so results do not depend on the
/// thread count. Failed replicates are dropped and listed; more than
/// `max_failure_fraction` of B failing throws ExcessFailureError. Extra
/// `grid` points get their own pointwise intervals.
inline BootstrapSummary run_bootstrap(std::span<const double> y, std::span<const double> x,
                                      std::span<const double> z, const ModelFit& fit, const KernelSpec& spec,
                                      const TempBand& band, const FitConfig& fit_cfg, const BootstrapConfig& cfg,
                                      std::span<const double> grid = {}) {
    cfg.validate();
    const std::size_t n = y.size();
    if (x.size() != n || z.size() != n) throw std::invalid_argument("run_bootstrap: length mismatch");
    if (n < 3) throw std::invalid_argument("run_bootstrap: need at least 3 points");

    const std::vector<double> U = innovations(fit.noise.residuals, fit.noise.phi_tilde);
    const std::span<const double> mean_log_g = fit.smooth.at_knots();
    const double gamma = fit.gamma_tilde();
    const double phi = fit.noise.phi_tilde;
    const std::span<const double> x_rep = x.subspan(1);
    const std::span<const double> z_rep = z.subspan(1);

    struct Replicate {
        bool ok = false;
        double gamma = 0.0;
        double resample_variance = 0.0;
        std::vector<double> log_g;
        std::vector<double> grid;
    };
    std::vector<Replicate> reps(cfg.B);

    parallel_for(cfg.B, cfg.threads, [&](std::size_t r) {
        Replicate& out = reps[r];
        try {
            Rng rng = make_stream(cfg.seed, {r});
            const std::vector<double> U_star = resample_innovations(U, n, rng, cfg.max_resample_retries);
            const std::vector<double> y_star = generate_replicate(x, mean_log_g, gamma, phi, U_star, cfg.mode);
            const StepFit step = alternate_fit(y_star, x_rep, z_rep, band, fit_cfg);
            const SmoothFit sm = smooth_fit(y_star, x_rep, step, spec, band, fit_cfg);

            out.log_g.resize(n);
            out.log_g[0] = sm.value_or_step(z[0]);
            std::copy(sm.at_knots().begin(), sm.at_knots().end(), out.log_g.begin() + 1);
            out.grid.resize(grid.size());
            for (std::size_t k = 0; k < grid.size(); ++k) out.grid[k] = sm.value_or_step(grid[k]);
            out.gamma = sm.gamma_tilde();
            out.resample_variance = detail::sample_variance(U_star);
            out.ok = std::isfinite(out.gamma);
        } catch (const std::exception&) {
            out.ok = false;
        }
    });

    BootstrapSummary s;
    s.n = n;
    s.requested = cfg.B;
    s.innovation_variance = detail::sample_variance(U);
    s.grid.assign(grid.begin(), grid.end());
    for (std::size_t r = 0; r < cfg.B; ++r) {
        if (!reps[r].ok) {
            s.failed_ids.push_back(r);
            continue;
        }
        s.replicate_ids.push_back(r);
        s.gamma_reps.push_back(reps[r].gamma);
        s.resample_variances.push_back(reps[r].resample_variance);
        s.log_g_reps.insert(s.log_g_reps.end(), reps[r].log_g.begin(), reps[r].log_g.end());
        s.grid_reps.insert(s.grid_reps.end(), reps[r].grid.begin(), reps[r].grid.end());
    }
    const auto allowed = static_cast<std::size_t>(std::floor(cfg.max_failure_fraction * static_cast<double>(cfg.B)));
    if (s.failed_ids.size() > allowed || s.gamma_reps.empty())
        throw ExcessFailureError("bootstrap: " + std::to_string(s.failed_ids.size()) + " of " +
                                     std::to_string(cfg.B) + " replicates failed",
                                 s.failed_ids.size(), cfg.B);

    const std::size_t R = s.replicates();
    s.se_defined = R >= 2;
    s.se_gamma = detail::sample_sd(s.gamma_reps);
    s.ci_gamma = percentile_interval(s.gamma_reps, cfg.alpha);

    auto pointwise = [&](const std::vector<double>& rows, std::size_t width, std::vector<double>* se,
                         std::vector<Interval>& ci) {
        ci.resize(width);
        if (se) se->resize(width);
        std::vector<double> column(R);
        for (std::size_t i = 0; i < width; ++i) {
            for (std::size_t r = 0; r < R; ++r) column[r] = rows[r * width + i];
            if (se) (*se)[i] = detail::sample_sd(column);
            ci[i] = percentile_interval(column, cfg.alpha);
        }
    };
    pointwise(s.log_g_reps, n, &s.se_log_g, s.pointwise_ci_log_g);
    pointwise(s.grid_reps, s.grid.size(), nullptr, s.grid_ci);
    return s;
}

inline BootstrapSummary run_bootstrap(const DerivedSeries& s, const ModelFit& fit, const KernelSpec& spec,
                                      const TempBand& band, const FitConfig& fit_cfg, const BootstrapConfig& cfg) {
    return run_bootstrap(s.y, s.x, s.z, fit, spec, band, fit_cfg, cfg);
}

} // namespace icecore
