#pragma once

// Alternating least-squares fit of
//
//     y_i = log(1 + gamma*x_i) + log g(z_i) + noise,   g nonincreasing,
//
// by coordinate descent: Gauss-Newton over gamma with g held fixed, then an
// isotonic projection for log g with gamma held fixed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "icecore/data.hpp"
#include "icecore/errors.hpp"
#include "icecore/isotonic.hpp"

namespace icecore {

struct FitConfig {
    double rel_tol = 1e-9;   ///< outer stop: relative change of the mean squared loss
    int max_outer_iters = 200;
    double gn_tol = 1e-10;   ///< Gauss-Newton stop: |step| below this
    int gn_max_iters = 50;
    /// After each sweep, line-search gamma along the sweep's step on the
    /// profile loss (log g re-projected at every trial gamma). Plain
    /// alternation creeps toward the optimum when the isotonic fit absorbs
    /// most of the temperature term.
    bool accelerate = true;
    int max_line_evals = 120;

    void validate() const {
        if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw std::invalid_argument("FitConfig: rel_tol must be in (0,1)");
        if (max_outer_iters <= 0) throw std::invalid_argument("FitConfig: max_outer_iters must be positive");
        if (!(gn_tol > 0.0)) throw std::invalid_argument("FitConfig: gn_tol must be positive");
        if (gn_max_iters <= 0) throw std::invalid_argument("FitConfig: gn_max_iters must be positive");
        if (max_line_evals < 0) throw std::invalid_argument("FitConfig: max_line_evals must be >= 0");
    }
};

/// Losses at or below this are treated as an exact fit.
inline constexpr double kExactFitLoss = 1e-28;

struct GammaSolve {
    double gamma = 0.0;
    double objective = 0.0; ///< mean squared residual at `gamma`
    int iterations = 0;
    bool converged = false;
};

struct StepFit {
    double gamma_hat = 0.0;
    MonotoneStepFn log_g_hat;
    std::vector<double> loss_trace; ///< initial loss, then one entry per outer sweep
    int iterations = 0;
    bool converged = false;
    int gn_nonconverged = 0; ///< inner solves that hit gn_max_iters
    int accelerated = 0;     ///< sweeps where the profile line search improved the loss
};

namespace detail {

inline void require_same_length(std::size_t a, std::size_t b, const char* who) {
    if (a != b) throw std::invalid_argument(std::string(who) + ": length mismatch");
}

inline double log1p_checked(double gamma, double x) {
    const double arg = gamma * x;
    if (!(arg > -1.0)) throw DomainError("1 + gamma*x <= 0 (gamma=" + std::to_string(gamma) + ", x=" + std::to_string(x) + ")");
    return std::log1p(arg);
}

/// Mean squared residual of r_i - log(1+gamma x_i), plus the Gauss-Newton
/// normal-equation terms sum(J e) and sum(J^2) with J_i = x_i/(1+gamma x_i).
struct GammaEval {
    double objective;
    double jte;
    double jtj;
};

inline GammaEval eval_gamma(std::span<const double> r, std::span<const double> x, double gamma) {
    double ss = 0.0, jte = 0.0, jtj = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double e = r[i] - log1p_checked(gamma, x[i]);
        const double j = x[i] / (1.0 + gamma * x[i]);
        ss += e * e;
        jte += j * e;
        jtj += j * j;
    }
    return {ss / static_cast<double>(r.size()), jte, jtj};
}

/// Gauss-Newton on gamma for fixed offsets r, projected onto the band
/// interval, with step halving whenever a step fails to decrease the objective.
inline GammaSolve solve_gamma(std::span<const double> r, std::span<const double> x, const TempBand& band,
                              const FitConfig& cfg, double start) {
    GammaSolve out;
    out.gamma = band.clamp(start);
    GammaEval cur = eval_gamma(r, x, out.gamma);
    out.objective = cur.objective;

    for (int it = 1; it <= cfg.gn_max_iters; ++it) {
        out.iterations = it;
        if (cur.jtj == 0.0) {
            out.converged = true;
            break;
        }
        const double target = band.clamp(out.gamma + cur.jte / cur.jtj);
        const double delta = target - out.gamma;
        if (delta == 0.0) {
            out.converged = true;
            break;
        }
        double t = 1.0;
        bool accepted = false;
        GammaEval cand{};
        for (int halving = 0; halving <= 30; ++halving, t *= 0.5) {
            cand = eval_gamma(r, x, out.gamma + t * delta);
            if (cand.objective <= cur.objective) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No descent along the Gauss-Newton direction: stationary up to rounding.
            out.converged = true;
            break;
        }
        out.gamma += t * delta;
        cur = cand;
        out.objective = cur.objective;
        if (std::abs(t * delta) < cfg.gn_tol) {
            out.converged = true;
            break;
        }
    }
    return out;
}

/// Loss profiled over log g: isotonic fit of y - log(1 + gamma x) written
/// to `levels`, mean squared residual returned.
inline double profile_loss(std::span<const double> y, std::span<const double> x, double gamma,
                           std::vector<double>& adjusted, std::vector<double>& levels) {
    const std::size_t n = y.size();
    adjusted.resize(n);
    for (std::size_t i = 0; i < n; ++i) adjusted[i] = y[i] - log1p_checked(gamma, x[i]);
    levels = pava_nonincreasing(adjusted);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (adjusted[i] - levels[i]) * (adjusted[i] - levels[i]);
    return ss / static_cast<double>(n);
}

/// Profile line search continuing the move from `from` (loss `q_from`) to
/// `best.gamma` (loss `best.loss`): expand along the move until the loss
/// rises or the band edge is reached, then golden-section inside the
/// bracket. `best` is only replaced by strictly better points. Returns true
/// if it was.
struct ProfilePoint {
    double gamma;
    double loss;
    std::vector<double> levels;
};

inline bool profile_line_search(std::span<const double> y, std::span<const double> x, const TempBand& band,
                                const FitConfig& cfg, double from, double q_from, ProfilePoint& best) {
    const double d = best.gamma - from;
    if (d == 0.0 || !(best.loss < q_from) || cfg.max_line_evals == 0) return false;

    std::vector<double> adjusted, levels;
    int evals = 0;
    bool improved = false;
    auto eval = [&](double g) {
        ++evals;
        const double q = profile_loss(y, x, g, adjusted, levels);
        if (q < best.loss) {
            best.gamma = g;
            best.loss = q;
            best.levels = levels;
            improved = true;
        }
        return q;
    };

    // Bracket a < b < c (in the direction of d) with F(b) below both ends.
    const double edge = d > 0.0 ? band.gamma_hi() : band.gamma_lo();
    double a = from, b = best.gamma, fb = best.loss;
    double c = b, fc = fb;
    double step = d;
    bool bracketed = false;
    while (evals < cfg.max_line_evals) {
        step *= 2.0;
        c = (d > 0.0) ? std::min(b + step, edge) : std::max(b + step, edge);
        if (c == b) break; // at the band edge, still descending
        fc = eval(c);
        if (fc > fb) {
            bracketed = true;
            break;
        }
        a = b;
        b = c;
        fb = fc;
    }
    if (!bracketed) return improved;

    // Golden-section search on [a, c] around b.
    constexpr double kInvPhi = 0.6180339887498949;
    double lo = std::min(a, c), hi = std::max(a, c);
    double m1 = hi - kInvPhi * (hi - lo), m2 = lo + kInvPhi * (hi - lo);
    double f1 = eval(m1), f2 = eval(m2);
    while (evals < cfg.max_line_evals && (hi - lo) > cfg.gn_tol * std::max(1.0, std::abs(best.gamma))) {
        if (f1 <= f2) {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - kInvPhi * (hi - lo);
            f1 = eval(m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + kInvPhi * (hi - lo);
            f2 = eval(m2);
        }
    }
    return improved;
}

} // namespace detail

/// Mean squared error (1/n) sum (y_i - log(1+gamma x_i) - log g_i)^2.
inline double loss(std::span<const double> y, std::span<const double> x, double gamma,
                   std::span<const double> log_g_values) {
    detail::require_same_length(y.size(), x.size(), "loss");
    detail::require_same_length(y.size(), log_g_values.size(), "loss");
    if (y.empty()) throw std::invalid_argument("loss: empty input");
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y[i] - detail::log1p_checked(gamma, x[i]) - log_g_values[i];
        ss += e * e;
    }
    return ss / static_cast<double>(y.size());
}

/// Minimizes the loss over gamma in the band interval with log g fixed.
/// Non-convergence is reported through `GammaSolve::converged`; the best
/// iterate found is returned either way.
inline GammaSolve fit_gamma_given_g(std::span<const double> y, std::span<const double> x,
                                    std::span<const double> log_g_values, const TempBand& band,
                                    const FitConfig& cfg = {}, double start = 0.0) {
    detail::require_same_length(y.size(), x.size(), "fit_gamma_given_g");
    detail::require_same_length(y.size(), log_g_values.size(), "fit_gamma_given_g");
    if (y.empty()) throw std::invalid_argument("fit_gamma_given_g: empty input");
    std::vector<double> r(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - log_g_values[i];
    return detail::solve_gamma(r, x, band, cfg, start);
}

/// Isotonic (nonincreasing) fit of y_i - log(1 + gamma x_i), knotted at z.
inline MonotoneStepFn fit_g_given_gamma(std::span<const double> y, std::span<const double> x,
                                        std::span<const double> z, double gamma) {
    detail::require_same_length(y.size(), x.size(), "fit_g_given_gamma");
    detail::require_same_length(y.size(), z.size(), "fit_g_given_gamma");
    std::vector<double> adjusted(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) adjusted[i] = y[i] - detail::log1p_checked(gamma, x[i]);
    return {std::vector<double>(z.begin(), z.end()), pava_nonincreasing(adjusted)};
}

/// Coordinate descent from gamma = 0 and the isotonic fit of y. Each outer
/// sweep updates gamma (warm-started Gauss-Newton) and then log g, followed
/// by the optional profile line search; the loss is recorded after every
/// sweep and never increases. Stops when the relative loss change drops
/// below `rel_tol`, the loss is exactly zero, or `max_outer_iters` is hit.
inline StepFit alternate_fit(std::span<const double> y, std::span<const double> x, std::span<const double> z,
                             const TempBand& band, const FitConfig& cfg = {}) {
    cfg.validate();
    detail::require_same_length(y.size(), x.size(), "alternate_fit");
    detail::require_same_length(y.size(), z.size(), "alternate_fit");
    const std::size_t n = y.size();
    if (n == 0) throw std::invalid_argument("alternate_fit: empty input");
    for (std::size_t i = 1; i < n; ++i)
        if (z[i] < z[i - 1]) throw std::invalid_argument("alternate_fit: z must be nondecreasing");
    check_in_band(x, band);

    StepFit fit;
    std::vector<double> levels = pava_nonincreasing(y);
    double gamma = 0.0;
    double q = loss(y, x, gamma, levels);
    fit.loss_trace.push_back(q);

    std::vector<double> adjusted(n);
    for (int k = 1; k <= cfg.max_outer_iters; ++k) {
        const double gamma_prev = gamma;
        const GammaSolve gs = fit_gamma_given_g(y, x, levels, band, cfg, gamma);
        if (!gs.converged) ++fit.gn_nonconverged;

        detail::ProfilePoint pt{gs.gamma, 0.0, {}};
        pt.loss = detail::profile_loss(y, x, pt.gamma, adjusted, pt.levels);
        if (cfg.accelerate && detail::profile_line_search(y, x, band, cfg, gamma_prev, q, pt)) ++fit.accelerated;
        gamma = pt.gamma;
        levels = std::move(pt.levels);
        const double q_new = pt.loss;

        fit.loss_trace.push_back(q_new);
        fit.iterations = k;
        const bool done = q_new <= kExactFitLoss || std::abs(q - q_new) <= cfg.rel_tol * q;
        q = q_new;
        if (done) {
            fit.converged = true;
            break;
        }
    }

    fit.gamma_hat = gamma;
    fit.log_g_hat = MonotoneStepFn(std::vector<double>(z.begin(), z.end()), std::move(levels));
    return fit;
}

inline StepFit alternate_fit(const DerivedSeries& s, const TempBand& band, const FitConfig& cfg = {}) {
    return alternate_fit(s.y, s.x, s.z, band, cfg);
}

} // namespace icecore
