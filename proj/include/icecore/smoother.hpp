#pragma once

// Nadaraya-Watson smoothing of the isotonic log g estimate and the refit of
// gamma against the smoothed curve.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "icecore/errors.hpp"
#include "icecore/fitter.hpp"

namespace icecore {

enum class KernelKind { epanechnikov };

/// Kernel and bandwidth (KYr). A bandwidth of exactly 0 means "no
/// smoothing": the smoothed curve is the step estimate itself.
struct KernelSpec {
    KernelKind kind = KernelKind::epanechnikov;
    double bandwidth = 28.0;

    bool smoothing() const noexcept { return bandwidth > 0.0; }

    void validate() const {
        if (!(bandwidth >= 0.0) || !std::isfinite(bandwidth))
            throw std::invalid_argument("KernelSpec: bandwidth must be finite and >= 0");
    }
};

inline double kernel_eval(KernelKind kind, double w) {
    switch (kind) {
    case KernelKind::epanechnikov:
        return std::abs(w) <= 1.0 ? 0.75 * (1.0 - w * w) : 0.0;
    }
    return 0.0;
}

/// Kernel-weighted average of `levels` (values at sorted `knots`) at one
/// query point. Throws EmptyWindowError when no knot lies strictly within one
/// bandwidth of the query.
inline double smooth_log_g(std::span<const double> knots, std::span<const double> levels, double z_query,
                           const KernelSpec& spec) {
    if (knots.size() != levels.size()) throw std::invalid_argument("smooth_log_g: length mismatch");
    const double h = spec.bandwidth;
    if (!(h > 0.0)) throw std::invalid_argument("smooth_log_g: bandwidth must be positive");
    const auto first = std::upper_bound(knots.begin(), knots.end(), z_query - h);
    const auto last = std::lower_bound(first, knots.end(), z_query + h);
    if (last - first == 1) return levels[static_cast<std::size_t>(first - knots.begin())];
    double num = 0.0, den = 0.0;
    for (auto it = first; it != last; ++it) {
        const auto i = static_cast<std::size_t>(it - knots.begin());
        const double k = kernel_eval(spec.kind, (z_query - knots[i]) / h);
        num += k * levels[i];
        den += k;
    }
    if (!(den > 0.0))
        throw EmptyWindowError("no knot within bandwidth " + std::to_string(h) + " of z=" + std::to_string(z_query));
    return num / den;
}

/// `smooth_log_g` at every query; the identity on the knots when the spec
/// disables smoothing.
inline std::vector<double> smooth_at(std::span<const double> knots, std::span<const double> levels,
                                     std::span<const double> queries, const KernelSpec& spec) {
    std::vector<double> out(queries.size());
    if (!spec.smoothing()) {
        const MonotoneStepFn step({knots.begin(), knots.end()}, {levels.begin(), levels.end()});
        for (std::size_t i = 0; i < queries.size(); ++i) out[i] = step(queries[i]);
        return out;
    }
    for (std::size_t i = 0; i < queries.size(); ++i) out[i] = smooth_log_g(knots, levels, queries[i], spec);
    return out;
}

/// Gauss-Newton refit of gamma against a fixed (smoothed) log g.
inline GammaSolve refit_gamma(std::span<const double> y, std::span<const double> x,
                              std::span<const double> log_g_smoothed, const TempBand& band,
                              const FitConfig& cfg = {}, double start = 0.0) {
    return fit_gamma_given_g(y, x, log_g_smoothed, band, cfg, start);
}

/// Smoothed log g plus the refitted gamma. Evaluable anywhere through
/// `operator()`; `at_knots` caches the curve at the sample points.
class SmoothFit {
public:
    SmoothFit() = default;

    SmoothFit(MonotoneStepFn step, KernelSpec spec, std::vector<double> at_knots, GammaSolve refit)
        : step_(std::move(step)), spec_(spec), at_knots_(std::move(at_knots)), refit_(refit) {}

    double gamma_tilde() const noexcept { return refit_.gamma; }
    const GammaSolve& refit() const noexcept { return refit_; }
    double h_used() const noexcept { return spec_.bandwidth; }
    const KernelSpec& spec() const noexcept { return spec_; }
    const MonotoneStepFn& step() const noexcept { return step_; }
    const std::vector<double>& at_knots() const noexcept { return at_knots_; }

    /// Throws EmptyWindowError outside the kernel's reach.
    double operator()(double z) const {
        if (!spec_.smoothing()) return step_(z);
        return smooth_log_g(step_.knots(), step_.levels(), z, spec_);
    }

    /// Like operator(), but an empty window falls back to the (interpolated)
    /// step estimate. `fell_back` is set when that happens.
    double value_or_step(double z, bool* fell_back = nullptr) const {
        try {
            return (*this)(z);
        } catch (const EmptyWindowError&) {
            if (fell_back) *fell_back = true;
            return step_(z);
        }
    }

private:
    MonotoneStepFn step_;
    KernelSpec spec_;
    std::vector<double> at_knots_;
    GammaSolve refit_;
};

/// Smooths the step estimate at the sample points, then refits gamma,
/// warm-started from the step fit's gamma.
inline SmoothFit smooth_fit(std::span<const double> y, std::span<const double> x, const StepFit& step,
                            const KernelSpec& spec, const TempBand& band, const FitConfig& cfg = {}) {
    spec.validate();
    const auto& knots = step.log_g_hat.knots();
    std::vector<double> at_knots = smooth_at(knots, step.log_g_hat.levels(), knots, spec);
    const GammaSolve gs = refit_gamma(y, x, at_knots, band, cfg, step.gamma_hat);
    return {step.log_g_hat, spec, std::move(at_knots), gs};
}

} // namespace icecore
