#pragma once

// Residuals of the smoothed fit and AR(1) parameter estimates from them.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "icecore/fitter.hpp"

namespace icecore {

struct NoiseEstimates {
    std::vector<double> residuals;
    double phi_tilde = 0.0;
    double sigma2_tilde = 0.0;
    bool phi_outside_unit = false; ///< |phi| >= 1; reported, not clamped
};

/// eps_i = y_i - log(1 + gamma x_i) - log g_i.
inline std::vector<double> residuals(std::span<const double> y, std::span<const double> x, double gamma,
                                     std::span<const double> log_g_values) {
    detail::require_same_length(y.size(), x.size(), "residuals");
    detail::require_same_length(y.size(), log_g_values.size(), "residuals");
    std::vector<double> eps(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        eps[i] = y[i] - detail::log1p_checked(gamma, x[i]) - log_g_values[i];
    return eps;
}

/// Lag-one ratio sum_{i>=2} eps_i eps_{i-1} / sum_{i>=2} eps_i^2. Both sums
/// start at the second element, so the denominator omits eps_1^2 (unlike the
/// textbook Yule-Walker estimate).
inline double estimate_phi(std::span<const double> eps) {
    if (eps.size() < 2) throw std::invalid_argument("estimate_phi: need at least 2 residuals");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 1; i < eps.size(); ++i) {
        num += eps[i] * eps[i - 1];
        den += eps[i] * eps[i];
    }
    if (den == 0.0) throw std::domain_error("estimate_phi: zero denominator");
    return num / den;
}

/// (1/n) sum_{i>=2} (eps_i - phi eps_{i-1})^2. Note the 1/n, not 1/(n-1).
inline double estimate_sigma2(std::span<const double> eps, double phi) {
    if (eps.size() < 2) throw std::invalid_argument("estimate_sigma2: need at least 2 residuals");
    double ss = 0.0;
    for (std::size_t i = 1; i < eps.size(); ++i) {
        const double u = eps[i] - phi * eps[i - 1];
        ss += u * u;
    }
    return ss / static_cast<double>(eps.size());
}

inline NoiseEstimates estimate_noise(std::span<const double> y, std::span<const double> x, double gamma,
                                     std::span<const double> log_g_values) {
    NoiseEstimates out;
    out.residuals = residuals(y, x, gamma, log_g_values);
    out.phi_tilde = estimate_phi(out.residuals);
    out.sigma2_tilde = estimate_sigma2(out.residuals, out.phi_tilde);
    out.phi_outside_unit = !(std::abs(out.phi_tilde) < 1.0);
    return out;
}

} // namespace icecore
