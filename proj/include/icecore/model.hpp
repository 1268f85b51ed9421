#pragma once

// The complete estimation pipeline: step fit, smoothing + gamma refit, noise.

#include <span>

#include "icecore/fitter.hpp"
#include "icecore/noise.hpp"
#include "icecore/smoother.hpp"

namespace icecore {

struct ModelFit {
    StepFit step;
    SmoothFit smooth;
    NoiseEstimates noise;

    double gamma_tilde() const noexcept { return smooth.gamma_tilde(); }
};

inline ModelFit fit_model(std::span<const double> y, std::span<const double> x, std::span<const double> z,
                          const KernelSpec& spec, const TempBand& band, const FitConfig& cfg = {}) {
    ModelFit m;
    m.step = alternate_fit(y, x, z, band, cfg);
    m.smooth = smooth_fit(y, x, m.step, spec, band, cfg);
    m.noise = estimate_noise(y, x, m.smooth.gamma_tilde(), m.smooth.at_knots());
    return m;
}

inline ModelFit fit_model(const DerivedSeries& s, const KernelSpec& spec, const TempBand& band,
                          const FitConfig& cfg = {}) {
    return fit_model(s.y, s.x, s.z, spec, band, cfg);
}

} // namespace icecore
