#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "icecore/fitter.hpp"
#include "icecore/simulation.hpp"
#include "oracles.hpp"

using namespace icecore;
using Catch::Approx;

namespace {

struct Noiseless {
    Design des;
    TempBand band;
    std::vector<double> y;
};

Noiseless noiseless(std::size_t n) {
    SimConfig cfg;
    cfg.n = n;
    Noiseless d{make_design(cfg), {}, {}};
    d.band = default_temp_band(d.des.x);
    d.y = true_mean(d.des.z, d.des.x, 0.05);
    return d;
}

} // namespace

TEST_CASE("loss is zero on an exact fit and the raw second moment at the origin", "[fitter]") {
    const std::vector<double> x{-3, -1, 0, 2, 4};
    std::vector<double> y(x.size()), c(x.size(), 1.7);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::log(1 + 0.05 * x[i]) + 1.7;
    CHECK(loss(y, x, 0.05, c) == Approx(0.0).margin(1e-30));

    const std::vector<double> zeros(x.size(), 0.0);
    double m2 = 0.0;
    for (double v : y) m2 += v * v;
    CHECK(loss(y, x, 0.0, zeros) == Approx(m2 / 5));
}

TEST_CASE("loss rejects gamma outside the domain", "[fitter]") {
    const std::vector<double> y{0, 0}, x{-2, 1}, g{0, 0};
    CHECK_THROWS_AS(loss(y, x, 0.5, g), DomainError);
    CHECK_THROWS_AS(loss(y, x, 0.6, g), DomainError);
    CHECK_THROWS(loss(y, x, 0.0, std::vector<double>{0}));
}

TEST_CASE("loss at the true parameters averages the stationary noise variance", "[fitter]") {
    SimConfig cfg;
    const auto des = make_design(cfg);
    std::vector<double> lg(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) lg[i] = log_g0(des.z[i]);
    std::vector<double> q;
    for (std::size_t r = 0; r < 1000; ++r) {
        const auto y = simulate_responses(cfg, des, r);
        q.push_back(loss(y, des.x, cfg.gamma0, lg));
    }
    const double limit = cfg.sigma2 / (1 - cfg.phi * cfg.phi);
    CHECK(limit == Approx(0.1026).epsilon(1e-3));
    CHECK(std::abs(oracle::mean(q) - limit) < 3 * oracle::sd(q) / std::sqrt(1000.0));
}

TEST_CASE("fit_gamma_given_g recovers gamma from noiseless data", "[fitter]") {
    const auto d = noiseless(3000);
    std::vector<double> y(d.y.size()), zero(d.y.size(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(1 + 0.05 * d.des.x[i]);
    const auto gs = fit_gamma_given_g(y, d.des.x, zero, d.band);
    CHECK(gs.converged);
    CHECK(gs.gamma == Approx(0.05).margin(1e-8));

    const double scanned = oracle::scan_golden([&](double g) { return loss(y, d.des.x, g, zero); },
                                               d.band.gamma_lo() * 0.999, d.band.gamma_hi() * 0.999);
    CHECK(gs.gamma == Approx(scanned).margin(1e-7));
}

TEST_CASE("fit_gamma_given_g matches a scan of the objective on noisy data", "[fitter][property]") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::uniform_real_distribution<double> ux(-8.0, 4.0), ug(-0.05, 0.08);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> x(200), y(200), g(200);
        const double gamma = ug(rng);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = ux(rng);
            g[i] = 2.0 - 0.01 * i;
            y[i] = std::log(1 + gamma * x[i]) + g[i] + noise(rng);
        }
        const auto band = default_temp_band(x);
        const auto gs = fit_gamma_given_g(y, x, g, band);
        const double scanned = oracle::scan_golden([&](double v) { return loss(y, x, v, g); },
                                                   band.gamma_lo() * 0.999, band.gamma_hi() * 0.999);
        CHECK(gs.gamma == Approx(scanned).margin(1e-6));
        CHECK(gs.objective <= loss(y, x, scanned, g) + 1e-14);
    }
}

TEST_CASE("fit_gamma_given_g returns zero for zero responses", "[fitter]") {
    const std::vector<double> x{-4, -1, 2, 3}, y(4, 0.0), g(4, 0.0);
    const auto gs = fit_gamma_given_g(y, x, g, default_temp_band(x));
    CHECK(gs.gamma == 0.0);
    CHECK(gs.objective == 0.0);
}

TEST_CASE("fit_gamma_given_g clamps to the band edge", "[fitter]") {
    const std::vector<double> x{-0.3, 0.0, 0.4, 0.9};
    std::vector<double> y(x.size()), g(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::log(1 + 2.0 * x[i]);
    const TempBand band{1.0, 1.5};
    const auto gs = fit_gamma_given_g(y, x, g, band);
    CHECK(gs.gamma == band.gamma_hi());
}

TEST_CASE("fit_g_given_gamma", "[fitter]") {
    const auto d = noiseless(1500);
    SECTION("gamma zero is the isotonic fit of y") {
        const auto f = fit_g_given_gamma(d.y, d.des.x, d.des.z, 0.0);
        CHECK(f.levels() == pava_nonincreasing(d.y));
        CHECK(f.knots() == d.des.z);
    }
    SECTION("pure temperature signal leaves a zero curve") {
        std::vector<double> y(d.y.size());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(1 + 0.05 * d.des.x[i]);
        for (double v : fit_g_given_gamma(y, d.des.x, d.des.z, 0.05).levels()) CHECK(v == Approx(0.0).margin(1e-15));
    }
    SECTION("true gamma recovers log g0") {
        const auto f = fit_g_given_gamma(d.y, d.des.x, d.des.z, 0.05);
        for (std::size_t i = 0; i < d.y.size(); ++i) REQUIRE(std::abs(f.levels()[i] - log_g0(d.des.z[i])) < 1e-10);
    }
}

TEST_CASE("alternate_fit on noiseless data reaches an exact minimizer", "[fitter]") {
    const auto d = noiseless(1500);
    const auto fit = alternate_fit(d.y, d.des.x, d.des.z, d.band);
    CHECK(fit.converged);
    CHECK(fit.loss_trace.back() <= kExactFitLoss);

    // Zero loss holds on a whole interval of gamma; the fit must land in it.
    const auto zero_set = oracle::zero_loss_interval(d.y, d.des.x, 0.05, 0.0, 0.1);
    CHECK(zero_set.lo < 0.05);
    CHECK(zero_set.hi > 0.05);
    CHECK(fit.gamma_hat >= zero_set.lo - 1e-12);
    CHECK(fit.gamma_hat <= zero_set.hi + 1e-12);
    CHECK(std::abs(fit.gamma_hat - 0.05) <= zero_set.hi - zero_set.lo);

    double sup = 0.0, bound = 0.0;
    for (std::size_t i = 0; i < d.y.size(); ++i) {
        const double shift = std::log(1 + fit.gamma_hat * d.des.x[i]);
        CHECK(fit.log_g_hat.levels()[i] == Approx(d.y[i] - shift).margin(1e-12));
        sup = std::max(sup, std::abs(fit.log_g_hat.levels()[i] - log_g0(d.des.z[i])));
        bound = std::max(bound, std::abs(shift - std::log(1 + 0.05 * d.des.x[i])));
    }
    CHECK(sup <= bound + 1e-12);
}

TEST_CASE("alternate_fit on flat data stops after one sweep", "[fitter]") {
    const std::vector<double> y(6, 1.25), x(6, 0.0), z{1, 2, 3, 4, 5, 6};
    const auto fit = alternate_fit(y, x, z, default_temp_band(x));
    CHECK(fit.gamma_hat == 0.0);
    CHECK(fit.iterations == 1);
    CHECK(fit.converged);
    for (double v : fit.log_g_hat.levels()) CHECK(v == 1.25);
}

TEST_CASE("alternate_fit on a noisy draw lands near the true gamma", "[fitter]") {
    SimConfig cfg;
    const auto des = make_design(cfg);
    const auto y = simulate_responses(cfg, des, 0);
    const auto fit = alternate_fit(y, des.x, des.z, default_temp_band(des.x));
    CHECK(fit.converged);
    CHECK(std::abs(fit.gamma_hat - 0.05) < 3 * 3.5e-3);
}

TEST_CASE("alternate_fit validates its input", "[fitter]") {
    const std::vector<double> y{1, 2, 3}, x{0, 1, 2};
    CHECK_THROWS(alternate_fit(y, x, std::vector<double>{3, 2, 1}, default_temp_band(x)));
    CHECK_THROWS_AS(alternate_fit(y, x, std::vector<double>{1, 2, 3}, TempBand{1.0, 1.0}), DomainError);
    FitConfig bad;
    bad.rel_tol = 0.0;
    CHECK_THROWS(alternate_fit(y, x, std::vector<double>{1, 2, 3}, default_temp_band(x), bad));
}

TEST_CASE("loss trace never increases and gamma stays admissible", "[fitter][property]") {
    for (const bool accelerate : {true, false}) {
        SimConfig cfg;
        cfg.n = 750;
        const auto des = make_design(cfg);
        const auto band = default_temp_band(des.x);
        FitConfig fc;
        fc.accelerate = accelerate;
        fc.max_outer_iters = accelerate ? 200 : 40;
        for (std::size_t r = 0; r < 10; ++r) {
            const auto y = simulate_responses(cfg, des, 100 + r);
            const auto fit = alternate_fit(y, des.x, des.z, band, fc);
            for (std::size_t k = 1; k < fit.loss_trace.size(); ++k)
                REQUIRE(fit.loss_trace[k] <= fit.loss_trace[k - 1] + 1e-12);
            CHECK(band.admits(fit.gamma_hat));
            const auto& lv = fit.log_g_hat.levels();
            for (std::size_t i = 1; i < lv.size(); ++i) REQUIRE(lv[i - 1] >= lv[i]);
            CHECK(fit.loss_trace.back() == Approx(loss(y, des.x, fit.gamma_hat, lv)).epsilon(1e-12));
        }
    }
}
