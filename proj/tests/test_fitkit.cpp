#include <catch2/catch_amalgamated.hpp>

#include "bathlab/fitkit.hpp"
#include "bathlab/oracles.hpp"

#include <cmath>
#include <random>

using namespace bathlab;
namespace fk = bathlab::fitkit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double k_amp = 0.5;
constexpr double k_omega = 2.7;
constexpr double k_rate = 0.3;
constexpr double k_exponent = 1.4142135623730951;
constexpr double k_slow_amp = 0.31;
constexpr double k_slow_time = 50.0;

CorrelationSeries reference_series(double t_max = 60.0, std::size_t n = 1200)
{
    return oracles::fit_model_series(k_amp, k_omega, k_rate, k_exponent, k_slow_amp, k_slow_time,
                                     make_time_grid(t_max, n));
}

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

} // namespace

TEST_CASE("noiseless synthetic data is recovered to high accuracy", "[fitkit]")
{
    const auto res = fk::fit_correlation(reference_series());
    REQUIRE(res.converged);
    CHECK(rel_err(res.amp, k_amp) < 1e-3);
    CHECK(rel_err(res.omega, k_omega) < 1e-3);
    CHECK(rel_err(res.rate, k_rate) < 1e-3);
    CHECK(rel_err(res.exponent, k_exponent) < 1e-3);
    CHECK(rel_err(res.slow_amp, k_slow_amp) < 1e-3);
    CHECK(rel_err(res.slow_time, k_slow_time) < 1e-3);
    CHECK(res.rms < 1e-10);
    CHECK_FALSE(res.constant_input);
    CHECK_FALSE(res.slow_static);
}

TEST_CASE("mild noise is absorbed within a percent", "[fitkit]")
{
    auto series = reference_series();
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 1e-3);
    std::vector<double> t(series.size()), y(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        t[i] = series.grid.t(i);
        y[i] = series.values[i].real() + noise(rng);
    }
    const auto res = fk::fit_series(t, y);
    REQUIRE(res.converged);
    CHECK(rel_err(res.amp, k_amp) < 1e-2);
    CHECK(rel_err(res.omega, k_omega) < 1e-2);
    CHECK(rel_err(res.rate, k_rate) < 1e-2);
    CHECK(rel_err(res.exponent, k_exponent) < 1e-2);
    CHECK(rel_err(res.slow_amp, k_slow_amp) < 1e-2);
    CHECK(rel_err(res.slow_time, k_slow_time) < 1e-2);

    REQUIRE(res.covariance.rows() == 6);
    REQUIRE(res.covariance.cols() == 6);
    CHECK(res.covariance.allFinite());
    CHECK(res.covariance(0, 0) > 0.0);
}

TEST_CASE("a non-relaxing slow component is reported as static", "[fitkit]")
{
    const double inf = std::numeric_limits<double>::infinity();
    const auto series = oracles::fit_model_series(0.4, 2.0, 0.35, 1.0, 0.31, inf,
                                                  make_time_grid(60.0, 1200));
    const auto res = fk::fit_correlation(series);
    REQUIRE(res.converged);
    CHECK(res.slow_static);
    CHECK_THAT(res.slow_amp, WithinAbs(0.31, 1e-6));
    CHECK(rel_err(res.amp, 0.4) < 1e-3);
    CHECK(rel_err(res.omega, 2.0) < 1e-3);
}

TEST_CASE("constant input is flagged and fitted as pure offset", "[fitkit]")
{
    const auto series = oracles::constant_series(0.7, make_time_grid(10.0, 200));
    const auto res = fk::fit_correlation(series);
    CHECK(res.constant_input);
    CHECK_THAT(res.slow_amp + res.amp, WithinAbs(0.7, 1e-8));
}

TEST_CASE("plain exponential damping fits with exponent one", "[fitkit]")
{
    std::vector<double> t(800), y(800);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = 0.05 * static_cast<double>(i);
        y[i] = std::cos(2.0 * t[i]) * std::exp(-0.4 * t[i]);
    }
    const auto res = fk::fit_series(t, y);
    REQUIRE(res.converged);
    CHECK(rel_err(res.amp, 1.0) < 1e-6);
    CHECK(rel_err(res.omega, 2.0) < 1e-6);
    CHECK(rel_err(res.rate, 0.4) < 1e-6);
    CHECK_THAT(res.exponent, WithinAbs(1.0, 1e-4));
    CHECK(std::abs(res.slow_amp) < 1e-6);
}

TEST_CASE("an explicit start bypasses the multi-start search", "[fitkit]")
{
    fk::FitOptions opts;
    fk::FitStart start;
    start.amp = 0.45;
    start.omega = 2.6;
    start.rate = 0.25;
    start.exponent = 1.3;
    start.slow_amp = 0.3;
    start.slow_time = 40.0;
    opts.start = start;
    const auto res = fk::fit_correlation(reference_series(), opts);
    REQUIRE(res.converged);
    CHECK(rel_err(res.omega, k_omega) < 1e-6);
    CHECK(res.rms < 1e-10);
}

TEST_CASE("degenerate inputs are rejected", "[fitkit]")
{
    std::vector<double> t{0.0, 0.1};
    std::vector<double> y{1.0};
    CHECK_THROWS_AS(fk::fit_series(t, y), std::invalid_argument);
}
