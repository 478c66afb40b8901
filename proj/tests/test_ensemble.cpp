#include <catch2/catch_amalgamated.hpp>

#include "bathlab/eigencorr.hpp"
#include "bathlab/ensemble.hpp"

#include <cmath>

using namespace bathlab;
namespace en = bathlab::ensemble;
namespace ec = bathlab::eigencorr;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("molecule sampling is deterministic per member index", "[ensemble]")
{
    en::EnsembleSpec spec;
    spec.seed = 11;
    const auto a = en::sample_molecule(spec, 3);
    const auto b = en::sample_molecule(spec, 3);
    CHECK(a.Delta == b.Delta);
    CHECK(a.eps == b.eps);

    const auto c = en::sample_molecule(spec, 4);
    CHECK(a.Delta != c.Delta);

    spec.seed = 12;
    const auto d = en::sample_molecule(spec, 3);
    CHECK(a.Delta != d.Delta);
}

TEST_CASE("sampled parameters stay positive and inherit shared settings", "[ensemble]")
{
    en::EnsembleSpec spec;
    spec.n_molecules = 50;
    spec.delta_mean = 0.2;
    spec.delta_sd = 0.4; // wide enough that rejection must kick in
    spec.eps_mean = 0.3;
    spec.eps_sd = 0.5;
    spec.r = 0.37;
    spec.L = 2;
    spec.beta = 1.7;
    spec.seed = 5;
    for (int j = 0; j < 50; ++j) {
        const auto p = en::sample_molecule(spec, j);
        CHECK(p.Delta > 0.0);
        CHECK(p.eps > 0.0);
        CHECK(p.r == 0.37);
        CHECK(p.L == 2);
        CHECK(p.beta == 1.7);
    }
}

TEST_CASE("ensemble mean is the hand average of its members", "[ensemble]")
{
    en::EnsembleSpec spec;
    spec.n_molecules = 2;
    spec.L = 1;
    spec.beta = 1.0;
    spec.seed = 21;
    const auto grid = make_time_grid(10.0, 101);
    const auto res = en::ensemble_correlation(spec, grid, 1);
    REQUIRE(res.c0.size() == 2);
    CHECK_THAT(res.c0_mean, WithinAbs(0.5 * (res.c0[0] + res.c0[1]), 1e-15));

    // rebuild both members directly
    std::vector<CorrelationSeries> each;
    for (int j = 0; j < 2; ++j) {
        const auto p = en::sample_molecule(spec, j);
        const auto model = env_model::build_molecule(p, spec.dim_cap);
        const auto sys = ec::diagonalize(model.H, model.B);
        const auto th = ec::thermal_weights(sys, p.beta);
        each.push_back(ec::correlation_function(sys, th, grid));
    }
    for (std::size_t i = 0; i < grid.n; ++i) {
        const cplx mean = 0.5 * (each[0].values[i] + each[1].values[i]);
        CHECK_THAT(std::abs(res.mean_series.values[i] - mean), WithinAbs(0.0, 1e-14));
    }
}

TEST_CASE("ensemble evaluation is identical across worker counts", "[ensemble]")
{
    en::EnsembleSpec spec;
    spec.n_molecules = 4;
    spec.L = 1;
    spec.seed = 33;
    const auto grid = make_time_grid(20.0, 256);
    const auto serial = en::ensemble_correlation(spec, grid, 1);
    const auto threaded = en::ensemble_correlation(spec, grid, 4);
    for (std::size_t i = 0; i < grid.n; ++i)
        CHECK(serial.mean_series.values[i] == threaded.mean_series.values[i]);
    for (int j = 0; j < 4; ++j) CHECK(serial.c0[j] == threaded.c0[j]);
}

TEST_CASE("single Lorentzian susceptibility has the closed form", "[ensemble]")
{
    const std::vector<en::LorentzComponent> comps{{0.4, 0.1}};
    const std::vector<double> omega{0.01, 0.1, 1.0};
    const auto spec = en::susceptibility(comps, omega);
    REQUIRE(spec.chi.size() == 3);
    for (std::size_t i = 0; i < omega.size(); ++i) {
        const double w = omega[i];
        CHECK_THAT(spec.chi[i], WithinRel(0.4 * 2.0 * 0.1 / (0.01 + w * w), 1e-13));
    }
    CHECK(spec.static_weight == 0.0);
}

TEST_CASE("zero-rate components move to the static weight", "[ensemble]")
{
    const std::vector<en::LorentzComponent> with_static{{0.4, 0.1}, {0.25, 0.0}};
    const std::vector<en::LorentzComponent> without{{0.4, 0.1}};
    const std::vector<double> omega{0.02, 0.2};
    const auto a = en::susceptibility(with_static, omega);
    const auto b = en::susceptibility(without, omega);
    CHECK_THAT(a.static_weight, WithinAbs(0.25, 1e-15));
    for (std::size_t i = 0; i < omega.size(); ++i)
        CHECK_THAT(a.chi[i], WithinRel(b.chi[i], 1e-14)); // finite frequencies unchanged
}

TEST_CASE("log spacing hits both endpoints", "[ensemble]")
{
    const auto g = en::log_spaced(1e-4, 1.0, 9);
    REQUIRE(g.size() == 9);
    CHECK_THAT(g.front(), WithinRel(1e-4, 1e-12));
    CHECK_THAT(g.back(), WithinRel(1.0, 1e-12));
    CHECK_THAT(g[4], WithinRel(1e-2, 1e-12));
}

TEST_CASE("log uniform mixture produces the inverse-frequency spectrum", "[ensemble]")
{
    const auto comps = en::log_uniform_mixture(1e-4, 1.0, 64);
    double total = 0.0;
    for (const auto& c : comps) total += c.weight;
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));

    const auto omega = en::log_spaced(1e-3, 1e-1, 120);
    const auto spec = en::susceptibility(comps, omega);
    const double slope = en::loglog_slope(spec.omega, spec.chi, 1e-3, 1e-1);
    CHECK_THAT(slope, WithinAbs(-1.0, 0.02));
}

TEST_CASE("loglog slope recovers exact power laws inside the window", "[ensemble]")
{
    std::vector<double> omega = en::log_spaced(1e-3, 1.0, 60);
    std::vector<double> chi(omega.size());
    for (std::size_t i = 0; i < omega.size(); ++i) chi[i] = 2.0 / (omega[i] * omega[i]);
    CHECK_THAT(en::loglog_slope(omega, chi, 1e-3, 1.0), WithinAbs(-2.0, 1e-10));

    // points outside the window must not contaminate the fit
    chi.front() = 1e9;
    CHECK_THAT(en::loglog_slope(omega, chi, 1e-2, 1.0), WithinAbs(-2.0, 1e-10));
}
