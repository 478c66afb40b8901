#include <catch2/catch_amalgamated.hpp>

#include "bathlab/eigencorr.hpp"
#include "bathlab/env_model.hpp"
#include "bathlab/oracles.hpp"

#include <cmath>

using namespace bathlab;
namespace ec = bathlab::eigencorr;
namespace em = bathlab::env_model;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ec::EigenSystem bare_spin_system(double eps, double Delta)
{
    em::MoleculeParams p;
    p.Delta = Delta;
    p.eps = eps;
    p.L = 0;
    p.beta = 1.0;
    const auto model = em::build_molecule(p);
    return ec::diagonalize(model.H, model.B);
}

} // namespace

TEST_CASE("diagonalize returns ascending spectrum and unitary basis", "[eigencorr]")
{
    em::MoleculeParams p;
    p.Delta = 1.0;
    p.eps = 0.5;
    p.r = 0.3;
    p.L = 1;
    p.beta = 1.0;
    const auto model = em::build_molecule(p);
    const auto sys = ec::diagonalize(model.H, model.B);
    REQUIRE(sys.dim() == model.dim);
    for (Eigen::Index k = 1; k < sys.dim(); ++k) CHECK(sys.eps(k) >= sys.eps(k - 1));
    const Eigen::MatrixXcd vv = sys.V.adjoint() * sys.V;
    CHECK((vv - Eigen::MatrixXcd::Identity(sys.dim(), sys.dim())).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(max_hermiticity_defect(sys.B_eig) < 1e-12);
}

TEST_CASE("thermal weights follow the Gibbs ratios", "[eigencorr]")
{
    const auto sys = bare_spin_system(1.0, 1.0);
    const double beta = 0.8;
    const auto th = ec::thermal_weights(sys, beta);
    CHECK_THAT(th.eta.sum(), WithinAbs(1.0, 1e-14));
    CHECK_THAT(th.eta(1) / th.eta(0), WithinRel(std::exp(-beta * (sys.eps(1) - sys.eps(0))), 1e-13));
}

TEST_CASE("spin coherence route matches the closed form", "[eigencorr]")
{
    const auto sys = bare_spin_system(1.0, 1.0);
    const auto th = ec::thermal_weights(sys, 1.0);
    const auto grid = make_time_grid(50.0, 512);
    const auto series = ec::correlation_function(sys, th, grid);
    const auto ref = oracles::spin_coherence_correlation(1.0, 1.0, 1.0, grid);
    for (std::size_t i = 0; i < grid.n; ++i)
        CHECK_THAT(std::abs(series.values[i] - ref.series.values[i]), WithinAbs(0.0, 1e-12));

    const auto rep = ec::offset(sys, th);
    CHECK_THAT(rep.c0, WithinAbs(0.31464513681742673, 1e-13));
    CHECK_THAT(rep.b_mean, WithinAbs(0.43052858579027375, 1e-13));
}

TEST_CASE("dephasing route matches the closed form", "[eigencorr]")
{
    em::MoleculeParams p;
    p.Delta = 0.0;
    p.eps = 0.7;
    p.r = 0.5;
    p.omega_c = 2.0;
    p.L = 1;
    p.n_max = 12;
    p.beta = 1.0;
    const auto model = em::build_molecule(p);
    const auto sys = ec::diagonalize(model.H, model.B);
    const auto th = ec::thermal_weights(sys, p.beta);
    const auto grid = make_time_grid(10.0, 101);
    const auto series = ec::correlation_function(sys, th, grid);
    const auto ref = oracles::pure_dephasing_correlation(p.eps, p.beta, model.modes, grid);
    for (std::size_t i = 0; i < grid.n; ++i)
        CHECK_THAT(std::abs(series.values[i] - ref.values[i]), WithinAbs(0.0, 1e-7));
    CHECK_THAT(ec::offset(sys, th).c0, WithinAbs(0.0, 1e-13));
}

TEST_CASE("harmonic bath carries no offset", "[eigencorr]")
{
    const auto modes = em::discretize_spectral_density(0.5, 1.0, 1);
    const int n_max = em::thermal_n_max(1.0, modes.omega_min());
    const auto bath = em::build_harmonic_bath(modes, n_max);
    const auto sys = ec::diagonalize(bath.H, bath.B);
    const auto th = ec::thermal_weights(sys, 1.0);
    CHECK_THAT(ec::offset(sys, th).c0, WithinAbs(0.0, 1e-14));

    const auto grid = make_time_grid(15.0, 151);
    const auto series = ec::correlation_function(sys, th, grid);
    const auto ref = oracles::harmonic_correlation(modes, 1.0, grid);
    for (std::size_t i = 0; i < grid.n; ++i)
        CHECK_THAT(std::abs(series.values[i] - ref.values[i]), WithinAbs(0.0, 1e-7));
}

TEST_CASE("offset is invariant under degenerate-block rotations", "[eigencorr]")
{
    // two degenerate levels coupled off-diagonally plus a separated third level;
    // however the eigensolver orients the degenerate block, the offset must come
    // out the same
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(3, 3);
    H(2, 2) = 1.0;
    Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(3, 3);
    B(0, 1) = 1.0;
    B(1, 0) = 1.0;
    B(2, 2) = 0.4;

    const auto sys = ec::diagonalize(H, B);
    const auto th = ec::thermal_weights(sys, 1.0);
    const auto rep = ec::offset(sys, th);

    const double z = 2.0 + std::exp(-1.0);
    const double eta0 = 1.0 / z, eta2 = std::exp(-1.0) / z;
    const double m = 0.4 * eta2;
    const double expected = 2.0 * eta0 * (1.0 + m * m) + eta2 * (0.4 - m) * (0.4 - m);
    CHECK_THAT(rep.c0, WithinRel(expected, 1e-12));
    CHECK((rep.condition_degenerate || rep.condition_multi_diag));
    CHECK_THAT(rep.b_mean, WithinRel(0.4 * eta2, 1e-12));
}

TEST_CASE("pair sum is deterministic across worker counts", "[eigencorr]")
{
    em::MoleculeParams p;
    p.Delta = 1.0;
    p.eps = 1.0;
    p.r = 0.4;
    p.L = 1;
    p.beta = 1.0;
    const auto model = em::build_molecule(p);
    const auto sys = ec::diagonalize(model.H, model.B);
    const auto th = ec::thermal_weights(sys, 1.0);
    const auto sp = ec::collect_spectral_pairs(sys, th);
    const auto grid = make_time_grid(30.0, 2048);
    const auto serial = ec::evaluate_pair_sum(sp, grid, 1);
    const auto threaded = ec::evaluate_pair_sum(sp, grid, 4);
    REQUIRE(serial.size() == threaded.size());
    for (std::size_t i = 0; i < serial.size(); ++i) CHECK(serial[i] == threaded[i]);
}

TEST_CASE("pointwise evaluation agrees with the grid evaluation", "[eigencorr]")
{
    const auto sys = bare_spin_system(0.6, 1.3);
    const auto th = ec::thermal_weights(sys, 2.0);
    const auto sp = ec::collect_spectral_pairs(sys, th);
    const auto grid = make_time_grid(8.0, 17);
    const auto vals = ec::evaluate_pair_sum(sp, grid, 1);
    for (std::size_t i = 0; i < grid.n; ++i)
        CHECK_THAT(std::abs(vals[i] - ec::correlation_value(sp, grid.t(i))), WithinAbs(0.0, 1e-13));
}

TEST_CASE("correlation obeys conjugation in time", "[eigencorr]")
{
    const auto sys = bare_spin_system(0.9, 1.4);
    const auto th = ec::thermal_weights(sys, 1.5);
    const auto sp = ec::collect_spectral_pairs(sys, th);
    for (double t : {0.3, 1.7, 6.2})
        CHECK_THAT(std::abs(std::conj(ec::correlation_value(sp, t)) - ec::correlation_value(sp, -t)),
                   WithinAbs(0.0, 1e-14));
}

TEST_CASE("long time average of a constant series is exact", "[eigencorr]")
{
    CorrelationSeries s;
    s.grid = make_time_grid(10.0, 101);
    s.values.assign(101, cplx(0.7, 0.0));
    s.min_nonzero_freq = 2.0;
    const auto avg = ec::long_time_average(s, 0.3);
    CHECK_THAT(avg.value, WithinAbs(0.7, 1e-14));
    CHECK(avg.window_start > 6.5);
    CHECK(avg.window_length > 2.5);
}

TEST_CASE("long time average flags windows shorter than the slowest beat", "[eigencorr]")
{
    const auto sys = bare_spin_system(1.0, 1.0); // single Bohr frequency sqrt(2)
    const auto th = ec::thermal_weights(sys, 1.0);

    auto averaged = [&](double t_max) {
        const auto series = ec::correlation_function(sys, th, make_time_grid(t_max, 1024));
        return ec::long_time_average(series, 0.2);
    };
    CHECK(averaged(50.0).window_short);
    CHECK_FALSE(averaged(3000.0).window_short);
}

TEST_CASE("default time grid spans the slowest oscillation", "[eigencorr]")
{
    const auto sys = bare_spin_system(1.0, 1.0);
    const auto th = ec::thermal_weights(sys, 1.0);
    const auto sp = ec::collect_spectral_pairs(sys, th);
    const auto grid = ec::default_time_grid(sp, 512, 20.0);
    CHECK(grid.n == 512);
    CHECK_THAT(grid.t_max(), WithinRel(20.0 * 2.0 * M_PI / std::sqrt(2.0), 1e-12));
}

TEST_CASE("integrability ladder is convergent on an exponential decay", "[eigencorr]")
{
    const auto series = oracles::exponential_decay(1.0, 1.0, make_time_grid(50.0, 2001));
    const auto rep = ec::davies_diagnostic(series, 0.5);
    CHECK(rep.classification == ec::DaviesReport::Class::convergent);
    CHECK(rep.doubling_change < 1e-2);
    // int_0^inf e^{-t} sqrt(1 + t) dt = e Gamma(3/2, 1)
    CHECK_THAT(rep.i_final, WithinAbs(1.3789360784873224, 1e-3));
    CHECK(std::string(ec::to_string(rep.classification)) == "CONVERGENT");
}

TEST_CASE("integrability ladder is divergent on a constant", "[eigencorr]")
{
    const auto series = oracles::constant_series(0.3, make_time_grid(50.0, 2001));
    const auto rep = ec::davies_diagnostic(series, 0.5);
    CHECK(rep.classification == ec::DaviesReport::Class::divergent);
    CHECK(rep.p_fit > 1.3);
    CHECK(rep.p_fit < 1.7);
}

TEST_CASE("integrability ladder reports slow marginal growth as inconclusive", "[eigencorr]")
{
    // |C| = (1 + t)^{-1.2} with weight exponent 0.5 gives I(T) ~ T^{0.3}
    const auto series = oracles::power_law_decay(1.0, 1.2, make_time_grid(400.0, 8001));
    const auto rep = ec::davies_diagnostic(series, 0.5);
    CHECK(rep.classification == ec::DaviesReport::Class::inconclusive);
    CHECK(rep.p_fit < 0.5);
}

TEST_CASE("diagonal element statistics are thermally normalized", "[eigencorr]")
{
    em::MoleculeParams p;
    p.Delta = 1.0;
    p.eps = 1.0;
    p.r = 0.3;
    p.L = 1;
    p.beta = 1.0;
    const auto model = em::build_molecule(p);
    const auto sys = ec::diagonalize(model.H, model.B);

    const auto th1 = ec::thermal_weights(sys, 1.0);
    const auto stats1 = ec::bkk_statistics(sys, th1, 32);
    REQUIRE(stats1.bkk.size() == static_cast<std::size_t>(sys.dim()));
    CHECK_THAT(stats1.f_beta.back(), WithinAbs(1.0, 1e-12));
    for (std::size_t i = 1; i < stats1.f_beta.size(); ++i)
        CHECK(stats1.f_beta[i] >= stats1.f_beta[i - 1]);
    double mass = 0.0;
    for (double m : stats1.hist_mass) mass += m;
    CHECK_THAT(mass, WithinAbs(1.0, 1e-12));
    CHECK_THAT(stats1.b_mean, WithinAbs(ec::b_mean(sys, th1), 1e-14));

    // colder ensemble concentrates on fewer states
    const auto th5 = ec::thermal_weights(sys, 5.0);
    const auto stats5 = ec::bkk_statistics(sys, th5, 32);
    CHECK(stats5.delta_e_beta < stats1.delta_e_beta);
}
