#include <catch2/catch_amalgamated.hpp>

#include "bathlab/env_model.hpp"

#include <cmath>

using namespace bathlab;
using namespace bathlab::env_model;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("spectral density follows the ohmic form inside the band", "[env_model]")
{
    const double r = 0.5, wc = 1.0;
    CHECK_THAT(spectral_density(1.0, r, wc), WithinRel(0.25 * std::exp(-1.0), 1e-14));
    CHECK_THAT(spectral_density(2.0, r, wc), WithinRel(0.5 * std::exp(-2.0), 1e-14));
    CHECK_THAT(spectral_density(0.5, 2.0, 3.0),
               WithinRel(4.0 * (0.5 / 3.0) * std::exp(-0.5 / 3.0), 1e-14));
}

TEST_CASE("spectral density vanishes at the edges", "[env_model]")
{
    CHECK(spectral_density(0.0, 1.0, 1.0) == 0.0);
    CHECK(spectral_density(-1.0, 1.0, 1.0) == 0.0);
    CHECK(spectral_density(2.0 + 1e-12, 1.0, 1.0) == 0.0);
    CHECK(spectral_density(5.0, 1.0, 1.0) == 0.0);
    CHECK(spectral_density(2.0, 1.0, 1.0) > 0.0); // band edge itself is inside
}

TEST_CASE("discretization places modes on the uniform grid", "[env_model]")
{
    const auto m = discretize_spectral_density(1.0, 1.0, 4);
    REQUIRE(m.size() == 4);
    CHECK_THAT(m.omega[0], WithinAbs(0.5, 1e-15));
    CHECK_THAT(m.omega[1], WithinAbs(1.0, 1e-15));
    CHECK_THAT(m.omega[2], WithinAbs(1.5, 1e-15));
    CHECK_THAT(m.omega[3], WithinAbs(2.0, 1e-15));
    CHECK_THAT(m.omega_min(), WithinAbs(0.5, 1e-15));
    for (std::size_t l = 0; l < m.size(); ++l)
        CHECK_THAT(m.g[l] * m.g[l], WithinRel(spectral_density(m.omega[l], 1.0, 1.0) * 0.5, 1e-13));
}

TEST_CASE("total coupling weight converges to the band integral", "[env_model]")
{
    // int_0^2 w e^{-w} dw = 1 - 3 e^{-2} for r = wc = 1.
    const double integral = 1.0 - 3.0 * std::exp(-2.0);
    CHECK_THAT(integral, WithinAbs(0.5939941502901619, 1e-15));

    double prev_err = -1.0;
    for (int L : {16, 32, 64, 128}) {
        const auto m = discretize_spectral_density(1.0, 1.0, L);
        const double err = std::abs(m.sum_g2() - integral);
        if (prev_err > 0.0) {
            // first-order quadrature: error roughly halves per doubling
            CHECK(err < prev_err);
            CHECK_THAT(prev_err / err, WithinAbs(2.0, 0.35));
        }
        prev_err = err;
    }
    const auto m128 = discretize_spectral_density(1.0, 1.0, 128);
    CHECK_THAT(m128.sum_g2(), WithinAbs(0.60943373, 2e-2)); // still above the integral
    CHECK_THAT(m128.sum_g2(), WithinRel(integral, 4e-3));
}

TEST_CASE("discretization rejects bad arguments", "[env_model]")
{
    CHECK_THROWS_AS(discretize_spectral_density(1.0, 1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(discretize_spectral_density(1.0, 0.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(discretize_spectral_density(-0.5, 1.0, 4), std::invalid_argument);
}

TEST_CASE("thermal truncation rule tracks the Boltzmann tail", "[env_model]")
{
    CHECK(thermal_n_max(1.0, 2.0) == 9);
    CHECK(thermal_n_max(1.0, 2.0, 1e-12) >= thermal_n_max(1.0, 2.0, 1e-8));
    CHECK(thermal_n_max(2.0, 2.0) <= thermal_n_max(1.0, 2.0));
    CHECK(thermal_n_max(50.0, 2.0) >= 1);
    CHECK_THROWS_AS(thermal_n_max(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(thermal_n_max(1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(thermal_n_max(1.0, 1.0, 2.0), std::invalid_argument);
}

TEST_CASE("hilbert dimension counts spin times Fock factors", "[env_model]")
{
    CHECK(hilbert_dimension(0, 1) == 2);
    CHECK(hilbert_dimension(1, 9) == 20);
    CHECK(hilbert_dimension(3, 4) == 250);
    CHECK_THROWS_AS(hilbert_dimension(6, 9), std::invalid_argument);
    CHECK(hilbert_dimension(6, 9, 3000000) == 2000000);
}

TEST_CASE("kron reproduces small tensor products", "[env_model]")
{
    Eigen::MatrixXcd a(2, 2), b(2, 2);
    a << 1.0, 2.0, 3.0, 4.0;
    b << 0.0, 1.0, 1.0, 0.0;
    const auto k = kron(a, b);
    REQUIRE(k.rows() == 4);
    CHECK_THAT(std::abs(k(0, 1) - cplx(1.0, 0.0)), WithinAbs(0.0, 1e-15));
    CHECK_THAT(std::abs(k(1, 2) - cplx(2.0, 0.0)), WithinAbs(0.0, 1e-15));
    CHECK_THAT(std::abs(k(3, 2) - cplx(4.0, 0.0)), WithinAbs(0.0, 1e-15));
    CHECK(k(0, 0) == cplx(0.0, 0.0));
}

TEST_CASE("pauli matrices satisfy the algebra", "[env_model]")
{
    const auto sx = pauli_x();
    const auto sz = pauli_z();
    CHECK((sx * sx - Eigen::MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((sz * sz - Eigen::MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(((sx * sz + sz * sx)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("annihilation operator obeys the canonical commutator", "[env_model]")
{
    const int n_max = 6;
    const auto a = annihilation(n_max);
    const Eigen::MatrixXcd comm = a * a.adjoint() - a.adjoint() * a;
    // [a, a^dag] = 1 except in the top truncated corner
    for (int n = 0; n < n_max; ++n)
        CHECK_THAT(std::abs(comm(n, n) - cplx(1.0, 0.0)), WithinAbs(0.0, 1e-14));
    CHECK_THAT(std::abs(comm(n_max, n_max) + cplx(static_cast<double>(n_max), 0.0)),
               WithinAbs(0.0, 1e-12));
}

TEST_CASE("embed places the operator in the requested slot", "[env_model]")
{
    const int L = 2, n_max = 2;
    const auto sx_full = embed(pauli_x(), 0, L, n_max);
    REQUIRE(sx_full.rows() == 2 * 9);
    // acting on slot 0 leaves Fock labels alone: <0,0,0| sx |1,0,0> = 1
    CHECK_THAT(std::abs(sx_full(0, 9) - cplx(1.0, 0.0)), WithinAbs(0.0, 1e-15));

    const auto n1 = embed(annihilation(n_max).adjoint() * annihilation(n_max), 1, L, n_max);
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(18);
    v(3) = 1.0; // spin up, n_1 = 1, n_2 = 0
    CHECK_THAT(std::abs((n1 * v)(3) - cplx(1.0, 0.0)), WithinAbs(0.0, 1e-15));
}

TEST_CASE("spin hamiltonian has the expected splitting", "[env_model]")
{
    const double eps = 1.0, Delta = 2.0;
    const auto h = build_spin_hamiltonian(eps, Delta);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
    const double Omega = std::sqrt(Delta * Delta + eps * eps);
    CHECK_THAT(es.eigenvalues()(0), WithinAbs(-0.5 * Omega, 1e-14));
    CHECK_THAT(es.eigenvalues()(1), WithinAbs(0.5 * Omega, 1e-14));
}

TEST_CASE("molecule builder assembles a hermitian model", "[env_model]")
{
    MoleculeParams p;
    p.Delta = 1.0;
    p.eps = 0.5;
    p.r = 0.4;
    p.L = 2;
    p.beta = 1.0;
    const auto model = build_molecule(p);
    REQUIRE(model.dim == 2 * (model.n_max + 1) * (model.n_max + 1));
    CHECK(max_hermiticity_defect(model.H) < 1e-14);
    CHECK(max_hermiticity_defect(model.B) < 1e-14);
    CHECK(model.modes.size() == 2);

    // probe operator squares to the identity
    const Eigen::MatrixXcd b2 = model.B * model.B;
    CHECK((b2 - Eigen::MatrixXcd::Identity(model.dim, model.dim)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("bare molecule reduces to the spin hamiltonian", "[env_model]")
{
    MoleculeParams p;
    p.Delta = 1.0;
    p.eps = 1.0;
    p.L = 0;
    p.beta = 1.0;
    const auto model = build_molecule(p);
    REQUIRE(model.dim == 2);
    CHECK((model.H - build_spin_hamiltonian(1.0, 1.0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((model.B - pauli_x()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("molecule builder honors the dimension cap", "[env_model]")
{
    MoleculeParams p;
    p.Delta = 1.0;
    p.eps = 1.0;
    p.r = 0.25;
    p.L = 3;
    p.n_max = 20;
    p.beta = 1.0;
    CHECK_THROWS_AS(build_molecule(p, 1000), std::invalid_argument);
}
