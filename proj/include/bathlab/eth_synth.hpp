// bathlab/eth_synth.hpp - synthetic eigenstate-thermalization environments.
//
// Generates a diagonal spectrum drawn from a Gaussian level density together
// with a probe operator obeying the ETH ansatz
//   B_kl = Bs(Ebar) delta_kl + exp(-S(Ebar)/2) f0(E_kl, w_kl) R_kl,
// where Ebar = (eps_k + eps_l)/2, E_kl = eps_k + eps_l, w_kl = eps_k - eps_l,
// S is chosen so exp(S(E)) matches the local level density, f0 is a Gaussian
// envelope in the frequency argument and R is a real symmetric Gaussian matrix.
#pragma once

#include "bathlab/common.hpp"
#include "bathlab/eigencorr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace bathlab::eth_synth {

struct EthSpec {
    int dim{100};
    double e_center{0.0};
    double sigma_e{1.0};   // width of the Gaussian level density
    double b_smooth{1.0};  // constant smooth diagonal profile Bs(E)
    double f0_amp{1.0};    // overall scale of the off-diagonal envelope
    double f0_width{1.0};  // Gaussian width of f0 in the frequency argument
    std::uint64_t seed{0};
};

struct EthEnvironment {
    Eigen::VectorXd eps;  // sorted spectrum; the Hamiltonian is diag(eps)
    Eigen::MatrixXcd B;   // Hermitian (real symmetric) probe operator

    // The Hamiltonian is diagonal by construction, so the eigensystem is direct.
    eigencorr::EigenSystem to_eigensystem() const
    {
        eigencorr::EigenSystem sys;
        sys.eps = eps;
        sys.V = Eigen::MatrixXcd::Identity(eps.size(), eps.size());
        sys.B_eig = B;
        return sys;
    }
};

// Entropy profile matching the sampled density: exp(S(E)) ~ dim * N(E; c, sigma),
// i.e. S(E) = log(dim / (sigma sqrt(2 pi))) - (E - c)^2 / (2 sigma^2).
inline double entropy_profile(const EthSpec& spec, double e)
{
    const double x = (e - spec.e_center) / spec.sigma_e;
    return std::log(static_cast<double>(spec.dim) / (spec.sigma_e * std::sqrt(2.0 * std::numbers::pi)))
           - 0.5 * x * x;
}

inline EthEnvironment generate_eth_environment(const EthSpec& spec)
{
    if (spec.dim < 2) throw std::invalid_argument("generate_eth_environment: dim must be >= 2");
    if (!(spec.sigma_e > 0.0)) throw std::invalid_argument("generate_eth_environment: sigma_e must be > 0");
    if (!(spec.f0_width > 0.0)) throw std::invalid_argument("generate_eth_environment: f0_width must be > 0");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    EthEnvironment env;
    env.eps.resize(spec.dim);
    for (int k = 0; k < spec.dim; ++k) env.eps(k) = spec.e_center + spec.sigma_e * gauss(rng);
    std::sort(env.eps.data(), env.eps.data() + spec.dim);

    env.B = Eigen::MatrixXcd::Zero(spec.dim, spec.dim);
    for (int k = 0; k < spec.dim; ++k) {
        for (int l = k; l < spec.dim; ++l) {
            const double ebar = 0.5 * (env.eps(k) + env.eps(l));
            const double w = env.eps(k) - env.eps(l);
            const double x = w / spec.f0_width;
            const double f0 = spec.f0_amp * std::exp(-0.5 * x * x);
            const double r_kl = gauss(rng);
            double val = std::exp(-0.5 * entropy_profile(spec, ebar)) * f0 * r_kl;
            if (k == l) val += spec.b_smooth;
            env.B(k, l) = val;
            env.B(l, k) = val;
        }
    }
    return env;
}

// Smallest constant C_N with |C(t)| <= C_N (1 + t)^{-N} over the grid, and the
// fraction of that bound still used at the end of the grid.  A tail ratio below
// 0.5 means the bound is attained in the bulk and the end point sits well below
// it, i.e. the series is consistent with polynomial decay of order N.
struct DecayBoundReport {
    int n{0};
    double c_n{0.0};
    double tail_ratio{0.0};
    bool pass{false};
};

inline DecayBoundReport verify_polynomial_decay(const CorrelationSeries& series, int n_order)
{
    if (series.size() < 8) throw std::invalid_argument("verify_polynomial_decay: series too short");
    if (n_order < 0) throw std::invalid_argument("verify_polynomial_decay: order must be >= 0");
    DecayBoundReport rep;
    rep.n = n_order;
    double c_n = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double bound = std::abs(series.values[i])
                             * std::pow(1.0 + series.grid.t(i), static_cast<double>(n_order));
        c_n = std::max(c_n, bound);
    }
    rep.c_n = c_n;
    const double t_end = series.grid.t_max();
    const double tail = std::abs(series.values.back())
                        * std::pow(1.0 + t_end, static_cast<double>(n_order));
    rep.tail_ratio = c_n > 0.0 ? tail / c_n : 0.0;
    rep.pass = std::isfinite(c_n) && rep.tail_ratio < 0.5;
    return rep;
}

} // namespace bathlab::eth_synth
