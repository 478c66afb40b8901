// bathlab/oracles.hpp - closed-form reference correlation functions and model curves.
//
// These are independent of the eigenbasis machinery and serve as ground truth in
// the test suite.  Each formula was cross-checked against exact diagonalization
// of the corresponding truncated model before being frozen here.
#pragma once

#include "bathlab/common.hpp"
#include "bathlab/env_model.hpp"

#include <cmath>
#include <vector>

namespace bathlab::oracles {

// Bose occupation 1/(e^{beta w} - 1), via expm1 to stay accurate for small beta*w.
inline double bose_occupation(double beta, double omega)
{
    return 1.0 / std::expm1(beta * omega);
}

// coth(beta w / 2) = 2 N(w) + 1; tanh saturates, so no overflow for large arguments.
inline double coth_half(double beta, double omega)
{
    return 1.0 / std::tanh(0.5 * beta * omega);
}

inline double sech(double x)
{
    const double e = std::exp(-std::abs(x));
    return 2.0 * e / (1.0 + e * e);
}

// Unbiased spin (Delta = 0) coupled to the modes: dephasing-only dynamics.
// Polaron transformation gives the exact result
//   C(t) = [ e^{+i eps t} P_e + e^{-i eps t} P_g ]
//          * exp(-4i sum_l (g_l/w_l)^2 sin(w_l t))
//          * exp(-8  sum_l (g_l/w_l)^2 sin^2(w_l t / 2) coth(beta w_l / 2))
// with P_e = 1/(1 + e^{beta eps}) the excited and P_g = 1 - P_e the ground
// population.  Half-angle damping and this weight pairing are the variants
// that match exact diagonalization.
inline CorrelationSeries pure_dephasing_correlation(double eps, double beta,
                                                    const env_model::ModeSet& modes,
                                                    const TimeGrid& grid)
{
    if (!(beta > 0.0)) throw std::invalid_argument("pure_dephasing_correlation: beta must be > 0");
    const double p_e = 1.0 / (1.0 + std::exp(beta * eps));
    const double p_g = 1.0 - p_e;
    std::vector<double> k2(modes.size()), coth(modes.size());
    for (std::size_t l = 0; l < modes.size(); ++l) {
        const double ratio = modes.g[l] / modes.omega[l];
        k2[l] = ratio * ratio;
        coth[l] = coth_half(beta, modes.omega[l]);
    }
    CorrelationSeries out;
    out.grid = grid;
    out.values.resize(grid.n);
    out.b_mean = 0.0; // <sigma^x> vanishes identically at Delta = 0
    out.c0 = 0.0;
    out.min_nonzero_freq = std::abs(eps);
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double t = grid.t(i);
        double phase = 0.0, damp = 0.0;
        for (std::size_t l = 0; l < modes.size(); ++l) {
            const double w = modes.omega[l];
            const double s = std::sin(0.5 * w * t);
            phase += k2[l] * std::sin(w * t);
            damp += k2[l] * s * s * coth[l];
        }
        const cplx pref = p_e * std::polar(1.0, eps * t) + p_g * std::polar(1.0, -eps * t);
        out.values[i] = pref * std::polar(std::exp(-8.0 * damp), -4.0 * phase);
    }
    return out;
}

struct SpinCoherenceResult {
    CorrelationSeries series;
    double mean_sx{0.0}; // (Delta/Omega) tanh(beta Omega / 2)
    double c0{0.0};      // (Delta/Omega)^2 sech^2(beta Omega / 2)
};

// Bare spin (r = 0), H = (eps sigma^z - Delta sigma^x)/2, Omega = sqrt(Delta^2 + eps^2):
//   C(t) = (eps/Omega)^2 [cos(Omega t) - i tanh(beta Omega / 2) sin(Omega t)]
//        + (Delta/Omega)^2 sech^2(beta Omega / 2).
// The real part is the textbook expression; the odd imaginary part follows from
// the thermal asymmetry of the two Bohr branches.
inline SpinCoherenceResult spin_coherence_correlation(double eps, double Delta, double beta,
                                                      const TimeGrid& grid)
{
    const double Omega = std::hypot(eps, Delta);
    if (!(Omega > 0.0)) throw std::invalid_argument("spin_coherence_correlation: eps = Delta = 0");
    const double ew = (eps / Omega) * (eps / Omega);
    const double dw = (Delta / Omega) * (Delta / Omega);
    const double th = std::tanh(0.5 * beta * Omega);
    const double sh = sech(0.5 * beta * Omega);
    SpinCoherenceResult res;
    res.mean_sx = (Delta / Omega) * th;
    res.c0 = dw * sh * sh;
    res.series.grid = grid;
    res.series.values.resize(grid.n);
    res.series.b_mean = res.mean_sx;
    res.series.c0 = res.c0;
    res.series.min_nonzero_freq = Omega;
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double t = grid.t(i);
        res.series.values[i] = cplx(ew * std::cos(Omega * t) + res.c0,
                                    -ew * th * std::sin(Omega * t));
    }
    return res;
}

// Free bosonic modes probed by B = sum_l g_l (b_l + b_l^dag):
//   C(t) = sum_l g_l^2 [ (N_l + 1) e^{-i w_l t} + N_l e^{+i w_l t} ],
// N_l = 1/(e^{beta w_l} - 1).  Detailed balance reads (N+1) e^{-beta w} = N.
inline CorrelationSeries harmonic_correlation(const env_model::ModeSet& modes, double beta,
                                              const TimeGrid& grid)
{
    if (!(beta > 0.0)) throw std::invalid_argument("harmonic_correlation: beta must be > 0");
    if (modes.size() == 0) throw std::invalid_argument("harmonic_correlation: empty mode set");
    std::vector<double> n_occ(modes.size());
    for (std::size_t l = 0; l < modes.size(); ++l) n_occ[l] = bose_occupation(beta, modes.omega[l]);
    CorrelationSeries out;
    out.grid = grid;
    out.values.resize(grid.n);
    out.b_mean = 0.0;
    out.c0 = 0.0;
    out.min_nonzero_freq = modes.omega_min();
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double t = grid.t(i);
        cplx v(0.0, 0.0);
        for (std::size_t l = 0; l < modes.size(); ++l) {
            const double g2 = modes.g[l] * modes.g[l];
            v += g2 * ((n_occ[l] + 1.0) * std::polar(1.0, -modes.omega[l] * t)
                       + n_occ[l] * std::polar(1.0, modes.omega[l] * t));
        }
        out.values[i] = v;
    }
    return out;
}

// ---- model curves for the integrability and fit tests ----

inline CorrelationSeries exponential_decay(double amplitude, double rate, const TimeGrid& grid)
{
    CorrelationSeries out;
    out.grid = grid;
    out.values.resize(grid.n);
    out.c0 = 0.0;
    for (std::size_t i = 0; i < grid.n; ++i)
        out.values[i] = cplx(amplitude * std::exp(-rate * grid.t(i)), 0.0);
    return out;
}

inline CorrelationSeries power_law_decay(double amplitude, double exponent, const TimeGrid& grid)
{
    CorrelationSeries out;
    out.grid = grid;
    out.values.resize(grid.n);
    out.c0 = 0.0;
    for (std::size_t i = 0; i < grid.n; ++i)
        out.values[i] = cplx(amplitude * std::pow(1.0 + std::abs(grid.t(i)), -exponent), 0.0);
    return out;
}

inline CorrelationSeries constant_series(double value, const TimeGrid& grid)
{
    CorrelationSeries out;
    out.grid = grid;
    out.values.assign(grid.n, cplx(value, 0.0));
    out.c0 = value;
    return out;
}

// The damped-oscillation-plus-relaxing-offset functional used by the fit kit:
//   f(t) = A0 cos(w0 t) exp(-B0 t^a) + C0 exp(-t/T0).
inline double fit_model_value(double t, double a0, double omega0, double b0, double a,
                              double c0_tilde, double t0)
{
    const double env = t > 0.0 ? std::exp(-b0 * std::pow(t, a)) : 1.0;
    const double tail = std::isinf(t0) ? 1.0 : std::exp(-t / t0);
    return a0 * std::cos(omega0 * t) * env + c0_tilde * tail;
}

inline CorrelationSeries fit_model_series(double a0, double omega0, double b0, double a,
                                          double c0_tilde, double t0, const TimeGrid& grid)
{
    if (!std::isfinite(a0) || !std::isfinite(omega0) || !std::isfinite(b0) || !std::isfinite(a)
        || !std::isfinite(c0_tilde) || std::isnan(t0) || !(a > 0.0) || !(t0 > 0.0))
        throw std::invalid_argument("fit_model_series: parameters must be finite with a > 0, t0 > 0");
    CorrelationSeries out;
    out.grid = grid;
    out.values.resize(grid.n);
    out.c0 = std::isinf(t0) ? c0_tilde : 0.0;
    for (std::size_t i = 0; i < grid.n; ++i)
        out.values[i] = cplx(fit_model_value(grid.t(i), a0, omega0, b0, a, c0_tilde, t0), 0.0);
    return out;
}

// Weak-coupling relaxation shape: a damped cosine with complex pole lambda0, an
// exponentially relaxing component and a constant floor,
//   f(t) = A e^{-Re(lambda0) t} cos(Im(lambda0) t) + c e^{-rate t} + floor.
// Coincides with the model above at a = 1, B0 = Re(lambda0), w0 = Im(lambda0),
// floor = 0.
inline double weak_coupling_model_value(double t, cplx lambda0, double amp, double c,
                                        double rate, double floor_value)
{
    return amp * std::exp(-lambda0.real() * t) * std::cos(lambda0.imag() * t)
           + c * std::exp(-rate * t) + floor_value;
}

inline CorrelationSeries weak_coupling_model_series(cplx lambda0, double amp, double c,
                                                    double rate, double floor_value,
                                                    const TimeGrid& grid)
{
    if (!std::isfinite(lambda0.real()) || !std::isfinite(lambda0.imag()) || !std::isfinite(amp)
        || !std::isfinite(c) || !std::isfinite(rate) || !std::isfinite(floor_value))
        throw std::invalid_argument("weak_coupling_model_series: parameters must be finite");
    CorrelationSeries out;
    out.grid = grid;
    out.values.resize(grid.n);
    out.c0 = floor_value;
    for (std::size_t i = 0; i < grid.n; ++i)
        out.values[i] = cplx(weak_coupling_model_value(grid.t(i), lambda0, amp, c, rate, floor_value), 0.0);
    return out;
}

} // namespace bathlab::oracles
