// bathlab/ensemble.hpp - molecule ensembles with parameter disorder and the
// low-frequency noise spectrum of their slowly relaxing offsets.
//
// Each member j draws (Delta_j, eps_j) from independent Gaussians; its bath
// correlation is computed exactly and the ensemble average is a plain mean.
// When every offset relaxes at some slow rate nu_j, the ensemble noise spectrum
// is a mixture of Lorentzians sum_j w_j 2 nu_j / (nu_j^2 + w^2); a log-uniform
// rate distribution turns that mixture into a 1/f shoulder.
#pragma once

#include "bathlab/common.hpp"
#include "bathlab/env_model.hpp"
#include "bathlab/eigencorr.hpp"
#include "bathlab/parallel.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace bathlab::ensemble {

struct EnsembleSpec {
    int n_molecules{16};
    double delta_mean{1.0};
    double delta_sd{0.1};
    double eps_mean{1.0};
    double eps_sd{0.1};
    double r{0.5};        // shared system-bath coupling scale
    double omega_c{1.0};
    int L{1};
    double beta{1.0};
    std::uint64_t seed{0};
    int dim_cap{4096};
};

// Deterministic per-member draw: the stream depends only on (seed, j), so the
// sample is identical no matter how many threads later process the members.
// Non-positive draws are rejected and redrawn.
inline env_model::MoleculeParams sample_molecule(const EnsembleSpec& spec, int j)
{
    if (j < 0 || j >= spec.n_molecules)
        throw std::invalid_argument("sample_molecule: index out of range");
    std::seed_seq seq{static_cast<unsigned>(spec.seed & 0xffffffffu),
                      static_cast<unsigned>(spec.seed >> 32),
                      static_cast<unsigned>(j)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> dist_delta(spec.delta_mean, spec.delta_sd);
    std::normal_distribution<double> dist_eps(spec.eps_mean, spec.eps_sd);

    env_model::MoleculeParams p;
    p.r = spec.r;
    p.omega_c = spec.omega_c;
    p.L = spec.L;
    p.beta = spec.beta;
    int guard = 0;
    do {
        p.Delta = dist_delta(rng);
        if (++guard > 1000) throw std::runtime_error("sample_molecule: rejection loop stuck (Delta)");
    } while (!(p.Delta > 0.0));
    guard = 0;
    do {
        p.eps = dist_eps(rng);
        if (++guard > 1000) throw std::runtime_error("sample_molecule: rejection loop stuck (eps)");
    } while (!(p.eps > 0.0));
    return p;
}

struct EnsembleResult {
    CorrelationSeries mean_series;      // (1/M) sum_j C^{(j)}(t)
    std::vector<double> delta;          // sampled parameters, index = member
    std::vector<double> eps;
    std::vector<double> c0;             // per-member offsets
    double c0_mean{0.0};
};

inline EnsembleResult ensemble_correlation(const EnsembleSpec& spec, const TimeGrid& grid,
                                           unsigned jobs = 1)
{
    if (spec.n_molecules < 1) throw std::invalid_argument("ensemble_correlation: need n_molecules >= 1");
    const std::size_t m = static_cast<std::size_t>(spec.n_molecules);
    std::vector<CorrelationSeries> series(m);
    EnsembleResult out;
    out.delta.resize(m);
    out.eps.resize(m);
    out.c0.resize(m);

    parallel_for(m, jobs, [&](std::size_t j) {
        const auto params = sample_molecule(spec, static_cast<int>(j));
        const auto model = env_model::build_molecule(params, spec.dim_cap);
        const auto sys = eigencorr::diagonalize(model.H, model.B);
        const auto th = eigencorr::thermal_weights(sys, spec.beta);
        series[j] = eigencorr::correlation_function(sys, th, grid);
        out.delta[j] = params.Delta;
        out.eps[j] = params.eps;
        out.c0[j] = series[j].c0;
    });

    out.mean_series.grid = grid;
    out.mean_series.values.assign(grid.n, cplx(0.0, 0.0));
    double c0_sum = 0.0, bmean_sum = 0.0;
    double min_freq = inf_d;
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < grid.n; ++i) out.mean_series.values[i] += series[j].values[i];
        c0_sum += series[j].c0;
        bmean_sum += series[j].b_mean;
        if (series[j].min_nonzero_freq > 0.0) min_freq = std::min(min_freq, series[j].min_nonzero_freq);
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (auto& v : out.mean_series.values) v *= inv_m;
    out.mean_series.c0 = c0_sum * inv_m;
    out.mean_series.b_mean = bmean_sum * inv_m;
    out.mean_series.min_nonzero_freq = std::isfinite(min_freq) ? min_freq : 0.0;
    out.c0_mean = out.mean_series.c0;
    return out;
}

// ---- Lorentzian mixtures and the 1/f shoulder ----

struct LorentzComponent {
    double weight{0.0}; // offset size carried by this relaxation channel
    double nu{0.0};     // relaxation rate; nu = 0 keeps a strictly static weight
};

struct MixtureSpectrum {
    std::vector<double> omega;
    std::vector<double> chi;      // sum_j w_j 2 nu_j / (nu_j^2 + w^2), nu_j > 0 only
    double static_weight{0.0};    // total weight sitting at nu = 0 (a spike at w = 0)
};

inline MixtureSpectrum susceptibility(const std::vector<LorentzComponent>& comps,
                                      const std::vector<double>& omega_grid)
{
    MixtureSpectrum out;
    out.omega = omega_grid;
    out.chi.assign(omega_grid.size(), 0.0);
    for (const auto& c : comps) {
        if (c.nu < 0.0) throw std::invalid_argument("susceptibility: negative relaxation rate");
        if (c.nu == 0.0) {
            out.static_weight += c.weight;
            continue;
        }
        for (std::size_t q = 0; q < omega_grid.size(); ++q)
            out.chi[q] += c.weight * 2.0 * c.nu / (c.nu * c.nu + omega_grid[q] * omega_grid[q]);
    }
    return out;
}

inline std::vector<double> log_spaced(double lo, double hi, std::size_t n)
{
    if (!(lo > 0.0) || !(hi > lo) || n < 2)
        throw std::invalid_argument("log_spaced: need 0 < lo < hi and n >= 2");
    std::vector<double> out(n);
    const double step = std::log(hi / lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo * std::exp(step * static_cast<double>(i));
    return out;
}

// Equal-weight components with log-spaced rates approximate a log-uniform rate
// density Q(nu) ~ 1/nu, whose mixture spectrum is flat in log-log with slope -1
// for nu_min << w << nu_max.
inline std::vector<LorentzComponent> log_uniform_mixture(double nu_min, double nu_max,
                                                         std::size_t n, double total_weight = 1.0)
{
    const auto rates = log_spaced(nu_min, nu_max, n);
    std::vector<LorentzComponent> comps(n);
    for (std::size_t i = 0; i < n; ++i)
        comps[i] = LorentzComponent{total_weight / static_cast<double>(n), rates[i]};
    return comps;
}

// Least-squares slope of log chi versus log omega restricted to [w_lo, w_hi].
inline double loglog_slope(const std::vector<double>& omega, const std::vector<double>& chi,
                           double w_lo, double w_hi)
{
    if (omega.size() != chi.size()) throw std::invalid_argument("loglog_slope: size mismatch");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < omega.size(); ++i) {
        if (omega[i] < w_lo || omega[i] > w_hi || !(chi[i] > 0.0) || !(omega[i] > 0.0)) continue;
        const double x = std::log(omega[i]), y = std::log(chi[i]);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++n;
    }
    if (n < 2) throw std::invalid_argument("loglog_slope: fewer than two usable points in window");
    const double den = static_cast<double>(n) * sxx - sx * sx;
    if (!(den > 0.0)) throw std::runtime_error("loglog_slope: degenerate abscissa");
    return (static_cast<double>(n) * sxy - sx * sy) / den;
}

} // namespace bathlab::ensemble
