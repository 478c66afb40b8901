// bathlab/eigencorr.hpp - thermal correlation functions in the energy eigenbasis.
//
// Conventions: for H |k> = eps_k |k>, thermal weights eta_k ~ exp(-beta (eps_k - eps_0)),
// Bohr frequencies w_kl = eps_k - eps_l, and mean-shifted Btil = B - <B>, the
// correlation function of the probe operator is
//     C(t) = sum_{k,l} eta_k |Btil_kl|^2 exp(i w_kl t)
//          = sum_{|w_kl| > tol} eta_k |Btil_kl|^2 exp(i w_kl t)  +  C_0,
// where C_0 collects the diagonal variance plus degenerate-pair weight d_0 and
// is the non-decaying part of C(t).
#pragma once

#include "bathlab/common.hpp"
#include "bathlab/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

namespace bathlab::eigencorr {

struct EigenSystem {
    Eigen::VectorXd eps;    // ascending eigenvalues
    Eigen::MatrixXcd V;     // columns are eigenvectors
    Eigen::MatrixXcd B_eig; // probe operator in the eigenbasis, V^dag B V

    Eigen::Index dim() const { return eps.size(); }
    double bohr(Eigen::Index k, Eigen::Index l) const { return eps(k) - eps(l); }
};

inline EigenSystem diagonalize(const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& B)
{
    require_hermitian(H, 1e-12 * std::max(1.0, H.cwiseAbs().maxCoeff()), "diagonalize H");
    require_hermitian(B, 1e-12 * std::max(1.0, B.cwiseAbs().maxCoeff()), "diagonalize B");
    if (H.rows() != B.rows()) throw std::invalid_argument("diagonalize: H and B dimensions differ");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(H);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("diagonalize: eigensolver failed to converge");
    EigenSystem sys;
    sys.eps = solver.eigenvalues();
    sys.V = solver.eigenvectors();
    sys.B_eig = sys.V.adjoint() * B * sys.V;
    return sys;
}

struct ThermalState {
    Eigen::VectorXd eta; // normalized weights, ordered like the eigensystem
    double beta{0.0};
};

// Weights are computed from energies shifted by the ground state, so beta up to
// a few thousand divided by the spectral range stays well inside double range.
// beta = +inf distributes all weight over states exactly at the minimum.
inline ThermalState thermal_weights(const EigenSystem& sys, double beta)
{
    if (sys.dim() == 0) throw std::invalid_argument("thermal_weights: empty eigensystem");
    if (std::isnan(beta) || beta < 0.0)
        throw std::invalid_argument("thermal_weights: beta must be >= 0");
    ThermalState th;
    th.beta = beta;
    th.eta.resize(sys.dim());
    const double e0 = sys.eps(0);
    if (std::isinf(beta)) {
        for (Eigen::Index k = 0; k < sys.dim(); ++k) th.eta(k) = sys.eps(k) == e0 ? 1.0 : 0.0;
    } else {
        for (Eigen::Index k = 0; k < sys.dim(); ++k) th.eta(k) = std::exp(-beta * (sys.eps(k) - e0));
    }
    th.eta /= th.eta.sum();
    return th;
}

inline double b_mean(const EigenSystem& sys, const ThermalState& th)
{
    double m = 0.0;
    for (Eigen::Index k = 0; k < sys.dim(); ++k) m += th.eta(k) * sys.B_eig(k, k).real();
    return m;
}

inline double default_tol_deg(const EigenSystem& sys)
{
    const double range = sys.eps(sys.dim() - 1) - sys.eps(0);
    return range > 0.0 ? 1e-10 * range : 1e-10;
}

// Frequency/weight pairs of the eigenbasis expansion, split into the oscillating
// part (|w| > tol_deg) and the constant C_0.  Collected once per eigensystem and
// reused by the correlation, offset and averaging routines.
struct SpectralPairs {
    std::vector<double> omega;  // nonzero Bohr frequencies
    std::vector<double> weight; // eta_k |Btil_kl|^2 >= 0
    double b_mean{0.0};
    double diag_variance{0.0}; // sum_k eta_k Btil_kk^2
    double d0{0.0};            // degenerate-pair weight, |w_kl| <= tol_deg, k != l
    double c0{0.0};            // diag_variance + d0
    double total_weight{0.0};  // c0 + sum of oscillating weights ~= Re C(0)
    double tol_deg{0.0};
    double min_nonzero_freq{0.0};
    int n_deg_pairs{0};        // ordered pairs k != l inside the degeneracy tolerance
    int n_diag_contributors{0};// states with eta_k Btil_kk^2 above threshold
};

inline SpectralPairs collect_spectral_pairs(const EigenSystem& sys, const ThermalState& th,
                                            double tol_deg = -1.0, double prune_tol = 1e-14)
{
    const Eigen::Index d = sys.dim();
    if (th.eta.size() != d) throw std::invalid_argument("collect_spectral_pairs: state/system mismatch");
    SpectralPairs sp;
    sp.tol_deg = tol_deg >= 0.0 ? tol_deg : default_tol_deg(sys);
    sp.b_mean = b_mean(sys, th);

    // Raw variance sets the pruning scale before any pair is dropped.
    double total = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
        if (th.eta(k) == 0.0) continue;
        for (Eigen::Index l = 0; l < d; ++l) {
            const cplx b = k == l ? sys.B_eig(k, k) - sp.b_mean : sys.B_eig(k, l);
            total += th.eta(k) * std::norm(b);
        }
    }
    sp.total_weight = total;
    const double keep = prune_tol * std::max(total, 1e-300);
    const double diag_keep = 1e-12 * std::max(total, 1e-300);

    sp.omega.reserve(static_cast<std::size_t>(d) * 4);
    sp.weight.reserve(static_cast<std::size_t>(d) * 4);
    double min_freq = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
        const double eta = th.eta(k);
        if (eta == 0.0) continue;
        for (Eigen::Index l = 0; l < d; ++l) {
            const double w_kl = sys.eps(k) - sys.eps(l);
            const cplx b = k == l ? sys.B_eig(k, k) - sp.b_mean : sys.B_eig(k, l);
            const double wgt = eta * std::norm(b);
            if (std::abs(w_kl) <= sp.tol_deg) {
                if (k == l) {
                    sp.diag_variance += wgt;
                    if (wgt > diag_keep) ++sp.n_diag_contributors;
                } else {
                    sp.d0 += wgt;
                    ++sp.n_deg_pairs;
                }
            } else if (wgt > keep) {
                sp.omega.push_back(w_kl);
                sp.weight.push_back(wgt);
                const double aw = std::abs(w_kl);
                if (min_freq == 0.0 || aw < min_freq) min_freq = aw;
            }
        }
    }
    sp.c0 = sp.diag_variance + sp.d0;
    sp.min_nonzero_freq = min_freq;
    return sp;
}

struct OffsetReport {
    double c0{0.0};
    double diag_variance{0.0};
    double d0{0.0};
    double b_mean{0.0};
    double tol_deg{0.0};
    int n_deg_pairs{0};
    bool condition_degenerate{false}; // degenerate pairs carry weight
    bool condition_multi_diag{false}; // >= 2 states with eta_k Btil_kk^2 != 0
};

inline OffsetReport offset(const EigenSystem& sys, const ThermalState& th, double tol_deg = -1.0)
{
    const SpectralPairs sp = collect_spectral_pairs(sys, th, tol_deg);
    OffsetReport rep;
    rep.c0 = sp.c0;
    rep.diag_variance = sp.diag_variance;
    rep.d0 = sp.d0;
    rep.b_mean = sp.b_mean;
    rep.tol_deg = sp.tol_deg;
    rep.n_deg_pairs = sp.n_deg_pairs;
    rep.condition_degenerate = sp.d0 > 1e-14 * std::max(sp.total_weight, 1e-300);
    rep.condition_multi_diag = sp.n_diag_contributors >= 2;
    return rep;
}

// Evaluates the pair sum on a uniform grid.  Each pair advances its phasor by
// one complex multiply per step, with an exact std::polar resync every block to
// stop rounding drift; partial sums are reduced in fixed chunk order so the
// result does not depend on the number of worker threads.
inline std::vector<cplx> evaluate_pair_sum(const SpectralPairs& sp, const TimeGrid& grid,
                                           unsigned jobs = 1)
{
    constexpr std::size_t chunk_size = 16384;
    constexpr std::size_t resync_every = 1024;
    const std::size_t n_pairs = sp.omega.size();
    const std::size_t n_chunks = n_pairs == 0 ? 0 : (n_pairs + chunk_size - 1) / chunk_size;
    std::vector<std::vector<cplx>> partial(n_chunks);

    parallel_for(n_chunks, jobs, [&](std::size_t c) {
        const std::size_t begin = c * chunk_size;
        const std::size_t end = std::min(begin + chunk_size, n_pairs);
        std::vector<cplx> acc(grid.n, cplx(0.0, 0.0));
        for (std::size_t p = begin; p < end; ++p) {
            const double w = sp.omega[p];
            const double a = sp.weight[p];
            const cplx step = std::polar(1.0, w * grid.dt);
            cplx phase(1.0, 0.0);
            for (std::size_t i = 0; i < grid.n; ++i) {
                if (i % resync_every == 0) phase = std::polar(1.0, w * grid.t(i));
                acc[i] += a * phase;
                phase *= step;
            }
        }
        partial[c] = std::move(acc);
    });

    std::vector<cplx> out(grid.n, cplx(sp.c0, 0.0));
    for (std::size_t c = 0; c < n_chunks; ++c)
        for (std::size_t i = 0; i < grid.n; ++i) out[i] += partial[c][i];
    return out;
}

inline CorrelationSeries correlation_function(const EigenSystem& sys, const ThermalState& th,
                                              const TimeGrid& grid, double tol_deg = -1.0,
                                              double prune_tol = 1e-14, unsigned jobs = 1)
{
    const SpectralPairs sp = collect_spectral_pairs(sys, th, tol_deg, prune_tol);
    CorrelationSeries series;
    series.grid = grid;
    series.values = evaluate_pair_sum(sp, grid, jobs);
    series.b_mean = sp.b_mean;
    series.c0 = sp.c0;
    series.min_nonzero_freq = sp.min_nonzero_freq;
    return series;
}

// Single-point evaluation, usable at negative t; the workhorse for symmetry checks.
inline cplx correlation_value(const SpectralPairs& sp, double t)
{
    cplx s(sp.c0, 0.0);
    for (std::size_t p = 0; p < sp.omega.size(); ++p)
        s += sp.weight[p] * std::polar(1.0, sp.omega[p] * t);
    return s;
}

struct LongTimeAverage {
    double value{0.0};
    double window_start{0.0};
    double window_length{0.0};
    bool window_short{false}; // window under ~100 periods of the slowest oscillation
};

inline LongTimeAverage long_time_average(const CorrelationSeries& series, double window_fraction = 0.2)
{
    if (series.size() < 2) throw std::invalid_argument("long_time_average: series too short");
    if (!(window_fraction > 0.0) || window_fraction > 1.0)
        throw std::invalid_argument("long_time_average: window_fraction must be in (0, 1]");
    const std::size_t n = series.size();
    std::size_t first = n - std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(window_fraction * static_cast<double>(n))));
    double sum = 0.0;
    for (std::size_t i = first; i < n; ++i) sum += series.values[i].real();
    LongTimeAverage avg;
    avg.value = sum / static_cast<double>(n - first);
    avg.window_start = series.grid.t(first);
    avg.window_length = series.grid.t_max() - avg.window_start;
    if (series.min_nonzero_freq > 0.0)
        avg.window_short = avg.window_length < 100.0 / series.min_nonzero_freq;
    return avg;
}

// Default grid: 2048 points spanning 20 periods of the slowest surviving
// oscillation, clipped to t_cap.
inline TimeGrid default_time_grid(const SpectralPairs& sp, std::size_t n_points = 2048,
                                  double periods = 20.0, double t_cap = 1e6)
{
    double t_max = t_cap;
    if (sp.min_nonzero_freq > 0.0)
        t_max = std::min(t_cap, periods * 2.0 * std::numbers::pi / sp.min_nonzero_freq);
    if (!(t_max > 0.0)) t_max = 1.0;
    return make_time_grid(t_max, n_points);
}

struct BkkDistribution {
    std::vector<double> eps_rescaled; // (eps_k - eps_0) / (eps_max - eps_0)
    std::vector<double> bkk;          // raw diagonal matrix elements <k|B|k>
    std::vector<double> eta;
    std::vector<double> f_beta;       // cumulative thermal weight, f_beta[N] = sum_{k<=N} eta_k
    double delta_e_beta{0.0};         // span over which f_beta reaches 1 - 1e-3
    double b_mean{0.0};
    std::vector<double> hist_edges;   // n_bins + 1 edges over the bkk range
    std::vector<double> hist_count;
    std::vector<double> hist_mass;    // eta-weighted histogram
};

inline BkkDistribution bkk_statistics(const EigenSystem& sys, const ThermalState& th, int n_bins = 64)
{
    if (n_bins < 1) throw std::invalid_argument("bkk_statistics: n_bins must be >= 1");
    const Eigen::Index d = sys.dim();
    BkkDistribution out;
    out.eps_rescaled.resize(static_cast<std::size_t>(d));
    out.bkk.resize(static_cast<std::size_t>(d));
    out.eta.resize(static_cast<std::size_t>(d));
    out.f_beta.resize(static_cast<std::size_t>(d));
    const double e0 = sys.eps(0);
    const double range = sys.eps(d - 1) - e0;
    double cum = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
        out.eps_rescaled[static_cast<std::size_t>(k)] = range > 0.0 ? (sys.eps(k) - e0) / range : 0.0;
        out.bkk[static_cast<std::size_t>(k)] = sys.B_eig(k, k).real();
        out.eta[static_cast<std::size_t>(k)] = th.eta(k);
        cum += th.eta(k);
        out.f_beta[static_cast<std::size_t>(k)] = cum;
    }
    out.b_mean = b_mean(sys, th);

    const double f_target = (1.0 - 1e-3) * cum;
    Eigen::Index n_star = d - 1;
    for (Eigen::Index k = 0; k < d; ++k)
        if (out.f_beta[static_cast<std::size_t>(k)] >= f_target) { n_star = k; break; }
    out.delta_e_beta = sys.eps(n_star) - e0;

    double lo = *std::min_element(out.bkk.begin(), out.bkk.end());
    double hi = *std::max_element(out.bkk.begin(), out.bkk.end());
    if (!(hi > lo)) { lo -= 0.5; hi += 0.5; }
    out.hist_edges.resize(static_cast<std::size_t>(n_bins) + 1);
    out.hist_count.assign(static_cast<std::size_t>(n_bins), 0.0);
    out.hist_mass.assign(static_cast<std::size_t>(n_bins), 0.0);
    for (int b = 0; b <= n_bins; ++b)
        out.hist_edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * static_cast<double>(b) / n_bins;
    for (Eigen::Index k = 0; k < d; ++k) {
        int b = static_cast<int>((out.bkk[static_cast<std::size_t>(k)] - lo) / (hi - lo) * n_bins);
        b = std::clamp(b, 0, n_bins - 1);
        out.hist_count[static_cast<std::size_t>(b)] += 1.0;
        out.hist_mass[static_cast<std::size_t>(b)] += th.eta(k);
    }
    return out;
}

// Integrability diagnostic: partial integrals I(T) = int_0^T |C(t)| (1+t)^e dt on a
// doubling ladder of horizons.  A stabilized ladder (relative change below 1%)
// reads CONVERGENT; otherwise a log-log fit of I against T classifies growth,
// with exponents above 0.5 read as DIVERGENT.
struct DaviesReport {
    enum class Class { convergent, divergent, inconclusive };
    Class classification{Class::inconclusive};
    double epsilon_exp{0.5};
    double i_final{0.0};
    double doubling_change{0.0};
    double p_fit{nan_d};
    std::vector<double> horizons;
    std::vector<double> i_values;
};

inline const char* to_string(DaviesReport::Class c)
{
    switch (c) {
        case DaviesReport::Class::convergent: return "CONVERGENT";
        case DaviesReport::Class::divergent: return "DIVERGENT";
        default: return "INCONCLUSIVE";
    }
}

inline DaviesReport davies_diagnostic(const CorrelationSeries& series, double epsilon_exp = 0.5,
                                      double horizon = -1.0)
{
    if (series.size() < 32) throw std::invalid_argument("davies_diagnostic: series too short");
    DaviesReport rep;
    rep.epsilon_exp = epsilon_exp;

    std::size_t n_end = series.size();
    if (horizon > 0.0)
        n_end = std::min<std::size_t>(n_end, static_cast<std::size_t>(horizon / series.grid.dt) + 1);
    if (n_end < 32) throw std::invalid_argument("davies_diagnostic: horizon too short for the grid");

    std::vector<double> cum(n_end, 0.0);
    auto f = [&](std::size_t i) {
        return std::abs(series.values[i]) * std::pow(1.0 + series.grid.t(i), epsilon_exp);
    };
    double prev = f(0);
    for (std::size_t i = 1; i < n_end; ++i) {
        const double cur = f(i);
        cum[i] = cum[i - 1] + 0.5 * (prev + cur) * series.grid.dt;
        prev = cur;
    }

    const int n_horizons = 6; // T/32 ... T
    for (int k = n_horizons - 1; k >= 0; --k) {
        const std::size_t idx = (n_end - 1) >> k;
        rep.horizons.push_back(series.grid.t(idx));
        rep.i_values.push_back(cum[idx]);
    }
    rep.i_final = rep.i_values.back();
    const std::size_t m = rep.i_values.size();
    const double i_half = rep.i_values[m - 2];
    rep.doubling_change = std::abs(rep.i_final - i_half) / std::max(std::abs(rep.i_final), 1e-300);

    if (rep.doubling_change < 1e-2) {
        rep.classification = DaviesReport::Class::convergent;
        return rep;
    }
    // Log-log fit of I(T) over the last four horizons.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n_fit = 0;
    for (std::size_t k = m >= 4 ? m - 4 : 0; k < m; ++k) {
        if (rep.i_values[k] <= 0.0 || rep.horizons[k] <= 0.0) continue;
        const double x = std::log(rep.horizons[k]);
        const double y = std::log(rep.i_values[k]);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++n_fit;
    }
    if (n_fit >= 2 && sxx * n_fit - sx * sx > 0.0) {
        rep.p_fit = (n_fit * sxy - sx * sy) / (n_fit * sxx - sx * sx);
        rep.classification = rep.p_fit > 0.5 ? DaviesReport::Class::divergent
                                             : DaviesReport::Class::inconclusive;
    }
    return rep;
}

} // namespace bathlab::eigencorr
