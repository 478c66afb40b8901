// bathlab/master_eq.hpp - second-order master equations driven by a split bath
// correlation function C(t) = alpha(t) + C_0.
//
// Everything is formulated in the interaction picture of the diagonal system
// Hamiltonian, S(t) = sum_ab e^{i E_ab t} <a|S|b> L_ab with L_ab = |a><b| and
// E_ab = E_a - E_b.  The decaying part enters through the half-Fourier data
// Gamma(w) = gamma(w) + i Sigma(w) = int_0^inf alpha(tau) e^{i w tau} dtau (or its
// finite-time counterpart), the offset through either a time-local coefficient
// C_0 chi_ab(t) = C_0 int_0^t e^{i E_ab s} ds evaluated in closed form, or the
// genuinely convoluted memory matrices M_w(t) = int_0^t e^{i w tau} rho(tau) dtau
// carried as extra integrator state.  The right-hand side is assembled as
// Y + Y^dag with
//   Y = sum_{ab,cd} S_ab S_dc e^{i(E_ba - E_dc) t} Gamma(E_ba) [L_ab rho(t), L^dag_cd]
//     + C_0 sum_{ab,cd} S_ab S_dc e^{i(E_ba - E_dc) t} [L_ab X_ab(t), L^dag_cd],
// which keeps rho Hermitian and traceless-derivative by construction.  Note the
// offset memory phase e^{i E_ab tau} runs in absolute time: after the secular
// reduction the offset drive therefore does not average out, and the stationary
// populations acquire a history-dependent, non-thermal component.
#pragma once

#include "bathlab/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace bathlab::master_eq {

struct SystemSpec {
    Eigen::VectorXd energies; // H_S eigenvalues; the basis of everything below
    Eigen::MatrixXcd S;       // Hermitian coupling operator in that basis

    Eigen::Index dim() const { return energies.size(); }
};

inline SystemSpec make_two_level(double omega_q)
{
    SystemSpec sys;
    sys.energies.resize(2);
    sys.energies << -0.5 * omega_q, 0.5 * omega_q;
    sys.S = Eigen::MatrixXcd::Zero(2, 2);
    sys.S(0, 1) = sys.S(1, 0) = 1.0;
    return sys;
}

// Non-degenerate random test system: sorted uniform energies on [0, e_span] with a
// minimum gap, plus a real symmetric coupling with unit largest element.
inline SystemSpec make_random_system(int dim, std::uint64_t seed, double e_span = 1.5)
{
    if (dim < 2) throw std::invalid_argument("make_random_system: dim must be >= 2");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    SystemSpec sys;
    sys.energies.resize(dim);
    for (;;) {
        for (int k = 0; k < dim; ++k) sys.energies(k) = e_span * uni(rng);
        std::sort(sys.energies.data(), sys.energies.data() + dim);
        double min_gap = e_span;
        for (int k = 1; k < dim; ++k) min_gap = std::min(min_gap, sys.energies(k) - sys.energies(k - 1));
        if (min_gap > 0.05 * e_span) break;
    }
    sys.S = Eigen::MatrixXcd::Zero(dim, dim);
    for (int a = 0; a < dim; ++a)
        for (int b = a; b < dim; ++b) {
            const double v = 2.0 * uni(rng) - 1.0;
            sys.S(a, b) = v;
            sys.S(b, a) = v;
        }
    sys.S /= sys.S.cwiseAbs().maxCoeff();
    return sys;
}

// ---- bath description ----

struct BathInput {
    std::function<double(double)> gamma;  // Re Gamma(w)
    std::function<double(double)> sigma;  // Im Gamma(w); may be null (treated as 0)
    std::function<cplx(double)> alpha;    // decaying part in time; needed for the
                                          // finite-time coefficient variant
    double c0{0.0};                       // non-decaying offset of C(t)

    // Ohmic spectral density with thermal occupation: the half-Fourier transform of
    // the continuum correlation has gamma(w > 0) = pi J(w) (N(w)+1) (emission side),
    // gamma(w < 0) = pi J(|w|) N(|w|) (absorption), smooth limit pi r^2/(beta w_c)
    // at w = 0.  Satisfies gamma(w) = e^{beta w} gamma(-w) exactly.  The principal
    // value part is omitted here (populations never see it).
    static BathInput ohmic(double r, double omega_c, double beta, double c0 = 0.0)
    {
        if (!(omega_c > 0.0) || !(beta > 0.0))
            throw std::invalid_argument("BathInput::ohmic: omega_c and beta must be > 0");
        BathInput b;
        b.c0 = c0;
        b.gamma = [r, omega_c, beta](double w) {
            const double pi = 3.14159265358979323846;
            const double aw = std::abs(w);
            if (aw < 1e-12 * omega_c) return pi * r * r / (beta * omega_c);
            if (aw > 2.0 * omega_c) return 0.0;
            const double j = r * r * (aw / omega_c) * std::exp(-aw / omega_c);
            const double n = 1.0 / std::expm1(beta * aw);
            return pi * j * (w > 0.0 ? n + 1.0 : n);
        };
        b.sigma = [](double) { return 0.0; };
        return b;
    }

    // alpha(t) = amp e^{-kappa t}: Gamma(w) = amp (kappa + i w) / (kappa^2 + w^2).
    static BathInput exponential(double amp, double kappa, double c0 = 0.0)
    {
        if (!(kappa > 0.0)) throw std::invalid_argument("BathInput::exponential: kappa must be > 0");
        BathInput b;
        b.c0 = c0;
        b.gamma = [amp, kappa](double w) { return amp * kappa / (kappa * kappa + w * w); };
        b.sigma = [amp, kappa](double w) { return amp * w / (kappa * kappa + w * w); };
        b.alpha = [amp, kappa](double t) { return cplx(amp * std::exp(-kappa * t), 0.0); };
        return b;
    }
};

// ---- numeric half-Fourier transform ----

struct SpectralData {
    std::vector<double> omega;
    std::vector<double> gamma;
    std::vector<double> sigma;
    bool non_convergent{false};
    double tail_rate{nan_d}; // fitted exponential decay rate of |alpha| near the end
};

// Trapezoidal int_0^T alpha(t) e^{iwt} dt plus an exponential tail correction
// alpha(T) e^{iwT} / (kappa - iw), kappa fitted on the trailing tenth of the grid.
// Flags NON_CONVERGENT when the tail does not decay or the windowed integral has
// not stabilized (relative change above 1e-3 between 0.9 T and T).
inline SpectralData half_fourier(const CorrelationSeries& alpha, const std::vector<double>& omega_grid)
{
    if (alpha.size() < 16) throw std::invalid_argument("half_fourier: series too short");
    SpectralData out;
    out.omega = omega_grid;
    out.gamma.resize(omega_grid.size());
    out.sigma.resize(omega_grid.size());

    const std::size_t n = alpha.size();
    const std::size_t win = std::max<std::size_t>(4, n / 10);

    // Tail decay rate from a log-linear fit of |alpha| on the last window.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n_fit = 0;
    for (std::size_t i = n - win; i < n; ++i) {
        const double a = std::abs(alpha.values[i]);
        if (a <= 0.0) continue;
        const double x = alpha.grid.t(i), y = std::log(a);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++n_fit;
    }
    double kappa = 0.0;
    if (n_fit >= 2 && sxx * static_cast<double>(n_fit) - sx * sx > 0.0)
        kappa = -(static_cast<double>(n_fit) * sxy - sx * sy) / (static_cast<double>(n_fit) * sxx - sx * sx);
    out.tail_rate = kappa;
    const bool tail_ok = kappa > 0.0;
    if (!tail_ok) out.non_convergent = true;

    const std::size_t i_win = n - 1 - win;
    double max_mag = 0.0, max_change = 0.0;
    for (std::size_t q = 0; q < omega_grid.size(); ++q) {
        const double w = omega_grid[q];
        cplx acc(0.0, 0.0), acc_win(0.0, 0.0);
        cplx prev = alpha.values[0];
        for (std::size_t i = 1; i < n; ++i) {
            const cplx cur = alpha.values[i] * std::polar(1.0, w * alpha.grid.t(i));
            acc += 0.5 * (prev + cur) * alpha.grid.dt;
            prev = cur;
            if (i == i_win) acc_win = acc;
        }
        cplx total = acc;
        if (tail_ok) {
            const double t_end = alpha.grid.t_max();
            total += alpha.values[n - 1] * std::polar(1.0, w * t_end) / cplx(kappa, -w);
        }
        out.gamma[q] = total.real();
        out.sigma[q] = total.imag();
        max_mag = std::max(max_mag, std::abs(total));
        max_change = std::max(max_change, std::abs(acc - acc_win));
    }
    if (max_mag > 0.0 && max_change / max_mag > 1e-3) out.non_convergent = true;
    return out;
}

// ---- integrators ----

struct MasterEqOptions {
    double dt{0.01};
    double t_max{100.0};
    bool finite_time_coefficients{false}; // Gamma_t(w) instead of Gamma_inf(w)
    std::size_t store_stride{10};
    double bohr_dedupe_tol{1e-10};
    double history_damping{0.0}; // Abel damping of the rate-equation offset moment; 0 = auto
};

struct MasterEqRun {
    SystemSpec sys;
    std::vector<double> t;
    std::vector<Eigen::MatrixXcd> rho; // interaction picture
    bool convoluted{false};
    double trace_drift{0.0};
    double herm_drift{0.0};
    double min_eigenvalue{0.0};
    double max_offset_coeff{0.0}; // sup_t of the offset coefficient magnitude
    double rate_scale{0.0};       // largest dissipative coefficient magnitude
    bool unstable{false};

    // Back to the Schroedinger picture: rho_S = e^{-iHt} rho_I e^{iHt}.
    Eigen::MatrixXcd schrodinger(std::size_t i) const
    {
        const Eigen::Index d = sys.dim();
        Eigen::MatrixXcd out(d, d);
        for (Eigen::Index a = 0; a < d; ++a)
            for (Eigen::Index b = 0; b < d; ++b)
                out(a, b) = rho[i](a, b) * std::polar(1.0, -(sys.energies(a) - sys.energies(b)) * t[i]);
        return out;
    }
};

namespace detail {

struct CouplingPair {
    int a, b;
    double e_ab;    // E_a - E_b
    cplx s;         // <a|S|b>
    std::size_t f;  // index of E_ab in the deduplicated frequency table
};

struct PairTable {
    std::vector<CouplingPair> pairs;
    std::vector<double> freqs; // deduplicated Bohr frequencies E_ab
    double max_abs_e{0.0};
};

inline PairTable build_pair_table(const SystemSpec& sys, double dedupe_tol)
{
    require_hermitian(sys.S, 1e-12 * std::max(1.0, sys.S.cwiseAbs().maxCoeff()), "master_eq S");
    PairTable tab;
    const Eigen::Index d = sys.dim();
    const double s_keep = 1e-15 * std::max(1.0, sys.S.cwiseAbs().maxCoeff());
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) {
            if (std::abs(sys.S(a, b)) <= s_keep) continue;
            CouplingPair p;
            p.a = static_cast<int>(a);
            p.b = static_cast<int>(b);
            p.e_ab = sys.energies(a) - sys.energies(b);
            p.s = sys.S(a, b);
            std::size_t f = tab.freqs.size();
            for (std::size_t q = 0; q < tab.freqs.size(); ++q)
                if (std::abs(tab.freqs[q] - p.e_ab) <= dedupe_tol) { f = q; break; }
            if (f == tab.freqs.size()) tab.freqs.push_back(p.e_ab);
            p.f = f;
            tab.pairs.push_back(p);
            tab.max_abs_e = std::max(tab.max_abs_e, std::abs(p.e_ab));
        }
    return tab;
}

// chi_w(t) = int_0^t e^{i w s} ds, the closed-form time-local offset coefficient.
inline cplx chi_coeff(double w, double t)
{
    if (std::abs(w) * std::max(t, 1.0) < 1e-12) return cplx(t, 0.0);
    return (std::polar(1.0, w * t) - 1.0) / cplx(0.0, w);
}

} // namespace detail

inline MasterEqRun integrate_master_equation(const SystemSpec& sys, const BathInput& bath,
                                             const Eigen::MatrixXcd& rho0,
                                             const MasterEqOptions& opts, bool convoluted)
{
    const Eigen::Index d = sys.dim();
    if (rho0.rows() != d || rho0.cols() != d)
        throw std::invalid_argument("integrate_master_equation: rho0 dimension mismatch");
    require_hermitian(rho0, 1e-10, "integrate_master_equation rho0");
    if (!bath.gamma) throw std::invalid_argument("integrate_master_equation: bath.gamma missing");
    if (opts.finite_time_coefficients && !bath.alpha)
        throw std::invalid_argument("integrate_master_equation: finite-time variant needs bath.alpha");
    if (!(opts.dt > 0.0) || !(opts.t_max > opts.dt))
        throw std::invalid_argument("integrate_master_equation: bad dt/t_max");

    const detail::PairTable tab = detail::build_pair_table(sys, opts.bohr_dedupe_tol);
    if (opts.dt * tab.max_abs_e >= 0.1)
        throw std::invalid_argument("integrate_master_equation: dt * max|E_ab| must stay below 0.1");

    // Gamma(E_ba) per pair; for the finite-time variant these become running
    // integrals updated by trapezoid at half-step resolution.
    const std::size_t np = tab.pairs.size();
    std::vector<cplx> gamma_inf(np);
    double rate_scale = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
        const double e_ba = -tab.pairs[p].e_ab;
        gamma_inf[p] = cplx(bath.gamma(e_ba), bath.sigma ? bath.sigma(e_ba) : 0.0);
        rate_scale = std::max(rate_scale, 2.0 * std::abs(gamma_inf[p]) * std::norm(tab.pairs[p].s));
    }

    const std::size_t n_steps = static_cast<std::size_t>(std::ceil(opts.t_max / opts.dt));
    const std::size_t nf = tab.freqs.size();
    const std::size_t d2 = static_cast<std::size_t>(d) * static_cast<std::size_t>(d);
    const std::size_t state_size = d2 * (convoluted ? 1 + nf : 1);

    Eigen::VectorXcd state = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(state_size));
    Eigen::Map<Eigen::MatrixXcd>(state.data(), d, d) = rho0;

    // Finite-time Gamma accumulators, advanced between stage evaluations.
    std::vector<cplx> gamma_run(np, cplx(0.0, 0.0));
    std::vector<cplx> alpha_e_prev(np); // alpha(t) e^{i E_ba t} at the last half-step
    if (opts.finite_time_coefficients)
        for (std::size_t p = 0; p < np; ++p) alpha_e_prev[p] = bath.alpha(0.0);

    double max_offset_coeff = 0.0;

    auto rhs = [&](double t, const Eigen::VectorXcd& x, Eigen::VectorXcd& dx) {
        dx.setZero(static_cast<Eigen::Index>(state_size));
        Eigen::Map<const Eigen::MatrixXcd> rho(x.data(), d, d);
        Eigen::Map<Eigen::MatrixXcd> drho(dx.data(), d, d);
        Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(d, d);

        // e^{i E_ba t} per pair; a combo (ab, cd) carries the coefficient phase
        // e^{i(E_ba - E_dc) t} as the product ph_ba[p] * ph_ba[q], because the
        // pair q is read in the (d, c) role and so stores e_ab = E_dc.
        std::vector<cplx> ph_ba(np);
        std::vector<cplx> chi(np);
        for (std::size_t p = 0; p < np; ++p) {
            ph_ba[p] = std::polar(1.0, -tab.pairs[p].e_ab * t);
            if (!convoluted && bath.c0 != 0.0) chi[p] = detail::chi_coeff(tab.pairs[p].e_ab, t);
        }

        for (std::size_t p = 0; p < np; ++p) {
            const auto& ab = tab.pairs[p];
            const cplx gam = opts.finite_time_coefficients ? gamma_run[p] : gamma_inf[p];
            // Decaying-part factor for [L_ab rho, L_cd^dag]; the offset factor swaps
            // the memory argument in below.
            const cplx k_alpha = ab.s * ph_ba[p] * gam;
            // Offset memory argument: the stored M_{E_ab} matrix (convoluted) or
            // rho(t) with the closed-form chi coefficient (time-local).
            cplx k_off(0.0, 0.0);
            if (bath.c0 != 0.0)
                k_off = convoluted ? bath.c0 * ab.s * ph_ba[p] : bath.c0 * ab.s * ph_ba[p] * chi[p];
            Eigen::Map<const Eigen::MatrixXcd> m_ab(
                convoluted && bath.c0 != 0.0 ? x.data() + d2 * (1 + ab.f) : x.data(), d, d);

            for (std::size_t q = 0; q < np; ++q) {
                const auto& dc = tab.pairs[q]; // plays (d, c): L^dag_cd = |d><c|
                const int c = dc.b, dd = dc.a;
                const cplx outer = dc.s * ph_ba[q]; // s_dc e^{-i E_dc t}
                const cplx k1 = k_alpha * outer;
                // [L_ab X, L^dag_cd] = X_bd |a><c| - delta_{ca} |d><b| X
                y(ab.a, c) += k1 * rho(ab.b, dd);
                if (c == ab.a) y.row(dd) -= k1 * rho.row(ab.b);
                if (bath.c0 != 0.0) {
                    const cplx k2 = k_off * outer;
                    y(ab.a, c) += k2 * m_ab(ab.b, dd);
                    if (c == ab.a) y.row(dd) -= k2 * m_ab.row(ab.b);
                }
            }
        }
        drho = y + y.adjoint();

        if (convoluted) {
            for (std::size_t f = 0; f < nf; ++f) {
                Eigen::Map<Eigen::MatrixXcd> dm(dx.data() + d2 * (1 + f), d, d);
                dm = std::polar(1.0, tab.freqs[f] * t) * rho;
            }
        }
    };

    // Offset coefficient magnitude for the stability diagnostic.
    auto offset_coeff_now = [&](double t, const Eigen::VectorXcd& x) {
        if (bath.c0 == 0.0) return 0.0;
        double m = 0.0;
        for (std::size_t p = 0; p < np; ++p) {
            const auto& ab = tab.pairs[p];
            double c;
            if (convoluted) {
                Eigen::Map<const Eigen::MatrixXcd> mem(x.data() + d2 * (1 + ab.f), d, d);
                c = std::abs(bath.c0) * std::norm(ab.s) * mem.cwiseAbs().maxCoeff();
            } else {
                c = std::abs(bath.c0) * std::norm(ab.s) * std::abs(detail::chi_coeff(ab.e_ab, t));
            }
            m = std::max(m, c);
        }
        return m;
    };

    auto advance_gamma_run = [&](double t_from, double t_to) {
        // One trapezoid panel per half step keeps Gamma_t consistent with the
        // stage times RK4 actually queries.
        const double h = t_to - t_from;
        for (std::size_t p = 0; p < np; ++p) {
            const double e_ba = -tab.pairs[p].e_ab;
            const cplx cur = bath.alpha(t_to) * std::polar(1.0, e_ba * t_to);
            gamma_run[p] += 0.5 * (alpha_e_prev[p] + cur) * h;
            alpha_e_prev[p] = cur;
        }
    };

    MasterEqRun run;
    run.sys = sys;
    run.convoluted = convoluted;
    run.rate_scale = rate_scale;

    Eigen::VectorXcd k1(state.size()), k2(state.size()), k3(state.size()), k4(state.size());
    Eigen::VectorXcd tmp(state.size());
    std::vector<cplx> gamma_at_mid, gamma_at_end;

    auto store = [&](std::size_t step) {
        run.t.push_back(opts.dt * static_cast<double>(step));
        run.rho.emplace_back(Eigen::Map<const Eigen::MatrixXcd>(state.data(), d, d));
    };
    store(0);

    for (std::size_t step = 0; step < n_steps; ++step) {
        const double t = opts.dt * static_cast<double>(step);
        const double h = opts.dt;

        max_offset_coeff = std::max(max_offset_coeff, offset_coeff_now(t, state));

        if (opts.finite_time_coefficients) {
            // Gamma_t is needed at t (current), t + h/2, t + h.  Stash the three
            // tables and swap them in around the stage evaluations.
            rhs(t, state, k1);
            advance_gamma_run(t, t + 0.5 * h);
            tmp = state + 0.5 * h * k1;
            rhs(t + 0.5 * h, tmp, k2);
            tmp = state + 0.5 * h * k2;
            rhs(t + 0.5 * h, tmp, k3);
            advance_gamma_run(t + 0.5 * h, t + h);
            tmp = state + h * k3;
            rhs(t + h, tmp, k4);
        } else {
            rhs(t, state, k1);
            tmp = state + 0.5 * h * k1;
            rhs(t + 0.5 * h, tmp, k2);
            tmp = state + 0.5 * h * k2;
            rhs(t + 0.5 * h, tmp, k3);
            tmp = state + h * k3;
            rhs(t + h, tmp, k4);
        }
        state += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        if ((step + 1) % opts.store_stride == 0 || step + 1 == n_steps) store(step + 1);
    }
    max_offset_coeff = std::max(max_offset_coeff, offset_coeff_now(opts.dt * static_cast<double>(n_steps), state));

    run.max_offset_coeff = max_offset_coeff;
    run.unstable = max_offset_coeff > 10.0 * rate_scale;

    double min_eig = 1.0;
    for (std::size_t i = 0; i < run.rho.size(); ++i) {
        run.trace_drift = std::max(run.trace_drift, std::abs(run.rho[i].trace().real() - 1.0)
                                                        + std::abs(run.rho[i].trace().imag()));
        run.herm_drift = std::max(run.herm_drift, max_hermiticity_defect(run.rho[i]));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (run.rho[i] + run.rho[i].adjoint()));
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    }
    run.min_eigenvalue = min_eig;
    return run;
}

inline MasterEqRun evolve_time_local(const SystemSpec& sys, const BathInput& bath,
                                     const Eigen::MatrixXcd& rho0, const MasterEqOptions& opts)
{
    return integrate_master_equation(sys, bath, rho0, opts, false);
}

inline MasterEqRun evolve_convoluted(const SystemSpec& sys, const BathInput& bath,
                                     const Eigen::MatrixXcd& rho0, const MasterEqOptions& opts)
{
    return integrate_master_equation(sys, bath, rho0, opts, true);
}

// ---- secular rate equations ----

struct RateEqRun {
    SystemSpec sys;
    std::vector<double> t;
    std::vector<Eigen::VectorXd> p;
    Eigen::MatrixXd rates; // rates(a, b) = 2 gamma(E_b - E_a) |S_ab|^2, transfer b -> a
    double conservation_drift{0.0};
    double secular_gap{inf_d}; // smallest nonzero spacing between coupled Bohr frequencies
    double max_rate{0.0};
    bool secular_warning{false};  // secular_gap not well above max_rate
    double history_damping{0.0};  // eta actually used for the offset moment
    bool window_resolved{true};   // e^{-eta t_max} negligible, moment frozen by t_max
};

// Populations under the secular projection: detailed-balance rates plus the
// offset history drive
//   dP_m/dt = sum_b [ rates(m,b) P_b - rates(b,m) P_m
//                     + 2 C_0 |S_mb|^2 (T_b - T_m) ],
//   T_b(t) = int_0^t e^{-eta tau} cos(E_mb tau) P_b(tau) dtau.
// T_b is the history moment of the populations evaluated in the Abel sense.
// The undamped moment does not settle: it carries a boundary oscillation
// P_b(t) sin(E_mb t)/E_mb that, fed back into the drive, pumps the populations
// through a spurious resonance and the integration runs away. The damped
// moment converges to the transient part of the integral, which is the
// quantity entering the stationary balance. eta must sit well below both the
// relaxation rates and the smallest Bohr frequency; by default it is chosen
// from those scales and reported on the run, together with whether e^{-eta t}
// had died out by t_max. The frozen moment then acts as a constant drive: for
// C_0 > 0 the fixed point is shifted away from Gibbs by an amount growing
// with C_0 that remembers where the evolution started.
inline RateEqRun secular_rate_equations(const SystemSpec& sys, const BathInput& bath,
                                        const Eigen::VectorXd& p0, const MasterEqOptions& opts)
{
    const Eigen::Index d = sys.dim();
    if (p0.size() != d) throw std::invalid_argument("secular_rate_equations: p0 dimension mismatch");
    if (std::abs(p0.sum() - 1.0) > 1e-10 || p0.minCoeff() < -1e-12)
        throw std::invalid_argument("secular_rate_equations: p0 is not a probability vector");
    if (!bath.gamma) throw std::invalid_argument("secular_rate_equations: bath.gamma missing");

    RateEqRun run;
    run.sys = sys;
    run.rates = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < d; ++b) {
            if (a == b) continue;
            run.rates(a, b) = 2.0 * bath.gamma(sys.energies(b) - sys.energies(a))
                              * std::norm(sys.S(a, b));
            run.max_rate = std::max(run.max_rate, run.rates(a, b));
        }

    // Distinct |E_mb| values over coupled pairs.
    std::vector<double> freqs;
    Eigen::MatrixXi fidx = Eigen::MatrixXi::Constant(d, d, -1);
    for (Eigen::Index m = 0; m < d; ++m)
        for (Eigen::Index b = 0; b < d; ++b) {
            if (m == b || std::norm(sys.S(m, b)) == 0.0) continue;
            const double w = std::abs(sys.energies(m) - sys.energies(b));
            std::size_t f = freqs.size();
            for (std::size_t q = 0; q < freqs.size(); ++q)
                if (std::abs(freqs[q] - w) <= opts.bohr_dedupe_tol) { f = q; break; }
            if (f == freqs.size()) freqs.push_back(w);
            fidx(m, b) = static_cast<int>(f);
        }
    const std::size_t nf = freqs.size();

    // The projection onto populations assumes well-separated Bohr frequencies.
    for (std::size_t i = 0; i < nf; ++i)
        for (std::size_t j = i + 1; j < nf; ++j)
            run.secular_gap = std::min(run.secular_gap, std::abs(freqs[i] - freqs[j]));
    if (nf >= 2 && std::isfinite(run.secular_gap))
        run.secular_warning = run.secular_gap < 10.0 * run.max_rate;

    // Abel damping for the offset moment. Auto mode keeps it a decade under
    // the slowest relaxation rate and the smallest Bohr frequency, so the
    // moment both captures the transient and freezes within the run.
    double eta = opts.history_damping;
    if (bath.c0 != 0.0 && eta <= 0.0) {
        Eigen::MatrixXd gen = run.rates;
        for (Eigen::Index b = 0; b < d; ++b) gen(b, b) = -run.rates.col(b).sum();
        Eigen::EigenSolver<Eigen::MatrixXd> es(gen);
        double relax = inf_d;
        for (Eigen::Index k = 0; k < d; ++k) {
            const double re = es.eigenvalues()(k).real();
            if (re < -1e-12 * std::max(1.0, run.max_rate)) relax = std::min(relax, -re);
        }
        double w_min = inf_d;
        for (double w : freqs) w_min = std::min(w_min, w);
        eta = std::min(relax, w_min) / 10.0;
        if (!std::isfinite(eta) || eta <= 0.0) eta = 8.0 / opts.t_max;
    }
    if (bath.c0 != 0.0) {
        run.history_damping = eta;
        run.window_resolved = eta * opts.t_max >= -std::log(1e-3);
    }

    // State layout: [P(d), T(nf x d)] with the damped moments T as above.
    const std::size_t nd = static_cast<std::size_t>(d);
    const std::size_t state_size = nd * (1 + nf);
    Eigen::VectorXd state = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(state_size));
    state.head(d) = p0;

    auto rhs = [&](double t, const Eigen::VectorXd& x, Eigen::VectorXd& dx) {
        dx.setZero(static_cast<Eigen::Index>(state_size));
        const auto p = x.head(d);
        for (Eigen::Index m = 0; m < d; ++m) {
            double dp = 0.0;
            for (Eigen::Index b = 0; b < d; ++b) {
                if (b == m) continue;
                dp += run.rates(m, b) * p(b) - run.rates(b, m) * p(m);
                const int f = fidx(m, b);
                if (f >= 0 && bath.c0 != 0.0) {
                    const Eigen::Index fa = static_cast<Eigen::Index>(nd + static_cast<std::size_t>(f) * nd);
                    dp += 2.0 * bath.c0 * std::norm(sys.S(m, b)) * (x(fa + b) - x(fa + m));
                }
            }
            dx(m) = dp;
        }
        if (bath.c0 != 0.0) {
            const double damp = std::exp(-eta * t);
            for (std::size_t f = 0; f < nf; ++f) {
                const double cw = damp * std::cos(freqs[f] * t);
                for (Eigen::Index b = 0; b < d; ++b)
                    dx(static_cast<Eigen::Index>(nd + f * nd) + b) = cw * p(b);
            }
        }
    };

    const std::size_t n_steps = static_cast<std::size_t>(std::ceil(opts.t_max / opts.dt));
    Eigen::VectorXd k1(state.size()), k2(state.size()), k3(state.size()), k4(state.size()), tmp(state.size());
    auto store = [&](std::size_t step) {
        run.t.push_back(opts.dt * static_cast<double>(step));
        run.p.emplace_back(state.head(d));
    };
    store(0);
    for (std::size_t step = 0; step < n_steps; ++step) {
        const double t = opts.dt * static_cast<double>(step);
        const double h = opts.dt;
        rhs(t, state, k1);
        tmp = state + 0.5 * h * k1;
        rhs(t + 0.5 * h, tmp, k2);
        tmp = state + 0.5 * h * k2;
        rhs(t + 0.5 * h, tmp, k3);
        tmp = state + h * k3;
        rhs(t + h, tmp, k4);
        state += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if ((step + 1) % opts.store_stride == 0 || step + 1 == n_steps) store(step + 1);
    }
    for (const auto& p : run.p)
        run.conservation_drift = std::max(run.conservation_drift, std::abs(p.sum() - 1.0));
    return run;
}

// ---- steady-state analysis ----

inline Eigen::VectorXd gibbs_populations(const Eigen::VectorXd& energies, double beta)
{
    Eigen::VectorXd p(energies.size());
    const double e0 = energies.minCoeff();
    for (Eigen::Index k = 0; k < energies.size(); ++k) p(k) = std::exp(-beta * (energies(k) - e0));
    p /= p.sum();
    return p;
}

inline double trace_distance(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(a - b);
    return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

struct SteadyStateReport {
    bool converged{false};
    double plateau_delta{0.0};            // max-abs rho(t_max) - rho(0.9 t_max)
    double gibbs_distance{0.0};           // trace distance of the trailing mean to Gibbs
    double initial_state_dependence{nan_d}; // trace distance between the two trailing means
    double trace_drift{0.0};
    double min_eigenvalue{0.0};
};

namespace detail {

inline Eigen::MatrixXcd trailing_mean(const std::vector<Eigen::MatrixXcd>& rho)
{
    const std::size_t n = rho.size();
    const std::size_t first = n - std::max<std::size_t>(1, n / 10);
    Eigen::MatrixXcd mean = Eigen::MatrixXcd::Zero(rho[0].rows(), rho[0].cols());
    for (std::size_t i = first; i < n; ++i) mean += rho[i];
    return mean / static_cast<double>(n - first);
}

inline std::size_t index_at_fraction(const std::vector<double>& t, double frac)
{
    const double target = frac * t.back();
    std::size_t best = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (std::abs(t[i] - target) < std::abs(t[best] - target)) best = i;
    return best;
}

} // namespace detail

inline SteadyStateReport steady_state_report(const MasterEqRun& run, double beta,
                                             const MasterEqRun* alt = nullptr)
{
    if (run.rho.size() < 3) throw std::invalid_argument("steady_state_report: run too short");
    SteadyStateReport rep;
    const std::size_t i9 = detail::index_at_fraction(run.t, 0.9);
    rep.plateau_delta = (run.rho.back() - run.rho[i9]).cwiseAbs().maxCoeff();
    rep.converged = rep.plateau_delta < 1e-5;
    const Eigen::MatrixXcd mean = detail::trailing_mean(run.rho);
    Eigen::MatrixXcd gibbs = gibbs_populations(run.sys.energies, beta).cast<cplx>().asDiagonal();
    rep.gibbs_distance = trace_distance(mean, gibbs);
    rep.trace_drift = run.trace_drift;
    rep.min_eigenvalue = run.min_eigenvalue;
    if (alt) rep.initial_state_dependence = trace_distance(mean, detail::trailing_mean(alt->rho));
    return rep;
}

inline SteadyStateReport steady_state_report(const RateEqRun& run, double beta,
                                             const RateEqRun* alt = nullptr)
{
    if (run.p.size() < 3) throw std::invalid_argument("steady_state_report: run too short");
    SteadyStateReport rep;
    const std::size_t i9 = detail::index_at_fraction(run.t, 0.9);
    rep.plateau_delta = (run.p.back() - run.p[i9]).cwiseAbs().maxCoeff();
    rep.converged = rep.plateau_delta < 1e-5;
    const std::size_t n = run.p.size();
    const std::size_t first = n - std::max<std::size_t>(1, n / 10);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(run.p[0].size());
    for (std::size_t i = first; i < n; ++i) mean += run.p[i];
    mean /= static_cast<double>(n - first);
    rep.gibbs_distance = 0.5 * (mean - gibbs_populations(run.sys.energies, beta)).cwiseAbs().sum();
    rep.trace_drift = run.conservation_drift;
    rep.min_eigenvalue = mean.minCoeff();
    if (alt) {
        Eigen::VectorXd mean_b = Eigen::VectorXd::Zero(alt->p[0].size());
        const std::size_t nb = alt->p.size();
        const std::size_t fb = nb - std::max<std::size_t>(1, nb / 10);
        for (std::size_t i = fb; i < nb; ++i) mean_b += alt->p[i];
        mean_b /= static_cast<double>(nb - fb);
        rep.initial_state_dependence = 0.5 * (mean - mean_b).cwiseAbs().sum();
    }
    return rep;
}

} // namespace bathlab::master_eq
