// bathlab/fitkit.hpp - damped least-squares extraction of the oscillatory-decay
// model parameters from a real correlation trace.
//
// Model: f(t) = amp * cos(omega t) * exp(-rate * t^exponent)
//             + slow_amp * exp(-t / slow_time)
// with exponent boxed to [0.5, 3].  Internally the optimizer works on an
// unconstrained vector (amp, omega, ln rate, logit exponent, slow_amp,
// ln slow_time) and runs a Levenberg-style trust region with analytic
// derivatives, restarted from a small set of deterministic perturbations.
#pragma once

#include "bathlab/common.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace bathlab::fitkit {

struct FitStart {
    double amp{0.0};
    double omega{0.0};
    double rate{0.1};
    double exponent{1.0};
    double slow_amp{0.0};
    double slow_time{1.0};
};

struct FitResult {
    double amp{0.0};
    double omega{0.0};
    double rate{0.0};
    double exponent{1.0};
    double slow_amp{0.0};
    double slow_time{inf_d};
    double rms{nan_d};
    int iterations{0};
    bool converged{false};
    bool slow_static{false};   // 1/slow_time below the frequency resolution of the window
    bool constant_input{false};
    int start_index{-1};       // which start of the multi-start set won
    Eigen::MatrixXd covariance; // 6x6, parameter order as in FitStart; NaN if singular
};

struct FitOptions {
    int max_iterations{400};
    int n_starts{3};
    std::optional<FitStart> start; // bypasses automatic initialization
};

namespace detail {

constexpr double exp_lo = 0.5;
constexpr double exp_span = 2.5; // exponent = exp_lo + exp_span * sigmoid(u)

inline double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

inline double exponent_from_u(double u) { return exp_lo + exp_span * sigmoid(u); }

inline double u_from_exponent(double a)
{
    const double p = std::clamp((a - exp_lo) / exp_span, 1e-6, 1.0 - 1e-6);
    return std::log(p / (1.0 - p));
}

struct ModelEval {
    double f;
    double d[6]; // derivatives w.r.t. the unconstrained vector
};

inline ModelEval eval_model(double t, const Eigen::VectorXd& u)
{
    const double amp = u(0), omega = u(1);
    const double rate = std::exp(u(2));
    const double sig = sigmoid(u(3));
    const double a = exp_lo + exp_span * sig;
    const double slow_amp = u(4);
    const double slow_time = std::exp(u(5));

    const double ta = t > 0.0 ? std::pow(t, a) : 0.0;
    const double env = std::exp(-rate * ta);
    const double c = std::cos(omega * t), s = std::sin(omega * t);
    const double slow = std::exp(-t / slow_time);

    ModelEval e;
    e.f = amp * c * env + slow_amp * slow;
    e.d[0] = c * env;
    e.d[1] = -amp * t * s * env;
    e.d[2] = -amp * c * env * ta * rate;                                   // d/d(ln rate)
    e.d[3] = t > 0.0 ? -amp * c * env * rate * ta * std::log(t)
                           * exp_span * sig * (1.0 - sig)
                     : 0.0;                                                // d/d(logit exponent)
    e.d[4] = slow;
    e.d[5] = slow_amp * slow * (t / slow_time);                            // d/d(ln slow_time)
    return e;
}

inline Eigen::VectorXd pack(const FitStart& s)
{
    Eigen::VectorXd u(6);
    u << s.amp, s.omega, std::log(std::max(s.rate, 1e-12)), u_from_exponent(s.exponent),
        s.slow_amp, std::log(std::clamp(s.slow_time, 1e-12, 1e12));
    return u;
}

inline void unpack(const Eigen::VectorXd& u, FitResult& r)
{
    r.amp = u(0);
    r.omega = std::abs(u(1)); // cosine is even in omega
    r.rate = std::exp(u(2));
    r.exponent = exponent_from_u(u(3));
    r.slow_amp = u(4);
    r.slow_time = std::exp(u(5));
}

inline double cost_of(const std::vector<double>& t, const std::vector<double>& y,
                      const Eigen::VectorXd& u)
{
    double c = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = eval_model(t[i], u).f - y[i];
        c += 0.5 * r * r;
    }
    return c;
}

// Dominant oscillation frequency of the fast component.  The slow relaxation
// and any detrending residue are removed by subtracting a moving average, then
// a coarse spectrum (phasor recurrence) is scanned above the lowest resolvable
// frequency.  Returns 0 when no significant peak stands out (monotone data).
inline double dominant_frequency(const std::vector<double>& t, const std::vector<double>& d)
{
    const std::size_t n = t.size();
    const double dt = t[1] - t[0];
    const double t_span = t.back();

    const std::size_t w_ma = std::max<std::size_t>(2, n / 16);
    std::vector<double> hp(n);
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i > w_ma ? i - w_ma : 0;
        const std::size_t hi = std::min(n - 1, i + w_ma);
        double mean = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) mean += d[k];
        hp[i] = d[i] - mean / static_cast<double>(hi - lo + 1);
        abs_sum += std::abs(hp[i]);
    }
    if (abs_sum <= 0.0) return 0.0;

    const double w_max = 3.14159265358979323846 / dt;
    const double w_min = 6.0 / t_span; // about one full oscillation in the window
    const std::size_t n_scan = std::min<std::size_t>(4 * n, 16384);
    double best_w = 0.0, best_mag = -1.0;
    for (std::size_t k = 1; k < n_scan; ++k) {
        const double w = w_max * static_cast<double>(k) / static_cast<double>(n_scan);
        if (w < w_min) continue;
        const cplx step = std::polar(1.0, -w * dt);
        cplx ph(1.0, 0.0), acc(0.0, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            acc += hp[i] * ph;
            ph *= step;
        }
        const double mag = std::abs(acc);
        if (mag > best_mag) {
            best_mag = mag;
            best_w = w;
        }
    }
    if (best_mag < 0.05 * abs_sum) return 0.0;
    return best_w;
}

inline FitStart auto_start(const std::vector<double>& t, const std::vector<double>& y)
{
    const std::size_t n = t.size();
    const double t_span = t.back();
    FitStart s;

    // Slow component from the trailing fifth: level from the mean, time constant
    // from a log-linear envelope fit (clamped into the observable window).
    const std::size_t tail0 = n - std::max<std::size_t>(2, n / 5);
    double tail_mean = 0.0;
    for (std::size_t i = tail0; i < n; ++i) tail_mean += y[i];
    tail_mean /= static_cast<double>(n - tail0);
    s.slow_amp = tail_mean;

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t nf = 0;
    for (std::size_t i = tail0; i < n; ++i) {
        const double a = std::abs(y[i]);
        if (a < 1e-300) continue;
        sx += t[i]; sy += std::log(a); sxx += t[i] * t[i]; sxy += t[i] * std::log(a);
        ++nf;
    }
    double slow_time = 10.0 * t_span;
    if (nf >= 2) {
        const double den = static_cast<double>(nf) * sxx - sx * sx;
        if (den > 0.0) {
            const double slope = (static_cast<double>(nf) * sxy - sx * sy) / den;
            if (slope < -1e-12) slow_time = -1.0 / slope;
        }
    }
    s.slow_time = std::clamp(slow_time, t_span / 50.0, 10.0 * t_span);

    s.amp = y[0] - s.slow_amp;

    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = y[i] - s.slow_amp * std::exp(-t[i] / s.slow_time);
    s.omega = dominant_frequency(t, d);

    // Fast envelope via a running max over half an oscillation period; the decay
    // law then comes from the 1/2 and 1/4 crossing times.
    const double dt = t[1] - t[0];
    const std::size_t w = s.omega > 0.0
        ? std::min<std::size_t>(n / 2, static_cast<std::size_t>(3.14159265358979323846 / (s.omega * dt)) + 1)
        : 1;
    const double a0 = std::abs(s.amp);
    double t_half = -1.0, t_quarter = -1.0;
    if (a0 > 1e-300) {
        for (std::size_t i = 0; i + 1 < n; ++i) {
            double env = 0.0;
            const std::size_t lo = i > w ? i - w : 0;
            const std::size_t hi = std::min(n - 1, i + w);
            for (std::size_t k = lo; k <= hi; ++k) env = std::max(env, std::abs(d[k]));
            if (t_half < 0.0 && env < 0.5 * a0 && t[i] > 0.0) t_half = t[i];
            if (t_quarter < 0.0 && env < 0.25 * a0 && t[i] > 0.0) t_quarter = t[i];
            if (t_quarter > 0.0) break;
        }
    }
    const double ln2 = 0.6931471805599453;
    if (t_half > 0.0 && t_quarter > t_half * 1.0001) {
        s.exponent = std::clamp(ln2 / std::log(t_quarter / t_half), 0.6, 2.8);
        s.rate = ln2 / std::pow(t_half, s.exponent);
    } else if (t_half > 0.0) {
        s.exponent = 1.0;
        s.rate = ln2 / t_half;
    } else {
        s.exponent = 1.0;
        s.rate = 0.1 / t_span;
    }
    return s;
}

} // namespace detail

// Levenberg-style fit of the oscillatory-decay model to (t, y).  Requires at
// least 64 samples on a uniform grid starting at t = 0.  A numerically constant
// input takes the degenerate branch (amp = 0, static offset).
inline FitResult fit_series(const std::vector<double>& t, const std::vector<double>& y,
                            const FitOptions& opts = {})
{
    if (t.size() != y.size()) throw std::invalid_argument("fit_series: size mismatch");
    const std::size_t n = t.size();
    if (n < 64) throw std::invalid_argument("fit_series: need at least 64 samples");
    if (std::abs(t[0]) > 1e-12) throw std::invalid_argument("fit_series: grid must start at t = 0");
    const double dt = t[1] - t[0];
    if (!(dt > 0.0)) throw std::invalid_argument("fit_series: grid must be increasing");
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs((t[i] - t[i - 1]) - dt) > 1e-9 * dt)
            throw std::invalid_argument("fit_series: grid must be uniform");
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("fit_series: non-finite sample");

    const double t_span = t.back();

    double y_mean = 0.0, y_dev = 0.0, y_scale = 0.0;
    for (double v : y) { y_mean += v; y_scale = std::max(y_scale, std::abs(v)); }
    y_mean /= static_cast<double>(n);
    for (double v : y) y_dev = std::max(y_dev, std::abs(v - y_mean));

    FitResult best;
    best.covariance = Eigen::MatrixXd::Constant(6, 6, nan_d);

    if (y_dev <= 1e-13 * std::max(1.0, y_scale)) {
        best.amp = 0.0;
        best.slow_amp = y_mean;
        best.slow_time = inf_d;
        best.slow_static = true;
        best.constant_input = true;
        best.converged = true;
        double ss = 0.0;
        for (double v : y) ss += (v - y_mean) * (v - y_mean);
        best.rms = std::sqrt(ss / static_cast<double>(n));
        return best;
    }

    const FitStart base = opts.start ? *opts.start : detail::auto_start(t, y);

    // Deterministic perturbed restarts around the automatic initialization.
    std::mt19937_64 rng(0x5eedf17f17ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<FitStart> starts;
    starts.push_back(base);
    for (int k = 1; k < std::max(1, opts.n_starts); ++k) {
        FitStart s = base;
        s.rate = base.rate * std::exp(0.7 * gauss(rng));
        s.exponent = std::clamp(base.exponent * std::exp(0.35 * gauss(rng)), 0.55, 2.95);
        s.omega = base.omega * (1.0 + 0.02 * gauss(rng));
        s.slow_time = std::clamp(base.slow_time * std::exp(0.5 * gauss(rng)),
                                 t_span / 50.0, 10.0 * t_span);
        starts.push_back(s);
    }

    double best_cost = inf_d;
    Eigen::VectorXd best_u;

    for (std::size_t si = 0; si < starts.size(); ++si) {
        Eigen::VectorXd u = detail::pack(starts[si]);
        double cost = detail::cost_of(t, y, u);
        double lambda = 1e-3;
        bool converged = false;
        int iter = 0;

        Eigen::MatrixXd jtj(6, 6);
        Eigen::VectorXd jtr(6);
        for (; iter < opts.max_iterations; ++iter) {
            jtj.setZero();
            jtr.setZero();
            for (std::size_t i = 0; i < n; ++i) {
                const auto e = detail::eval_model(t[i], u);
                const double r = e.f - y[i];
                for (int aq = 0; aq < 6; ++aq) {
                    jtr(aq) += e.d[aq] * r;
                    for (int bq = aq; bq < 6; ++bq) jtj(aq, bq) += e.d[aq] * e.d[bq];
                }
            }
            for (int aq = 0; aq < 6; ++aq)
                for (int bq = 0; bq < aq; ++bq) jtj(aq, bq) = jtj(bq, aq);

            if (jtr.cwiseAbs().maxCoeff() < 1e-14 * (1.0 + cost)) { converged = true; break; }

            bool stepped = false;
            for (int attempt = 0; attempt < 25; ++attempt) {
                Eigen::MatrixXd h = jtj;
                for (int q = 0; q < 6; ++q) h(q, q) += lambda * std::max(jtj(q, q), 1e-12);
                const Eigen::VectorXd delta = h.ldlt().solve(-jtr);
                if (!delta.allFinite()) { lambda *= 4.0; continue; }
                const Eigen::VectorXd u_try = u + delta;
                const double cost_try = detail::cost_of(t, y, u_try);
                if (cost_try < cost) {
                    const double drop = cost - cost_try;
                    u = u_try;
                    cost = cost_try;
                    lambda = std::max(lambda / 3.0, 1e-12);
                    stepped = true;
                    if (drop <= 1e-15 * (cost + 1e-300) || delta.cwiseAbs().maxCoeff() < 1e-13)
                        converged = true;
                    break;
                }
                lambda *= 4.0;
                if (lambda > 1e12) break;
            }
            if (!stepped || converged) { converged = converged || !stepped; break; }
        }

        if (cost < best_cost) {
            best_cost = cost;
            best_u = u;
            best.converged = converged;
            best.iterations = iter;
            best.start_index = static_cast<int>(si);
        }
    }

    detail::unpack(best_u, best);
    best.rms = std::sqrt(2.0 * best_cost / static_cast<double>(n));
    best.slow_static = best.slow_time > t_span;

    // Covariance in the original parameters: sigma^2 (J^T J)^{-1} pushed through
    // the transform Jacobian (identity except rate, exponent, slow_time).
    Eigen::MatrixXd jtj(6, 6);
    jtj.setZero();
    for (std::size_t i = 0; i < n; ++i) {
        const auto e = detail::eval_model(t[i], best_u);
        for (int aq = 0; aq < 6; ++aq)
            for (int bq = aq; bq < 6; ++bq) jtj(aq, bq) += e.d[aq] * e.d[bq];
    }
    for (int aq = 0; aq < 6; ++aq)
        for (int bq = 0; bq < aq; ++bq) jtj(aq, bq) = jtj(bq, aq);
    const double dof = static_cast<double>(n) - 6.0;
    const double sigma2 = dof > 0.0 ? 2.0 * best_cost / dof : nan_d;
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(6, 6);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(jtj);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        Eigen::VectorXd dtheta(6);
        const double sig = detail::sigmoid(best_u(3));
        dtheta << 1.0, 1.0, best.rate, detail::exp_span * sig * (1.0 - sig), 1.0, best.slow_time;
        best.covariance = sigma2 * dtheta.asDiagonal() * ldlt.solve(identity) * dtheta.asDiagonal();
    }
    return best;
}

inline FitResult fit_correlation(const CorrelationSeries& series, const FitOptions& opts = {})
{
    std::vector<double> t(series.size()), y(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        t[i] = series.grid.t(i);
        y[i] = series.values[i].real();
    }
    return fit_series(t, y, opts);
}

} // namespace bathlab::fitkit
