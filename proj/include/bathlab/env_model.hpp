// bathlab/env_model.hpp - single-molecule spin-boson models on truncated Fock spaces.
//
// Model: H = H_sigma (x) 1 + sum_l omega_l b_l^dag b_l + sigma^z (x) sum_l g_l (b_l + b_l^dag)
// with H_sigma = (eps sigma^z - Delta sigma^x)/2 and probe operator B = sigma^x (x) 1.
// The bath is an Ohmic spectral density J(w) = r^2 (w/w_c) exp(-w/w_c) with a hard
// cutoff at 2 w_c, discretized on L equally spaced modes.
#pragma once

#include "bathlab/common.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace bathlab::env_model {

struct MoleculeParams {
    double Delta{1.0};   // tunneling matrix element
    double eps{1.0};     // bias
    double r{0.5};       // coupling strength scale
    double omega_c{1.0}; // cutoff frequency
    int L{1};            // number of discretized modes (0 = bare spin)
    int n_max{-1};       // Fock truncation per mode; -1 selects the thermal tail rule
    double beta{1.0};    // inverse temperature
};

struct ModeSet {
    std::vector<double> omega; // strictly increasing, in (0, 2*omega_c]
    std::vector<double> g;     // nonnegative couplings

    std::size_t size() const { return omega.size(); }
    double sum_g2() const
    {
        double s = 0.0;
        for (double gi : g) s += gi * gi;
        return s;
    }
    double omega_min() const { return omega.empty() ? 0.0 : omega.front(); }
};

inline double spectral_density(double omega, double r, double omega_c)
{
    if (omega <= 0.0 || omega > 2.0 * omega_c) return 0.0;
    return r * r * (omega / omega_c) * std::exp(-omega / omega_c);
}

// Equally spaced modes omega_l = l * (2 w_c / L), couplings g_l = sqrt(J(omega_l) dw).
// sum g_l^2 is then the right Riemann sum of J over (0, 2 w_c] and converges to
// r^2 w_c (1 - 3 e^-2) from above as L grows.
inline ModeSet discretize_spectral_density(double r, double omega_c, int L)
{
    if (L < 1) throw std::invalid_argument("discretize_spectral_density: L must be >= 1");
    if (!(omega_c > 0.0)) throw std::invalid_argument("discretize_spectral_density: omega_c must be > 0");
    if (r < 0.0) throw std::invalid_argument("discretize_spectral_density: r must be >= 0");
    ModeSet m;
    const double dw = 2.0 * omega_c / static_cast<double>(L);
    m.omega.resize(static_cast<std::size_t>(L));
    m.g.resize(static_cast<std::size_t>(L));
    for (int l = 1; l <= L; ++l) {
        const double w = dw * static_cast<double>(l);
        m.omega[static_cast<std::size_t>(l - 1)] = w;
        m.g[static_cast<std::size_t>(l - 1)] = std::sqrt(spectral_density(w, r, omega_c) * dw);
    }
    return m;
}

// Smallest n_max whose single-mode thermal tail sum_{n > n_max} e^{-beta w n} / Z
// stays below tail_tol; for a geometric spectrum the tail fraction is exactly
// e^{-beta w (n_max + 1)}.  The default 1e-8 keeps the truncation error of
// thermal correlation functions below ~1e-7 absolute.
inline int thermal_n_max(double beta, double omega_min, double tail_tol = 1e-8)
{
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw std::invalid_argument("thermal_n_max: beta must be positive and finite");
    if (!(omega_min > 0.0))
        throw std::invalid_argument("thermal_n_max: omega_min must be > 0");
    if (!(tail_tol > 0.0) || tail_tol >= 1.0)
        throw std::invalid_argument("thermal_n_max: tail_tol must be in (0, 1)");
    const double m = -std::log(tail_tol) / (beta * omega_min) - 1.0;
    int n = static_cast<int>(std::ceil(m));
    return n < 1 ? 1 : n;
}

inline Eigen::Index hilbert_dimension(int L, int n_max, Eigen::Index cap = 4096)
{
    if (L < 0) throw std::invalid_argument("hilbert_dimension: L must be >= 0");
    if (L > 0 && n_max < 1) throw std::invalid_argument("hilbert_dimension: n_max must be >= 1");
    Eigen::Index dim = 2;
    for (int l = 0; l < L; ++l) {
        dim *= static_cast<Eigen::Index>(n_max + 1);
        if (dim > cap)
            throw std::invalid_argument("hilbert_dimension: 2*(n_max+1)^L exceeds the dimension cap");
    }
    return dim;
}

inline Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b)
{
    Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Eigen::MatrixXcd pauli_x()
{
    Eigen::MatrixXcd s(2, 2);
    s << 0, 1, 1, 0;
    return s;
}

inline Eigen::MatrixXcd pauli_z()
{
    Eigen::MatrixXcd s(2, 2);
    s << 1, 0, 0, -1;
    return s;
}

inline Eigen::MatrixXcd annihilation(int n_max)
{
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n_max + 1, n_max + 1);
    for (int n = 1; n <= n_max; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

// Embeds op acting on tensor factor `slot` of the product space
// electronic (slot 0) (x) mode_1 (slot 1) (x) ... (x) mode_L (slot L).
inline Eigen::MatrixXcd embed(const Eigen::MatrixXcd& op, int slot, int L, int n_max)
{
    Eigen::MatrixXcd out = slot == 0 ? op : Eigen::MatrixXcd::Identity(2, 2);
    for (int l = 1; l <= L; ++l) {
        const Eigen::Index db = n_max + 1;
        out = kron(out, slot == l ? op : Eigen::MatrixXcd::Identity(db, db));
    }
    return out;
}

struct MoleculeModel {
    Eigen::MatrixXcd H;
    Eigen::MatrixXcd B; // sigma^x (x) 1
    ModeSet modes;
    int n_max{0};
    Eigen::Index dim{0};
};

inline Eigen::MatrixXcd build_spin_hamiltonian(double eps, double Delta)
{
    return 0.5 * (eps * pauli_z() - Delta * pauli_x());
}

// B = sigma^x on the electronic factor, identity on all modes.
inline Eigen::MatrixXcd build_coupling_operator(int L, int n_max)
{
    return embed(pauli_x(), 0, L, L > 0 ? n_max : 1);
}

inline MoleculeModel build_molecule(const MoleculeParams& p, Eigen::Index dim_cap = 4096)
{
    MoleculeModel model;
    model.modes = p.L > 0 ? discretize_spectral_density(p.r, p.omega_c, p.L) : ModeSet{};
    model.n_max = p.L == 0 ? 0
                : p.n_max > 0 ? p.n_max
                              : thermal_n_max(p.beta, model.modes.omega_min());
    model.dim = hilbert_dimension(p.L, p.L > 0 ? model.n_max : 1, dim_cap);

    Eigen::MatrixXcd H = embed(build_spin_hamiltonian(p.eps, p.Delta), 0, p.L, model.n_max);
    const Eigen::MatrixXcd sz_full =
        p.L > 0 ? embed(pauli_z(), 0, p.L, model.n_max) : Eigen::MatrixXcd();
    const Eigen::MatrixXcd a = p.L > 0 ? annihilation(model.n_max) : Eigen::MatrixXcd();
    for (int l = 1; l <= p.L; ++l) {
        const double w = model.modes.omega[static_cast<std::size_t>(l - 1)];
        const double g = model.modes.g[static_cast<std::size_t>(l - 1)];
        H += w * embed(a.adjoint() * a, l, p.L, model.n_max);
        if (g != 0.0) H += g * sz_full * embed(a + a.adjoint(), l, p.L, model.n_max);
    }
    model.H = H;
    model.B = build_coupling_operator(p.L, model.n_max);
    require_hermitian(model.H, 1e-12, "build_molecule H");
    require_hermitian(model.B, 1e-12, "build_molecule B");
    return model;
}

struct HarmonicBath {
    Eigen::MatrixXcd H; // sum_l omega_l n_l (diagonal)
    Eigen::MatrixXcd B; // sum_l g_l (b_l + b_l^dag)
    int n_max{0};
    Eigen::Index dim{0};
};

// Pure bosonic bath without the spin: used as the null-offset reference system.
inline HarmonicBath build_harmonic_bath(const ModeSet& modes, int n_max, Eigen::Index dim_cap = 4096)
{
    if (modes.size() == 0) throw std::invalid_argument("build_harmonic_bath: empty mode set");
    if (n_max < 1) throw std::invalid_argument("build_harmonic_bath: n_max must be >= 1");
    const int L = static_cast<int>(modes.size());
    Eigen::Index dim = 1;
    for (int l = 0; l < L; ++l) {
        dim *= static_cast<Eigen::Index>(n_max + 1);
        if (dim > dim_cap)
            throw std::invalid_argument("build_harmonic_bath: (n_max+1)^L exceeds the dimension cap");
    }
    const Eigen::MatrixXcd a = annihilation(n_max);
    const Eigen::Index db = n_max + 1;
    auto embed_mode = [&](const Eigen::MatrixXcd& op, int slot) {
        Eigen::MatrixXcd out = slot == 0 ? op : Eigen::MatrixXcd::Identity(db, db);
        for (int l = 1; l < L; ++l)
            out = kron(out, slot == l ? op : Eigen::MatrixXcd::Identity(db, db));
        return out;
    };
    HarmonicBath bath;
    bath.H = Eigen::MatrixXcd::Zero(dim, dim);
    bath.B = Eigen::MatrixXcd::Zero(dim, dim);
    for (int l = 0; l < L; ++l) {
        bath.H += modes.omega[static_cast<std::size_t>(l)] * embed_mode(a.adjoint() * a, l);
        bath.B += modes.g[static_cast<std::size_t>(l)] * embed_mode(a + a.adjoint(), l);
    }
    bath.n_max = n_max;
    bath.dim = dim;
    return bath;
}

} // namespace bathlab::env_model
