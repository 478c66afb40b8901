// bathlab/common.hpp - shared types: time grids, correlation series, small matrix checks.
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace bathlab {

using cplx = std::complex<double>;

inline constexpr double nan_d = std::numeric_limits<double>::quiet_NaN();
inline constexpr double inf_d = std::numeric_limits<double>::infinity();

// Uniform time grid t_i = i*dt, i = 0..n-1.  All series in the library live on
// grids of this form; negative times are reached via the C(-t) = C(t)* symmetry.
struct TimeGrid {
    double dt{0.0};
    std::size_t n{0};

    double t(std::size_t i) const { return dt * static_cast<double>(i); }
    double t_max() const { return n == 0 ? 0.0 : dt * static_cast<double>(n - 1); }
};

inline TimeGrid make_time_grid(double t_max, std::size_t n_points)
{
    if (!(t_max > 0.0) || n_points < 2)
        throw std::invalid_argument("make_time_grid: need t_max > 0 and n_points >= 2");
    return TimeGrid{t_max / static_cast<double>(n_points - 1), n_points};
}

// A correlation function sampled on a uniform grid.  b_mean is the thermal mean
// removed from the coupling operator; c0 the non-decaying offset when known
// (NaN otherwise).  min_nonzero_freq, when positive, is the slowest oscillation
// present and lets consumers judge whether an averaging window is long enough.
struct CorrelationSeries {
    TimeGrid grid;
    std::vector<cplx> values;
    double b_mean{0.0};
    double c0{nan_d};
    double min_nonzero_freq{0.0};

    std::size_t size() const { return values.size(); }
};

inline double max_hermiticity_defect(const Eigen::MatrixXcd& m)
{
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline void require_hermitian(const Eigen::MatrixXcd& m, double tol, const std::string& what)
{
    if (m.rows() != m.cols())
        throw std::invalid_argument(what + ": matrix is not square");
    if (max_hermiticity_defect(m) > tol)
        throw std::invalid_argument(what + ": matrix is not Hermitian within tolerance");
}

inline double max_abs_diff(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b)
{
    return (a - b).cwiseAbs().maxCoeff();
}

} // namespace bathlab
