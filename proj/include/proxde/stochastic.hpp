#pragma once

#include "proxde/hspace.hpp"
#include "proxde/parallel.hpp"
#include "proxde/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace proxde {

/// Trace-class covariance spectrum: Q e_i = lambda_i e_i with {e_i}
/// orthonormal in H.
struct QWienerSpec {
    Eigen::VectorXd eigenvalues;       // lambda_i >= 0
    Eigen::MatrixXd basis;             // dim x modes, columns e_i

    QWienerSpec(Eigen::VectorXd lambdas, Eigen::MatrixXd basis_vectors, const HSpace& space)
        : eigenvalues(std::move(lambdas)), basis(std::move(basis_vectors)) {
        if (basis.rows() != space.dim() || basis.cols() != eigenvalues.size())
            throw std::invalid_argument("qwiener: basis shape mismatch");
        if ((eigenvalues.array() < 0.0).any())
            throw std::invalid_argument("qwiener: eigenvalues must be >= 0");
        for (int i = 0; i < basis.cols(); ++i)
            for (int j = i; j < basis.cols(); ++j) {
                double g = space.inner(basis.col(i), basis.col(j));
                if (std::abs(g - (i == j ? 1.0 : 0.0)) > 1e-10)
                    throw std::invalid_argument("qwiener: basis not orthonormal in H");
            }
    }

    /// Coordinate basis scaled to unit H-norm under the space weights.
    static QWienerSpec coordinate(const HSpace& space, Eigen::VectorXd lambdas) {
        int modes = static_cast<int>(lambdas.size());
        if (modes > space.dim())
            throw std::invalid_argument("qwiener: more modes than dimensions");
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(space.dim(), modes);
        for (int i = 0; i < modes; ++i)
            b(i, i) = 1.0 / std::sqrt(space.weights()[i]);
        return QWienerSpec(std::move(lambdas), std::move(b), space);
    }

    int modes() const { return static_cast<int>(eigenvalues.size()); }
    double trace() const { return eigenvalues.sum(); }
};

enum class PathKind { Wiener, Martingale, General };

/// Grid-sampled stochastic path; Wiener kind starts at 0.
struct SamplePath {
    TimeGrid grid;
    std::vector<Point> values;
    RngSeed seed;
    PathKind kind = PathKind::General;

    std::size_t size() const { return values.size(); }
    int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }
};

/// Scalar path (running integrals, quadratic variation).
struct ScalarPath {
    TimeGrid grid;
    std::vector<double> values;
};

namespace detail {

// Draw index layout: one normal per (step k, mode i), addressed as
// k * modes + i.  Pure in (seed, k, i), independent of evaluation order.
inline double mode_normal(const RngSeed& seed, std::size_t step, int mode, int modes) {
    return rng_normal(seed, static_cast<std::uint64_t>(step) * modes + mode);
}

} // namespace detail

/// Brownian increments per mode: row i holds sqrt(h_k) xi_{ik} for step k.
inline Eigen::MatrixXd wiener_mode_increments(const QWienerSpec& spec, const TimeGrid& grid,
                                              RngSeed seed) {
    const int modes = spec.modes();
    Eigen::MatrixXd db(modes, grid.steps());
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        double sh = std::sqrt(grid.dt(k));
        for (int i = 0; i < modes; ++i)
            db(i, k) = sh * detail::mode_normal(seed, k, i, modes);
    }
    return db;
}

/// W(t) = sum_i sqrt(lambda_i) beta_i(t) e_i sampled on the grid, reproducible
/// from the seed.
inline SamplePath sample_qwiener(const QWienerSpec& spec, const TimeGrid& grid, RngSeed seed) {
    Eigen::MatrixXd db = wiener_mode_increments(spec, grid, seed);
    Eigen::VectorXd scale = spec.eigenvalues.array().sqrt();
    SamplePath path;
    path.grid = grid;
    path.seed = seed;
    path.kind = PathKind::Wiener;
    path.values.resize(grid.size());
    path.values[0] = Point::Zero(spec.basis.rows());
    for (std::size_t k = 0; k < grid.steps(); ++k)
        path.values[k + 1] = path.values[k]
                           + spec.basis * (scale.array() * db.col(k).array()).matrix();
    return path;
}

/// Left-point Riemann-Stieltjes sums I_n(f)(t) = sum (f(t_i), M(t_{i+1}) - M(t_i)).
inline ScalarPath ito_integral(const HSpace& space, const HPath& f, const SamplePath& m) {
    if (f.grid.size() != m.grid.size())
        throw std::invalid_argument("ito_integral: grid mismatch");
    ScalarPath out;
    out.grid = m.grid;
    out.values.assign(m.size(), 0.0);
    for (std::size_t k = 0; k + 1 < m.size(); ++k)
        out.values[k + 1] = out.values[k]
                          + space.inner(f.values[k], m.values[k + 1] - m.values[k]);
    return out;
}

/// Realized quadratic variation: partial sums of |dM|^2_H, nondecreasing from 0.
inline ScalarPath quadratic_variation(const HSpace& space, const SamplePath& m) {
    ScalarPath out;
    out.grid = m.grid;
    out.values.assign(m.size(), 0.0);
    for (std::size_t k = 0; k + 1 < m.size(); ++k) {
        Point dm = m.values[k + 1] - m.values[k];
        out.values[k + 1] = out.values[k] + space.inner(dm, dm);
    }
    return out;
}

/// Spectral truncation M_k(t) = sum_{i<k} (M(t), h_i) h_i over an H-orthonormal
/// family; k = dim reproduces M, k = 0 is the zero path.
inline SamplePath project_martingale(const HSpace& space, const SamplePath& m, int k,
                                     const Eigen::MatrixXd& basis) {
    if (k < 0 || k > basis.cols())
        throw std::invalid_argument("project_martingale: level k out of range");
    SamplePath out = m;
    for (auto& v : out.values) {
        Point acc = Point::Zero(v.size());
        for (int i = 0; i < k; ++i)
            acc += space.inner(v, basis.col(i)) * basis.col(i);
        v = acc;
    }
    return out;
}

/// H-orthonormal coordinate family h_i = e_i / sqrt(w_i).
inline Eigen::MatrixXd coordinate_basis(const HSpace& space) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(space.dim(), space.dim());
    for (int i = 0; i < space.dim(); ++i) b(i, i) = 1.0 / std::sqrt(space.weights()[i]);
    return b;
}

/// Time/state dependent diffusion B(t,u): U_0 -> H as a dim x modes matrix of
/// columns B e_i, with declared Lipschitz/growth constants (L, b).
struct DiffusionCoefficient {
    std::function<Eigen::MatrixXd(double t, const Point& u)> map;
    double lipschitz = 0.0; // |B(t,u)-B(t,v)|_Q^2 <= L |u-v|^2
    double growth = 0.0;    // |B(t,u)|_Q^2 <= b (1 + |u|^2)

    static DiffusionCoefficient constant(Eigen::MatrixXd b0, double growth_b) {
        DiffusionCoefficient d;
        d.map = [m = std::move(b0)](double, const Point&) { return m; };
        d.lipschitz = 0.0;
        d.growth = growth_b;
        return d;
    }

    /// |B|_Q^2 = sum_i lambda_i |B e_i|^2_H.
    double q_norm_sq(const HSpace& space, const QWienerSpec& spec, double t,
                     const Point& u) const {
        Eigen::MatrixXd b = map(t, u);
        double acc = 0.0;
        for (int i = 0; i < spec.modes(); ++i)
            acc += spec.eigenvalues[i] * space.inner(b.col(i), b.col(i));
        return acc;
    }
};

/// H-valued Ito integral ∫ B(t, state(t)) dW with left-point sums; the state
/// path defaults to zero, which covers the constant-in-u checks.
inline SamplePath integrate_diffusion(const HSpace& space, const QWienerSpec& spec,
                                      const DiffusionCoefficient& diff, const TimeGrid& grid,
                                      RngSeed seed, const HPath* state = nullptr) {
    Eigen::MatrixXd db = wiener_mode_increments(spec, grid, seed);
    Eigen::VectorXd scale = spec.eigenvalues.array().sqrt();
    const Point zero = Point::Zero(space.dim());
    SamplePath out;
    out.grid = grid;
    out.seed = seed;
    out.kind = PathKind::Martingale;
    out.values.resize(grid.size());
    out.values[0] = Point::Zero(space.dim());
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        Eigen::MatrixXd b = diff.map(grid.t[k], state ? state->values[k] : zero);
        out.values[k + 1] = out.values[k] + b * (scale.array() * db.col(k).array()).matrix();
    }
    return out;
}

struct IsometryBdgReport {
    double isometry_ratio = 0.0;     // E|I(T)|^2 / ∫ |B|_Q^2 dt
    double isometry_stderr = 0.0;
    double bdg_lhs = 0.0;            // E sup_t |I(t)|
    double bdg_rhs = 0.0;            // 3 E (∫ |B|_Q^2 ds)^{1/2}
    bool isometry_pass = false;
    bool bdg_pass = false;
};

/// Monte Carlo check of the Ito isometry and the r = 1 BDG bound with
/// constant 3; B must be constant in u so the check isolates the integrator.
inline IsometryBdgReport check_isometry_bdg(const HSpace& space, const QWienerSpec& spec,
                                            const DiffusionCoefficient& diff,
                                            const TimeGrid& grid, std::size_t n_paths,
                                            RngSeed seed, double rel_tol = 0.05) {
    std::vector<double> final_sq(n_paths), sup_abs(n_paths);
    parallel_for(n_paths, [&](std::size_t path) {
        SamplePath ip = integrate_diffusion(space, spec, diff, grid,
                                            seed.with_stream(seed.stream + path));
        double sup = 0.0;
        for (const auto& v : ip.values) sup = std::max(sup, space.h_norm(v));
        final_sq[path] = space.inner(ip.values.back(), ip.values.back());
        sup_abs[path] = sup;
    });
    double mean_sq = 0.0, mean_sup = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) {
        mean_sq += final_sq[i];
        mean_sup += sup_abs[i];
    }
    mean_sq /= static_cast<double>(n_paths);
    mean_sup /= static_cast<double>(n_paths);
    double var_sq = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i)
        var_sq += (final_sq[i] - mean_sq) * (final_sq[i] - mean_sq);
    var_sq /= std::max<std::size_t>(1, n_paths - 1);

    double q_integral = 0.0;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k)
        q_integral += grid.dt(k) * diff.q_norm_sq(space, spec, grid.t[k], Point::Zero(space.dim()));

    IsometryBdgReport rep;
    if (q_integral == 0.0) {
        rep.isometry_ratio = mean_sq == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
        rep.isometry_pass = mean_sq == 0.0;
        rep.bdg_lhs = mean_sup;
        rep.bdg_rhs = 0.0;
        rep.bdg_pass = mean_sup == 0.0;
        return rep;
    }
    rep.isometry_ratio = mean_sq / q_integral;
    rep.isometry_stderr = std::sqrt(var_sq / static_cast<double>(n_paths)) / q_integral;
    rep.isometry_pass = std::abs(rep.isometry_ratio - 1.0) <= rel_tol;
    rep.bdg_lhs = mean_sup;
    rep.bdg_rhs = 3.0 * std::sqrt(q_integral);
    rep.bdg_pass = rep.bdg_lhs <= rep.bdg_rhs;
    return rep;
}

/// Sup over the grid of the defect of the integration-by-parts identity
///   |u(t)-m(t)|^2 = |u(t)|^2 - 2∫(u,dm) - 2∫(m,f)ds + 2∫(m,d eta) - <m>(t),
/// with left-point sums and realized variation.  Inputs must satisfy the
/// structural identity u + eta = u0 + ∫f + m on the common grid.
inline double check_ibp(const HSpace& space, const HPath& u, const HPath& eta,
                        const SamplePath& m, const HPath& f) {
    const TimeGrid& grid = u.grid;
    if (eta.size() != u.size() || m.size() != u.size())
        throw std::invalid_argument("check_ibp: grid mismatch");
    if (space.h_norm(eta.values.front()) > 1e-10)
        throw std::invalid_argument("check_ibp: inputs violate eta(0) = 0");
    // precondition: structural identity at the final node
    Point forcing = Point::Zero(u.dim());
    for (std::size_t k = 0; k + 1 < grid.size(); ++k)
        forcing += grid.dt(k) * f.at(grid.t[k]);
    Point defect_id = u.values.back() + eta.values.back()
                    - (u.values.front() + eta.values.front() + forcing
                       + m.values.back() - m.values.front());
    if (space.h_norm(defect_id) > 1e-6 * (1.0 + space.h_norm(u.values.back())))
        throw std::invalid_argument("check_ibp: inputs violate u + eta = u0 + ∫f + m");

    double sup_defect = 0.0;
    double int_u_dm = 0.0, int_m_f = 0.0, int_m_deta = 0.0, qv = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (k > 0) {
            std::size_t j = k - 1;
            double h = grid.dt(j);
            Point dm = m.values[j + 1] - m.values[j];
            int_u_dm += space.inner(u.values[j], dm);
            int_m_f += h * space.inner(m.values[j], f.at(grid.t[j]));
            int_m_deta += space.inner(m.values[j], eta.values[j + 1] - eta.values[j]);
            qv += space.inner(dm, dm);
        }
        Point um = u.values[k] - m.values[k];
        double lhs = space.inner(um, um);
        double rhs = space.inner(u.values[k], u.values[k]) - 2.0 * int_u_dm - 2.0 * int_m_f
                   + 2.0 * int_m_deta - qv;
        sup_defect = std::max(sup_defect, std::abs(lhs - rhs));
    }
    return sup_defect;
}

} // namespace proxde
