#pragma once

#include "proxde/det_solver.hpp"
#include "proxde/parallel.hpp"
#include "proxde/stochastic.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace proxde {

class BlowupError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// du + Au(dt) ∋ f(t,u) dt + B(t,u) dW, u(0) = u0.
struct SdeProblem {
    HSpace space;
    MonotoneOperator op;
    Point u0;
    std::function<Point(double, const Point&)> f;
    double f_lipschitz = 0.0; // L1
    double f_growth = 0.0;    // b1
    DiffusionCoefficient diff;
    QWienerSpec qwiener;
    double horizon = 1.0;

    /// Empirical two-point validation of the declared Lipschitz constants.
    /// Throws when a sampled ratio exceeds the declaration by more than 1%.
    void validate_constants(const TimeGrid& grid, std::size_t samples = 64,
                            RngSeed seed = RngSeed{0xC0115u, 11}) const {
        Rng rng(seed);
        for (std::size_t s = 0; s < samples; ++s) {
            Point u(space.dim()), v(space.dim());
            for (int i = 0; i < space.dim(); ++i) {
                u[i] = 3.0 * rng.normal();
                v[i] = 3.0 * rng.normal();
            }
            double t = grid.horizon() * rng.uniform();
            double duv = space.h_norm(u - v);
            if (duv < 1e-12) continue;
            double rf = space.h_norm(f(t, u) - f(t, v)) / duv;
            if (rf > f_lipschitz * 1.01 + 1e-12)
                throw std::invalid_argument("sde problem: declared L1 violated by sampling");
            Eigen::MatrixXd bu = diff.map(t, u), bv = diff.map(t, v);
            double acc = 0.0;
            for (int i = 0; i < qwiener.modes(); ++i) {
                Point d = bu.col(i) - bv.col(i);
                acc += qwiener.eigenvalues[i] * space.inner(d, d);
            }
            if (acc > diff.lipschitz * duv * duv * 1.01 + 1e-12)
                throw std::invalid_argument("sde problem: declared L violated by sampling");
        }
    }
};

/// One stochastic generalized solution path plus bookkeeping.
struct GenSolutionStoch {
    GenSolution sol;
    SamplePath noise; // the martingale input M(t) actually used
    RngSeed seed;
    int picard_iters = 0;
    double eps = 0.0;
};

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

struct EnsembleReport {
    std::size_t n_paths = 0;
    std::map<std::string, Estimate> estimators;
    std::map<std::string, bool> checks;

    bool all_pass() const {
        for (const auto& [name, ok] : checks)
            if (!ok) return false;
        return true;
    }
};

namespace detail {

inline Estimate mean_estimate(const std::vector<double>& xs) {
    Estimate e;
    if (xs.empty()) return e;
    for (double x : xs) e.value += x;
    e.value /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - e.value) * (x - e.value);
    var /= std::max<std::size_t>(1, xs.size() - 1);
    e.std_error = std::sqrt(var / static_cast<double>(xs.size()));
    return e;
}

} // namespace detail

/// Additive-noise generalized stochastic solution: runs the deterministic
/// GD solver on the spectrally projected martingale M_k per path.
inline GenSolutionStoch solve_gs_additive(const SdeProblem& p, const SamplePath& m,
                                          const TimeGrid& grid, int projection_level,
                                          const GdOptions& gd = GdOptions{}) {
    Eigen::MatrixXd basis = coordinate_basis(p.space);
    SamplePath mk = project_martingale(p.space, m, projection_level, basis);
    std::vector<Point> fvals(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) fvals[k] = p.f(grid.t[k], p.u0);
    HPath fpath(grid, std::move(fvals));
    HPath mpath(mk.grid, mk.values);
    DetProblem det(p.space, p.op, p.u0, std::move(fpath), std::move(mpath));
    GenSolutionStoch out;
    out.sol = solve_gd(det, grid, gd);
    out.noise = std::move(mk);
    out.seed = m.seed;
    return out;
}

struct GsAdditiveEnsemble {
    std::vector<GenSolutionStoch> paths;
    int projection_level = 0;
    std::vector<double> level_gaps; // E sup |u_k - u_prev|^2 per refinement
    EnsembleReport report;
};

/// Projection-level sweep with the ensemble Cauchy criterion
/// E sup_t |u_k(t) - u(t)|^2 <= C E|M_k(T) - M(T)|^2.
inline GsAdditiveEnsemble gs_additive_ensemble(const SdeProblem& p, const TimeGrid& grid,
                                               std::size_t n_paths, RngSeed seed,
                                               double cauchy_tol = 1e-6,
                                               const GdOptions& gd = GdOptions{}) {
    GsAdditiveEnsemble out;
    std::vector<SamplePath> drivers(n_paths);
    parallel_for(n_paths, [&](std::size_t i) {
        drivers[i] = sample_qwiener(p.qwiener, grid, seed.with_stream(seed.stream + i));
    });

    std::vector<int> levels;
    for (int level = 1; level < p.space.dim(); level *= 2) levels.push_back(level);
    levels.push_back(p.space.dim());

    std::vector<GenSolutionStoch> prev;
    for (int k : levels) {
        std::vector<GenSolutionStoch> cur(n_paths);
        parallel_for(n_paths, [&](std::size_t i) {
            cur[i] = solve_gs_additive(p, drivers[i], grid, k, gd);
        });
        if (!prev.empty()) {
            double gap = 0.0;
            for (std::size_t i = 0; i < n_paths; ++i) {
                double sup = 0.0;
                for (std::size_t t = 0; t < grid.size(); ++t)
                    sup = std::max(sup, p.space.h_norm(cur[i].sol.u.values[t]
                                                       - prev[i].sol.u.values[t]));
                gap += sup * sup;
            }
            gap /= static_cast<double>(n_paths);
            out.level_gaps.push_back(gap);
        }
        prev = std::move(cur);
        out.projection_level = k;
        if (!out.level_gaps.empty() && out.level_gaps.back() < cauchy_tol) break;
        if (k == p.space.dim()) break;
    }
    if (!out.level_gaps.empty() && out.level_gaps.back() >= cauchy_tol
        && out.projection_level < p.space.dim())
        throw std::runtime_error("gs_additive_ensemble: projection sweep not Cauchy within budget");
    out.paths = std::move(prev);
    out.report.n_paths = n_paths;
    return out;
}

/// Euler-Maruyama on the Yosida-penalized field:
///   u_{k+1} = u_k - h (A^alpha_eps u_k - alpha u_k) + h f(t_k,u_k) + B(t_k,u_k) dW_k.
/// Aborts the path with BlowupError when |u| exceeds 1e6 (1 + |u0|).
inline GenSolutionStoch solve_sde_penalized(const SdeProblem& p, double eps,
                                            const TimeGrid& grid, RngSeed seed) {
    const double alpha = p.op.alpha();
    if (alpha != 0.0 && !(eps < 1.0 / (std::abs(alpha) + 1.0)))
        throw std::invalid_argument("solve_sde_penalized: eps outside (0, 1/(|alpha|+1))");
    if (!(eps > 0.0) || grid.max_dt() > eps / 4.0 + 1e-15)
        throw std::invalid_argument("solve_sde_penalized: explicit step requires h <= eps/4");

    const HSpace& space = p.space;
    Eigen::MatrixXd db = wiener_mode_increments(p.qwiener, grid, seed);
    Eigen::VectorXd scale = p.qwiener.eigenvalues.array().sqrt();
    const double guard = 1e6 * (1.0 + space.h_norm(p.u0));

    std::vector<Point> u(grid.size()), field(grid.size()), noise(grid.size());
    u[0] = p.op.project_domain(space, p.u0);
    noise[0] = Point::Zero(space.dim());
    field[0] = p.op.yosida(space, eps, u[0]) - alpha * u[0];
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        double h = grid.dt(k);
        Point dm = p.diff.map(grid.t[k], u[k]) * (scale.array() * db.col(k).array()).matrix();
        u[k + 1] = u[k] - h * field[k] + h * p.f(grid.t[k], u[k]) + dm;
        noise[k + 1] = noise[k] + dm;
        if (!u[k + 1].allFinite() || space.h_norm(u[k + 1]) > guard) {
            std::ostringstream msg;
            msg << "solve_sde_penalized: blowup guard tripped at t = " << grid.t[k + 1];
            throw BlowupError(msg.str());
        }
        field[k + 1] = p.op.yosida(space, eps, u[k + 1]) - alpha * u[k + 1];
    }

    GenSolutionStoch out;
    out.seed = seed;
    out.eps = eps;
    std::vector<Point> eta(grid.size());
    eta[0] = Point::Zero(space.dim());
    for (std::size_t k = 0; k + 1 < grid.size(); ++k)
        eta[k + 1] = eta[k] + 0.5 * grid.dt(k) * (field[k] + field[k + 1]);
    out.sol.u = HPath(grid, std::move(u));
    out.sol.eta = HPath(grid, std::move(eta));
    out.sol.scheme = DetScheme::Penalized;
    out.sol.penalize_eps = eps;
    out.sol.bv_eta_xstar = bv_norm(space, out.sol.eta, PathNorm::Xstar);
    out.noise.grid = grid;
    out.noise.values = std::move(noise);
    out.noise.seed = seed;
    out.noise.kind = PathKind::Martingale;
    // s3 identity defect (explicit scheme: O(h))
    double worst = 0.0;
    Point forcing = Point::Zero(space.dim());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (k > 0)
            forcing += grid.dt(k - 1) * p.f(grid.t[k - 1], out.sol.u.values[k - 1]);
        worst = std::max(worst, space.h_norm(out.sol.u.values[k] + out.sol.eta.values[k]
                                             - out.sol.u.values.front() - forcing
                                             - out.noise.values[k]));
    }
    out.sol.residual_identity = worst;
    return out;
}

/// Semi-implicit prox step with drift and diffusion evaluated explicitly:
///   u_{k+1} = J^alpha_h(u_k + h f(t_k,u_k) + B(t_k,u_k) dW_k + h alpha u_k).
/// This is exactly the fixed point of the Picard map in solve_msde.
inline GenSolutionStoch solve_sde_prox(const SdeProblem& p, const TimeGrid& grid, RngSeed seed) {
    const double alpha = p.op.alpha();
    if (grid.max_dt() * std::abs(alpha) > 0.5 + 1e-12)
        throw std::invalid_argument("solve_sde_prox: step size violates h|alpha| <= 1/2");
    const HSpace& space = p.space;
    Eigen::MatrixXd db = wiener_mode_increments(p.qwiener, grid, seed);
    Eigen::VectorXd scale = p.qwiener.eigenvalues.array().sqrt();
    const double guard = 1e6 * (1.0 + space.h_norm(p.u0));

    std::vector<Point> u(grid.size()), eta(grid.size()), noise(grid.size());
    u[0] = p.op.project_domain(space, p.u0);
    eta[0] = Point::Zero(space.dim());
    noise[0] = Point::Zero(space.dim());
    Point forcing = Point::Zero(space.dim());
    double id_defect = 0.0;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        double h = grid.dt(k);
        Point dm = p.diff.map(grid.t[k], u[k]) * (scale.array() * db.col(k).array()).matrix();
        Point df = h * p.f(grid.t[k], u[k]);
        u[k + 1] = p.op.resolvent(space, h, u[k] + df + dm + h * alpha * u[k]);
        eta[k + 1] = eta[k] + (u[k] + df + dm - u[k + 1]);
        noise[k + 1] = noise[k] + dm;
        forcing += df;
        id_defect = std::max(id_defect, space.h_norm(u[k + 1] + eta[k + 1] - u[0]
                                                     - forcing - noise[k + 1]));
        if (!u[k + 1].allFinite() || space.h_norm(u[k + 1]) > guard) {
            std::ostringstream msg;
            msg << "solve_sde_prox: blowup guard tripped at t = " << grid.t[k + 1];
            throw BlowupError(msg.str());
        }
    }

    GenSolutionStoch out;
    out.seed = seed;
    out.sol.u = HPath(grid, std::move(u));
    out.sol.eta = HPath(grid, std::move(eta));
    out.sol.scheme = DetScheme::Prox;
    out.sol.bv_eta_xstar = bv_norm(space, out.sol.eta, PathNorm::Xstar);
    out.sol.residual_identity = id_defect;
    out.noise.grid = grid;
    out.noise.values = std::move(noise);
    out.noise.seed = seed;
    out.noise.kind = PathKind::Martingale;
    return out;
}

/// Exponentially weighted ensemble norm |||v|||_a = sup_t e^{-at} (E sup_{s<=t} |v(s)|^2)^{1/2}.
inline double picard_norm(const HSpace& space, const std::vector<HPath>& ensemble,
                          double a_weight) {
    if (ensemble.empty()) throw std::invalid_argument("picard_norm: empty ensemble");
    if (a_weight < 0.0) throw std::invalid_argument("picard_norm: a_weight must be >= 0");
    const TimeGrid& grid = ensemble.front().grid;
    std::vector<double> running(ensemble.size(), 0.0);
    double result = 0.0;
    for (std::size_t t = 0; t < grid.size(); ++t) {
        double mean = 0.0;
        for (std::size_t p = 0; p < ensemble.size(); ++p) {
            double n2 = space.inner(ensemble[p].values[t], ensemble[p].values[t]);
            running[p] = std::max(running[p], n2);
            mean += running[p];
        }
        mean /= static_cast<double>(ensemble.size());
        result = std::max(result, std::exp(-a_weight * grid.t[t]) * std::sqrt(mean));
    }
    return result;
}

/// Conservative contraction-constant bound when no calibration is supplied:
/// C1 = e^{2|alpha|T} (L1^2 T + L) * 8.
inline double msde_contraction_constant(const SdeProblem& p, double calibrated_c = -1.0) {
    double c = calibrated_c > 0.0
                   ? calibrated_c * (p.f_lipschitz * p.f_lipschitz + p.diff.lipschitz)
                   : std::exp(2.0 * std::abs(p.op.alpha()) * p.horizon)
                         * (p.f_lipschitz * p.f_lipschitz * p.horizon + p.diff.lipschitz) * 8.0;
    return c;
}

struct MsdeResult {
    std::vector<GenSolutionStoch> paths;
    int picard_iters = 0;
    double a_weight = 0.0;
    std::vector<double> iteration_gaps;  // |||v_{m+1} - v_m|||_a
    double contraction_ratio = 0.0;      // worst consecutive gap ratio
    bool contraction_suspect = false;    // ratio > 0.9 observed
};

/// State-dependent-diffusion solver: Picard iteration of
///   v -> GS(A; u0, f(.,v), ∫B(.,v) dW)
/// with noise increments generated once per path and frozen across iterations;
/// stops when |||v_bar - v|||_a <= picard_tol in the weighted ensemble norm.
inline MsdeResult solve_msde(const SdeProblem& p, const TimeGrid& grid, std::size_t n_paths,
                             RngSeed seed, double picard_tol = 1e-6, double a_weight = -1.0,
                             int max_iters = 48) {
    const HSpace& space = p.space;
    const double alpha = p.op.alpha();
    if (grid.max_dt() * std::abs(alpha) > 0.5 + 1e-12)
        throw std::invalid_argument("solve_msde: step size violates h|alpha| <= 1/2");

    MsdeResult out;
    out.a_weight = a_weight >= 0.0 ? a_weight : 2.0 * (msde_contraction_constant(p) + 1.0);

    // frozen noise increments, one stream per path
    std::vector<Eigen::MatrixXd> db(n_paths);
    parallel_for(n_paths, [&](std::size_t i) {
        db[i] = wiener_mode_increments(p.qwiener, grid, seed.with_stream(seed.stream + i));
    });
    Eigen::VectorXd scale = p.qwiener.eigenvalues.array().sqrt();
    Point u0p = p.op.project_domain(space, p.u0);
    const double guard = 1e6 * (1.0 + space.h_norm(p.u0));

    auto sweep = [&](const std::vector<HPath>& v, std::vector<HPath>& vbar,
                     std::vector<GenSolutionStoch>* record) {
        parallel_for(n_paths, [&](std::size_t i) {
            std::vector<Point> u(grid.size()), eta(grid.size()), noise(grid.size());
            u[0] = u0p;
            eta[0] = Point::Zero(space.dim());
            noise[0] = Point::Zero(space.dim());
            for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
                double h = grid.dt(k);
                const Point& vk = v[i].values[k];
                Point dm = p.diff.map(grid.t[k], vk)
                         * (scale.array() * db[i].col(k).array()).matrix();
                Point df = h * p.f(grid.t[k], vk);
                u[k + 1] = p.op.resolvent(space, h, u[k] + df + dm + h * alpha * u[k]);
                eta[k + 1] = eta[k] + (u[k] + df + dm - u[k + 1]);
                noise[k + 1] = noise[k] + dm;
                if (!u[k + 1].allFinite() || space.h_norm(u[k + 1]) > guard)
                    throw BlowupError("solve_msde: blowup guard tripped");
            }
            vbar[i] = HPath(grid, u);
            if (record) {
                GenSolutionStoch& g = (*record)[i];
                g.sol.u = HPath(grid, std::move(u));
                g.sol.eta = HPath(grid, std::move(eta));
                g.sol.scheme = DetScheme::Prox;
                g.sol.bv_eta_xstar = bv_norm(space, g.sol.eta, PathNorm::Xstar);
                g.seed = seed.with_stream(seed.stream + i);
                g.noise.grid = grid;
                g.noise.values = std::move(noise);
                g.noise.seed = g.seed;
                g.noise.kind = PathKind::Martingale;
                // s3 defect against the solution's own drift; the scheme is
                // exact for the frozen iterate, so this measures the Picard gap
                double worst = 0.0;
                Point forcing = Point::Zero(space.dim());
                for (std::size_t k = 0; k < grid.size(); ++k) {
                    if (k > 0)
                        forcing += grid.dt(k - 1)
                                 * p.f(grid.t[k - 1], g.sol.u.values[k - 1]);
                    worst = std::max(worst,
                                     space.h_norm(g.sol.u.values[k] + g.sol.eta.values[k]
                                                  - u0p - forcing - g.noise.values[k]));
                }
                g.sol.residual_identity = worst;
            }
        });
    };

    // |||vbar - v|||_a without materializing the difference paths
    auto gap_norm = [&](const std::vector<HPath>& a, const std::vector<HPath>& b) {
        const Eigen::VectorXd& w = space.weights();
        std::vector<double> running(n_paths, 0.0);
        double result = 0.0;
        for (std::size_t t = 0; t < grid.size(); ++t) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n_paths; ++i) {
                double n2 = 0.0;
                for (int c = 0; c < space.dim(); ++c) {
                    double d = a[i].values[t][c] - b[i].values[t][c];
                    n2 += w[c] * d * d;
                }
                running[i] = std::max(running[i], n2);
                mean += running[i];
            }
            mean /= static_cast<double>(n_paths);
            result = std::max(result, std::exp(-out.a_weight * grid.t[t]) * std::sqrt(mean));
        }
        return result;
    };

    std::vector<HPath> v(n_paths, HPath::constant(grid, u0p));
    std::vector<HPath> vbar(n_paths);
    int iter = 0;
    for (; iter < max_iters; ++iter) {
        sweep(v, vbar, nullptr);
        double gap = gap_norm(vbar, v);
        if (!out.iteration_gaps.empty() && out.iteration_gaps.back() > 0.0) {
            double ratio = gap / out.iteration_gaps.back();
            out.contraction_ratio = std::max(out.contraction_ratio, ratio);
            if (ratio > 0.9) out.contraction_suspect = true;
        }
        out.iteration_gaps.push_back(gap);
        v.swap(vbar);
        if (gap <= picard_tol) break;
    }
    if (iter == max_iters)
        throw std::runtime_error("solve_msde: Picard iteration did not reach tolerance");
    out.picard_iters = iter + 1;

    out.paths.resize(n_paths);
    sweep(v, vbar, &out.paths);
    for (auto& g : out.paths) g.picard_iters = out.picard_iters;
    return out;
}

/// Moment-bound ratios for two coupled ensembles started at u01 and u02:
///   E sup |u|^{2p} / (1 + E|u0|^{2p})  and
///   E sup |u1 - u2|^{2p} / E|u01 - u02|^{2p}.
inline EnsembleReport check_moment_bounds(const SdeProblem& problem, const Point& u01,
                                          const Point& u02, int p, const TimeGrid& grid,
                                          std::size_t n_paths, RngSeed seed) {
    if (p != 1 && p != 2)
        throw std::invalid_argument("check_moment_bounds: p must be 1 or 2");
    const HSpace& space = problem.space;
    std::vector<double> sup1(n_paths), sup12(n_paths);
    parallel_for(n_paths, [&](std::size_t i) {
        SdeProblem p1 = problem;
        p1.u0 = u01;
        SdeProblem p2 = problem;
        p2.u0 = u02;
        RngSeed s = seed.with_stream(seed.stream + i);
        GenSolutionStoch g1 = solve_sde_prox(p1, grid, s);
        GenSolutionStoch g2 = solve_sde_prox(p2, grid, s); // coupled noise
        double m1 = 0.0, m12 = 0.0;
        for (std::size_t t = 0; t < grid.size(); ++t) {
            m1 = std::max(m1, space.inner(g1.sol.u.values[t], g1.sol.u.values[t]));
            Point d = g1.sol.u.values[t] - g2.sol.u.values[t];
            m12 = std::max(m12, space.inner(d, d));
        }
        sup1[i] = std::pow(m1, p);
        sup12[i] = std::pow(m12, p);
    });

    EnsembleReport rep;
    rep.n_paths = n_paths;
    Estimate e1 = detail::mean_estimate(sup1);
    Estimate e12 = detail::mean_estimate(sup12);
    double denom1 = 1.0 + std::pow(space.inner(u01, u01), p);
    double denom12 = std::pow(space.inner(u01 - u02, u01 - u02), p);
    rep.estimators["moment_ratio"] = Estimate{e1.value / denom1, e1.std_error / denom1};
    if (denom12 > 0.0) {
        rep.estimators["difference_ratio"] =
            Estimate{e12.value / denom12, e12.std_error / denom12};
        rep.checks["difference_ratio_finite"] = std::isfinite(e12.value / denom12);
    } else {
        rep.estimators["difference_ratio"] = Estimate{0.0, 0.0};
        rep.checks["difference_ratio_degenerate_pass"] = e12.value <= 1e-20;
    }
    rep.checks["moment_ratio_finite"] = std::isfinite(rep.estimators["moment_ratio"].value);
    return rep;
}

} // namespace proxde
