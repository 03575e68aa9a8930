#pragma once

#include "proxde/hspace.hpp"
#include "proxde/mollify.hpp"
#include "proxde/monotone.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace proxde {

/// Inputs of du + Au(dt) ∋ f dt + dM, u(0) = u0.
struct DetProblem {
    HSpace space;
    MonotoneOperator op;
    Point u0;
    HPath f; // integrable forcing, read at left endpoints
    HPath m; // continuous singular input, m(0) = 0

    DetProblem(HSpace sp, MonotoneOperator a, Point u0_, HPath f_, HPath m_)
        : space(std::move(sp)), op(std::move(a)), u0(std::move(u0_)), f(std::move(f_)),
          m(std::move(m_)) {
        if (u0.size() != space.dim()) throw std::invalid_argument("det problem: u0 dimension mismatch");
        if (m.values.empty() || space.h_norm(m.values.front()) > 1e-12)
            throw std::invalid_argument("det problem: M must satisfy M(0) = 0");
    }
};

enum class DetScheme { Prox, Penalized };

/// Generalized solution pair (u, eta) with u + eta = u0 + ∫f + M.
struct GenSolution {
    HPath u;
    HPath eta;
    double bv_eta_xstar = 0.0;
    double residual_identity = 0.0;
    DetScheme scheme = DetScheme::Prox;
    double penalize_eps = 0.0;
    std::map<std::string, double> diagnostics;
};

namespace detail {

inline void fill_identity_residual(const HSpace& space, const DetProblem& p, const Point& u0p,
                                   GenSolution& sol) {
    const TimeGrid& grid = sol.u.grid;
    double worst = 0.0;
    Point forcing = Point::Zero(space.dim());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (k > 0) forcing += grid.dt(k - 1) * p.f.at(grid.t[k - 1]);
        Point rhs = u0p + forcing + p.m.at(grid.t[k]) - p.m.at(0.0);
        worst = std::max(worst, space.h_norm(sol.u.values[k] + sol.eta.values[k] - rhs));
    }
    sol.residual_identity = worst;
}

} // namespace detail

/// Semi-implicit prox (implicit Euler) scheme:
///   u_{k+1} = J^alpha_h(u_k + dF_k + dM_k + h alpha u_k),
///   eta_{k+1} = eta_k + (u_k + dF_k + dM_k - u_{k+1}).
/// The identity u + eta = u0 + ∫f + M holds to machine precision by
/// construction; requires h|alpha| <= 1/2 so every resolvent stays
/// nonexpansive.
inline GenSolution solve_prox(const DetProblem& p, const TimeGrid& grid) {
    const double alpha = p.op.alpha();
    if (grid.max_dt() * std::abs(alpha) > 0.5 + 1e-12)
        throw std::invalid_argument("solve_prox: step size violates h|alpha| <= 1/2");

    const HSpace& space = p.space;
    Point u0p = p.op.project_domain(space, p.u0);
    double proj_dist = space.h_norm(u0p - p.u0);

    std::vector<Point> u(grid.size()), eta(grid.size());
    u[0] = u0p;
    eta[0] = Point::Zero(space.dim());
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        double h = grid.dt(k);
        Point df = h * p.f.at(grid.t[k]);
        Point dm = p.m.at(grid.t[k + 1]) - p.m.at(grid.t[k]);
        Point w = u[k] + df + dm + h * alpha * u[k];
        u[k + 1] = p.op.resolvent(space, h, w);
        eta[k + 1] = eta[k] + (u[k] + df + dm - u[k + 1]);
    }

    GenSolution sol;
    sol.u = HPath(grid, std::move(u));
    sol.eta = HPath(grid, std::move(eta));
    sol.scheme = DetScheme::Prox;
    sol.bv_eta_xstar = bv_norm(space, sol.eta, PathNorm::Xstar);
    sol.diagnostics["projection_distance"] = proj_dist;
    detail::fill_identity_residual(space, p, u0p, sol);
    return sol;
}

/// Explicit Euler on the Yosida-penalized field A^alpha_eps u - alpha u, with
/// eta accumulated by the trapezoid rule.  Requires 0 < eps < 1/(|alpha|+1)
/// and h <= eps/4 for stability.
inline GenSolution solve_penalized(const DetProblem& p, double eps, const TimeGrid& grid) {
    const double alpha = p.op.alpha();
    if (!(eps > 0.0) || eps >= 1.0 / (std::abs(alpha) + 1.0))
        throw std::invalid_argument("solve_penalized: eps outside (0, 1/(|alpha|+1))");
    if (grid.max_dt() > eps / 4.0 + 1e-15)
        throw std::invalid_argument("solve_penalized: explicit step requires h <= eps/4");

    const HSpace& space = p.space;
    Point u0p = p.op.project_domain(space, p.u0);
    double proj_dist = space.h_norm(u0p - p.u0);

    std::vector<Point> u(grid.size()), field(grid.size());
    u[0] = u0p;
    field[0] = p.op.yosida(space, eps, u[0]) - alpha * u[0];
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        double h = grid.dt(k);
        Point df = h * p.f.at(grid.t[k]);
        Point dm = p.m.at(grid.t[k + 1]) - p.m.at(grid.t[k]);
        u[k + 1] = u[k] - h * field[k] + df + dm;
        if (!u[k + 1].allFinite())
            throw ResolventFailure("solve_penalized: state is not finite (blowup)");
        field[k + 1] = p.op.yosida(space, eps, u[k + 1]) - alpha * u[k + 1];
    }
    std::vector<Point> eta(grid.size());
    eta[0] = Point::Zero(space.dim());
    for (std::size_t k = 0; k + 1 < grid.size(); ++k)
        eta[k + 1] = eta[k] + 0.5 * grid.dt(k) * (field[k] + field[k + 1]);

    GenSolution sol;
    sol.u = HPath(grid, std::move(u));
    sol.eta = HPath(grid, std::move(eta));
    sol.scheme = DetScheme::Penalized;
    sol.penalize_eps = eps;
    sol.bv_eta_xstar = bv_norm(space, sol.eta, PathNorm::Xstar);
    sol.diagnostics["projection_distance"] = proj_dist;
    detail::fill_identity_residual(space, p, u0p, sol);
    return sol;
}

struct GdOptions {
    std::vector<int> mollify_levels{4, 16, 64};
    DetScheme scheme = DetScheme::Prox;
    double penalize_eps = 1e-2;
    double cauchy_tol = 1e-2;
    const H1Audit* audit = nullptr; // feasibility recorded, not enforced
};

/// Generalized deterministic solution GD(A; u0, f, M): the limit pair is the
/// direct solve on M itself, certified by an approximating sequence on the
/// mollified inputs M_n (Cauchy in sup norm, uniformly bounded BV of eta_n).
inline GenSolution solve_gd(const DetProblem& p, const TimeGrid& grid,
                            const GdOptions& opts = GdOptions{}) {
    if (opts.mollify_levels.empty())
        throw std::invalid_argument("solve_gd: need at least one mollify level");

    auto run = [&](const HPath& input) {
        DetProblem sub(p.space, p.op, p.u0, p.f, input);
        return opts.scheme == DetScheme::Prox ? solve_prox(sub, grid)
                                              : solve_penalized(sub, opts.penalize_eps, grid);
    };

    GenSolution limit = run(p.m);

    double bv_sup = 0.0;
    double gap = std::numeric_limits<double>::infinity();
    std::optional<GenSolution> prev;
    for (std::size_t li = 0; li < opts.mollify_levels.size(); ++li) {
        HPath mn = mollify(p.m, opts.mollify_levels[li]);
        Point m0 = mn.values.front(); // re-pin M_n(0) = 0 exactly
        for (auto& v : mn.values) v -= m0;
        GenSolution sn = run(mn);
        bv_sup = std::max(bv_sup, sn.bv_eta_xstar);
        if (prev) {
            gap = 0.0;
            for (std::size_t k = 0; k < grid.size(); ++k)
                gap = std::max(gap, p.space.h_norm(sn.u.values[k] - prev->u.values[k]));
        }
        prev = std::move(sn);
        if (gap < opts.cauchy_tol) break;
    }
    double limit_gap = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
        limit_gap = std::max(limit_gap, p.space.h_norm(prev->u.values[k] - limit.u.values[k]));

    if (gap >= opts.cauchy_tol && limit_gap >= opts.cauchy_tol) {
        std::ostringstream msg;
        msg << "solve_gd: approximating sequence not Cauchy within level budget "
            << "(last successive gap " << gap << ", gap to limit " << limit_gap
            << ", tol " << opts.cauchy_tol << ")";
        throw std::runtime_error(msg.str());
    }

    limit.diagnostics["bv_sup_levels"] = bv_sup;
    limit.diagnostics["cauchy_gap"] = gap;
    limit.diagnostics["limit_gap"] = limit_gap;
    limit.diagnostics["levels_used"] = static_cast<double>(opts.mollify_levels.size());
    limit.diagnostics["audit_feasible"] = opts.audit ? (opts.audit->feasible() ? 1.0 : 0.0) : -1.0;
    return limit;
}

struct ViReport {
    double min_certificate = 0.0;
    bool pass = false;
};

/// Discrete variational-inequality certificate:
///   ∫_s^t (u - x, d eta - y dτ) + alpha ∫_s^t |u - x|^2 dτ >= 0
/// over sampled graph points [x, y] ∈ A and window pairs (s, t).  Increments
/// of eta are corrected by the O(h) alpha-artifact of the prox scheme before
/// pairing.
inline ViReport verify_vi(const HSpace& space, const MonotoneOperator& op,
                          const GenSolution& sol,
                          const std::vector<std::pair<Point, Point>>& pairs, double tol,
                          std::size_t window_pairs = 64, RngSeed seed = RngSeed{0x71u, 3}) {
    const TimeGrid& grid = sol.u.grid;
    const double alpha = op.alpha();
    Rng rng(seed);

    std::vector<std::pair<std::size_t, std::size_t>> windows;
    windows.reserve(window_pairs);
    for (std::size_t w = 0; w < window_pairs; ++w) {
        std::size_t s = static_cast<std::size_t>(rng.uniform() * (grid.size() - 1));
        std::size_t t = s + 1
            + static_cast<std::size_t>(rng.uniform() * (grid.size() - 1 - s));
        windows.emplace_back(s, std::min(t, grid.size() - 1));
    }

    double min_cert = std::numeric_limits<double>::infinity();
    for (const auto& [x, y] : pairs) {
        for (const auto& [s, t] : windows) {
            double acc = 0.0;
            for (std::size_t k = s; k < t; ++k) {
                double h = grid.dt(k);
                Point du = sol.u.values[k + 1] - sol.u.values[k];
                Point deta = sol.eta.values[k + 1] - sol.eta.values[k] - alpha * h * du;
                Point diff = sol.u.values[k + 1] - x;
                acc += space.inner(diff, deta - h * y) + alpha * h * space.inner(diff, diff);
            }
            min_cert = std::min(min_cert, acc);
        }
    }
    return ViReport{min_cert, min_cert >= -tol};
}

struct StabilityPairReport {
    double lhs = 0.0;           // sup_t |u - u_bar|^2
    double rhs_u0 = 0.0;        // |u0 - u0_bar|^2
    double rhs_f = 0.0;         // ‖f - f_bar‖^2_{L1}
    double rhs_m_h = 0.0;       // sup_t |M - M_bar|^2_H
    double rhs_m_bv = 0.0;      // sup_t ‖M - M_bar‖_X · ‖eta - eta_bar‖_BV(X*)
    double fitted_constant = 0.0;

    double rhs_total() const { return rhs_u0 + rhs_f + rhs_m_h + rhs_m_bv; }
};

/// Termwise evaluation of the two-solution stability estimate; the constant
/// is existential, so only the fitted ratio is reported.
inline StabilityPairReport check_stability_pair(const HSpace& space, const GenSolution& s1,
                                                const GenSolution& s2, const DetProblem& p1,
                                                const DetProblem& p2) {
    const TimeGrid& grid = s1.u.grid;
    if (grid.size() != s2.u.grid.size())
        throw std::invalid_argument("check_stability_pair: solutions on different grids");

    StabilityPairReport r;
    for (std::size_t k = 0; k < grid.size(); ++k)
        r.lhs = std::max(r.lhs, std::pow(space.h_norm(s1.u.values[k] - s2.u.values[k]), 2));
    r.rhs_u0 = std::pow(space.h_norm(p1.u0 - p2.u0), 2);
    double l1 = 0.0;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k)
        l1 += grid.dt(k) * space.h_norm(p1.f.at(grid.t[k]) - p2.f.at(grid.t[k]));
    r.rhs_f = l1 * l1;
    double sup_mh = 0.0, sup_mx = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        Point dm = p1.m.at(grid.t[k]) - p2.m.at(grid.t[k]);
        sup_mh = std::max(sup_mh, space.h_norm(dm));
        sup_mx = std::max(sup_mx, space.x_norm(dm));
    }
    r.rhs_m_h = sup_mh * sup_mh;
    HPath deta = s1.eta;
    for (std::size_t k = 0; k < grid.size(); ++k) deta.values[k] -= s2.eta.values[k];
    r.rhs_m_bv = sup_mx * bv_norm(space, deta, PathNorm::Xstar);
    double rhs = r.rhs_total();
    r.fitted_constant = rhs > 0.0 ? r.lhs / rhs : 0.0;
    return r;
}

/// True if max/min <= factor over strictly positive entries.
inline bool stable_within_factor(const std::vector<double>& values, double factor) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double v : values) {
        if (!(v > 0.0)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == 0.0) return true;
    return hi <= factor * lo;
}

struct AprioriReport {
    bool pass = false;
    double worst_slack = 0.0; // max_t (LHS - RHS), negative when inequality holds
    double bound_ratio = 0.0; // (‖u‖^2 + ‖eta‖_BV) / (1 + |u0|^2 + ‖f‖^2_L1 + ‖M‖^2_C)
};

/// Termwise a-priori estimate on the discrete solution:
///   |u(t)-M(t)-h0|^2 + 2 r0 ‖eta‖_BV([0,t];X*) <=
///     |u0-h0|^2 + 2|a2| t + 2|a1| ∫|u|^2 + 2∫(f, u-M-h0) + 2∫(M, d eta).
inline AprioriReport check_apriori(const HSpace& space, const GenSolution& sol,
                                   const DetProblem& p, const H1Audit& audit,
                                   double tol = 1e-9) {
    if (!audit.feasible())
        throw std::invalid_argument("check_apriori: audit is infeasible");
    const TimeGrid& grid = sol.u.grid;
    const Point& h0 = audit.h0;

    AprioriReport rep;
    double worst = -std::numeric_limits<double>::infinity();
    double bv_running = 0.0, int_u2 = 0.0, int_f = 0.0, int_m_deta = 0.0;
    double u0h0 = std::pow(space.h_norm(sol.u.values.front() - h0), 2);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (k > 0) {
            double h = grid.dt(k - 1);
            const Point& uk = sol.u.values[k - 1];
            Point mk = p.m.at(grid.t[k - 1]);
            bv_running += space.xstar_norm(sol.eta.values[k] - sol.eta.values[k - 1]);
            int_u2 += h * space.inner(uk, uk);
            int_f += h * space.inner(p.f.at(grid.t[k - 1]), uk - mk - h0);
            int_m_deta += space.inner(mk, sol.eta.values[k] - sol.eta.values[k - 1]);
        }
        Point umh = sol.u.values[k] - p.m.at(grid.t[k]) - h0;
        double lhs = space.inner(umh, umh) + 2.0 * audit.r0 * bv_running;
        double rhs = u0h0 + 2.0 * std::abs(audit.a2) * grid.t[k]
                   + 2.0 * std::abs(audit.a1) * int_u2 + 2.0 * int_f + 2.0 * int_m_deta;
        worst = std::max(worst, lhs - rhs);
    }
    rep.worst_slack = worst;
    rep.pass = worst <= tol;

    double sup_u2 = 0.0, sup_m2 = 0.0, l1f = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        sup_u2 = std::max(sup_u2, space.inner(sol.u.values[k], sol.u.values[k]));
        Point mk = p.m.at(grid.t[k]);
        sup_m2 = std::max(sup_m2, space.inner(mk, mk));
        if (k + 1 < grid.size()) l1f += grid.dt(k) * space.h_norm(p.f.at(grid.t[k]));
    }
    rep.bound_ratio = (sup_u2 + sol.bv_eta_xstar)
                    / (1.0 + space.inner(p.u0, p.u0) + l1f * l1f + sup_m2);
    return rep;
}

} // namespace proxde
