#include <catch2/catch_amalgamated.hpp>

#include "proxde/det_solver.hpp"
#include "proxde/rng.hpp"

#include <cmath>

using namespace proxde;

namespace {

Point pt1(double x) {
    Point p(1);
    p[0] = x;
    return p;
}

HPath const_path(const TimeGrid& g, double v) { return HPath::constant(g, pt1(v)); }

HPath brownian_scalar(const TimeGrid& g, RngSeed seed) {
    std::vector<Point> v(g.size());
    v[0] = pt1(0.0);
    Rng rng(seed);
    for (std::size_t k = 0; k + 1 < g.size(); ++k)
        v[k + 1] = v[k] + pt1(std::sqrt(g.dt(k)) * rng.normal());
    return HPath(g, std::move(v));
}

// Discrete Skorokhod reflection on the path's grid.
std::vector<double> reflection_oracle(const HPath& m) {
    std::vector<double> u(m.size());
    double running_min = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
        running_min = std::min(running_min, m.values[k][0]);
        u[k] = m.values[k][0] + std::max(0.0, -running_min);
    }
    return u;
}

DetProblem obstacle_problem(const TimeGrid& grid) {
    HSpace line = HSpace::euclidean(1);
    return DetProblem(line, MonotoneOperator::scalar_graph(graphs::indicator_halfline()),
                      pt1(1.0), const_path(grid, -1.0), const_path(grid, 0.0));
}

} // namespace

TEST_CASE("mollifier basics") {
    TimeGrid g = TimeGrid::uniform(1.0, 50);
    HSpace line = HSpace::euclidean(1);

    HPath c = const_path(g, 3.25);
    HPath cm = mollify(c, 8);
    for (std::size_t k = 0; k < g.size(); ++k)
        CHECK(cm.values[k][0] == Catch::Approx(3.25).margin(1e-14));

    std::vector<Point> lin;
    for (double t : g.t) lin.push_back(pt1(t));
    HPath linear(g, std::move(lin));
    for (int n : {4, 8, 16}) {
        HPath ln = mollify(linear, n);
        CHECK(ln.values[0][0] == Catch::Approx(0.0).margin(1e-14)); // M(0) preserved
        for (std::size_t k = 0; k < g.size(); ++k) {
            double t = g.t[k];
            if (t >= 2.0 / n) // interior: symmetric kernel delays by exactly 1/n
                CHECK(ln.values[k][0] == Catch::Approx(t - 1.0 / n).margin(1e-13));
        }
    }
    CHECK_THROWS_AS(mollify(linear, 0), std::invalid_argument);
}

TEST_CASE("mollifier modulus and uniform-convergence contracts") {
    TimeGrid g = TimeGrid::uniform(1.0, 200);
    HSpace line = HSpace::euclidean(1);
    HPath m = brownian_scalar(g, RngSeed{2024, 1});

    double prev_gap = std::numeric_limits<double>::infinity();
    for (int n : {4, 16, 64, 256}) {
        HPath mn = mollify(m, n);
        for (double delta : {0.05, 0.1, 0.3})
            CHECK(modulus_of_continuity(line, mn, delta, PathNorm::H)
                  <= modulus_of_continuity(line, m, delta, PathNorm::H) + 1e-10);
        double gap = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k)
            gap = std::max(gap, std::abs(mn.values[k][0] - m.values[k][0]));
        CHECK(gap <= prev_gap + 1e-12);
        prev_gap = gap;
    }
}

TEST_CASE("prox scheme reproduces the obstacle flow exactly at nodes") {
    TimeGrid grid = TimeGrid::uniform(2.0, 2000);
    GenSolution sol = solve_prox(obstacle_problem(grid), grid);
    double sup_err = 0.0, sup_eta_err = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        double t = grid.t[k];
        sup_err = std::max(sup_err, std::abs(sol.u.values[k][0] - std::max(1.0 - t, 0.0)));
        sup_eta_err = std::max(sup_eta_err,
                               std::abs(sol.eta.values[k][0] - std::min(0.0, 1.0 - t)));
    }
    CHECK(sup_err <= 1e-10);
    CHECK(sup_eta_err <= 1e-10);
    CHECK(sol.residual_identity <= 1e-12);
    CHECK(sol.bv_eta_xstar == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("zero operator integrates the input exactly") {
    TimeGrid grid = TimeGrid::uniform(1.0, 100);
    HSpace line = HSpace::euclidean(1);
    HPath m = brownian_scalar(grid, RngSeed{5, 5});
    DetProblem p(line, MonotoneOperator::zero(), pt1(0.7), const_path(grid, 2.0), m);
    GenSolution sol = solve_prox(p, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        double expected = 0.7 + 2.0 * grid.t[k] + m.values[k][0];
        CHECK(sol.u.values[k][0] == Catch::Approx(expected).margin(1e-12));
        CHECK(std::abs(sol.eta.values[k][0]) <= 1e-12);
    }
}

TEST_CASE("implicit Euler error against the exact exponential") {
    double h = 1e-3;
    TimeGrid grid = TimeGrid::uniform(1.0, static_cast<std::size_t>(1.0 / h));
    HSpace line = HSpace::euclidean(1);
    DetProblem p(line, MonotoneOperator::scalar_linear(1, 1.0), pt1(1.0),
                 const_path(grid, 0.0), const_path(grid, 0.0));
    GenSolution sol = solve_prox(p, grid);
    double recursion = std::pow(1.0 + h, -static_cast<double>(grid.steps()));
    CHECK(sol.u.values.back()[0] == Catch::Approx(recursion).margin(1e-12));
    CHECK(std::abs(sol.u.values.back()[0] - std::exp(-1.0)) <= h);
}

TEST_CASE("step-size precondition enforced") {
    TimeGrid grid = TimeGrid::uniform(1.0, 1);
    HSpace line = HSpace::euclidean(1);
    DetProblem p(line, MonotoneOperator::scalar_linear(1, 1.0, 0.8), pt1(1.0),
                 const_path(grid, 0.0), const_path(grid, 0.0));
    CHECK_THROWS_AS(solve_prox(p, grid), std::invalid_argument); // h |alpha| = 0.8
}

TEST_CASE("penalized solver tracks the scalar closed form") {
    double eps = 1e-2;
    double h = eps / 4.0;
    TimeGrid grid = TimeGrid::uniform(2.0, static_cast<std::size_t>(2.0 / h));
    HSpace line = HSpace::euclidean(1);
    DetProblem p(line, MonotoneOperator::scalar_graph(graphs::indicator_halfline()), pt1(0.0),
                 const_path(grid, -1.0), const_path(grid, 0.0));
    GenSolution sol = solve_penalized(p, eps, grid);

    double sup_vs_closed = 0.0, sup_vs_limit = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        double t = grid.t[k];
        double closed = -eps * (1.0 - std::exp(-t / eps));
        sup_vs_closed = std::max(sup_vs_closed, std::abs(sol.u.values[k][0] - closed));
        sup_vs_limit = std::max(sup_vs_limit, std::abs(sol.u.values[k][0]));
    }
    CHECK(sup_vs_closed <= 0.1 * eps);   // Euler error on the stiff transient
    CHECK(sup_vs_limit <= 1.05 * eps);   // sup |u_eps - u| <= eps for u = 0
    CHECK(sol.eta.values.back()[0] == Catch::Approx(-2.0).margin(0.02));
    CHECK(sol.residual_identity <= 10.0 * h);

    CHECK_THROWS_AS(solve_penalized(p, eps, TimeGrid::uniform(2.0, 100)),
                    std::invalid_argument); // h > eps/4
    CHECK_THROWS_AS(solve_penalized(p, 2.0, grid), std::invalid_argument);
}

TEST_CASE("penalized equals prox for the zero operator") {
    double eps = 0.2;
    TimeGrid grid = TimeGrid::uniform(1.0, 40);
    HSpace line = HSpace::euclidean(1);
    HPath m = brownian_scalar(grid, RngSeed{8, 0});
    DetProblem p(line, MonotoneOperator::zero(), pt1(0.3), const_path(grid, 1.0), m);
    GenSolution a = solve_prox(p, grid);
    GenSolution b = solve_penalized(p, eps, grid);
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(a.u.values[k][0] == Catch::Approx(b.u.values[k][0]).margin(1e-13));
}

TEST_CASE("penalized -> prox as eps halves on the obstacle problem") {
    TimeGrid ref_grid = TimeGrid::uniform(2.0, 8000);
    GenSolution ref = solve_prox(obstacle_problem(ref_grid), ref_grid);
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {1e-1, 1e-2, 1e-3}) {
        std::size_t steps = static_cast<std::size_t>(std::ceil(2.0 / (eps / 4.0)));
        TimeGrid grid = TimeGrid::uniform(2.0, steps);
        GenSolution sol = solve_penalized(obstacle_problem(grid), eps, grid);
        double sup = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            double t = grid.t[k];
            sup = std::max(sup, std::abs(sol.u.values[k][0] - std::max(1.0 - t, 0.0)));
        }
        CHECK(sup < prev);
        prev = sup;
    }
    (void)ref;
}

TEST_CASE("solve_gd equals the discrete reflection map on Brownian drivers") {
    TimeGrid grid = TimeGrid::uniform(1.0, 500);
    HSpace line = HSpace::euclidean(1);
    for (std::uint64_t s = 0; s < 5; ++s) {
        HPath m = brownian_scalar(grid, RngSeed{99, s});
        DetProblem p(line, MonotoneOperator::scalar_graph(graphs::indicator_halfline()),
                     pt1(0.0), const_path(grid, 0.0), m);
        GdOptions opts;
        opts.mollify_levels = {16, 64, 256};
        opts.cauchy_tol = 0.75; // certificate scale is the driver's modulus of continuity
        GenSolution sol = solve_gd(p, grid, opts);
        auto oracle = reflection_oracle(m);
        for (std::size_t k = 0; k < grid.size(); ++k)
            CHECK(std::abs(sol.u.values[k][0] - oracle[k]) <= 1e-10);
        CHECK(sol.diagnostics.at("bv_sup_levels") > 0.0);
    }
}

TEST_CASE("solve_gd with the zero operator and on smooth inputs") {
    TimeGrid grid = TimeGrid::uniform(2.0, 400);
    HSpace line = HSpace::euclidean(1);
    HPath m = brownian_scalar(grid, RngSeed{123, 9});
    DetProblem zero(line, MonotoneOperator::zero(), pt1(0.0), const_path(grid, 0.5), m);
    GdOptions opts;
    opts.mollify_levels = {16, 64};
    opts.cauchy_tol = 1.5;
    GenSolution zsol = solve_gd(zero, grid, opts);
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(zsol.u.values[k][0]
              == Catch::Approx(0.5 * grid.t[k] + m.values[k][0]).margin(1e-12));
    CHECK(bv_norm(line, zsol.eta, PathNorm::Xstar) <= 1e-10);

    GdOptions tight;
    tight.mollify_levels = {4, 16, 64};
    tight.cauchy_tol = 1e-3;
    GenSolution osol = solve_gd(obstacle_problem(grid), grid, tight);
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(osol.u.values[k][0]
              == Catch::Approx(std::max(1.0 - grid.t[k], 0.0)).margin(1e-10));
}

TEST_CASE("variational inequality certificate") {
    TimeGrid grid = TimeGrid::uniform(1.0, 400);
    HSpace line = HSpace::euclidean(1);
    MonotoneOperator halfline = MonotoneOperator::scalar_graph(graphs::indicator_halfline());
    HPath m = brownian_scalar(grid, RngSeed{314, 0});
    DetProblem p(line, halfline, pt1(0.0), const_path(grid, 0.0), m);
    GenSolution sol = solve_prox(p, grid);

    auto pairs = sample_graph_points(line, halfline, 40, RngSeed{4, 4});
    ViReport ok = verify_vi(line, halfline, sol, pairs, 1e-8);
    CHECK(ok.pass);

    GenSolution corrupted = sol;
    for (auto& v : corrupted.eta.values) v = -v;
    ViReport bad = verify_vi(line, halfline, corrupted, pairs, 1e-8);
    CHECK_FALSE(bad.pass);
    CHECK(bad.min_certificate < -1e-6);

    // zero operator: eta = 0 and the graph is {(x, 0)}, certificate is 0
    DetProblem zp(line, MonotoneOperator::zero(), pt1(0.5), const_path(grid, 0.0), m);
    GenSolution zsol = solve_prox(zp, grid);
    auto zpairs = sample_graph_points(line, MonotoneOperator::zero(), 10, RngSeed{6, 6});
    ViReport zrep = verify_vi(line, MonotoneOperator::zero(), zsol, zpairs, 1e-8);
    CHECK(zrep.pass);
}

TEST_CASE("stability pair report") {
    TimeGrid grid = TimeGrid::uniform(2.0, 1000);
    DetProblem base = obstacle_problem(grid);
    GenSolution sol = solve_prox(base, grid);

    StabilityPairReport same = check_stability_pair(base.space, sol, sol, base, base);
    CHECK(same.lhs == Catch::Approx(0.0).margin(1e-15));

    std::vector<double> fitted;
    for (double delta : {0.1, 0.05, 0.025}) {
        DetProblem pert(base.space, base.op, pt1(1.0 + delta), base.f, base.m);
        GenSolution psol = solve_prox(pert, grid);
        StabilityPairReport rep = check_stability_pair(base.space, sol, psol, base, pert);
        CHECK(rep.lhs <= (1.0 + 1e-9) * delta * delta); // contraction: LHS <= |du0|^2
        fitted.push_back(rep.fitted_constant);
    }
    CHECK(stable_within_factor(fitted, 4.0));

    // zero operator calibration: u - u_bar = du0 + ∫df + dM exactly
    HSpace line = HSpace::euclidean(1);
    HPath m = brownian_scalar(grid, RngSeed{17, 2});
    DetProblem z1(line, MonotoneOperator::zero(), pt1(0.0), const_path(grid, 0.0), m);
    DetProblem z2(line, MonotoneOperator::zero(), pt1(0.2), const_path(grid, 0.1), m);
    GenSolution s1 = solve_prox(z1, grid);
    GenSolution s2 = solve_prox(z2, grid);
    StabilityPairReport zrep = check_stability_pair(line, s1, s2, z1, z2);
    double direct = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
        direct = std::max(direct, std::abs(0.2 + 0.1 * grid.t[k]));
    CHECK(zrep.lhs == Catch::Approx(direct * direct).margin(1e-10));
}

TEST_CASE("a-priori estimate report") {
    HSpace line = HSpace::euclidean(1);
    TimeGrid grid = TimeGrid::uniform(2.0, 1000);

    H1Audit audit;
    audit.h0 = pt1(1.0);
    audit.r0 = 0.5;
    audit.a1 = 1.0;
    audit.a2 = 1.0;
    MonotoneOperator halfline = MonotoneOperator::scalar_graph(graphs::indicator_halfline());
    audit = audit_h1(line, halfline, audit);
    REQUIRE(audit.feasible());

    // zero-input case: BV(eta) = 0 and the inequality is trivial
    DetProblem zp(line, MonotoneOperator::zero(), pt1(0.0), const_path(grid, 0.0),
                  const_path(grid, 0.0));
    H1Audit zero_audit;
    zero_audit.h0 = pt1(0.0);
    zero_audit.r0 = 1.0;
    zero_audit.a1 = 1.0;
    zero_audit.a2 = 1.0;
    zero_audit = audit_h1(line, MonotoneOperator::zero(), zero_audit);
    GenSolution zsol = solve_prox(zp, grid);
    AprioriReport zrep = check_apriori(line, zsol, zp, zero_audit);
    CHECK(zrep.pass);

    DetProblem obstacle = obstacle_problem(grid);
    GenSolution osol = solve_prox(obstacle, grid);
    CHECK(osol.bv_eta_xstar == Catch::Approx(std::max(0.0, 2.0 - 1.0)).margin(1e-9));
    AprioriReport orep = check_apriori(line, osol, obstacle, audit, 1e-6);
    CHECK(orep.pass);
    CHECK(orep.bound_ratio > 0.0);

    // reflected Brownian input: finite ratio, stable under mollification level
    HPath m = brownian_scalar(grid, RngSeed{21, 3});
    DetProblem rp(line, halfline, pt1(0.0), const_path(grid, 0.0), m);
    H1Audit raudit;
    raudit.h0 = pt1(1.0);
    raudit.r0 = 0.5;
    raudit.a1 = 1.0;
    raudit.a2 = 1.0;
    raudit = audit_h1(line, halfline, raudit);
    std::vector<double> ratios;
    for (int level : {16, 64, 256}) {
        HPath mn = mollify(m, level);
        Point m0 = mn.values.front();
        for (auto& v : mn.values) v -= m0;
        DetProblem rpn(line, halfline, pt1(0.0), const_path(grid, 0.0), mn);
        GenSolution rsol = solve_prox(rpn, grid);
        AprioriReport rrep = check_apriori(line, rsol, rpn, raudit, 1e-6);
        CHECK(rrep.pass);
        ratios.push_back(rrep.bound_ratio);
    }
    CHECK(stable_within_factor(ratios, 4.0));
}

TEST_CASE("two compliant grids agree within their error budgets") {
    HSpace line = HSpace::euclidean(1);
    MonotoneOperator op = MonotoneOperator::scalar_linear(1, 1.0);
    TimeGrid coarse = TimeGrid::uniform(1.0, 500);
    TimeGrid fine = TimeGrid::uniform(1.0, 1000);
    DetProblem pc(line, op, pt1(1.0), const_path(coarse, 0.4), const_path(coarse, 0.0));
    DetProblem pf(line, op, pt1(1.0), const_path(fine, 0.4), const_path(fine, 0.0));
    GenSolution sc = solve_prox(pc, coarse);
    GenSolution sf = solve_prox(pf, fine);
    double gap = std::abs(sc.u.values.back()[0] - sf.u.values.back()[0]);
    CHECK(gap <= coarse.max_dt() + fine.max_dt());
}

TEST_CASE("eta increments are admissible sections of A") {
    TimeGrid grid = TimeGrid::uniform(1.0, 200);
    HSpace line = HSpace::euclidean(1);
    MonotoneOperator op = MonotoneOperator::scalar_linear(1, 1.3, 0.4);
    HPath m = brownian_scalar(grid, RngSeed{55, 1});
    DetProblem p(line, op, pt1(0.6), const_path(grid, 0.2), m);
    GenSolution sol = solve_prox(p, grid);
    for (std::size_t k = 0; k + 1 < grid.size(); k += 17) {
        double h = grid.dt(k);
        Point du = sol.u.values[k + 1] - sol.u.values[k];
        Point a = (sol.eta.values[k + 1] - sol.eta.values[k] - op.alpha() * h * du) / h;
        CHECK(op.graph_residual(line, sol.u.values[k + 1], a) <= 1e-8);
    }
}
