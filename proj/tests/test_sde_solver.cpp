#include <catch2/catch_amalgamated.hpp>

#include "proxde/sde_solver.hpp"

#include <cmath>

using namespace proxde;

namespace {

Point pt1(double x) {
    Point p(1);
    p[0] = x;
    return p;
}

SdeProblem reflected_problem(double horizon) {
    HSpace line = HSpace::euclidean(1);
    return SdeProblem{line,
                      MonotoneOperator::scalar_graph(graphs::indicator_halfline()),
                      pt1(0.0),
                      [](double, const Point& u) { return Point(Point::Zero(u.size())); },
                      0.0,
                      0.0,
                      DiffusionCoefficient::constant(Eigen::MatrixXd::Identity(1, 1), 1.0),
                      QWienerSpec::coordinate(HSpace::euclidean(1), Eigen::VectorXd::Ones(1)),
                      horizon};
}

std::vector<double> reflection_oracle(const SamplePath& m) {
    std::vector<double> u(m.size());
    double running_min = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
        running_min = std::min(running_min, m.values[k][0]);
        u[k] = m.values[k][0] + std::max(0.0, -running_min);
    }
    return u;
}

} // namespace

TEST_CASE("declared constants validated by sampling") {
    SdeProblem p = reflected_problem(1.0);
    CHECK_NOTHROW(p.validate_constants(TimeGrid::uniform(1.0, 8)));

    SdeProblem lying = p;
    lying.f = [](double, const Point& u) { return Point(2.0 * u); };
    lying.f_lipschitz = 0.5; // actual constant is 2
    CHECK_THROWS_AS(lying.validate_constants(TimeGrid::uniform(1.0, 8)),
                    std::invalid_argument);
}

TEST_CASE("additive solver reproduces the reflection formula per path") {
    SdeProblem p = reflected_problem(1.0);
    TimeGrid grid = TimeGrid::uniform(1.0, 400);
    GdOptions gd;
    gd.mollify_levels = {16, 64, 256};
    gd.cauchy_tol = 0.75;
    for (std::uint64_t s = 0; s < 4; ++s) {
        SamplePath m = sample_qwiener(p.qwiener, grid, RngSeed{404, s});
        GenSolutionStoch g = solve_gs_additive(p, m, grid, 1, gd);
        auto oracle = reflection_oracle(m);
        for (std::size_t k = 0; k < grid.size(); ++k)
            CHECK(std::abs(g.sol.u.values[k][0] - oracle[k]) <= 1e-10);
    }
}

TEST_CASE("additive solver with the zero operator returns u0 + M") {
    SdeProblem p = reflected_problem(1.0);
    p.op = MonotoneOperator::zero();
    p.u0 = pt1(0.4);
    TimeGrid grid = TimeGrid::uniform(1.0, 200);
    SamplePath m = sample_qwiener(p.qwiener, grid, RngSeed{11, 0});
    GdOptions gd;
    gd.mollify_levels = {16, 64};
    gd.cauchy_tol = 1.5;
    GenSolutionStoch g = solve_gs_additive(p, m, grid, 1, gd);
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(g.sol.u.values[k][0] == Catch::Approx(0.4 + m.values[k][0]).margin(1e-11));
}

TEST_CASE("projection level sweep is ensemble-Cauchy") {
    HSpace space = HSpace::euclidean(3);
    Eigen::VectorXd lambdas(3);
    lambdas << 0.5, 0.25, 0.125;
    SdeProblem p{space,
                 MonotoneOperator::indicator(
                     ConvexSetSpec::box(Point::Constant(3, 0.0), Point::Constant(3, 1e9))),
                 Point::Zero(3),
                 [](double, const Point& u) { return Point(Point::Zero(u.size())); },
                 0.0,
                 0.0,
                 DiffusionCoefficient::constant(Eigen::MatrixXd::Identity(3, 3), 1.0),
                 QWienerSpec::coordinate(space, lambdas),
                 1.0};
    TimeGrid grid = TimeGrid::uniform(1.0, 100);
    const std::size_t n = 16;

    GdOptions gd;
    gd.mollify_levels = {8};
    gd.cauchy_tol = 10.0;
    std::vector<double> gap_to_full;
    for (int k = 1; k <= 3; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            SamplePath m = sample_qwiener(p.qwiener, grid, RngSeed{5150, i});
            GenSolutionStoch gk = solve_gs_additive(p, m, grid, k, gd);
            GenSolutionStoch gfull = solve_gs_additive(p, m, grid, 3, gd);
            double sup = 0.0;
            for (std::size_t t = 0; t < grid.size(); ++t)
                sup = std::max(sup, space.h_norm(gk.sol.u.values[t] - gfull.sol.u.values[t]));
            acc += sup * sup;
        }
        gap_to_full.push_back(acc / n);
    }
    CHECK(gap_to_full[0] >= gap_to_full[1]);
    CHECK(gap_to_full[1] >= gap_to_full[2]);
    CHECK(gap_to_full[2] <= 1e-20);

    GsAdditiveEnsemble ens = gs_additive_ensemble(p, grid, n, RngSeed{5150, 1000}, 1e-8, gd);
    CHECK(ens.projection_level == 3);
    CHECK_FALSE(ens.level_gaps.empty());
}

TEST_CASE("penalized Euler-Maruyama against the exact OU transition") {
    HSpace line = HSpace::euclidean(1);
    const double a = 1.0, sigma = 0.5;
    SdeProblem p{line,
                 MonotoneOperator::scalar_graph(graphs::linear(a)),
                 pt1(1.0),
                 [](double, const Point& u) { return Point(Point::Zero(u.size())); },
                 0.0,
                 0.0,
                 DiffusionCoefficient::constant(sigma * Eigen::MatrixXd::Identity(1, 1),
                                                sigma * sigma),
                 QWienerSpec::coordinate(line, Eigen::VectorXd::Ones(1)),
                 1.0};

    auto rms_gap = [&](double eps) {
        double h = eps / 4.0;
        TimeGrid grid = TimeGrid::uniform(1.0, static_cast<std::size_t>(std::ceil(1.0 / h)));
        const std::size_t n = 1000;
        std::vector<double> gap(n);
        parallel_for(n, [&](std::size_t i) {
            RngSeed seed{8088, i};
            GenSolutionStoch g = solve_sde_penalized(p, eps, grid, seed);
            // exact OU transition driven by the same normal draws
            double u = 1.0;
            for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
                double hk = grid.dt(k);
                double xi = rng_normal(seed, k); // matches the solver's draw layout
                u = std::exp(-a * hk) * u
                  + sigma * std::sqrt((1.0 - std::exp(-2.0 * a * hk)) / (2.0 * a)) * xi;
            }
            gap[i] = std::abs(g.sol.u.values.back()[0] - u);
        });
        double acc = 0.0;
        for (double x : gap) acc += x * x;
        return std::sqrt(acc / n);
    };
    double g1 = rms_gap(0.04);
    double g2 = rms_gap(0.02);
    CHECK(g1 <= 2.0 * (0.04 + 0.01));
    CHECK(g2 <= 2.0 * (0.02 + 0.005));
    CHECK(g2 < g1);
}

TEST_CASE("penalized SDE with B = 0 reduces to the deterministic solver") {
    HSpace line = HSpace::euclidean(1);
    SdeProblem p{line,
                 MonotoneOperator::scalar_graph(graphs::indicator_halfline()),
                 pt1(1.0),
                 [](double, const Point& u) { return Point(Point::Constant(u.size(), -1.0)); },
                 0.0,
                 1.0,
                 DiffusionCoefficient::constant(Eigen::MatrixXd::Zero(1, 1), 0.0),
                 QWienerSpec::coordinate(line, Eigen::VectorXd::Ones(1)),
                 2.0};
    double eps = 0.01;
    TimeGrid grid = TimeGrid::uniform(2.0, static_cast<std::size_t>(2.0 / (eps / 4.0)));
    GenSolutionStoch g = solve_sde_penalized(p, eps, grid, RngSeed{1, 1});

    DetProblem dp(line, p.op, p.u0, HPath::constant(grid, pt1(-1.0)),
                  HPath::constant(grid, pt1(0.0)));
    GenSolution det = solve_penalized(dp, eps, grid);
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(g.sol.u.values[k][0] == Catch::Approx(det.u.values[k][0]).margin(1e-12));
}

TEST_CASE("penalized -> prox ensemble gap decreases as eps halves (reflected OU)") {
    HSpace line = HSpace::euclidean(1);
    SdeProblem p{line,
                 MonotoneOperator::scalar_graph(graphs::linear_halfline(1.0), 0.0, 1.0),
                 pt1(0.5),
                 [](double, const Point& u) { return Point(Point::Zero(u.size())); },
                 0.0,
                 0.0,
                 DiffusionCoefficient::constant(0.5 * Eigen::MatrixXd::Identity(1, 1), 0.25),
                 QWienerSpec::coordinate(line, Eigen::VectorXd::Ones(1)),
                 1.0};
    const std::size_t n = 64;
    std::vector<double> gaps;
    for (double eps : {0.08, 0.04, 0.02}) {
        double h = eps / 4.0;
        TimeGrid grid = TimeGrid::uniform(1.0, static_cast<std::size_t>(std::ceil(1.0 / h)));
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            RngSeed seed{737, i};
            GenSolutionStoch pen = solve_sde_penalized(p, eps, grid, seed);
            GenSolutionStoch prox = solve_sde_prox(p, grid, seed);
            double sup = 0.0;
            for (std::size_t k = 0; k < grid.size(); ++k)
                sup = std::max(sup, std::abs(pen.sol.u.values[k][0] - prox.sol.u.values[k][0]));
            acc += sup * sup;
        }
        gaps.push_back(acc / n);
    }
    CHECK(gaps[0] > gaps[1]);
    CHECK(gaps[1] > gaps[2]);
}

TEST_CASE("picard norm definition") {
    HSpace line = HSpace::euclidean(1);
    TimeGrid grid = TimeGrid::uniform(2.0, 50);

    std::vector<HPath> constant{HPath::constant(grid, pt1(-3.0))};
    CHECK(picard_norm(line, constant, 0.0) == Catch::Approx(3.0));
    CHECK(picard_norm(line, constant, 1.0) == Catch::Approx(3.0)); // sup attained at t = 0

    // v(t) = e^{at}: weight cancels the growth, running sup attained at t
    std::vector<Point> grow(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) grow[k] = pt1(std::exp(1.3 * grid.t[k]));
    std::vector<HPath> growing{HPath(grid, std::move(grow))};
    CHECK(picard_norm(line, growing, 1.3) == Catch::Approx(1.0));

    CHECK_THROWS_AS(picard_norm(line, std::vector<HPath>{}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(picard_norm(line, constant, -0.5), std::invalid_argument);
}

TEST_CASE("msde: geometric closed form and measured contraction") {
    HSpace line = HSpace::euclidean(1);
    const double a = 1.0, sigma = 0.5;
    SdeProblem p{line,
                 MonotoneOperator::scalar_graph(graphs::linear(a), 0.0, a),
                 pt1(1.0),
                 [](double, const Point& u) { return Point(Point::Zero(u.size())); },
                 0.0,
                 0.0,
                 DiffusionCoefficient{
                     [sigma](double, const Point& u) { return Eigen::MatrixXd(sigma * u); },
                     sigma * sigma, sigma * sigma},
                 QWienerSpec::coordinate(line, Eigen::VectorXd::Ones(1)),
                 2.0};

    TimeGrid grid = TimeGrid::uniform(2.0, 1000);
    MsdeResult res = solve_msde(p, grid, 10000, RngSeed{31337, 0}, 1e-6);
    CHECK(res.picard_iters <= 12);
    CHECK(res.contraction_ratio <= 0.55);
    CHECK_FALSE(res.contraction_suspect);

    // E|u(2)|^2 = e^{(sigma^2 - 2a) * 2} = e^{-3.5} within 10% at 1e4 paths
    double mean_sq = 0.0;
    for (const auto& g : res.paths)
        mean_sq += g.sol.u.values.back()[0] * g.sol.u.values.back()[0];
    mean_sq /= static_cast<double>(res.paths.size());
    CHECK(std::abs(mean_sq - std::exp(-3.5)) <= 0.10 * std::exp(-3.5));
}

TEST_CASE("msde with additive diffusion fixes in one extra sweep") {
    HSpace line = HSpace::euclidean(1);
    SdeProblem p{line,
                 MonotoneOperator::scalar_graph(graphs::linear(1.0), 0.0, 1.0),
                 pt1(1.0),
                 [](double, const Point& u) { return Point(Point::Zero(u.size())); },
                 0.0,
                 0.0,
                 DiffusionCoefficient::constant(0.5 * Eigen::MatrixXd::Identity(1, 1), 0.25),
                 QWienerSpec::coordinate(line, Eigen::VectorXd::Ones(1)),
                 2.0};
    TimeGrid grid = TimeGrid::uniform(2.0, 400);
    MsdeResult res = solve_msde(p, grid, 8, RngSeed{31338, 0}, 1e-12);
    CHECK(res.picard_iters <= 2);
    // identical to the direct semi-implicit recursion on the same stream
    GenSolutionStoch direct = solve_sde_prox(p, grid, RngSeed{31338, 0});
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(res.paths[0].sol.u.values[k][0]
              == Catch::Approx(direct.sol.u.values[k][0]).margin(1e-12));
}

TEST_CASE("msde pathwise identity and domain containment") {
    HSpace line = HSpace::euclidean(1);
    SdeProblem p{line,
                 MonotoneOperator::scalar_graph(graphs::linear_halfline(1.0), 0.0, 1.0),
                 pt1(0.3),
                 [](double, const Point& u) { return Point(0.2 * u); },
                 0.2,
                 0.1,
                 DiffusionCoefficient::constant(0.4 * Eigen::MatrixXd::Identity(1, 1), 0.16),
                 QWienerSpec::coordinate(line, Eigen::VectorXd::Ones(1)),
                 1.0};
    TimeGrid grid = TimeGrid::uniform(1.0, 500);
    MsdeResult res = solve_msde(p, grid, 16, RngSeed{4242, 0}, 1e-8);
    for (const auto& g : res.paths) {
        // s3 holds to the Picard gap, not to machine precision
        CHECK(g.sol.residual_identity <= 1e-6);
        for (std::size_t k = 0; k < grid.size(); ++k)
            CHECK(g.sol.u.values[k][0] >= -1e-12); // cl D(A) = [0, inf)
    }
}

TEST_CASE("coupled comparison inequality with shared noise") {
    HSpace line = HSpace::euclidean(1);
    SdeProblem base = reflected_problem(1.0);
    TimeGrid grid = TimeGrid::uniform(1.0, 800);
    SdeProblem pa = base;
    pa.f = [](double, const Point& u) { return Point(Point::Constant(u.size(), 0.3)); };
    pa.f_growth = 0.09;
    SdeProblem pb = base;
    pb.f = [](double, const Point& u) { return Point(Point::Constant(u.size(), -0.2)); };
    pb.f_growth = 0.04;

    for (std::uint64_t i = 0; i < 8; ++i) {
        RngSeed seed{606, i};
        GenSolutionStoch ga = solve_sde_prox(pa, grid, seed);
        GenSolutionStoch gb = solve_sde_prox(pb, grid, seed);
        for (std::size_t s = 0; s < grid.size() - 1; s += 200) {
            for (std::size_t t = s + 100; t < grid.size(); t += 200) {
                double lhs = std::pow(ga.sol.u.values[t][0] - gb.sol.u.values[t][0], 2);
                double rhs = std::pow(ga.sol.u.values[s][0] - gb.sol.u.values[s][0], 2);
                for (std::size_t k = s; k < t; ++k)
                    rhs += 2.0 * grid.dt(k)
                         * (ga.sol.u.values[k][0] - gb.sol.u.values[k][0]) * (0.3 - (-0.2));
                CHECK(lhs <= rhs + 5.0 * std::sqrt(grid.max_dt()));
            }
        }
    }
}

TEST_CASE("moment bounds report") {
    HSpace line = HSpace::euclidean(1);
    const double a = 1.0;
    SdeProblem p{line,
                 MonotoneOperator::scalar_graph(graphs::linear(a), 0.0, a),
                 pt1(1.0),
                 [](double, const Point& u) { return Point(Point::Zero(u.size())); },
                 0.0,
                 0.0,
                 DiffusionCoefficient::constant(0.5 * Eigen::MatrixXd::Identity(1, 1), 0.25),
                 QWienerSpec::coordinate(line, Eigen::VectorXd::Ones(1)),
                 1.0};
    TimeGrid grid = TimeGrid::uniform(1.0, 500);

    EnsembleReport same = check_moment_bounds(p, pt1(1.0), pt1(1.0), 1, grid, 200,
                                              RngSeed{70, 0});
    CHECK(same.checks.at("difference_ratio_degenerate_pass"));

    std::vector<double> ratios;
    for (double scale : {1.0, 2.0, 4.0}) {
        EnsembleReport rep = check_moment_bounds(p, pt1(scale), pt1(0.5 * scale), 1, grid,
                                                 500, RngSeed{71, 0});
        CHECK(rep.checks.at("moment_ratio_finite"));
        ratios.push_back(rep.estimators.at("moment_ratio").value);
    }
    CHECK(stable_within_factor(ratios, 4.0));

    // reflected problem at p = 2
    SdeProblem refl = p;
    refl.op = MonotoneOperator::scalar_graph(graphs::linear_halfline(a), 0.0, a);
    EnsembleReport p2 = check_moment_bounds(refl, pt1(2.0), pt1(1.0), 2, grid, 400,
                                            RngSeed{72, 0});
    CHECK(p2.checks.at("moment_ratio_finite"));
    CHECK(p2.checks.at("difference_ratio_finite"));

    CHECK_THROWS_AS(check_moment_bounds(p, pt1(1.0), pt1(0.0), 3, grid, 10, RngSeed{73, 0}),
                    std::invalid_argument);
}

TEST_CASE("blowup guard aborts with diagnostics") {
    HSpace line = HSpace::euclidean(1);
    SdeProblem p{line,
                 MonotoneOperator::zero(),
                 pt1(1.0),
                 [](double, const Point& u) { return Point(100.0 * u); },
                 100.0,
                 10000.0,
                 DiffusionCoefficient::constant(Eigen::MatrixXd::Zero(1, 1), 0.0),
                 QWienerSpec::coordinate(line, Eigen::VectorXd::Ones(1)),
                 4.0};
    TimeGrid grid = TimeGrid::uniform(4.0, 16000);
    CHECK_THROWS_AS(solve_sde_prox(p, grid, RngSeed{0, 0}), BlowupError);
}
