#include <catch2/catch_amalgamated.hpp>

#include "proxde/hspace.hpp"
#include "proxde/rng.hpp"

#include <cmath>

using namespace proxde;

namespace {

Point pt(std::initializer_list<double> xs) {
    Point p(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) p[i++] = x;
    return p;
}

HPath scalar_path(const TimeGrid& grid, std::initializer_list<double> vals) {
    std::vector<Point> v;
    for (double x : vals) v.push_back(pt({x}));
    return HPath(grid, std::move(v));
}

} // namespace

TEST_CASE("weighted inner product matches the defining sum") {
    HSpace half(2, pt({0.5, 0.5}));
    CHECK(half.inner(pt({1, 1}), pt({1, -1})) == Catch::Approx(0.0).margin(1e-15));
    CHECK(half.inner(pt({1, 1}), pt({1, 1})) == Catch::Approx(1.0));

    HSpace w12(2, pt({1, 2}));
    CHECK(w12.inner(pt({3, 1}), pt({1, 1})) == Catch::Approx(5.0));
}

TEST_CASE("inner product rejects dimension mismatch") {
    HSpace space(2, pt({1, 1}));
    CHECK_THROWS_AS(space.inner(pt({1, 2, 3}), pt({1, 2})), std::invalid_argument);
    CHECK_THROWS_AS(HSpace(2, pt({1.0, 0.0})), std::invalid_argument);
    CHECK_THROWS_AS(HSpace(2, pt({1.0, -1.0})), std::invalid_argument);
}

TEST_CASE("Cauchy-Schwarz on random samples") {
    HSpace space(4, pt({0.3, 1.0, 2.0, 0.7}));
    Rng rng(41, 0);
    for (int k = 0; k < 500; ++k) {
        Point x(4), y(4);
        for (int i = 0; i < 4; ++i) {
            x[i] = rng.normal();
            y[i] = rng.normal();
        }
        double lhs = space.inner(x, y) * space.inner(x, y);
        double rhs = space.inner(x, x) * space.inner(y, y);
        CHECK(lhs <= rhs + 1e-12);
    }
}

TEST_CASE("bv_norm on the path's own grid") {
    TimeGrid g3 = TimeGrid::uniform(1.0, 2);
    CHECK(bv_norm(HSpace::euclidean(1), scalar_path(g3, {0, 1, 0}), PathNorm::H)
          == Catch::Approx(2.0));
    CHECK(bv_norm(HSpace::euclidean(1), scalar_path(g3, {2, 2, 2}), PathNorm::H)
          == Catch::Approx(0.0).margin(1e-15));
    TimeGrid g5 = TimeGrid::uniform(1.0, 4);
    CHECK(bv_norm(HSpace::euclidean(1), scalar_path(g5, {0, 1.2, 1.7, 2.4, 3}), PathNorm::H)
          == Catch::Approx(3.0));
    CHECK_THROWS_AS(bv_norm(HSpace::euclidean(1), HPath{}, PathNorm::H), std::invalid_argument);
}

TEST_CASE("bv_norm refines monotonically for sampled functions") {
    HSpace space = HSpace::euclidean(1);
    auto fn = [](double t) { return std::sin(7.0 * t) + 0.5 * t * t; };
    double prev = 0.0;
    for (std::size_t steps : {8, 16, 32, 64, 128}) {
        TimeGrid grid = TimeGrid::uniform(1.0, steps);
        std::vector<Point> v;
        for (double t : grid.t) v.push_back(pt({fn(t)}));
        double sum = bv_norm(space, HPath(grid, std::move(v)), PathNorm::H);
        CHECK(prev <= sum + 1e-12);
        prev = sum;
    }
}

TEST_CASE("modulus of continuity") {
    HSpace space = HSpace::euclidean(1);
    TimeGrid g = TimeGrid::uniform(1.0, 10);
    std::vector<Point> lin;
    for (double t : g.t) lin.push_back(pt({t}));
    HPath linear(g, std::move(lin));
    CHECK(modulus_of_continuity(space, linear, 0.1, PathNorm::H) == Catch::Approx(0.1));
    CHECK(modulus_of_continuity(space, HPath::constant(g, pt({3.0})), 0.37, PathNorm::H)
          == Catch::Approx(0.0).margin(1e-15));

    TimeGrid g2(std::vector<double>{0.0, 0.5, 1.0});
    CHECK(modulus_of_continuity(space, scalar_path(g2, {0, 1, 0}), 0.5, PathNorm::H)
          == Catch::Approx(1.0));
    CHECK_THROWS_AS(modulus_of_continuity(space, linear, 0.0, PathNorm::H),
                    std::invalid_argument);

    double prev = 0.0;
    for (double delta : {0.1, 0.2, 0.4, 0.8}) {
        double m = modulus_of_continuity(space, linear, delta, PathNorm::H);
        CHECK(m >= prev - 1e-15);
        prev = m;
    }
}

TEST_CASE("SameAsH norms are self-dual") {
    HSpace space(3, pt({0.5, 1.5, 2.0}));
    Rng rng(7, 0);
    for (int k = 0; k < 100; ++k) {
        Point x(3);
        for (int i = 0; i < 3; ++i) x[i] = rng.normal();
        CHECK(space.x_norm(x) == Catch::Approx(space.h_norm(x)));
        CHECK(space.xstar_norm(x) == Catch::Approx(space.h_norm(x)));
    }
}

TEST_CASE("spectral smoothing norm and its dual invert each other") {
    int n = 5;
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        lap(i, i) += 1.0;
        lap(i + 1, i + 1) += 1.0;
        lap(i, i + 1) -= 1.0;
        lap(i + 1, i) -= 1.0;
    }
    HSpace space = HSpace::spectral_smooth(n, Eigen::VectorXd::Ones(n), 0.8, lap);

    Rng rng(11, 0);
    Eigen::MatrixXd s = Eigen::MatrixXd::Identity(n, n) + 0.8 * lap;
    for (int k = 0; k < 50; ++k) {
        Point x(n);
        for (int i = 0; i < n; ++i) x[i] = rng.normal();
        // ‖S x‖_X* = |x|_H and |x|_H <= gamma0 ‖x‖_X with gamma0 = 1 (PSD smoother)
        CHECK(space.xstar_norm(s * x) == Catch::Approx(space.h_norm(x)));
        CHECK(space.h_norm(x) <= space.gamma0() * space.x_norm(x) + 1e-12);
        // duality pairing bound <ξ,x> <= ‖ξ‖_X* ‖x‖_X
        Point xi(n);
        for (int i = 0; i < n; ++i) xi[i] = rng.normal();
        CHECK(std::abs(space.inner(xi, x))
              <= space.xstar_norm(xi) * space.x_norm(x) + 1e-10);
    }
}

TEST_CASE("time grid validation") {
    CHECK_THROWS_AS(TimeGrid(std::vector<double>{0.5, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(std::vector<double>{0.0, 1.0, 1.0}), std::invalid_argument);
    TimeGrid g = TimeGrid::uniform(2.0, 4);
    CHECK(g.horizon() == Catch::Approx(2.0));
    CHECK(g.steps() == 4);
    CHECK(g.max_dt() == Catch::Approx(0.5));
}

TEST_CASE("piecewise-linear path evaluation") {
    TimeGrid g(std::vector<double>{0.0, 1.0, 3.0});
    HPath p = scalar_path(g, {0, 2, -2});
    CHECK(p.at(0.5)[0] == Catch::Approx(1.0));
    CHECK(p.at(2.0)[0] == Catch::Approx(0.0));
    CHECK(p.at(-1.0)[0] == Catch::Approx(0.0).margin(1e-15));
    CHECK(p.at(9.0)[0] == Catch::Approx(-2.0));
}
