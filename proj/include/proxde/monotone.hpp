#pragma once

#include "proxde/graphs.hpp"
#include "proxde/hspace.hpp"
#include "proxde/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace proxde {

class ResolventFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

/// Proximable convex part φ of a composite operator A0 + ∂φ.
/// prox(mu, v) = argmin_y ( |y - v|_H^2 / 2 + mu·φ(y) ), exact per kind.
class PhiPart {
public:
    static PhiPart none() { return PhiPart(); }

    static PhiPart scalar_graph(Graph1D g) {
        PhiPart p;
        p.prox_ = [g = std::move(g)](const HSpace&, double mu, const Point& v) {
            Point y(v.size());
            for (Eigen::Index i = 0; i < v.size(); ++i) y[i] = g.resolvent(mu, v[i]);
            return y;
        };
        return p;
    }

    static PhiPart indicator(ConvexSetSpec set) {
        PhiPart p;
        p.prox_ = [set = std::move(set)](const HSpace& space, double, const Point& v) {
            return set.project(space, v);
        };
        return p;
    }

    /// Dirichlet energy (1/2)∫|u'|^2 on [0,1] plus boundary potentials j at
    /// both endpoints.  The prox reduces, by one Schur complement on the
    /// interior nodes, to a 2x2 inclusion in the boundary values, solved by
    /// Gauss-Seidel sweeps of exact scalar graph resolvents.
    static PhiPart dirichlet_boundary(int n, Graph1D boundary) {
        if (n < 2) throw std::invalid_argument("dirichlet_boundary: need at least 2 grid points");
        PhiPart p;
        auto cache = std::make_shared<SolveCache>();
        p.prox_ = [n, boundary = std::move(boundary), cache](const HSpace& space, double mu,
                                                             const Point& v) {
            return dirichlet_prox(space, n, boundary, *cache, mu, v);
        };
        return p;
    }

    bool empty() const { return !prox_; }

    Point prox(const HSpace& space, double mu, const Point& v) const {
        if (!prox_) return v;
        return prox_(space, mu, v);
    }

private:
    struct SolveCache {
        std::mutex mutex;
        double key = -1.0;
        Eigen::LLT<Eigen::MatrixXd> interior; // M_ii for the current mu
        Eigen::MatrixXd m_ib;                 // (n-2) x 2 coupling block
        Eigen::Matrix2d schur;
    };

    static Eigen::MatrixXd stiffness(int n) {
        double dx = 1.0 / static_cast<double>(n - 1);
        Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i + 1 < n; ++i) {
            l(i, i) += 1.0 / dx;
            l(i + 1, i + 1) += 1.0 / dx;
            l(i, i + 1) -= 1.0 / dx;
            l(i + 1, i) -= 1.0 / dx;
        }
        return l;
    }

    // Minimize |y - v|^2_W / 2 + mu (y' L y / 2 + j(y_0) + j(y_{n-1})):
    // W(y - v) + mu L y + mu ∂j at the two boundary nodes ∋ 0.
    static Point dirichlet_prox(const HSpace& space, int n, const Graph1D& boundary,
                                SolveCache& cache, double mu, const Point& v) {
        const Eigen::VectorXd& w = space.weights();
        Eigen::VectorXd rhs = (w.array() * v.array()).matrix();

        if (n == 2) { // no interior nodes; direct 2x2 Gauss-Seidel below
            Eigen::MatrixXd m = Eigen::MatrixXd(w.asDiagonal()) + mu * stiffness(2);
            double y0 = v[0], y1 = v[1];
            for (int it = 0; it < 400; ++it) {
                double p0 = boundary.resolvent(mu / m(0, 0), (rhs[0] - m(0, 1) * y1) / m(0, 0));
                double p1 = boundary.resolvent(mu / m(1, 1), (rhs[1] - m(1, 0) * p0) / m(1, 1));
                double delta = std::abs(p0 - y0) + std::abs(p1 - y1);
                y0 = p0;
                y1 = p1;
                if (delta <= 1e-13 * (1.0 + std::abs(y0) + std::abs(y1))) break;
            }
            Point y(2);
            y << y0, y1;
            return y;
        }

        Eigen::VectorXd rhs_i = rhs.segment(1, n - 2);
        Eigen::Vector2d rhs_b(rhs[0], rhs[n - 1]);

        std::lock_guard<std::mutex> lock(cache.mutex);
        if (cache.key != mu) {
            Eigen::MatrixXd m = Eigen::MatrixXd(w.asDiagonal()) + mu * stiffness(n);
            cache.interior.compute(m.block(1, 1, n - 2, n - 2));
            cache.m_ib.resize(n - 2, 2);
            cache.m_ib.col(0) = m.block(1, 0, n - 2, 1);
            cache.m_ib.col(1) = m.block(1, n - 1, n - 2, 1);
            Eigen::Matrix2d mbb;
            mbb << m(0, 0), m(0, n - 1), m(n - 1, 0), m(n - 1, n - 1);
            cache.schur = mbb - cache.m_ib.transpose() * cache.interior.solve(cache.m_ib);
            cache.key = mu;
        }
        Eigen::Vector2d r = rhs_b - cache.m_ib.transpose() * cache.interior.solve(rhs_i);
        const Eigen::Matrix2d& s = cache.schur;

        // Gauss-Seidel on S y_b + mu ∂j(y_b) ∋ r; the cross coupling through
        // the interior chain is weak, so a handful of sweeps reaches 1e-13.
        double y0 = v[0], y1 = v[n - 1];
        bool settled = false;
        for (int it = 0; it < 400 && !settled; ++it) {
            double p0 = boundary.resolvent(mu / s(0, 0), (r[0] - s(0, 1) * y1) / s(0, 0));
            double p1 = boundary.resolvent(mu / s(1, 1), (r[1] - s(1, 0) * p0) / s(1, 1));
            settled = std::abs(p0 - y0) + std::abs(p1 - y1)
                      <= 1e-13 * (1.0 + std::abs(p0) + std::abs(p1));
            y0 = p0;
            y1 = p1;
        }
        if (!settled)
            throw ResolventFailure("dirichlet_boundary prox: boundary sweep did not settle");

        Eigen::Vector2d yb(y0, y1);
        Eigen::VectorXd yi = cache.interior.solve(rhs_i - cache.m_ib * yb);
        Point y(n);
        y[0] = y0;
        y[n - 1] = y1;
        y.segment(1, n - 2) = yi;
        return y;
    }

    std::function<Point(const HSpace&, double, const Point&)> prox_;
};

struct OperatorImpl {
    virtual ~OperatorImpl() = default;
    virtual std::string kind() const = 0;
    // Resolvent of the maximal monotone part A + alpha I:
    // solve y + eps·(A y + alpha y) ∋ x.
    virtual Point resolvent(const HSpace& space, double eps, double alpha,
                            const Point& x) const = 0;
};

struct ZeroImpl final : OperatorImpl {
    std::string kind() const override { return "zero"; }
    Point resolvent(const HSpace&, double eps, double alpha, const Point& x) const override {
        return x / (1.0 + eps * alpha);
    }
};

struct LinearSpdImpl final : OperatorImpl {
    explicit LinearSpdImpl(Eigen::MatrixXd a) : mat(std::move(a)) {}

    std::string kind() const override { return "linear_spd"; }
    Point resolvent(const HSpace& space, double eps, double alpha, const Point& x) const override {
        if (mat.rows() != space.dim())
            throw std::invalid_argument("linear_spd: matrix dimension mismatch");
        std::lock_guard<std::mutex> lock(mutex);
        if (cache_eps != eps || cache_alpha != alpha) {
            Eigen::MatrixXd m = (1.0 + eps * alpha) * Eigen::MatrixXd::Identity(mat.rows(), mat.cols())
                              + eps * mat;
            lu.compute(m);
            cache_eps = eps;
            cache_alpha = alpha;
        }
        return lu.solve(x);
    }

    Eigen::MatrixXd mat;
    mutable std::mutex mutex;
    mutable Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    mutable double cache_eps = -1.0, cache_alpha = 0.0;
};

struct ScalarGraphImpl final : OperatorImpl {
    explicit ScalarGraphImpl(Graph1D g) : graph(std::move(g)) {}

    std::string kind() const override { return "scalar_graph(" + graph.name + ")"; }
    Point resolvent(const HSpace&, double eps, double alpha, const Point& x) const override {
        const double scale = 1.0 + eps * alpha;
        Point y(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i)
            y[i] = graph.resolvent(eps / scale, x[i] / scale);
        return y;
    }

    Graph1D graph;
};

struct IndicatorImpl final : OperatorImpl {
    explicit IndicatorImpl(ConvexSetSpec s) : set(std::move(s)) {}

    std::string kind() const override { return "indicator"; }
    Point resolvent(const HSpace& space, double eps, double alpha, const Point& x) const override {
        return set.project(space, x / (1.0 + eps * alpha));
    }

    ConvexSetSpec set;
};

struct CompositeImpl final : OperatorImpl {
    CompositeImpl(std::function<Point(const Point&)> a0, PhiPart p, std::string label)
        : apply_a0(std::move(a0)), phi(std::move(p)), label_(std::move(label)) {}

    std::string kind() const override { return label_; }

    // Damped fixed point on y = prox_{mu phi}((x - eps A0 y) / (1 + eps alpha)),
    // mu = eps / (1 + eps alpha); step halving on residual increase.
    Point resolvent(const HSpace& space, double eps, double alpha, const Point& x) const override {
        const double scale = 1.0 + eps * alpha;
        const double mu = eps / scale;
        auto step = [&](const Point& y) {
            return phi.prox(space, mu, (x - eps * apply_a0(y)) / scale);
        };
        Point y = x;
        Point ty = step(y);
        double res = space.h_norm(ty - y);
        const double tol = 1e-10 * (1.0 + space.h_norm(x));
        double tau = 1.0;
        for (int it = 0; it < 2000; ++it) {
            if (res <= tol) return ty;
            Point cand = y + tau * (ty - y);
            Point tcand = step(cand);
            double rcand = space.h_norm(tcand - cand);
            // strict decrease; a plateau means the plain iterate cycles, so halve
            if (rcand < res * (1.0 - 1e-3) || rcand <= tol || tau < 1e-4) {
                y = std::move(cand);
                ty = std::move(tcand);
                res = rcand;
                tau = std::min(1.0, tau * 1.2);
            } else {
                tau *= 0.5;
            }
        }
        throw ResolventFailure("composite resolvent: fixed point did not converge");
    }

    std::function<Point(const Point&)> apply_a0;
    PhiPart phi;
    std::string label_;
};

} // namespace detail

/// Multivalued (alpha-)maximal monotone operator, defined through the exact
/// resolvent of its maximal monotone part A + alpha I.  Only that shifted
/// resolvent is ever computed; the -alpha I correction is applied explicitly
/// by the time steppers.
class MonotoneOperator {
public:
    static MonotoneOperator zero(double alpha = 0.0) {
        return MonotoneOperator(std::make_shared<detail::ZeroImpl>(), alpha, 0.0);
    }

    /// A x = mat·x with mat positive semidefinite and selfadjoint in H.
    static MonotoneOperator linear_spd(Eigen::MatrixXd mat, double alpha = 0.0,
                                       double modulus = 0.0) {
        return MonotoneOperator(std::make_shared<detail::LinearSpdImpl>(std::move(mat)),
                                alpha, modulus);
    }

    static MonotoneOperator scalar_linear(int dim, double lambda, double alpha = 0.0) {
        return linear_spd(lambda * Eigen::MatrixXd::Identity(dim, dim), alpha, lambda);
    }

    /// beta applied componentwise.
    static MonotoneOperator scalar_graph(Graph1D g, double alpha = 0.0, double modulus = 0.0) {
        return MonotoneOperator(std::make_shared<detail::ScalarGraphImpl>(std::move(g)),
                                alpha, modulus);
    }

    static MonotoneOperator indicator(ConvexSetSpec set, double alpha = 0.0) {
        return MonotoneOperator(std::make_shared<detail::IndicatorImpl>(std::move(set)),
                                alpha, 0.0);
    }

    /// A = A0 + ∂φ with A0 continuous (monotone up to the declared alpha shift).
    static MonotoneOperator composite(std::function<Point(const Point&)> a0,
                                      detail::PhiPart phi, double alpha = 0.0,
                                      double modulus = 0.0,
                                      std::string label = "composite") {
        return MonotoneOperator(
            std::make_shared<detail::CompositeImpl>(std::move(a0), std::move(phi),
                                                    std::move(label)),
            alpha, modulus);
    }

    /// Componentwise reaction plus indicator/graph subdifferential:
    /// A u = a0(u) + ∂φ(u), φ realized by scalar graph or convex set.
    static MonotoneOperator composite_graph(std::function<Point(const Point&)> a0,
                                            Graph1D phi_graph, double alpha = 0.0,
                                            double modulus = 0.0) {
        return composite(std::move(a0), detail::PhiPart::scalar_graph(std::move(phi_graph)),
                         alpha, modulus, "composite_graph");
    }

    static MonotoneOperator composite_indicator(std::function<Point(const Point&)> a0,
                                                ConvexSetSpec set, double alpha = 0.0,
                                                double modulus = 0.0) {
        return composite(std::move(a0), detail::PhiPart::indicator(std::move(set)),
                         alpha, modulus, "composite_indicator");
    }

    /// Discretized -Δu + g(u) on [0,1] with boundary condition -∂u/∂n ∈ β(u):
    /// reaction g componentwise plus Dirichlet-energy-with-boundary-potential φ.
    static MonotoneOperator laplacian_boundary(int n, Graph1D boundary,
                                               std::function<double(double)> reaction,
                                               double alpha = 0.0) {
        auto a0 = [reaction = std::move(reaction)](const Point& u) {
            Point v(u.size());
            for (Eigen::Index i = 0; i < u.size(); ++i) v[i] = reaction(u[i]);
            return v;
        };
        return composite(std::move(a0), detail::PhiPart::dirichlet_boundary(n, std::move(boundary)),
                         alpha, 0.0, "laplacian_boundary");
    }

    /// Trapezoid-weighted L2(0,1) space matching laplacian_boundary(n, ...).
    static HSpace laplacian_boundary_space(int n) {
        double dx = 1.0 / static_cast<double>(n - 1);
        Eigen::VectorXd w = Eigen::VectorXd::Constant(n, dx);
        w[0] = w[n - 1] = 0.5 * dx;
        return HSpace(n, w);
    }

    double alpha() const { return alpha_; }

    /// Declared strong-monotonicity modulus a >= 0 (0 when merely monotone).
    double modulus() const { return modulus_; }

    std::string kind() const { return impl_->kind(); }

    /// Non-null when the operator applies one scalar graph componentwise;
    /// lets dimension-one ensemble loops skip the vector machinery.
    const Graph1D* componentwise_graph() const {
        auto p = dynamic_cast<const detail::ScalarGraphImpl*>(impl_.get());
        return p ? &p->graph : nullptr;
    }

    /// J^alpha_eps x = (I + eps (A + alpha I))^{-1} x.
    Point resolvent(const HSpace& space, double eps, const Point& x) const {
        if (!(eps > 0.0)) throw std::invalid_argument("resolvent: eps must be > 0");
        if (1.0 + eps * alpha_ <= 0.0)
            throw std::invalid_argument("resolvent: eps*alpha leaves the contractive range");
        return impl_->resolvent(space, eps, alpha_, x);
    }

    /// A^alpha_eps x = (x - J^alpha_eps x) / eps.
    Point yosida(const HSpace& space, double eps, const Point& x) const {
        return (x - resolvent(space, eps, x)) / eps;
    }

    /// Projection onto cl D(A), realized as J^alpha_eps with eps = 1e-8.
    Point project_domain(const HSpace& space, const Point& x) const {
        return resolvent(space, 1e-8, x);
    }

    /// Least-norm element A^0 x of A x, by Yosida extrapolation over a
    /// decreasing eps sequence; diverging |A_eps x| signals x outside D(A).
    Point minimal_section(const HSpace& space, const Point& x, double tol = 1e-8) const {
        double eps = 1e-2;
        Point prev = section_candidate(space, eps, x);
        for (int it = 0; it < 60; ++it) {
            eps *= 0.5;
            Point cur = section_candidate(space, eps, x);
            if (space.h_norm(cur) > 1e8 * (1.0 + space.h_norm(x)))
                throw DomainError("minimal_section: Yosida values diverge, x not in D(A)");
            if (space.h_norm(cur - prev) < tol) return cur;
            prev = std::move(cur);
        }
        if (space.h_norm(prev) > 1e4 * (1.0 + space.h_norm(x)))
            throw DomainError("minimal_section: Yosida values diverge, x not in D(A)");
        throw ResolventFailure("minimal_section: extrapolation did not settle within budget");
    }

    /// Residual of the graph membership y ∈ A x; zero (up to resolvent
    /// tolerance) iff [x, y] is a graph point of A.
    double graph_residual(const HSpace& space, const Point& x, const Point& y,
                          double eps = 1e-3) const {
        Point back = resolvent(space, eps, x + eps * (y + alpha_ * x));
        return space.h_norm(back - x);
    }

private:
    MonotoneOperator(std::shared_ptr<const detail::OperatorImpl> impl, double alpha,
                     double modulus)
        : impl_(std::move(impl)), alpha_(alpha), modulus_(modulus) {
        if (modulus_ < 0.0) throw std::invalid_argument("operator: modulus must be >= 0");
    }

    // Element of A(J_eps(x + eps alpha x)) converging to Pr_{Ax}(alpha x) - ... ;
    // for alpha = 0 this is exactly A_eps x -> A^0 x.
    Point section_candidate(const HSpace& space, double eps, const Point& x) const {
        Point shifted = x + eps * alpha_ * x;
        Point j = resolvent(space, eps, shifted);
        return (shifted - j) / eps - alpha_ * x;
    }

    std::shared_ptr<const detail::OperatorImpl> impl_;
    double alpha_;
    double modulus_;
};

/// Graph points [x, y] ∈ A sampled through (J_eps z, A_eps z - alpha J_eps z)
/// over random z and eps; valid graph points by construction.
inline std::vector<std::pair<Point, Point>> sample_graph_points(
    const HSpace& space, const MonotoneOperator& op, std::size_t count, RngSeed seed,
    double spread = 2.0) {
    std::vector<std::pair<Point, Point>> pairs;
    pairs.reserve(count);
    Rng rng(seed);
    for (std::size_t k = 0; k < count; ++k) {
        Point z(space.dim());
        for (int i = 0; i < space.dim(); ++i) z[i] = spread * rng.normal();
        double eps = std::pow(10.0, -3.0 * rng.uniform()); // in (1e-3, 1]
        Point x = op.resolvent(space, eps, z);
        Point ay = (z - x) / eps - op.alpha() * x; // A_eps z - alpha J_eps z ∈ A x
        pairs.emplace_back(std::move(x), std::move(ay));
    }
    return pairs;
}

/// Record of the coercivity audit r0 ‖y‖_X* <= (y, x - h0) + a1 |x|^2 + a2.
struct H1Audit {
    Point h0;
    double r0 = 1.0;
    double a1 = 1.0;
    double a2 = 1.0;
    std::size_t sample_count = 0;
    double worst_violation = 0.0;

    bool feasible() const { return worst_violation <= 0.0; }
};

/// Evaluates the audit inequality on sampled graph points; always completes
/// and reports the worst violation (feasible iff <= 0).
inline H1Audit audit_h1(const HSpace& space, const MonotoneOperator& op, H1Audit candidate,
                        std::size_t samples = 512, RngSeed seed = RngSeed{0x5eedu, 7},
                        double spread = 2.0) {
    if (candidate.h0.size() != space.dim())
        throw std::invalid_argument("audit_h1: h0 dimension mismatch");
    auto pairs = sample_graph_points(space, op, samples, seed, spread);
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& [x, y] : pairs) {
        double lhs = candidate.r0 * space.xstar_norm(y);
        double rhs = space.inner(y, x - candidate.h0)
                   + candidate.a1 * space.inner(x, x) + candidate.a2;
        worst = std::max(worst, lhs - rhs);
    }
    candidate.sample_count = samples;
    candidate.worst_violation = worst;
    return candidate;
}

} // namespace proxde
