#pragma once

#include "proxde/hspace.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace proxde {

/// Scalar maximal monotone graph β ⊂ R×R, defined through its resolvent:
/// resolvent(eps, x) returns the unique y with y + eps·β(y) ∋ x.
struct Graph1D {
    std::string name;
    std::function<double(double eps, double x)> resolvent;

    double operator()(double eps, double x) const { return resolvent(eps, x); }
};

namespace graphs {

/// Bisection solve of y + eps·beta(y) = x on [lo, hi] to 1e-12.
inline double bisect_resolvent(const std::function<double(double)>& beta, double eps,
                               double x, double lo, double hi) {
    auto g = [&](double y) { return y + eps * beta(y) - x; };
    double flo = g(lo);
    if (flo > 0.0) return lo;
    if (g(hi) < 0.0) return hi;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + std::abs(x)); ++it) {
        double mid = 0.5 * (lo + hi);
        (g(mid) <= 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// r ↦ slope·r.
inline Graph1D linear(double slope) {
    if (slope < 0.0) throw std::invalid_argument("linear graph: slope must be >= 0");
    return {"linear", [slope](double eps, double x) { return x / (1.0 + eps * slope); }};
}

/// r ↦ slope·r + ∂I_{[lo,∞)}(r): linear pull with a reflecting barrier.
inline Graph1D linear_halfline(double slope, double lo = 0.0) {
    if (slope < 0.0) throw std::invalid_argument("linear_halfline: slope must be >= 0");
    return {"linear_halfline", [slope, lo](double eps, double x) {
                return std::max(x / (1.0 + eps * slope), lo);
            }};
}

/// ∂|.| : soft threshold.
inline Graph1D sign() {
    return {"sign", [](double eps, double x) {
                if (x > eps) return x - eps;
                if (x < -eps) return x + eps;
                return 0.0;
            }};
}

/// r ↦ r³, resolvent by sign-aware bisection on [min(0,x), max(0,x)].
inline Graph1D power3() {
    return {"power3", [](double eps, double x) {
                auto beta = [](double y) { return y * y * y; };
                return bisect_resolvent(beta, eps, x, std::min(0.0, x), std::max(0.0, x));
            }};
}

/// Stefan-type enthalpy graph: identity for r < 0, vertical segment [0, latent]
/// at r = 0, identity + latent for r > 0.
inline Graph1D stefan(double latent = 1.0) {
    return {"stefan", [latent](double eps, double x) {
                if (x < 0.0) return x / (1.0 + eps);
                if (x <= eps * latent) return 0.0;
                return (x - eps * latent) / (1.0 + eps);
            }};
}

/// ∂I_{[lo,hi]} : resolvent is the clamp, independent of eps.
inline Graph1D indicator_interval(double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("indicator_interval: lo must be <= hi");
    return {"indicator_interval", [lo, hi](double, double x) {
                return std::min(hi, std::max(lo, x));
            }};
}

inline Graph1D indicator_halfline(double lo = 0.0) {
    return {"indicator_halfline", [lo](double, double x) { return std::max(lo, x); }};
}

} // namespace graphs

/// Closed convex sets with exact projections: realizes ∂I_C.
class ConvexSetSpec {
public:
    struct Box { Point lo, hi; };
    struct Ball { Point center; double radius; };
    struct HalfSpace { Point normal; double offset; }; // { x : <normal,x> <= offset }

    static ConvexSetSpec box(Point lo, Point hi) {
        if (lo.size() != hi.size() || (lo.array() > hi.array()).any())
            throw std::invalid_argument("convex box: need lo <= hi componentwise");
        return ConvexSetSpec(Box{std::move(lo), std::move(hi)});
    }
    static ConvexSetSpec ball(Point center, double radius) {
        if (!(radius >= 0.0)) throw std::invalid_argument("convex ball: radius must be >= 0");
        return ConvexSetSpec(Ball{std::move(center), radius});
    }
    static ConvexSetSpec half_space(Point normal, double offset) {
        if (normal.norm() == 0.0) throw std::invalid_argument("half space: zero normal");
        return ConvexSetSpec(HalfSpace{std::move(normal), offset});
    }

    Point project(const HSpace& space, const Point& x) const {
        if (const Box* b = std::get_if<Box>(&spec_)) {
            return x.cwiseMax(b->lo).cwiseMin(b->hi);
        }
        if (const Ball* b = std::get_if<Ball>(&spec_)) {
            Point d = x - b->center;
            double n = space.h_norm(d);
            if (n <= b->radius) return x;
            return b->center + (b->radius / n) * d;
        }
        const HalfSpace& h = std::get<HalfSpace>(spec_);
        double excess = space.inner(h.normal, x) - h.offset;
        if (excess <= 0.0) return x;
        return x - (excess / space.inner(h.normal, h.normal)) * h.normal;
    }

    bool contains(const HSpace& space, const Point& x, double tol = 1e-12) const {
        return space.h_norm(project(space, x) - x) <= tol;
    }

private:
    template <class T>
    explicit ConvexSetSpec(T spec) : spec_(std::move(spec)) {}

    std::variant<Box, Ball, HalfSpace> spec_;
};

} // namespace proxde
