#pragma once

#include "proxde/hspace.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace proxde {

namespace detail {

// Even bump kernel rho(r) = c exp(-1/(1-r^2)) on (-1,1), discretized once on
// 33 Simpson nodes and renormalized so the quadrature weights sum to exactly 1.
// Constants then mollify to themselves and the node symmetry kills the first
// moment exactly.
struct MollifierKernel {
    static constexpr int kNodes = 33;
    std::array<double, kNodes> node{};
    std::array<double, kNodes> weight{};

    MollifierKernel() {
        double raw = 0.0;
        for (int j = 0; j < kNodes; ++j) {
            node[j] = -1.0 + 2.0 * static_cast<double>(j) / (kNodes - 1);
            double simpson = (j == 0 || j == kNodes - 1) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
            double r2 = node[j] * node[j];
            double rho = r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0;
            weight[j] = simpson * rho;
            raw += weight[j];
        }
        for (double& w : weight) w /= raw;
    }

    static const MollifierKernel& instance() {
        static const MollifierKernel k;
        return k;
    }
};

} // namespace detail

/// Mollification M_n(t) = ∫ rho(r) M~(t - (1+r)/n) dr with M~ the constant
/// extension of M beyond [0,T].  Preserves M(0), does not increase the
/// modulus of continuity, and converges uniformly to M as n grows.
inline HPath mollify(const HPath& path, int n) {
    if (n < 1) throw std::invalid_argument("mollify: level n must be >= 1");
    const auto& kernel = detail::MollifierKernel::instance();
    std::vector<Point> out(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) {
        double t = path.grid.t[k];
        Point acc = Point::Zero(path.dim());
        for (int j = 0; j < detail::MollifierKernel::kNodes; ++j)
            acc += kernel.weight[j] * path.at(t - (1.0 + kernel.node[j]) / n);
        out[k] = std::move(acc);
    }
    return HPath(path.grid, std::move(out));
}

} // namespace proxde
