#pragma once

#include <Eigen/Dense>
#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

namespace proxde {

using Point = Eigen::VectorXd;

enum class XNormKind { SameAsH, SpectralSmooth };
enum class PathNorm { H, X, Xstar };

/// Finite-dimensional stand-in for a Gelfand-like triple X ⊂ H ⊂ X*.
///
/// H carries the weighted inner product ⟨x,y⟩ = Σ w_i x_i y_i.  The X-norm is
/// either |.|_H itself or the smoothed norm |(I + s K)x|_H for a fixed
/// H-selfadjoint positive semidefinite K, whose dual norm is computed by one
/// linear solve: ‖ξ‖_X* = |(I + s K)^{-1} ξ|_H.
class HSpace {
public:
    HSpace(int dim, Eigen::VectorXd weights, double gamma0 = 1.0)
        : dim_(dim), weights_(std::move(weights)), kind_(XNormKind::SameAsH),
          gamma0_(gamma0) {
        validate();
    }

    static HSpace euclidean(int dim) {
        return HSpace(dim, Eigen::VectorXd::Ones(dim));
    }

    static HSpace spectral_smooth(int dim, Eigen::VectorXd weights, double s,
                                  Eigen::MatrixXd smoother, double gamma0 = 1.0) {
        HSpace sp(dim, std::move(weights), gamma0);
        if (s < 0.0) throw std::invalid_argument("hspace: smoothing strength s must be >= 0");
        if (smoother.rows() != dim || smoother.cols() != dim)
            throw std::invalid_argument("hspace: smoother dimension mismatch");
        // K must be selfadjoint wrt the weighted product so the dual pairing closes.
        Eigen::MatrixXd wk = sp.weights_.asDiagonal() * smoother;
        if ((wk - wk.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + wk.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("hspace: smoother is not H-selfadjoint");
        sp.kind_ = XNormKind::SpectralSmooth;
        sp.smooth_s_ = s;
        sp.smoother_ = std::make_shared<Eigen::MatrixXd>(std::move(smoother));
        Eigen::MatrixXd op = Eigen::MatrixXd::Identity(dim, dim) + s * (*sp.smoother_);
        sp.smooth_lu_ = std::make_shared<Eigen::PartialPivLU<Eigen::MatrixXd>>(op);
        return sp;
    }

    int dim() const { return dim_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    XNormKind xnorm_kind() const { return kind_; }
    double gamma0() const { return gamma0_; }

    double inner(const Point& x, const Point& y) const {
        check_dim(x);
        check_dim(y);
        return (weights_.array() * x.array() * y.array()).sum();
    }

    double h_norm(const Point& x) const { return std::sqrt(std::max(0.0, inner(x, x))); }

    double x_norm(const Point& x) const {
        if (kind_ == XNormKind::SameAsH) return h_norm(x);
        check_dim(x);
        return h_norm(x + smooth_s_ * (*smoother_ * x));
    }

    double xstar_norm(const Point& xi) const {
        if (kind_ == XNormKind::SameAsH) return h_norm(xi);
        check_dim(xi);
        return h_norm(smooth_lu_->solve(xi));
    }

    double norm(const Point& x, PathNorm which) const {
        switch (which) {
            case PathNorm::H: return h_norm(x);
            case PathNorm::X: return x_norm(x);
            case PathNorm::Xstar: return xstar_norm(x);
        }
        return h_norm(x);
    }

private:
    void validate() const {
        if (dim_ <= 0) throw std::invalid_argument("hspace: dim must be positive");
        if (weights_.size() != dim_) throw std::invalid_argument("hspace: weights dimension mismatch");
        if ((weights_.array() <= 0.0).any()) throw std::invalid_argument("hspace: weights must be positive");
        if (gamma0_ <= 0.0) throw std::invalid_argument("hspace: gamma0 must be positive");
    }

    void check_dim(const Point& x) const {
        if (x.size() != dim_) throw std::invalid_argument("hspace: point dimension mismatch");
    }

    int dim_;
    Eigen::VectorXd weights_;
    XNormKind kind_;
    double gamma0_;
    double smooth_s_ = 0.0;
    std::shared_ptr<Eigen::MatrixXd> smoother_;
    std::shared_ptr<Eigen::PartialPivLU<Eigen::MatrixXd>> smooth_lu_;
};

/// Strictly increasing time grid starting at 0.
struct TimeGrid {
    std::vector<double> t;

    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> nodes) : t(std::move(nodes)) {
        if (t.empty() || t.front() != 0.0)
            throw std::invalid_argument("time grid: must start at t = 0");
        for (std::size_t k = 0; k + 1 < t.size(); ++k)
            if (!(t[k + 1] > t[k]))
                throw std::invalid_argument("time grid: nodes must be strictly increasing");
    }

    static TimeGrid uniform(double horizon, std::size_t steps) {
        if (!(horizon > 0.0) || steps == 0)
            throw std::invalid_argument("time grid: need horizon > 0 and steps >= 1");
        std::vector<double> nodes(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k)
            nodes[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
        nodes.back() = horizon;
        return TimeGrid(std::move(nodes));
    }

    std::size_t size() const { return t.size(); }
    std::size_t steps() const { return t.size() - 1; }
    double horizon() const { return t.back(); }
    double dt(std::size_t k) const { return t[k + 1] - t[k]; }
    double max_dt() const {
        double h = 0.0;
        for (std::size_t k = 0; k + 1 < t.size(); ++k) h = std::max(h, dt(k));
        return h;
    }
};

/// Grid-sampled H-valued path, piecewise linear between nodes.
struct HPath {
    TimeGrid grid;
    std::vector<Point> values;

    HPath() = default;
    HPath(TimeGrid g, std::vector<Point> v) : grid(std::move(g)), values(std::move(v)) {
        if (values.size() != grid.size())
            throw std::invalid_argument("hpath: values.size() must equal grid.size()");
    }

    static HPath constant(const TimeGrid& g, const Point& value) {
        return HPath(g, std::vector<Point>(g.size(), value));
    }

    static HPath zero(const TimeGrid& g, int dim) {
        return constant(g, Point::Zero(dim));
    }

    std::size_t size() const { return values.size(); }
    int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }

    /// Piecewise-linear evaluation; clamps outside [0,T].
    Point at(double time) const {
        const auto& t = grid.t;
        if (time <= t.front()) return values.front();
        if (time >= t.back()) return values.back();
        auto it = std::upper_bound(t.begin(), t.end(), time);
        std::size_t k = static_cast<std::size_t>(it - t.begin()) - 1;
        double w = (time - t[k]) / (t[k + 1] - t[k]);
        return (1.0 - w) * values[k] + w * values[k + 1];
    }
};

/// Partition sum Σ ‖g(t_{i+1}) - g(t_i)‖ over the path's own grid; a lower
/// bound for the BV norm of the underlying function.
inline double bv_norm(const HSpace& space, const HPath& path, PathNorm which = PathNorm::Xstar) {
    if (path.values.empty()) throw std::invalid_argument("bv_norm: empty path");
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < path.values.size(); ++k)
        total += space.norm(path.values[k + 1] - path.values[k], which);
    return total;
}

/// sup ‖path(t) - path(s)‖ over grid node pairs with |t - s| <= delta.
inline double modulus_of_continuity(const HSpace& space, const HPath& path, double delta,
                                    PathNorm which = PathNorm::X) {
    if (!(delta > 0.0)) throw std::invalid_argument("modulus_of_continuity: delta must be > 0");
    const auto& t = path.grid.t;
    double sup = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        for (std::size_t j = i + 1; j < t.size() && t[j] - t[i] <= delta + 1e-15; ++j)
            sup = std::max(sup, space.norm(path.values[j] - path.values[i], which));
    }
    return sup;
}

} // namespace proxde
