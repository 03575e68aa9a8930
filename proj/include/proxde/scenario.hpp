#pragma once

#include "proxde/asymptotics.hpp"
#include "proxde/config.hpp"
#include "proxde/det_solver.hpp"
#include "proxde/sde_solver.hpp"

#include <cinttypes>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace proxde {

enum class ExperimentType { SolveDet, SolveSde, Convergence, Stability, Invariant, Audit };

inline const char* experiment_name(ExperimentType t) {
    switch (t) {
        case ExperimentType::SolveDet: return "solve_det";
        case ExperimentType::SolveSde: return "solve_sde";
        case ExperimentType::Convergence: return "convergence";
        case ExperimentType::Stability: return "stability";
        case ExperimentType::Invariant: return "invariant";
        case ExperimentType::Audit: return "audit";
    }
    return "unknown";
}

/// Operator kinds and scalar graphs constructible from scenario files.
inline const std::vector<std::string>& operator_kind_catalog() {
    static const std::vector<std::string> kinds{
        "zero",          "linear",        "linear_halfline", "sign",
        "power3",        "stefan",        "indicator_halfline",
        "indicator_interval", "box",      "ball",            "half_space",
        "laplacian_boundary"};
    return kinds;
}

inline const std::vector<std::string>& graph_catalog() {
    static const std::vector<std::string> names{
        "linear", "linear_halfline", "sign", "power3", "stefan",
        "indicator_halfline", "indicator_interval"};
    return names;
}

/// Fully resolved scenario; every field has a value after from_config.
struct Scenario {
    int schema = 1;
    std::string name = "scenario";

    // [space]
    int dim = 1;
    std::vector<double> weights;           // resolved to dim entries
    std::string xnorm = "same_as_h";       // same_as_h | spectral_smooth
    double smooth_s = 0.0;
    double gamma0 = 1.0;

    // [operator]
    std::string op_kind = "zero";
    std::vector<double> op_params;
    std::string boundary_graph = "sign";   // laplacian_boundary only
    double reaction_gain = 0.0;            // laplacian_boundary only
    double alpha = 0.0;
    double modulus = 0.0;
    double lip_f = 0.0;   // L1
    double growth_f = 0.0; // b1
    double lip_b = 0.0;   // L
    double growth_b = 0.0; // b

    // [input]
    std::vector<double> u0;
    std::string f_kind = "zero";           // zero | constant
    std::vector<double> f_value;
    std::string m_kind = "zero";           // zero | qwiener

    // [sde]
    double drift_gain = 0.0;               // f(t,u) = drift_const + drift_gain u
    std::vector<double> drift_const;
    std::string diffusion_kind = "constant"; // constant | linear_state
    double sigma = 0.0;

    // [qwiener]
    std::vector<double> eigenvalues;

    // [grid]
    double horizon = 1.0;
    long long steps = 100;

    // [ensemble]
    long long paths = 1;
    std::uint64_t seed = 0x1234;

    // [experiment]
    ExperimentType experiment = ExperimentType::SolveDet;
    std::string scheme = "prox";           // prox | penalized | msde
    double eps = 1e-2;
    std::vector<double> eps_sweep;
    std::vector<double> perturbations;
    std::vector<double> initials;          // scalars, broadcast to constant vectors
    double invariant_horizon = 8.0;
    double stationarity_gap = 2.0;
    std::optional<double> variance_target; // oracle hooks, checked when present
    double variance_rel_tol = 0.05;
    std::optional<double> ks_scale;
    double ks_tol = 0.02;
    std::vector<double> mollify_levels{4, 16, 64};
    double cauchy_tol = 1e-2;
    double picard_tol = 1e-6;

    // [audit]
    std::vector<double> audit_h0;
    double audit_r0 = 1.0;
    double audit_a1 = 1.0;
    double audit_a2 = 1.0;
    long long audit_samples = 512;

    // [tolerances]
    double identity_tol = 1e-9;
    double vi_tol = 1e-8;

    // [output]
    std::string out_dir = "out";

    static Scenario from_config(const config::Table& t);
    static Scenario from_text(const std::string& text) {
        return from_config(config::parse(text));
    }

    HSpace build_space() const;
    MonotoneOperator build_operator() const;
    QWienerSpec build_qwiener(const HSpace& space) const;
    DetProblem build_det_problem(const HSpace& space, const TimeGrid& grid) const;
    SdeProblem build_sde_problem(const HSpace& space) const;
    H1Audit audit_candidate() const;

    std::string canonical_text() const;
};

namespace detail {

inline std::string fmt_num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string fmt_list(const std::vector<double>& xs) {
    std::string out = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += fmt_num(xs[i]);
    }
    out += "]";
    return out;
}

inline Point to_point(const std::vector<double>& xs) {
    Point p(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) p[static_cast<Eigen::Index>(i)] = xs[i];
    return p;
}

inline std::vector<double> broadcast(std::vector<double> xs, int dim, const char* field) {
    if (xs.empty()) return std::vector<double>(dim, 0.0);
    if (xs.size() == 1) return std::vector<double>(dim, xs[0]);
    if (static_cast<int>(xs.size()) != dim)
        throw config::ConfigError(0, field, "expected 1 or dim entries");
    return xs;
}

inline Graph1D graph_by_name(const std::string& name, const std::vector<double>& params,
                             int line) {
    if (name == "linear") return graphs::linear(params.empty() ? 1.0 : params[0]);
    if (name == "linear_halfline")
        return graphs::linear_halfline(params.empty() ? 1.0 : params[0],
                                       params.size() > 1 ? params[1] : 0.0);
    if (name == "sign") return graphs::sign();
    if (name == "power3") return graphs::power3();
    if (name == "stefan") return graphs::stefan(params.empty() ? 1.0 : params[0]);
    if (name == "indicator_halfline")
        return graphs::indicator_halfline(params.empty() ? 0.0 : params[0]);
    if (name == "indicator_interval") {
        if (params.size() < 2)
            throw config::ConfigError(line, "operator.params",
                                      "indicator_interval needs [lo, hi]");
        return graphs::indicator_interval(params[0], params[1]);
    }
    throw config::ConfigError(line, "operator.graph", "unknown graph kind '" + name + "'");
}

} // namespace detail

inline Scenario Scenario::from_config(const config::Table& t) {
    Scenario s;
    s.schema = static_cast<int>(t.integer_or("schema", 1));
    if (s.schema != 1)
        throw config::ConfigError(t.line_of("schema"), "schema", "unsupported schema version");
    s.name = t.str_or("name", "scenario");

    s.dim = static_cast<int>(t.integer_or("space.dim", 1));
    if (s.dim <= 0)
        throw config::ConfigError(t.line_of("space.dim"), "space.dim", "dim must be positive");
    std::string wkind = t.str_or("space.weights_kind", "list");
    if (wkind == "trapezoid") {
        if (s.dim < 2)
            throw config::ConfigError(t.line_of("space.weights_kind"), "space.weights_kind",
                                      "trapezoid weights need dim >= 2");
        double dx = 1.0 / static_cast<double>(s.dim - 1);
        s.weights.assign(static_cast<std::size_t>(s.dim), dx);
        s.weights.front() = s.weights.back() = 0.5 * dx;
    } else if (wkind == "list") {
        s.weights = detail::broadcast(t.list_or("space.weights", {1.0}), s.dim, "space.weights");
    } else {
        throw config::ConfigError(t.line_of("space.weights_kind"), "space.weights_kind",
                                  "expected list or trapezoid");
    }
    s.xnorm = t.str_or("space.xnorm", "same_as_h");
    if (s.xnorm != "same_as_h" && s.xnorm != "spectral_smooth")
        throw config::ConfigError(t.line_of("space.xnorm"), "space.xnorm",
                                  "expected same_as_h or spectral_smooth");
    s.smooth_s = t.number_or("space.smooth_s", 0.0);
    s.gamma0 = t.number_or("space.gamma0", 1.0);

    s.op_kind = t.str_or("operator.kind", "zero");
    bool known = false;
    for (const auto& k : operator_kind_catalog()) known = known || k == s.op_kind;
    if (!known)
        throw config::ConfigError(t.line_of("operator.kind"), "operator.kind",
                                  "unknown operator kind '" + s.op_kind + "'");
    s.op_params = t.list_or("operator.params", {});
    s.boundary_graph = t.str_or("operator.boundary_graph", "sign");
    s.reaction_gain = t.number_or("operator.reaction_gain", 0.0);
    s.alpha = t.number_or("operator.alpha", 0.0);
    s.modulus = t.number_or("operator.modulus", 0.0);
    s.lip_f = t.number_or("operator.L1", 0.0);
    s.growth_f = t.number_or("operator.b1", 0.0);
    s.lip_b = t.number_or("operator.L", 0.0);
    s.growth_b = t.number_or("operator.b", 0.0);

    s.u0 = detail::broadcast(t.list_or("input.u0", {0.0}), s.dim, "input.u0");
    s.f_kind = t.str_or("input.f_kind", "zero");
    if (s.f_kind != "zero" && s.f_kind != "constant")
        throw config::ConfigError(t.line_of("input.f_kind"), "input.f_kind",
                                  "expected zero or constant");
    s.f_value = detail::broadcast(t.list_or("input.f_value", {0.0}), s.dim, "input.f_value");
    s.m_kind = t.str_or("input.m_kind", "zero");
    if (s.m_kind != "zero" && s.m_kind != "qwiener")
        throw config::ConfigError(t.line_of("input.m_kind"), "input.m_kind",
                                  "expected zero or qwiener");

    s.drift_gain = t.number_or("sde.drift_gain", 0.0);
    s.drift_const = detail::broadcast(t.list_or("sde.drift_const", {0.0}), s.dim,
                                      "sde.drift_const");
    s.diffusion_kind = t.str_or("sde.diffusion_kind", "constant");
    if (s.diffusion_kind != "constant" && s.diffusion_kind != "linear_state")
        throw config::ConfigError(t.line_of("sde.diffusion_kind"), "sde.diffusion_kind",
                                  "expected constant or linear_state");
    s.sigma = t.number_or("sde.sigma", 0.0);
    if (s.diffusion_kind == "linear_state" && s.dim != 1)
        throw config::ConfigError(t.line_of("sde.diffusion_kind"), "sde.diffusion_kind",
                                  "linear_state diffusion requires dim = 1");

    s.eigenvalues = t.list_or("qwiener.eigenvalues", {1.0});
    if (static_cast<int>(s.eigenvalues.size()) > s.dim)
        throw config::ConfigError(t.line_of("qwiener.eigenvalues"), "qwiener.eigenvalues",
                                  "more modes than space dimensions");

    s.horizon = t.number_or("grid.horizon", 1.0);
    if (!(s.horizon > 0.0))
        throw config::ConfigError(t.line_of("grid.horizon"), "grid.horizon",
                                  "horizon must be positive");
    s.steps = t.integer_or("grid.steps", 100);
    if (s.steps < 1)
        throw config::ConfigError(t.line_of("grid.steps"), "grid.steps",
                                  "steps must be >= 1");

    s.paths = t.integer_or("ensemble.paths", 1);
    if (s.paths < 1)
        throw config::ConfigError(t.line_of("ensemble.paths"), "ensemble.paths",
                                  "paths must be >= 1");
    s.seed = t.has("ensemble.seed") ? t.seed("ensemble.seed") : 0x1234;

    std::string exp = t.str_or("experiment.type", "solve_det");
    if (exp == "solve_det") s.experiment = ExperimentType::SolveDet;
    else if (exp == "solve_sde") s.experiment = ExperimentType::SolveSde;
    else if (exp == "convergence") s.experiment = ExperimentType::Convergence;
    else if (exp == "stability") s.experiment = ExperimentType::Stability;
    else if (exp == "invariant") s.experiment = ExperimentType::Invariant;
    else if (exp == "audit") s.experiment = ExperimentType::Audit;
    else
        throw config::ConfigError(t.line_of("experiment.type"), "experiment.type",
                                  "unknown experiment '" + exp + "'");

    s.scheme = t.str_or("experiment.scheme", "prox");
    if (s.scheme != "prox" && s.scheme != "penalized" && s.scheme != "msde")
        throw config::ConfigError(t.line_of("experiment.scheme"), "experiment.scheme",
                                  "expected prox, penalized or msde");
    s.eps = t.number_or("experiment.eps", 1e-2);
    s.eps_sweep = t.list_or("experiment.eps_sweep", {1e-1, 1e-2, 1e-3});
    s.perturbations = t.list_or("experiment.perturbations", {0.1, 0.05, 0.025});
    s.initials = t.list_or("experiment.initials", {0.0});
    s.invariant_horizon = t.number_or("experiment.invariant_horizon", 8.0);
    s.stationarity_gap = t.number_or("experiment.stationarity_gap", 2.0);
    if (t.has("experiment.variance_target"))
        s.variance_target = t.number("experiment.variance_target");
    s.variance_rel_tol = t.number_or("experiment.variance_rel_tol", 0.05);
    if (t.has("experiment.ks_scale")) s.ks_scale = t.number("experiment.ks_scale");
    s.ks_tol = t.number_or("experiment.ks_tol", 0.02);
    s.mollify_levels = t.list_or("experiment.mollify_levels", {4, 16, 64});
    s.cauchy_tol = t.number_or("experiment.cauchy_tol", 1e-2);
    s.picard_tol = t.number_or("experiment.picard_tol", 1e-6);

    s.audit_h0 = detail::broadcast(t.list_or("audit.h0", {0.0}), s.dim, "audit.h0");
    s.audit_r0 = t.number_or("audit.r0", 1.0);
    s.audit_a1 = t.number_or("audit.a1", 1.0);
    s.audit_a2 = t.number_or("audit.a2", 1.0);
    s.audit_samples = t.integer_or("audit.samples", 512);

    s.identity_tol = t.number_or("tolerances.identity", 1e-9);
    s.vi_tol = t.number_or("tolerances.vi", 1e-8);

    s.out_dir = t.str_or("output.dir", "out");
    return s;
}

inline HSpace Scenario::build_space() const {
    Eigen::VectorXd w = detail::to_point(weights);
    if (xnorm == "same_as_h") return HSpace(dim, w, gamma0);
    // spectral smoothing by the weighted discrete Laplacian K = W^{-1} L
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(dim, dim);
    double dx = dim > 1 ? 1.0 / static_cast<double>(dim - 1) : 1.0;
    for (int i = 0; i + 1 < dim; ++i) {
        l(i, i) += 1.0 / dx;
        l(i + 1, i + 1) += 1.0 / dx;
        l(i, i + 1) -= 1.0 / dx;
        l(i + 1, i) -= 1.0 / dx;
    }
    Eigen::MatrixXd k = w.cwiseInverse().asDiagonal() * l;
    return HSpace::spectral_smooth(dim, w, smooth_s, k, gamma0);
}

inline MonotoneOperator Scenario::build_operator() const {
    if (op_kind == "zero") return MonotoneOperator::zero(alpha);
    if (op_kind == "box") {
        if (static_cast<int>(op_params.size()) != 2 * dim)
            throw config::ConfigError(0, "operator.params", "box needs [lo..., hi...]");
        std::vector<double> lo(op_params.begin(), op_params.begin() + dim);
        std::vector<double> hi(op_params.begin() + dim, op_params.end());
        return MonotoneOperator::indicator(
            ConvexSetSpec::box(detail::to_point(lo), detail::to_point(hi)), alpha);
    }
    if (op_kind == "ball") {
        if (static_cast<int>(op_params.size()) != dim + 1)
            throw config::ConfigError(0, "operator.params", "ball needs [center..., radius]");
        std::vector<double> c(op_params.begin(), op_params.begin() + dim);
        return MonotoneOperator::indicator(
            ConvexSetSpec::ball(detail::to_point(c), op_params.back()), alpha);
    }
    if (op_kind == "half_space") {
        if (static_cast<int>(op_params.size()) != dim + 1)
            throw config::ConfigError(0, "operator.params",
                                      "half_space needs [normal..., offset]");
        std::vector<double> n(op_params.begin(), op_params.begin() + dim);
        return MonotoneOperator::indicator(
            ConvexSetSpec::half_space(detail::to_point(n), op_params.back()), alpha);
    }
    if (op_kind == "laplacian_boundary") {
        Graph1D boundary = detail::graph_by_name(boundary_graph, {}, 0);
        double gain = reaction_gain;
        return MonotoneOperator::laplacian_boundary(
            dim, std::move(boundary),
            [gain](double r) { return gain * std::tanh(r); }, alpha);
    }
    // componentwise scalar graphs
    return MonotoneOperator::scalar_graph(detail::graph_by_name(op_kind, op_params, 0),
                                          alpha, modulus);
}

inline QWienerSpec Scenario::build_qwiener(const HSpace& space) const {
    return QWienerSpec::coordinate(space, detail::to_point(eigenvalues));
}

inline DetProblem Scenario::build_det_problem(const HSpace& space, const TimeGrid& grid) const {
    Point u0p = detail::to_point(u0);
    HPath f = f_kind == "constant" ? HPath::constant(grid, detail::to_point(f_value))
                                   : HPath::zero(grid, dim);
    HPath m = HPath::zero(grid, dim);
    if (m_kind == "qwiener") {
        SamplePath w = sample_qwiener(build_qwiener(space), grid, RngSeed{seed, 0});
        m = HPath(grid, w.values);
    }
    return DetProblem(space, build_operator(), std::move(u0p), std::move(f), std::move(m));
}

inline SdeProblem Scenario::build_sde_problem(const HSpace& space) const {
    QWienerSpec spec = build_qwiener(space);
    double gain = drift_gain;
    Point fconst = detail::to_point(drift_const);
    DiffusionCoefficient diff;
    if (diffusion_kind == "constant") {
        Eigen::MatrixXd b0 = Eigen::MatrixXd::Zero(dim, spec.modes());
        for (int i = 0; i < std::min<int>(dim, spec.modes()); ++i) b0(i, i) = sigma;
        double q = 0.0;
        for (int i = 0; i < spec.modes(); ++i)
            q += spec.eigenvalues[i] * space.inner(b0.col(i), b0.col(i));
        diff = DiffusionCoefficient::constant(std::move(b0), q);
    } else {
        double sig = sigma;
        double lam = spec.eigenvalues[0];
        diff = DiffusionCoefficient{
            [sig](double, const Point& u) { return Eigen::MatrixXd(sig * u); },
            sig * sig * lam, sig * sig * lam};
    }
    // declared constants may only tighten upward on the structural ones
    double fconst_h2 = space.inner(fconst, fconst);
    diff.lipschitz = std::max(diff.lipschitz, lip_b);
    diff.growth = std::max(diff.growth, growth_b);
    return SdeProblem{space,
                      build_operator(),
                      detail::to_point(u0),
                      [gain, fconst](double, const Point& u) { return Point(fconst + gain * u); },
                      std::max(std::abs(gain), lip_f),
                      std::max(growth_f, 2.0 * std::max(fconst_h2, gain * gain)),
                      std::move(diff),
                      std::move(spec),
                      horizon};
}

inline H1Audit Scenario::audit_candidate() const {
    H1Audit a;
    a.h0 = detail::to_point(audit_h0);
    a.r0 = audit_r0;
    a.a1 = audit_a1;
    a.a2 = audit_a2;
    return a;
}

inline std::string Scenario::canonical_text() const {
    using detail::fmt_list;
    using detail::fmt_num;
    std::ostringstream os;
    os << "schema = " << schema << "\n";
    os << "name = \"" << name << "\"\n\n";
    os << "[space]\n";
    os << "dim = " << dim << "\n";
    os << "weights = " << fmt_list(weights) << "\n";
    os << "xnorm = \"" << xnorm << "\"\n";
    os << "smooth_s = " << fmt_num(smooth_s) << "\n";
    os << "gamma0 = " << fmt_num(gamma0) << "\n\n";
    os << "[operator]\n";
    os << "kind = \"" << op_kind << "\"\n";
    os << "params = " << fmt_list(op_params) << "\n";
    os << "boundary_graph = \"" << boundary_graph << "\"\n";
    os << "reaction_gain = " << fmt_num(reaction_gain) << "\n";
    os << "alpha = " << fmt_num(alpha) << "\n";
    os << "modulus = " << fmt_num(modulus) << "\n";
    os << "L1 = " << fmt_num(lip_f) << "\n";
    os << "b1 = " << fmt_num(growth_f) << "\n";
    os << "L = " << fmt_num(lip_b) << "\n";
    os << "b = " << fmt_num(growth_b) << "\n\n";
    os << "[input]\n";
    os << "u0 = " << fmt_list(u0) << "\n";
    os << "f_kind = \"" << f_kind << "\"\n";
    os << "f_value = " << fmt_list(f_value) << "\n";
    os << "m_kind = \"" << m_kind << "\"\n\n";
    os << "[sde]\n";
    os << "drift_gain = " << fmt_num(drift_gain) << "\n";
    os << "drift_const = " << fmt_list(drift_const) << "\n";
    os << "diffusion_kind = \"" << diffusion_kind << "\"\n";
    os << "sigma = " << fmt_num(sigma) << "\n\n";
    os << "[qwiener]\n";
    os << "eigenvalues = " << fmt_list(eigenvalues) << "\n\n";
    os << "[grid]\n";
    os << "horizon = " << fmt_num(horizon) << "\n";
    os << "steps = " << steps << "\n\n";
    os << "[ensemble]\n";
    os << "paths = " << paths << "\n";
    {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "0x%" PRIx64, seed);
        os << "seed = \"" << buf << "\"\n\n";
    }
    os << "[experiment]\n";
    os << "type = \"" << experiment_name(experiment) << "\"\n";
    os << "scheme = \"" << scheme << "\"\n";
    os << "eps = " << fmt_num(eps) << "\n";
    os << "eps_sweep = " << fmt_list(eps_sweep) << "\n";
    os << "perturbations = " << fmt_list(perturbations) << "\n";
    os << "initials = " << fmt_list(initials) << "\n";
    os << "invariant_horizon = " << fmt_num(invariant_horizon) << "\n";
    os << "stationarity_gap = " << fmt_num(stationarity_gap) << "\n";
    if (variance_target) os << "variance_target = " << fmt_num(*variance_target) << "\n";
    os << "variance_rel_tol = " << fmt_num(variance_rel_tol) << "\n";
    if (ks_scale) os << "ks_scale = " << fmt_num(*ks_scale) << "\n";
    os << "ks_tol = " << fmt_num(ks_tol) << "\n";
    os << "mollify_levels = " << fmt_list(mollify_levels) << "\n";
    os << "cauchy_tol = " << fmt_num(cauchy_tol) << "\n";
    os << "picard_tol = " << fmt_num(picard_tol) << "\n\n";
    os << "[audit]\n";
    os << "h0 = " << fmt_list(audit_h0) << "\n";
    os << "r0 = " << fmt_num(audit_r0) << "\n";
    os << "a1 = " << fmt_num(audit_a1) << "\n";
    os << "a2 = " << fmt_num(audit_a2) << "\n";
    os << "samples = " << audit_samples << "\n\n";
    os << "[tolerances]\n";
    os << "identity = " << fmt_num(identity_tol) << "\n";
    os << "vi = " << fmt_num(vi_tol) << "\n\n";
    os << "[output]\n";
    os << "dir = \"" << out_dir << "\"\n";
    return os.str();
}

} // namespace proxde
