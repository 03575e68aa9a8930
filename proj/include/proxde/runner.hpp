#pragma once

#include "proxde/scenario.hpp"
#include "proxde/version.hpp"

#include <json.hpp>

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace proxde {

struct RunOutcome {
    int exit_code = 0; // 0 ok, 1 check failure, 2 config error, 3 numerical abort
    nlohmann::ordered_json summary;
    std::vector<std::string> artifacts;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("failed to write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string csv_cell(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string series_csv(const GenSolution& sol) {
    std::string out = "t";
    int d = sol.u.dim();
    for (int i = 0; i < d; ++i) out += ",u_" + std::to_string(i);
    for (int i = 0; i < d; ++i) out += ",eta_" + std::to_string(i);
    out += "\n";
    for (std::size_t k = 0; k < sol.u.size(); ++k) {
        out += csv_cell(sol.u.grid.t[k]);
        for (int i = 0; i < d; ++i) out += "," + csv_cell(sol.u.values[k][i]);
        for (int i = 0; i < d; ++i) out += "," + csv_cell(sol.eta.values[k][i]);
        out += "\n";
    }
    return out;
}

struct CheckSet {
    std::map<std::string, bool> checks;
    std::map<std::string, double> estimates;

    bool all_pass() const {
        for (const auto& [k, v] : checks)
            if (!v) return false;
        return true;
    }
};

inline void run_solve_det(const Scenario& s, CheckSet& out, std::string& series) {
    TimeGrid grid = TimeGrid::uniform(s.horizon, static_cast<std::size_t>(s.steps));
    HSpace space = s.build_space();
    DetProblem problem = s.build_det_problem(space, grid);

    GdOptions opts;
    opts.mollify_levels.clear();
    for (double l : s.mollify_levels) opts.mollify_levels.push_back(static_cast<int>(l));
    opts.scheme = s.scheme == "penalized" ? DetScheme::Penalized : DetScheme::Prox;
    opts.penalize_eps = s.eps;
    opts.cauchy_tol = s.cauchy_tol;
    GenSolution sol = solve_gd(problem, grid, opts);

    out.estimates["bv_eta_xstar"] = sol.bv_eta_xstar;
    out.estimates["identity_residual"] = sol.residual_identity;
    double cauchy = sol.diagnostics.at("cauchy_gap");
    out.estimates["cauchy_gap"] = std::isfinite(cauchy) ? cauchy
                                                        : sol.diagnostics.at("limit_gap");
    out.estimates["u_final_norm"] = space.h_norm(sol.u.values.back());
    out.estimates["u_final_0"] = sol.u.values.back()[0];
    out.checks["identity"] = sol.residual_identity <= s.identity_tol;

    if (opts.scheme == DetScheme::Prox) {
        auto pairs = sample_graph_points(space, problem.op, 32, RngSeed{s.seed, 0xABCD});
        ViReport vi = verify_vi(space, problem.op, sol, pairs, s.vi_tol);
        out.estimates["vi_certificate"] = vi.min_certificate;
        out.checks["variational_inequality"] = vi.pass;
    }
    series = series_csv(sol);
}

inline void run_solve_sde(const Scenario& s, CheckSet& out, std::string& series) {
    TimeGrid grid = TimeGrid::uniform(s.horizon, static_cast<std::size_t>(s.steps));
    HSpace space = s.build_space();
    SdeProblem problem = s.build_sde_problem(space);
    problem.validate_constants(grid);
    const std::size_t n = static_cast<std::size_t>(s.paths);

    std::vector<GenSolutionStoch> paths;
    if (s.scheme == "msde") {
        MsdeResult res = solve_msde(problem, grid, n, RngSeed{s.seed, 0}, s.picard_tol);
        out.estimates["picard_iters"] = res.picard_iters;
        out.estimates["contraction_ratio"] = res.contraction_ratio;
        out.checks["contraction"] = !res.contraction_suspect;
        paths = std::move(res.paths);
    } else if (s.scheme == "penalized") {
        paths.resize(n);
        parallel_for(n, [&](std::size_t i) {
            paths[i] = solve_sde_penalized(problem, s.eps, grid, RngSeed{s.seed, i});
        });
    } else {
        paths.resize(n);
        parallel_for(n, [&](std::size_t i) {
            paths[i] = solve_sde_prox(problem, grid, RngSeed{s.seed, i});
        });
    }

    std::vector<double> sup_sq(paths.size()), bv(paths.size());
    double id_max = 0.0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        double m = 0.0;
        for (const auto& v : paths[i].sol.u.values)
            m = std::max(m, space.inner(v, v));
        sup_sq[i] = m;
        bv[i] = paths[i].sol.bv_eta_xstar;
        id_max = std::max(id_max, paths[i].sol.residual_identity);
    }
    Estimate e_sup = detail::mean_estimate(sup_sq);
    Estimate e_bv = detail::mean_estimate(bv);
    double denom = 1.0 + space.inner(problem.u0, problem.u0);
    out.estimates["moment_ratio"] = e_sup.value / denom;
    out.estimates["moment_ratio_stderr"] = e_sup.std_error / denom;
    out.estimates["bv_mean"] = e_bv.value;
    out.estimates["bv_mean_stderr"] = e_bv.std_error;
    out.estimates["moment_bv_ratio"] = (e_sup.value + e_bv.value) / denom;
    out.estimates["identity_residual_max"] = id_max;
    out.checks["identity"] = id_max <= s.identity_tol;
    out.checks["moment_finite"] = std::isfinite(out.estimates["moment_bv_ratio"]);
    series = series_csv(paths.front().sol);
}

inline void run_convergence(const Scenario& s, CheckSet& out, std::string& series) {
    HSpace space = s.build_space();
    std::vector<double> gaps;
    series = "eps,sup_gap\n";
    for (double eps : s.eps_sweep) {
        std::size_t steps = static_cast<std::size_t>(std::ceil(s.horizon / (eps / 4.0)));
        TimeGrid grid = TimeGrid::uniform(s.horizon, steps);
        DetProblem problem = s.build_det_problem(space, grid);
        GenSolution pen = solve_penalized(problem, eps, grid);
        GenSolution prox = solve_prox(problem, grid);
        double gap = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k)
            gap = std::max(gap, space.h_norm(pen.u.values[k] - prox.u.values[k]));
        gaps.push_back(gap);
        series += csv_cell(eps) + "," + csv_cell(gap) + "\n";
        out.estimates["gap_eps_" + std::to_string(gaps.size())] = gap;
    }
    bool decreasing = true;
    for (std::size_t i = 0; i + 1 < gaps.size(); ++i)
        decreasing = decreasing && gaps[i + 1] < gaps[i];
    out.checks["eps_convergence"] = decreasing;
}

inline void run_stability(const Scenario& s, CheckSet& out, std::string& series) {
    TimeGrid grid = TimeGrid::uniform(s.horizon, static_cast<std::size_t>(s.steps));
    HSpace space = s.build_space();
    DetProblem base = s.build_det_problem(space, grid);
    GenSolution base_sol = solve_prox(base, grid);

    std::vector<double> fitted;
    series = "delta,lhs,rhs_total,fitted_constant\n";
    for (double delta : s.perturbations) {
        DetProblem pert(base.space, base.op, base.u0 + Point::Constant(s.dim, delta), base.f,
                        base.m);
        GenSolution pert_sol = solve_prox(pert, grid);
        StabilityPairReport rep = check_stability_pair(space, base_sol, pert_sol, base, pert);
        fitted.push_back(rep.fitted_constant);
        series += csv_cell(delta) + "," + csv_cell(rep.lhs) + "," + csv_cell(rep.rhs_total())
                + "," + csv_cell(rep.fitted_constant) + "\n";
    }
    for (std::size_t i = 0; i < fitted.size(); ++i)
        out.estimates["fitted_constant_" + std::to_string(i + 1)] = fitted[i];
    out.checks["fitted_constant_stable"] = stable_within_factor(fitted, 4.0);
}

inline void run_invariant(const Scenario& s, CheckSet& out, std::string& series) {
    HSpace space = s.build_space();
    SdeProblem problem = s.build_sde_problem(space);
    std::vector<Point> initials;
    for (double x : s.initials) initials.push_back(Point::Constant(s.dim, x));
    double step = s.horizon / static_cast<double>(s.steps);
    InvariantMeasureReport rep = estimate_invariant_measure(
        problem, initials, s.invariant_horizon, step, static_cast<std::size_t>(s.paths),
        RngSeed{s.seed, 0}, s.stationarity_gap);

    out.estimates["noise_floor"] = rep.noise_floor;
    out.estimates["stationarity_distance"] = rep.stationarity_distance;
    out.estimates["max_domain_defect"] = rep.max_domain_defect;
    for (std::size_t i = 0; i < rep.cross_distances.size(); ++i)
        out.estimates["cross_distance_" + std::to_string(i + 1)] = rep.cross_distances[i];
    out.checks["stationary"] = rep.stationary_pass;
    out.checks["cross_initial"] = rep.cross_initial_pass;
    out.checks["domain"] = rep.max_domain_defect <= 1e-6;

    const EmpiricalMeasure& m0 = rep.measures.front();
    double mean = m0.mean[0];
    double var = m0.second_moment[0] - mean * mean;
    out.estimates["mean_0"] = mean;
    out.estimates["variance_0"] = var;
    if (s.variance_target)
        out.checks["variance_oracle"] =
            std::abs(var - *s.variance_target) <= s.variance_rel_tol * *s.variance_target;
    if (s.ks_scale) {
        std::vector<double> xs;
        xs.reserve(m0.samples.size());
        for (const auto& p : m0.samples) xs.push_back(p[0]);
        std::sort(xs.begin(), xs.end());
        double ks = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double f = xs[i] <= 0.0 ? 0.0 : std::erf(xs[i] / (*s.ks_scale * std::sqrt(2.0)));
            ks = std::max(ks, std::max(std::abs(f - static_cast<double>(i) / xs.size()),
                                       std::abs(f - static_cast<double>(i + 1) / xs.size())));
        }
        out.estimates["ks_statistic"] = ks;
        out.checks["ks_oracle"] = ks <= s.ks_tol;
    }

    series = "sample";
    for (int i = 1; i < s.dim; ++i) series += ",c" + std::to_string(i);
    series += "\n";
    std::size_t cap = std::min<std::size_t>(m0.samples.size(), 10000);
    for (std::size_t i = 0; i < cap; ++i) {
        for (int c = 0; c < s.dim; ++c)
            series += (c ? "," : "") + csv_cell(m0.samples[i][c]);
        series += "\n";
    }
}

inline void run_audit(const Scenario& s, CheckSet& out, std::string& series) {
    HSpace space = s.build_space();
    MonotoneOperator op = s.build_operator();
    H1Audit audit = audit_h1(space, op, s.audit_candidate(),
                             static_cast<std::size_t>(s.audit_samples), RngSeed{s.seed, 1});
    out.estimates["worst_violation"] = audit.worst_violation;
    out.estimates["samples"] = static_cast<double>(audit.sample_count);
    out.checks["h1_feasible"] = audit.feasible();
    series = "r0,a1,a2,worst_violation\n";
    series += csv_cell(audit.r0) + "," + csv_cell(audit.a1) + "," + csv_cell(audit.a2) + ","
            + csv_cell(audit.worst_violation) + "\n";
}

} // namespace detail

/// Executes the scenario and writes <name>.series.csv, <name>.summary.json and
/// <name>.provenance.json under the output directory.  Exit code 0 iff all
/// declared checks pass, 1 on a failed check, 3 on a numerical abort.
inline RunOutcome run_scenario(const Scenario& s, const std::string& out_dir_override = "",
                               bool audit_only = false) {
    namespace fs = std::filesystem;
    RunOutcome outcome;
    detail::CheckSet checks;
    std::string series;
    std::string error;

    try {
        if (audit_only) {
            detail::run_audit(s, checks, series);
        } else {
            switch (s.experiment) {
                case ExperimentType::SolveDet: detail::run_solve_det(s, checks, series); break;
                case ExperimentType::SolveSde: detail::run_solve_sde(s, checks, series); break;
                case ExperimentType::Convergence: detail::run_convergence(s, checks, series); break;
                case ExperimentType::Stability: detail::run_stability(s, checks, series); break;
                case ExperimentType::Invariant: detail::run_invariant(s, checks, series); break;
                case ExperimentType::Audit: detail::run_audit(s, checks, series); break;
            }
        }
    } catch (const std::runtime_error& e) {
        // blowup guard, resolvent failure, non-Cauchy certificates
        outcome.exit_code = 3;
        error = e.what();
    }

    std::string canonical = s.canonical_text();
    std::uint64_t hash = detail::fnv1a(canonical);

    nlohmann::ordered_json summary;
    summary["name"] = s.name;
    summary["experiment"] = audit_only ? "audit" : experiment_name(s.experiment);
    if (!error.empty()) summary["error"] = error;
    nlohmann::ordered_json jchecks = nlohmann::ordered_json::object();
    for (const auto& [k, v] : checks.checks) jchecks[k] = v;
    summary["checks"] = jchecks;
    nlohmann::ordered_json jest = nlohmann::ordered_json::object();
    for (const auto& [k, v] : checks.estimates) jest[k] = v;
    summary["estimates"] = jest;
    summary["resolved_config"] = canonical;
    outcome.summary = summary;

    if (outcome.exit_code == 0 && !checks.all_pass()) outcome.exit_code = 1;

    fs::path dir = out_dir_override.empty() ? fs::path(s.out_dir) : fs::path(out_dir_override);
    fs::create_directories(dir);
    fs::path series_path = dir / (s.name + ".series.csv");
    fs::path summary_path = dir / (s.name + ".summary.json");
    fs::path prov_path = dir / (s.name + ".provenance.json");

    if (!series.empty()) {
        detail::atomic_write(series_path, series);
        outcome.artifacts.push_back(series_path.string());
    }
    detail::atomic_write(summary_path, summary.dump(2) + "\n");
    outcome.artifacts.push_back(summary_path.string());

    nlohmann::ordered_json prov;
    char hashbuf[32], seedbuf[32];
    std::snprintf(hashbuf, sizeof(hashbuf), "0x%016" PRIx64, hash);
    std::snprintf(seedbuf, sizeof(seedbuf), "0x%" PRIx64, s.seed);
    prov["version"] = std::string("proxde ") + kVersion;
    prov["schema"] = s.schema;
    prov["config_hash"] = hashbuf;
    prov["seed"] = seedbuf;
    detail::atomic_write(prov_path, prov.dump(2) + "\n");
    outcome.artifacts.push_back(prov_path.string());

    return outcome;
}

} // namespace proxde
