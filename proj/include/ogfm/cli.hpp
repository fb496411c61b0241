#pragma once

// Command-line front end: fit, cv, path and simulate subcommands. Requires
// CLI11 on the include path.

#include "ogfm/io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace ogfm::cli {

struct RunConfig
{
    std::string command;
    std::string x_path;
    std::string y_path;
    std::string groups_path;
    std::string scenario_path;
    std::string out_dir = ".";
    std::optional<double> lambda;
    std::optional<double> alpha;
    std::string alphas;
    bool adaptive = false;
    double gamma1 = 1.0;
    double gamma2 = 1.0;
    Index n_lambda = 50;
    std::optional<double> lambda_min_ratio;
    Index kfolds = 10;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    bool no_standardize = false;
    bool one_se = false;
    bool no_timing = false;
    Index max_iter = 5000;
    double eps = 1e-5;
};

inline unsigned default_threads()
{
    if (const char* env = std::getenv("OGFM_THREADS"); env && *env) {
        const auto v = io_detail::to_integer(env);
        if (!v || *v < 0)
            throw Error("OGFM_THREADS must be a nonnegative integer");
        return static_cast<unsigned>(*v);
    }
    return 0;
}

struct LoadedProblem
{
    ProblemData data;
    OutcomeGrouping grouping;
};

inline LoadedProblem load_problem(const RunConfig& rc)
{
    Design x = parse_matrix(rc.x_path);
    const Design y = parse_matrix(rc.y_path);
    if (x.rows() != y.rows())
        throw Error("--x has " + std::to_string(x.rows()) + " rows but --y has " + std::to_string(y.rows()));
    StandardizeOptions so;
    if (rc.no_standardize)
        so.scale_x = false;
    LoadedProblem lp;
    lp.data = ProblemData::make(std::move(x), y.to_dense(), so);
    lp.grouping = rc.groups_path.empty() ? build_grouping(lp.data.k(), {})
                                         : grouping_from_spec(lp.data.k(), parse_group_spec(rc.groups_path));
    return lp;
}

inline PenaltyConfig penalty_from(const RunConfig& rc)
{
    PenaltyConfig cfg;
    cfg.adaptive = rc.adaptive;
    cfg.gamma1 = rc.gamma1;
    cfg.gamma2 = rc.gamma2;
    if (rc.lambda)
        cfg.lambda = *rc.lambda;
    if (rc.alpha)
        cfg.alpha = *rc.alpha;
    return cfg;
}

inline SolverOptions solver_from(const RunConfig& rc)
{
    SolverOptions opts;
    opts.max_iter = rc.max_iter;
    opts.eps_abs = opts.eps_rel = rc.eps;
    return opts;
}

inline PathSpec path_spec_from(const RunConfig& rc)
{
    PathSpec spec;
    spec.n_lambda = rc.n_lambda;
    spec.lambda_min_ratio = rc.lambda_min_ratio;
    if (!rc.alphas.empty())
        spec.alphas = parse_real_list(rc.alphas, "--alphas");
    else if (rc.alpha)
        spec.alphas = {*rc.alpha};
    spec.validate();
    return spec;
}

inline void require(bool ok, const std::string& what)
{
    if (!ok)
        throw Error(what);
}

inline void check_inputs(const RunConfig& rc)
{
    require(!rc.x_path.empty(), rc.command + " requires --x");
    require(!rc.y_path.empty(), rc.command + " requires --y");
    require(rc.gamma1 >= 0.0 && rc.gamma2 >= 0.0, "--gamma1 and --gamma2 must be nonnegative");
}

inline int cmd_fit(const RunConfig& rc, std::ostream& out)
{
    check_inputs(rc);
    require(rc.lambda.has_value(), "fit requires --lambda");
    require(rc.alphas.empty(), "fit takes --alpha, not --alphas");
    const auto lp = load_problem(rc);
    PenaltyConfig cfg = with_weights(penalty_from(rc), lp.data, lp.grouping);
    const FitResult r = fit(lp.data, lp.grouping, cfg, solver_from(rc));
    OutputSet files(rc.out_dir);
    files.add("coefficients.csv", coefficients_csv(r.coef));
    files.add("fit_summary.txt", fit_summary_text(r));
    files.commit();
    out << "objective " << format_real(r.objective) << ", iterations " << r.iterations << ", support "
        << r.support.size() << ", fused pairs " << r.fused.size() << (r.converged ? "" : " (not converged)") << '\n';
    return 0;
}

inline CVResult run_cv(const RunConfig& rc, const LoadedProblem& lp)
{
    require(!rc.lambda.has_value(), rc.command + " chooses lambda itself; --lambda is not accepted");
    require(rc.kfolds >= 2, "--kfolds must be at least 2");
    return cross_validate(lp.data, lp.grouping, penalty_from(rc), path_spec_from(rc), rc.kfolds, rc.seed.value_or(1),
                          solver_from(rc), resolve_threads(rc.threads));
}

inline int cmd_cv(const RunConfig& rc, std::ostream& out)
{
    check_inputs(rc);
    const auto lp = load_problem(rc);
    const CVResult cv = run_cv(rc, lp);
    const CVPoint& pick = rc.one_se ? cv.best_1se : cv.best;
    const FitResult r = refit(lp.data, lp.grouping, penalty_from(rc), pick, solver_from(rc));
    OutputSet files(rc.out_dir);
    files.add("cv_table.csv", cv_table_csv(cv));
    files.add("cv_summary.txt", cv_summary_text(cv, rc.one_se));
    files.add("coefficients.csv", coefficients_csv(r.coef));
    files.add("fit_summary.txt", fit_summary_text(r));
    files.commit();
    out << "selected lambda " << format_real(pick.lambda) << ", alpha " << format_real(pick.alpha) << ", cv mse "
        << format_real(pick.mean_mse) << '\n';
    return 0;
}

inline int cmd_path(const RunConfig& rc, std::ostream& out)
{
    check_inputs(rc);
    const auto lp = load_problem(rc);
    const CVResult cv = run_cv(rc, lp);
    PenaltyConfig cfg = with_weights(penalty_from(rc), lp.data, lp.grouping);
    const PathResult path = fit_path(lp.data, lp.grouping, cfg, cv.grids, solver_from(rc), resolve_threads(rc.threads));
    OutputSet files(rc.out_dir);
    files.add("path_long.csv", path_long_csv(path, rc.one_se ? cv.best_1se : cv.best));
    files.add("cv_table.csv", cv_table_csv(cv));
    files.commit();
    out << "path: " << path.grids.size() << " alpha values x " << (path.grids.empty() ? 0 : path.grids[0].lambdas.size())
        << " lambda values, " << path.nonconverged << " not converged\n";
    return 0;
}

inline int cmd_simulate(const RunConfig& rc, std::ostream& out)
{
    require(!rc.scenario_path.empty(), "simulate requires --scenario");
    SimulationScenario sc = parse_scenario(rc.scenario_path);
    if (rc.seed)
        sc.seed = *rc.seed;
    const auto rows = run_scenario(sc, sc.methods, sc.reps, sc.seed, resolve_threads(rc.threads), !rc.no_timing,
                                   solver_from(rc));
    OutputSet files(rc.out_dir);
    files.add("simulation.csv", simulation_table_csv(rows));
    files.commit();
    for (const auto& m : sc.methods) {
        double rmse = 0.0, ba = 0.0;
        Index cnt = 0;
        for (const auto& r : rows)
            if (r.method == m) {
                rmse += r.rmse;
                ba += r.balanced_accuracy;
                ++cnt;
            }
        if (cnt > 0)
            out << m << ": mean rmse " << format_real(rmse / cnt) << ", mean balanced accuracy "
                << format_real(ba / cnt) << '\n';
    }
    return 0;
}

// Parses argv and runs one subcommand. Diagnostics go to `err` as one line.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    RunConfig rc;
    CLI::App app{"Multivariate regression with overlapping group lasso and fused lasso penalties"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "ogfm 0.1.0");

    auto add_data = [&](CLI::App* c) {
        c->add_option("--x", rc.x_path, "Design matrix file (dense text or %%sparse triplets)");
        c->add_option("--y", rc.y_path, "Response matrix file");
        c->add_option("--groups", rc.groups_path, "Outcome group specification file");
        c->add_flag("--adaptive", rc.adaptive, "Use adaptive penalty weights");
        c->add_option("--gamma1", rc.gamma1, "Adaptive weight exponent for group terms");
        c->add_option("--gamma2", rc.gamma2, "Adaptive weight exponent for fused terms");
        c->add_flag("--no-standardize", rc.no_standardize, "Do not scale X columns");
        c->add_option("--max-iter", rc.max_iter, "ADMM iteration limit");
        c->add_option("--tol", rc.eps, "ADMM absolute and relative tolerance");
        c->add_option("--out", rc.out_dir, "Output directory");
        c->add_option("--threads", rc.threads, "Worker threads (0 = all cores)");
    };
    auto add_grid = [&](CLI::App* c) {
        c->add_option("--alpha", rc.alpha, "Single alpha value");
        c->add_option("--alphas", rc.alphas, "Comma-separated alpha grid");
        c->add_option("--nlambda", rc.n_lambda, "Number of lambda values");
        c->add_option("--lambda-min-ratio", rc.lambda_min_ratio, "Smallest lambda as a fraction of lambda_max");
        c->add_option("--kfolds", rc.kfolds, "Cross-validation folds");
        c->add_option("--seed", rc.seed, "Fold assignment seed");
        c->add_flag("--one-se", rc.one_se, "Select by the one-standard-error rule");
        c->add_option("--lambda", rc.lambda, "Not accepted; present for a clear diagnostic");
    };

    CLI::App* fit_cmd = app.add_subcommand("fit", "Fit at one (lambda, alpha)");
    add_data(fit_cmd);
    fit_cmd->add_option("--lambda", rc.lambda, "Penalty level");
    fit_cmd->add_option("--alpha", rc.alpha, "Fused share of the penalty in [0, 1]");
    fit_cmd->add_option("--alphas", rc.alphas, "Not accepted by fit");

    CLI::App* cv_cmd = app.add_subcommand("cv", "Cross-validate over a (lambda, alpha) grid and refit");
    add_data(cv_cmd);
    add_grid(cv_cmd);

    CLI::App* path_cmd = app.add_subcommand("path", "Export the coefficient path with the CV choice marked");
    add_data(path_cmd);
    add_grid(path_cmd);

    CLI::App* sim_cmd = app.add_subcommand("simulate", "Run a simulation scenario");
    sim_cmd->add_option("--scenario", rc.scenario_path, "Scenario file of key=value lines");
    sim_cmd->add_option("--seed", rc.seed, "Override the scenario seed");
    sim_cmd->add_option("--threads", rc.threads, "Worker threads (0 = all cores)");
    sim_cmd->add_option("--out", rc.out_dir, "Output directory");
    sim_cmd->add_flag("--no-timing", rc.no_timing, "Write 0 in the seconds column");

    try {
        rc.threads = default_threads();
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "ogfm: error: " << e.what() << '\n';
        return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
    } catch (const std::exception& e) {
        err << "ogfm: error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (fit_cmd->parsed()) {
            rc.command = "fit";
            return cmd_fit(rc, out);
        }
        if (cv_cmd->parsed()) {
            rc.command = "cv";
            return cmd_cv(rc, out);
        }
        if (path_cmd->parsed()) {
            rc.command = "path";
            return cmd_path(rc, out);
        }
        rc.command = "simulate";
        return cmd_simulate(rc, out);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "ogfm: error: " << msg << '\n';
        return 1;
    }
}

} // namespace ogfm::cli
