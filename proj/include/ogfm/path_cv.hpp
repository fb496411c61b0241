#pragma once

// Regularization paths over (lambda, alpha) grids, k-fold cross-validation,
// model selection and prediction.

#include "ogfm/admm.hpp"
#include "ogfm/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace ogfm {

// Number of worker threads; 0 means all available cores.
inline unsigned resolve_threads(unsigned requested)
{
    if (requested > 0)
        return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. Results must be
// written by index; the first exception (lowest index) is rethrown.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn)
{
    threads = std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(std::max<std::size_t>(count, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back(worker);
    for (auto& th : pool)
        th.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

struct PathSpec
{
    Index n_lambda = 50;
    std::optional<double> lambda_min_ratio; // 1e-3 when n > p, 1e-2 otherwise
    std::vector<double> alphas{0.0, 1e-5, 1e-3, 1e-2, 0.1, 0.5};
    std::optional<double> lambda_max;       // explicit grid head
    int lambda_max_refine = 6;              // bisection steps below the verified head

    double ratio_for(Index n, Index p) const
    {
        if (lambda_min_ratio)
            return *lambda_min_ratio;
        return n > p ? 1e-3 : 1e-2;
    }

    void validate() const
    {
        if (n_lambda < 1)
            throw Error("n_lambda must be at least 1");
        if (lambda_min_ratio && !(*lambda_min_ratio > 0.0 && *lambda_min_ratio < 1.0))
            throw Error("lambda_min_ratio must lie in (0, 1)");
        if (alphas.empty())
            throw Error("alpha grid is empty");
        for (double a : alphas)
            if (!(a >= 0.0 && a <= 1.0))
                throw Error("alpha values must lie in [0, 1]");
        if (lambda_max && !(*lambda_max >= 0.0 && std::isfinite(*lambda_max)))
            throw Error("lambda_max must be finite and nonnegative");
        if (lambda_max_refine < 0)
            throw Error("lambda_max_refine must be nonnegative");
    }
};

struct LambdaGrid
{
    double alpha = 0.0;
    double lambda_max = 0.0;
    std::vector<double> lambdas; // strictly decreasing
    std::vector<std::string> warnings;
};

// Upper bound on lambda_max. For alpha < 1: max |x_j'y_k| / (n (1 - alpha) w_min(j, k)),
// w_min the smallest weight of a group containing outcome k. For alpha = 1 the
// analogous fused bound max |x_j'y_l - x_j'y_o| / (n w_pair) over pairs (l, o).
inline double lambda_max_heuristic(const ProblemData& data, const OutcomeGrouping& grouping,
                                   const PenaltyConfig& cfg)
{
    const Matrix g = data.xty() / static_cast<double>(data.n());
    double best = 0.0;
    if (cfg.alpha < 1.0) {
        for (Index j = 0; j < data.p(); ++j)
            for (Index k = 0; k < data.k(); ++k) {
                double wmin = std::numeric_limits<double>::infinity();
                for (Index q = 0; q < grouping.num_groups(); ++q)
                    if (std::ranges::binary_search(grouping.groups()[static_cast<std::size_t>(q)].members, k))
                        wmin = std::min(wmin, cfg.group_weights(j, q));
                if (wmin > 0.0 && std::isfinite(wmin))
                    best = std::max(best, std::abs(g(j, k)) / ((1.0 - cfg.alpha) * wmin));
            }
        return best;
    }
    for (Index j = 0; j < data.p(); ++j)
        for (Index q = 0; q < grouping.num_pairs(); ++q) {
            const auto& pr = grouping.fuse_pairs()[static_cast<std::size_t>(q)];
            const double w = cfg.pair_weights(j, q);
            if (w > 0.0)
                best = std::max(best, std::abs(g(j, pr.first) - g(j, pr.second)) / w);
        }
    return best;
}

inline bool fits_to_zero(const AdmmWorkspace& ws, PenaltyConfig cfg, double lambda, const SolverOptions& opts)
{
    cfg.lambda = lambda;
    const FitResult r = fit(ws, cfg, opts);
    return r.beta_working.cwiseAbs().maxCoeff() == 0.0;
}

// Smallest lambda (up to the refinement resolution) whose fit is the zero matrix,
// starting from `start`: doubled until zero, then halved and bisected downward.
inline double verify_lambda_max(const AdmmWorkspace& ws, const PenaltyConfig& cfg, double start,
                                const SolverOptions& opts, int refine)
{
    double hi = start;
    int doublings = 0;
    while (!fits_to_zero(ws, cfg, hi, opts)) {
        if (++doublings > 60)
            throw Error("could not find a penalty level that zeroes all coefficients");
        hi *= 2.0;
    }
    std::optional<double> lo;
    for (int s = 0; s < refine; ++s) {
        const double cand = hi / 2.0;
        if (fits_to_zero(ws, cfg, cand, opts))
            hi = cand;
        else {
            lo = cand;
            break;
        }
    }
    if (lo)
        for (int s = 0; s < refine; ++s) {
            const double mid = std::sqrt(*lo * hi);
            if (fits_to_zero(ws, cfg, mid, opts))
                hi = mid;
            else
                lo = mid;
        }
    return hi;
}

inline std::vector<double> log_grid(double lambda_max, double ratio, Index n_lambda)
{
    std::vector<double> out;
    if (!(lambda_max > 0.0))
        return {0.0};
    out.reserve(static_cast<std::size_t>(n_lambda));
    if (n_lambda == 1)
        return {lambda_max};
    const double step = std::log(ratio) / static_cast<double>(n_lambda - 1);
    for (Index i = 0; i < n_lambda; ++i)
        out.push_back(i == 0 ? lambda_max : lambda_max * std::exp(step * static_cast<double>(i)));
    return out;
}

// Penalty level at the grid head for one alpha on one data set.
inline double compute_lambda_max(const AdmmWorkspace& ws, const PenaltyConfig& cfg, const SolverOptions& opts,
                                 int refine, std::vector<std::string>* warnings = nullptr)
{
    const double h = lambda_max_heuristic(ws.data(), ws.grouping(), cfg);
    if (!(h > 0.0)) {
        if (warnings)
            warnings->push_back("lambda_max is 0 (zero response or no active penalty); grid is {0}");
        return 0.0;
    }
    if (cfg.alpha >= 1.0) {
        if (warnings)
            warnings->push_back("alpha = 1: pure fused penalty cannot zero coefficients; lambda_max from the fused bound");
        return h;
    }
    return verify_lambda_max(ws, cfg, h, opts, refine);
}

inline LambdaGrid make_lambda_grid(const ProblemData& data, const OutcomeGrouping& grouping, PenaltyConfig cfg,
                                   const PathSpec& spec, const SolverOptions& opts = {})
{
    spec.validate();
    if (cfg.group_weights.size() == 0 && grouping.num_groups() > 0)
        cfg = with_weights(cfg, data, grouping);
    LambdaGrid grid;
    grid.alpha = cfg.alpha;
    if (spec.lambda_max) {
        grid.lambda_max = *spec.lambda_max;
    } else {
        AdmmWorkspace ws(data, grouping);
        grid.lambda_max = compute_lambda_max(ws, cfg, opts, spec.lambda_max_refine, &grid.warnings);
    }
    grid.lambdas = log_grid(grid.lambda_max, spec.ratio_for(data.n(), data.p()), spec.n_lambda);
    return grid;
}

struct PathResult
{
    std::vector<LambdaGrid> grids;            // one per alpha
    std::vector<std::vector<FitResult>> fits; // [alpha][lambda]
    Index nonconverged = 0;
};

// Fits along a decreasing lambda grid with warm starts.
inline std::vector<FitResult> fit_grid(const AdmmWorkspace& ws, PenaltyConfig cfg, const std::vector<double>& lambdas,
                                       const SolverOptions& opts)
{
    std::vector<FitResult> out;
    out.reserve(lambdas.size());
    const SolverState* warm = nullptr;
    for (double lam : lambdas) {
        cfg.lambda = lam;
        out.push_back(fit(ws, cfg, opts, warm));
        warm = &out.back().state;
    }
    return out;
}

// cfg supplies weights (filled from data when empty), gamma and adaptive
// settings; its lambda and alpha are replaced by the grid.
inline PathResult fit_path(const ProblemData& data, const OutcomeGrouping& grouping, PenaltyConfig cfg,
                           const PathSpec& spec, const SolverOptions& opts = {}, unsigned threads = 1)
{
    spec.validate();
    if (cfg.group_weights.size() == 0 && grouping.num_groups() > 0)
        cfg = with_weights(cfg, data, grouping);
    const AdmmWorkspace ws(data, grouping);
    PathResult res;
    res.grids.resize(spec.alphas.size());
    res.fits.resize(spec.alphas.size());
    parallel_for(spec.alphas.size(), threads, [&](std::size_t a) {
        PenaltyConfig c = cfg;
        c.alpha = spec.alphas[a];
        LambdaGrid& grid = res.grids[a];
        grid.alpha = c.alpha;
        grid.lambda_max = spec.lambda_max ? *spec.lambda_max
                                          : compute_lambda_max(ws, c, opts, spec.lambda_max_refine, &grid.warnings);
        grid.lambdas = log_grid(grid.lambda_max, spec.ratio_for(data.n(), data.p()), spec.n_lambda);
        res.fits[a] = fit_grid(ws, c, grid.lambdas, opts);
    });
    for (const auto& row : res.fits)
        for (const auto& f : row)
            res.nonconverged += f.converged ? 0 : 1;
    return res;
}

// Fits along given grids (for example the grids of a cross-validation run).
inline PathResult fit_path(const ProblemData& data, const OutcomeGrouping& grouping, PenaltyConfig cfg,
                           const std::vector<LambdaGrid>& grids, const SolverOptions& opts = {}, unsigned threads = 1)
{
    if (cfg.group_weights.size() == 0 && grouping.num_groups() > 0)
        cfg = with_weights(cfg, data, grouping);
    const AdmmWorkspace ws(data, grouping);
    PathResult res;
    res.grids = grids;
    res.fits.resize(grids.size());
    parallel_for(grids.size(), threads, [&](std::size_t a) {
        PenaltyConfig c = cfg;
        c.alpha = grids[a].alpha;
        res.fits[a] = fit_grid(ws, c, grids[a].lambdas, opts);
    });
    for (const auto& row : res.fits)
        for (const auto& f : row)
            res.nonconverged += f.converged ? 0 : 1;
    return res;
}

inline Matrix predict(const CoefficientMatrix& coef, const Design& x_new)
{
    require_dim("variables", coef.beta.rows(), x_new.cols());
    Matrix out = x_new.times(coef.beta);
    out.rowwise() += coef.intercept.transpose();
    return out;
}

inline Matrix predict(const CoefficientMatrix& coef, const Matrix& x_new)
{
    require_dim("variables", coef.beta.rows(), x_new.cols());
    Matrix out = x_new * coef.beta;
    out.rowwise() += coef.intercept.transpose();
    return out;
}

inline Matrix predict(const FitResult& fit, const Matrix& x_new) { return predict(fit.coef, x_new); }
inline Matrix predict(const FitResult& fit, const Design& x_new) { return predict(fit.coef, x_new); }

struct CVPoint
{
    std::size_t alpha_index = 0;
    std::size_t lambda_index = 0;
    double lambda = 0.0;
    double alpha = 0.0;
    double mean_mse = 0.0;
    double se_mse = 0.0;
};

struct CVResult
{
    std::vector<LambdaGrid> grids;                 // one per alpha, shared by all folds
    std::vector<std::vector<Matrix>> outcome_mse;  // [alpha][fold]: n_lambda x K held-out MSE
    std::vector<Matrix> fold_mse;                  // [alpha]: n_lambda x folds, averaged over outcomes
    std::vector<Vector> mean_mse;                  // [alpha]: n_lambda
    std::vector<Vector> se_mse;                    // [alpha]: n_lambda
    CVPoint best;
    CVPoint best_1se;
    std::vector<Index> fold_assignments;           // length n, labels 0..k-1
    Index kfolds = 0;
    std::uint64_t seed = 0;
    Index nonconverged = 0;
    std::vector<std::string> warnings;
};

// Seeded shuffle, then position modulo k; fold sizes differ by at most one.
inline std::vector<Index> assign_folds(Index n, Index k, std::uint64_t seed)
{
    if (k < 2)
        throw Error("cross-validation needs at least 2 folds");
    if (k > n)
        throw Error("more folds (" + std::to_string(k) + ") than observations (" + std::to_string(n) + ")");
    std::vector<Index> perm(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        perm[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(perm.begin(), perm.end());
    std::vector<Index> fold(static_cast<std::size_t>(n));
    for (Index pos = 0; pos < n; ++pos)
        fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] = pos % k;
    return fold;
}

// cfg_template supplies adaptive/gamma/cap settings; weights are recomputed on
// each training fold (and on the full data for the grid head). Fold fits keep
// the exact zero/fusion collapse but skip the Newton polish.
inline CVResult cross_validate(const ProblemData& data, const OutcomeGrouping& grouping,
                               const PenaltyConfig& cfg_template, const PathSpec& spec, Index k = 10,
                               std::uint64_t seed = 1, const SolverOptions& opts = {}, unsigned threads = 1)
{
    spec.validate();
    SolverOptions fold_opts = opts;
    fold_opts.polish_max_dim = 0;
    require_dim("outcomes", grouping.num_outcomes(), data.k());
    CVResult res;
    res.kfolds = k;
    res.seed = seed;
    res.fold_assignments = assign_folds(data.n(), k, seed);

    const std::size_t nf = static_cast<std::size_t>(k);
    const std::size_t na = spec.alphas.size();
    std::vector<std::vector<Index>> train_rows(nf), test_rows(nf);
    for (Index i = 0; i < data.n(); ++i) {
        const auto f = static_cast<std::size_t>(res.fold_assignments[static_cast<std::size_t>(i)]);
        for (std::size_t g = 0; g < nf; ++g)
            (g == f ? test_rows[g] : train_rows[g]).push_back(i);
    }

    // training sets, workspaces and weights per fold; slot nf is the full data
    std::vector<ProblemData> train(nf);
    std::vector<std::optional<AdmmWorkspace>> ws(nf + 1);
    std::vector<PenaltyConfig> cfg(nf + 1);
    std::vector<std::vector<std::string>> fold_warn(nf + 1);
    parallel_for(nf + 1, threads, [&](std::size_t f) {
        const ProblemData& d = f < nf ? (train[f] = data.subset(train_rows[f])) : data;
        ws[f].emplace(d, grouping);
        cfg[f] = with_weights(cfg_template, d, grouping);
        if (f < nf)
            for (Index j : d.screened())
                if (data.retained(j))
                    fold_warn[f].push_back("fold " + std::to_string(f + 1) + ": column " + std::to_string(j + 1) +
                                           " has zero variance in the training rows");
    });

    // grid head per alpha: full-data lambda_max, raised until every fold is zero
    res.grids.resize(na);
    std::vector<double> head(na * (nf + 1), 0.0);
    std::vector<std::vector<std::string>> grid_warn(na);
    parallel_for(na, threads, [&](std::size_t a) {
        PenaltyConfig c = cfg[nf];
        c.alpha = spec.alphas[a];
        head[a * (nf + 1) + nf] = spec.lambda_max ? *spec.lambda_max
                                                  : compute_lambda_max(*ws[nf], c, opts, spec.lambda_max_refine,
                                                                       &grid_warn[a]);
    });
    if (!spec.lambda_max)
        parallel_for(na * nf, threads, [&](std::size_t t) {
            const std::size_t a = t / nf, f = t % nf;
            const double full = head[a * (nf + 1) + nf];
            if (spec.alphas[a] >= 1.0 || !(full > 0.0))
                return;
            PenaltyConfig c = cfg[f];
            c.alpha = spec.alphas[a];
            head[a * (nf + 1) + f] = verify_lambda_max(*ws[f], c, full, fold_opts, 0);
        });
    for (std::size_t a = 0; a < na; ++a) {
        LambdaGrid& g = res.grids[a];
        g.alpha = spec.alphas[a];
        g.lambda_max = *std::max_element(head.begin() + static_cast<std::ptrdiff_t>(a * (nf + 1)),
                                         head.begin() + static_cast<std::ptrdiff_t>((a + 1) * (nf + 1)));
        g.lambdas = log_grid(g.lambda_max, spec.ratio_for(data.n(), data.p()), spec.n_lambda);
        g.warnings = std::move(grid_warn[a]);
    }

    // held-out error along each (fold, alpha) path
    res.outcome_mse.assign(na, std::vector<Matrix>(nf));
    std::vector<Index> nonconv(na * nf, 0);
    parallel_for(na * nf, threads, [&](std::size_t t) {
        const std::size_t a = t / nf, f = t % nf;
        PenaltyConfig c = cfg[f];
        c.alpha = spec.alphas[a];
        const auto fits = fit_grid(*ws[f], c, res.grids[a].lambdas, fold_opts);
        const Design xt = data.x().select_rows(test_rows[f]);
        Matrix yt(static_cast<Index>(test_rows[f].size()), data.k());
        for (std::size_t i = 0; i < test_rows[f].size(); ++i)
            yt.row(static_cast<Index>(i)) = data.y().row(test_rows[f][i]);
        Matrix& mse = res.outcome_mse[a][f];
        mse.resize(static_cast<Index>(fits.size()), data.k());
        for (std::size_t l = 0; l < fits.size(); ++l) {
            const Matrix err = predict(fits[l].coef, xt) - yt;
            mse.row(static_cast<Index>(l)) = err.colwise().squaredNorm() / static_cast<double>(yt.rows());
            nonconv[t] += fits[l].converged ? 0 : 1;
        }
    });

    for (auto& w : fold_warn)
        res.warnings.insert(res.warnings.end(), w.begin(), w.end());
    for (const auto& g : res.grids)
        for (const auto& w : g.warnings)
            res.warnings.push_back("alpha " + std::to_string(g.alpha) + ": " + w);
    for (Index c : nonconv)
        res.nonconverged += c;
    if (res.nonconverged > 0)
        res.warnings.push_back(std::to_string(res.nonconverged) + " cross-validation fits did not converge");

    const double kd = static_cast<double>(k);
    res.fold_mse.resize(na);
    res.mean_mse.resize(na);
    res.se_mse.resize(na);
    bool have_best = false;
    for (std::size_t a = 0; a < na; ++a) {
        const Index nl = static_cast<Index>(res.grids[a].lambdas.size());
        Matrix& fm = res.fold_mse[a];
        fm.resize(nl, k);
        for (std::size_t f = 0; f < nf; ++f)
            fm.col(static_cast<Index>(f)) = res.outcome_mse[a][f].rowwise().mean();
        res.mean_mse[a] = fm.rowwise().mean();
        res.se_mse[a].resize(nl);
        for (Index l = 0; l < nl; ++l) {
            const double var = (fm.row(l).array() - res.mean_mse[a](l)).square().sum() / (kd - 1.0);
            res.se_mse[a](l) = std::sqrt(var / kd);
            if (!have_best || res.mean_mse[a](l) < res.best.mean_mse) {
                have_best = true;
                res.best = {a, static_cast<std::size_t>(l), res.grids[a].lambdas[static_cast<std::size_t>(l)],
                            res.grids[a].alpha, res.mean_mse[a](l), res.se_mse[a](l)};
            }
        }
    }
    // largest lambda within one standard error of the minimum, at the best alpha
    res.best_1se = res.best;
    const std::size_t ba = res.best.alpha_index;
    const double bound = res.best.mean_mse + res.best.se_mse;
    for (std::size_t l = 0; l < res.grids[ba].lambdas.size(); ++l)
        if (res.mean_mse[ba](static_cast<Index>(l)) <= bound) {
            res.best_1se = {ba, l, res.grids[ba].lambdas[l], res.grids[ba].alpha,
                            res.mean_mse[ba](static_cast<Index>(l)), res.se_mse[ba](static_cast<Index>(l))};
            break;
        }
    return res;
}

// Refit on the full data at a selected point.
inline FitResult refit(const ProblemData& data, const OutcomeGrouping& grouping, PenaltyConfig cfg,
                       const CVPoint& point, const SolverOptions& opts = {})
{
    cfg = with_weights(cfg, data, grouping);
    cfg.lambda = point.lambda;
    cfg.alpha = point.alpha;
    return fit(data, grouping, cfg, opts);
}

} // namespace ogfm
