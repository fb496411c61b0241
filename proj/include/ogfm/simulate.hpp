#pragma once

// Simulation scenarios: true coefficient generation, Gaussian and ordinal data,
// evaluation metrics, and multi-replication method comparisons.

#include "ogfm/path_cv.hpp"
#include "ogfm/rng.hpp"

#include <array>
#include <chrono>
#include <string>
#include <vector>

namespace ogfm {

enum class ResponseFamily { gaussian, ordinal };

struct SimulationScenario
{
    Index n = 200;
    Index p = 50;
    Index k = 8;
    std::optional<Index> z; // nonzero rows; default min(50, p / 2)
    double p_hs = 0.0;
    double p_ge = 0.0;
    ResponseFamily family = ResponseFamily::gaussian;
    double sigma_scale = 4.0;
    double ar_rho_x = 0.5;
    double ar_rho_eps = 0.5;
    Index test_size = 10000;
    std::uint64_t seed = 1;
    Index reps = 10;
    std::vector<OutcomeSet> groups{{0, 1, 2}, {3, 4}, {5, 6, 7}};

    // tuning protocol
    Index kfolds = 10;
    Index n_lambda = 50;
    std::optional<double> lambda_min_ratio;
    std::vector<double> alphas{0.0, 1e-5, 1e-3, 1e-2, 0.1, 0.5};
    double adaptive_gamma = 0.5;
    std::vector<std::string> methods{"ogfm", "ogfm_adaptive", "separate_lasso"};

    Index nonzero_rows() const { return z ? *z : std::min<Index>(50, p / 2); }

    void validate() const
    {
        if (n < 2 || p < 1 || k < 1 || test_size < 1 || reps < 0)
            throw Error("scenario needs n >= 2, p >= 1, K >= 1, test_size >= 1, reps >= 0");
        if (nonzero_rows() < 0 || nonzero_rows() > p)
            throw Error("scenario needs 0 <= z <= p");
        for (double pr : {p_hs, p_ge})
            if (!(pr >= 0.0 && pr <= 1.0))
                throw Error("p_HS and p_GE must lie in [0, 1]");
        if (!(sigma_scale >= 0.0) || !(std::abs(ar_rho_x) < 1.0) || !(std::abs(ar_rho_eps) < 1.0))
            throw Error("sigma_scale must be nonnegative and AR coefficients in (-1, 1)");
        std::vector<int> seen(static_cast<std::size_t>(k), 0);
        for (const auto& g : groups) {
            if (g.empty())
                throw Error("empty outcome group in scenario");
            for (Index o : g) {
                if (o < 0 || o >= k)
                    throw Error("scenario group member " + std::to_string(o + 1) + " exceeds K");
                ++seen[static_cast<std::size_t>(o)];
            }
        }
        for (int s : seen)
            if (s != 1)
                throw Error("scenario groups must partition the K outcomes");
    }
};

struct TrueModel
{
    Matrix beta0;     // p x K
    Matrix sigma_x;   // p x p
    Matrix sigma_eps; // K x K
    Matrix xi;        // p x K individual-effect indicators
    Matrix xi_group;  // p x |groups| group indicators
    Matrix effect;    // p x K effect sizes before masking
};

// AR(1) correlation matrix scaled by `scale`: scale * rho^|i-j|.
inline Matrix ar_covariance(Index d, double rho, double scale = 1.0)
{
    Matrix s(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            s(i, j) = scale * std::pow(rho, static_cast<double>(std::abs(i - j)));
    return s;
}

inline constexpr std::array<double, 8> effect_sizes{-1.0, -0.5, -0.25, -0.125, 0.125, 0.25, 0.5, 1.0};

inline TrueModel gen_beta0(const SimulationScenario& sc, Rng& rng)
{
    sc.validate();
    const Index p = sc.p, k = sc.k, ng = static_cast<Index>(sc.groups.size());
    TrueModel m;
    m.beta0 = Matrix::Zero(p, k);
    m.xi = Matrix::Zero(p, k);
    m.xi_group = Matrix::Zero(p, ng);
    m.effect = Matrix::Zero(p, k);
    m.sigma_x = sc.family == ResponseFamily::gaussian ? ar_covariance(p, sc.ar_rho_x)
                                                       : Matrix(0.16 * Matrix::Identity(p, p));
    m.sigma_eps = ar_covariance(k, sc.ar_rho_eps, sc.sigma_scale);

    std::vector<Index> group_of(static_cast<std::size_t>(k));
    for (Index g = 0; g < ng; ++g)
        for (Index o : sc.groups[static_cast<std::size_t>(g)])
            group_of[static_cast<std::size_t>(o)] = g;

    Vector effect(k);
    for (Index j = 0; j < sc.nonzero_rows(); ++j) {
        for (Index g = 0; g < ng; ++g)
            m.xi_group(j, g) = rng.bernoulli(1.0 - sc.p_hs) ? 1.0 : 0.0;
        for (Index c = 0; c < k; ++c) {
            m.xi(j, c) = rng.bernoulli(0.9) ? 1.0 : 0.0;
            effect(c) = effect_sizes[rng.below(effect_sizes.size())];
        }
        // within-group equality: one draw per variable covering every group
        if (rng.bernoulli(sc.p_ge / 2.0))
            for (const auto& g : sc.groups)
                for (Index o : g)
                    effect(o) = effect(g.front());
        // all-outcome equality, drawn independently
        if (rng.bernoulli(sc.p_ge / 2.0))
            effect.setConstant(effect(0));
        m.effect.row(j) = effect.transpose();
        for (Index c = 0; c < k; ++c)
            m.beta0(j, c) = m.xi(j, c) * m.xi_group(j, group_of[static_cast<std::size_t>(c)]) * effect(c);
    }
    return m;
}

// Rows of an AR(1) process with unit marginal variance (closed-form banded Cholesky).
inline Matrix ar_normal_rows(Index rows, Index d, double rho, Rng& rng)
{
    Matrix out(rows, d);
    const double innov = std::sqrt(1.0 - rho * rho);
    for (Index i = 0; i < rows; ++i) {
        double prev = 0.0;
        for (Index j = 0; j < d; ++j) {
            const double e = rng.normal();
            prev = j == 0 ? e : rho * prev + innov * e;
            out(i, j) = prev;
        }
    }
    return out;
}

// Ordinal level 1..8 from the cut points (-2, -1, -0.5, 0, 0.5, 1, 2) with
// intervals closed on the right.
inline int ordinal_level(double latent)
{
    static constexpr std::array<double, 7> cuts{-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0};
    int level = 1;
    for (double c : cuts)
        if (latent > c)
            ++level;
    return level;
}

struct SimulatedData
{
    Matrix x, y;           // training
    Matrix x_test, y_test; // independent test set
};

inline SimulatedData gen_gaussian_data(const SimulationScenario& sc, const TrueModel& m, Rng& rng)
{
    const double es = std::sqrt(sc.sigma_scale);
    auto draw = [&](Index rows, Matrix& x, Matrix& y) {
        x = ar_normal_rows(rows, sc.p, sc.ar_rho_x, rng);
        y = x * m.beta0 + es * ar_normal_rows(rows, sc.k, sc.ar_rho_eps, rng);
    };
    SimulatedData d;
    draw(sc.n, d.x, d.y);
    draw(sc.test_size, d.x_test, d.y_test);
    return d;
}

inline SimulatedData gen_ordinal_data(const SimulationScenario& sc, const TrueModel& m, Rng& rng)
{
    const double es = std::sqrt(sc.sigma_scale);
    auto draw = [&](Index rows, Matrix& x, Matrix& y) {
        x.resize(rows, sc.p);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < sc.p; ++j)
                x(i, j) = rng.bernoulli(0.2) ? 1.0 : 0.0;
        y = x * m.beta0 + es * ar_normal_rows(rows, sc.k, sc.ar_rho_eps, rng);
        y = y.unaryExpr([](double v) { return static_cast<double>(ordinal_level(v)); });
    };
    SimulatedData d;
    draw(sc.n, d.x, d.y);
    draw(sc.test_size, d.x_test, d.y_test);
    return d;
}

inline SimulatedData gen_data(const SimulationScenario& sc, const TrueModel& m, Rng& rng)
{
    return sc.family == ResponseFamily::gaussian ? gen_gaussian_data(sc, m, rng) : gen_ordinal_data(sc, m, rng);
}

inline double model_error(const Matrix& beta_hat, const Matrix& beta0, const Matrix& sigma_x)
{
    require_dim("variables", beta0.rows(), beta_hat.rows());
    require_dim("outcomes", beta0.cols(), beta_hat.cols());
    require_dim("sigma rows", beta0.rows(), sigma_x.rows());
    require_dim("sigma columns", beta0.rows(), sigma_x.cols());
    if ((sigma_x - sigma_x.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw Error("Sigma_X must be symmetric");
    const Matrix d = beta_hat - beta0;
    return std::max(0.0, (d.transpose() * sigma_x * d).trace());
}

inline double avg_rmse(const Matrix& pred, const Matrix& y_test)
{
    require_dim("rows", y_test.rows(), pred.rows());
    require_dim("outcomes", y_test.cols(), pred.cols());
    const Vector mse = (pred - y_test).colwise().squaredNorm().transpose() / static_cast<double>(y_test.rows());
    return mse.cwiseSqrt().mean();
}

// 0.5 (TPR + TNR) with max(1, .) denominators; `support` is a 0/1 pattern.
inline double balanced_accuracy(const Matrix& support, const Matrix& beta0)
{
    require_dim("variables", beta0.rows(), support.rows());
    require_dim("outcomes", beta0.cols(), support.cols());
    double tp = 0, tn = 0, pos = 0, neg = 0;
    for (Index j = 0; j < beta0.rows(); ++j)
        for (Index k = 0; k < beta0.cols(); ++k) {
            const bool truth = beta0(j, k) != 0.0, est = support(j, k) != 0.0;
            pos += truth;
            neg += !truth;
            tp += truth && est;
            tn += !truth && !est;
        }
    return 0.5 * (tp / std::max(1.0, pos) + tn / std::max(1.0, neg));
}

inline Vector validation_r2(const Matrix& pred, const Matrix& y_test)
{
    require_dim("rows", y_test.rows(), pred.rows());
    require_dim("outcomes", y_test.cols(), pred.cols());
    Vector r2(y_test.cols());
    for (Index c = 0; c < y_test.cols(); ++c) {
        const double sse = (pred.col(c) - y_test.col(c)).squaredNorm();
        const double sst = (y_test.col(c).array() - y_test.col(c).mean()).square().sum();
        r2(c) = 1.0 - sse / sst;
    }
    return r2;
}

inline const std::vector<std::string>& known_methods()
{
    static const std::vector<std::string> m{"ogfm", "ogfm_adaptive", "separate_lasso"};
    return m;
}

struct MethodFit
{
    CoefficientMatrix coef;
    Index nonconverged = 0;
};

// Tuned fit for one method on one training set.
inline MethodFit fit_method(const std::string& method, const SimulationScenario& sc, const Matrix& x, const Matrix& y,
                            std::uint64_t cv_seed, const SolverOptions& opts = {})
{
    PathSpec spec;
    spec.n_lambda = sc.n_lambda;
    spec.lambda_min_ratio = sc.lambda_min_ratio;
    spec.alphas = sc.alphas;
    MethodFit out;
    if (method == "ogfm" || method == "ogfm_adaptive") {
        const auto data = ProblemData::make(x, y);
        const auto grouping = build_grouping(sc.k, {sc.groups});
        PenaltyConfig cfg;
        if (method == "ogfm_adaptive") {
            cfg.adaptive = true;
            cfg.gamma1 = cfg.gamma2 = sc.adaptive_gamma;
        }
        const auto cv = cross_validate(data, grouping, cfg, spec, sc.kfolds, cv_seed, opts);
        out.coef = refit(data, grouping, cfg, cv.best, opts).coef;
        out.nonconverged = cv.nonconverged;
        return out;
    }
    if (method == "separate_lasso") {
        spec.alphas = {0.0};
        const auto grouping = OutcomeGrouping::singletons_only(1);
        out.coef.beta = Matrix::Zero(x.cols(), y.cols());
        out.coef.intercept = Vector::Zero(y.cols());
        for (Index c = 0; c < y.cols(); ++c) {
            const auto data = ProblemData::make(x, Matrix(y.col(c)));
            const auto cv = cross_validate(data, grouping, PenaltyConfig{}, spec, sc.kfolds, cv_seed, opts);
            const auto r = refit(data, grouping, PenaltyConfig{}, cv.best, opts);
            out.coef.beta.col(c) = r.coef.beta.col(0);
            out.coef.intercept(c) = r.coef.intercept(0);
            out.nonconverged += cv.nonconverged;
        }
        return out;
    }
    throw Error("unknown method '" + method + "' (expected ogfm, ogfm_adaptive or separate_lasso)");
}

struct SimulationRow
{
    Index rep = 0;
    std::string method;
    double rmse = 0.0;
    double model_error = 0.0;
    double balanced_accuracy = 0.0;
    double seconds = 0.0;
    Index nonconverged = 0;
};

struct ReplicationData
{
    TrueModel model;
    SimulatedData data;
};

// Replication `rep` draws from the stream (seed, rep).
inline ReplicationData generate_replication(const SimulationScenario& sc, std::uint64_t seed, Index rep)
{
    Rng rng(seed, static_cast<std::uint64_t>(rep));
    ReplicationData r;
    r.model = gen_beta0(sc, rng);
    r.data = gen_data(sc, r.model, rng);
    return r;
}

// One row per (replication, method), ordered by replication then method.
// Replications run in parallel; with record_time false the seconds column is 0.
inline std::vector<SimulationRow> run_scenario(const SimulationScenario& sc, const std::vector<std::string>& methods,
                                               Index n_reps, std::uint64_t seed, unsigned threads = 1,
                                               bool record_time = true, const SolverOptions& opts = {})
{
    sc.validate();
    for (const auto& m : methods)
        if (std::ranges::find(known_methods(), m) == known_methods().end())
            throw Error("unknown method '" + m + "' (expected ogfm, ogfm_adaptive or separate_lasso)");
    if (n_reps < 0)
        throw Error("number of replications must be nonnegative");
    const std::size_t nm = methods.size();
    std::vector<SimulationRow> rows(static_cast<std::size_t>(n_reps) * nm);
    parallel_for(static_cast<std::size_t>(n_reps) * nm, threads, [&](std::size_t t) {
        const Index rep = static_cast<Index>(t / nm);
        const std::string& method = methods[t % nm];
        const auto rd = generate_replication(sc, seed, rep);
        std::uint64_t cv_state = seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(rep + 1));
        const std::uint64_t cv_seed = splitmix64(cv_state);

        const auto start = std::chrono::steady_clock::now();
        const MethodFit mf = fit_method(method, sc, rd.data.x, rd.data.y, cv_seed, opts);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        SimulationRow& row = rows[t];
        row.rep = rep;
        row.method = method;
        row.rmse = avg_rmse(predict(mf.coef, rd.data.x_test), rd.data.y_test);
        row.model_error = model_error(mf.coef.beta, rd.model.beta0, rd.model.sigma_x);
        row.balanced_accuracy =
            balanced_accuracy(mf.coef.beta.unaryExpr([](double v) { return v != 0.0 ? 1.0 : 0.0; }), rd.model.beta0);
        row.seconds = record_time ? secs : 0.0;
        row.nonconverged = mf.nonconverged;
    });
    return rows;
}

} // namespace ogfm
