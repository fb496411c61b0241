#pragma once

// Data model, objective and penalty evaluation, and penalty weights.
//
// The penalized problem is always solved on the "working" scale: X columns
// centered (and by default scaled to unit standard deviation), Y columns
// centered (optionally scaled). ProblemData carries the metadata to move
// coefficients between the working and the original scale.

#include "ogfm/common.hpp"
#include "ogfm/structure.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <vector>

namespace ogfm {

// Predictor matrix held either dense or sparse.
class Design
{
public:
    Design() = default;
    explicit Design(Matrix dense) : dense_(std::move(dense)) {}
    explicit Design(SparseMatrix sparse) : sparse_(std::move(sparse)), is_sparse_(true)
    {
        sparse_.makeCompressed();
    }

    bool is_sparse() const noexcept { return is_sparse_; }
    Index rows() const noexcept { return is_sparse_ ? sparse_.rows() : dense_.rows(); }
    Index cols() const noexcept { return is_sparse_ ? sparse_.cols() : dense_.cols(); }

    const Matrix& dense() const noexcept { return dense_; }
    const SparseMatrix& sparse() const noexcept { return sparse_; }

    Matrix to_dense() const { return is_sparse_ ? Matrix(sparse_) : dense_; }

    Matrix times(const Matrix& b) const
    {
        if (is_sparse_)
            return sparse_ * b;
        return dense_ * b;
    }

    Matrix t_times(const Matrix& y) const
    {
        if (is_sparse_)
            return sparse_.transpose() * y;
        return dense_.transpose() * y;
    }

    Matrix gram() const
    {
        if (is_sparse_)
            return Matrix(sparse_.transpose() * sparse_);
        Matrix g = Matrix::Zero(dense_.cols(), dense_.cols());
        g.selfadjointView<Eigen::Lower>().rankUpdate(dense_.transpose());
        return g.selfadjointView<Eigen::Lower>();
    }

    Vector col_means() const
    {
        const double n = static_cast<double>(rows());
        if (is_sparse_) {
            Vector m = Vector::Zero(cols());
            for (Index c = 0; c < sparse_.outerSize(); ++c)
                for (SparseMatrix::InnerIterator it(sparse_, c); it; ++it)
                    m(c) += it.value();
            return m / n;
        }
        return dense_.colwise().mean().transpose();
    }

    bool all_finite() const
    {
        if (is_sparse_) {
            for (Index i = 0; i < sparse_.nonZeros(); ++i)
                if (!std::isfinite(sparse_.valuePtr()[i]))
                    return false;
            return true;
        }
        return dense_.allFinite();
    }

    Design select_rows(const std::vector<Index>& rows_wanted) const
    {
        if (!is_sparse_) {
            Matrix out(static_cast<Index>(rows_wanted.size()), dense_.cols());
            for (std::size_t i = 0; i < rows_wanted.size(); ++i)
                out.row(static_cast<Index>(i)) = dense_.row(rows_wanted[i]);
            return Design(std::move(out));
        }
        std::vector<Index> map(static_cast<std::size_t>(sparse_.rows()), -1);
        for (std::size_t i = 0; i < rows_wanted.size(); ++i)
            map[static_cast<std::size_t>(rows_wanted[i])] = static_cast<Index>(i);
        std::vector<Triplet> trips;
        for (Index c = 0; c < sparse_.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(sparse_, c); it; ++it)
                if (Index r = map[static_cast<std::size_t>(it.row())]; r >= 0)
                    trips.emplace_back(r, c, it.value());
        SparseMatrix out(static_cast<Index>(rows_wanted.size()), sparse_.cols());
        out.setFromTriplets(trips.begin(), trips.end());
        return Design(std::move(out));
    }

private:
    Matrix dense_;
    SparseMatrix sparse_;
    bool is_sparse_ = false;
};

struct StandardizeOptions
{
    bool center = true;      // center X and Y; fit an intercept
    bool scale_x = true;     // unit standard deviation for X columns
    bool scale_y = false;    // unit standard deviation for Y columns
};

struct CoefficientMatrix
{
    Matrix beta;      // p x K
    Vector intercept; // K

    Index num_variables() const noexcept { return beta.rows(); }
    Index num_outcomes() const noexcept { return beta.cols(); }
};

class ProblemData
{
public:
    ProblemData() = default;

    static ProblemData make(Design x, Matrix y, StandardizeOptions opts = {})
    {
        if (x.rows() < 1)
            throw Error("problem needs at least one observation");
        require_dim("rows", x.rows(), y.rows());
        if (y.cols() < 1)
            throw Error("problem needs at least one outcome");
        if (!x.all_finite() || !y.allFinite())
            throw Error("non-finite value (NaN or Inf) in X or Y");

        ProblemData d;
        d.opts_ = opts;
        const Index n = x.rows();
        const Index p = x.cols();
        const Index k = y.cols();
        const double nd = static_cast<double>(n);

        d.center_x_ = opts.center ? x.col_means() : Vector::Zero(p);
        d.center_y_ = opts.center ? Vector(y.colwise().mean().transpose()) : Vector::Zero(k);

        // column sums of squares about center
        Matrix raw_gram = x.gram();
        Vector ss(p);
        if (!x.is_sparse() && opts.center) {
            ss = (x.dense().rowwise() - d.center_x_.transpose()).colwise().squaredNorm().transpose();
        } else {
            for (Index j = 0; j < p; ++j)
                ss(j) = raw_gram(j, j) - nd * d.center_x_(j) * d.center_x_(j);
        }

        d.scale_x_ = Vector::Ones(p);
        d.retained_.assign(static_cast<std::size_t>(p), true);
        for (Index j = 0; j < p; ++j) {
            const double var = std::max(ss(j), 0.0) / nd;
            const double ref = std::max(1.0, std::abs(d.center_x_(j)));
            if (!(var > 1e-24 * ref * ref)) {
                d.retained_[static_cast<std::size_t>(j)] = false;
                d.screened_.push_back(j);
                continue;
            }
            if (opts.scale_x)
                d.scale_x_(j) = std::sqrt(var);
        }

        d.y_work_ = y.rowwise() - d.center_y_.transpose();
        d.scale_y_ = Vector::Ones(k);
        if (opts.scale_y) {
            for (Index c = 0; c < k; ++c) {
                const double sd = std::sqrt(d.y_work_.col(c).squaredNorm() / nd);
                if (sd > 0.0) {
                    d.scale_y_(c) = sd;
                    d.y_work_.col(c) /= sd;
                }
            }
        }

        Vector inv_scale(p);
        for (Index j = 0; j < p; ++j)
            inv_scale(j) = d.retained_[static_cast<std::size_t>(j)] ? 1.0 / d.scale_x_(j) : 0.0;

        if (!x.is_sparse()) {
            d.x_work_ = (x.dense().rowwise() - d.center_x_.transpose()) * inv_scale.asDiagonal();
            d.gram_ = Matrix::Zero(p, p);
            d.gram_.selfadjointView<Eigen::Lower>().rankUpdate(d.x_work_.transpose());
            d.gram_ = Matrix(d.gram_.selfadjointView<Eigen::Lower>());
            d.xty_ = d.x_work_.transpose() * d.y_work_;
        } else {
            Matrix g = raw_gram - nd * d.center_x_ * d.center_x_.transpose();
            d.gram_ = inv_scale.asDiagonal() * g * inv_scale.asDiagonal();
            // Y_w columns sum to zero when centered, so X_w'Y_w needs no mean correction.
            d.xty_ = inv_scale.asDiagonal() * x.t_times(d.y_work_);
        }
        d.inv_scale_ = inv_scale;
        d.x_ = std::move(x);
        d.y_ = std::move(y);
        return d;
    }

    static ProblemData make(Matrix x, Matrix y, StandardizeOptions opts = {})
    {
        return make(Design(std::move(x)), std::move(y), opts);
    }

    Index n() const noexcept { return y_.rows(); }
    Index p() const noexcept { return x_.cols(); }
    Index k() const noexcept { return y_.cols(); }

    const Design& x() const noexcept { return x_; }
    const Matrix& y() const noexcept { return y_; }
    const StandardizeOptions& options() const noexcept { return opts_; }

    const Vector& center_x() const noexcept { return center_x_; }
    const Vector& scale_x() const noexcept { return scale_x_; }
    const Vector& center_y() const noexcept { return center_y_; }
    const Vector& scale_y() const noexcept { return scale_y_; }

    // Zero-variance columns (zero-norm when uncentered). Their coefficients are fixed at 0.
    const std::vector<Index>& screened() const noexcept { return screened_; }
    bool retained(Index j) const { return retained_.at(static_cast<std::size_t>(j)); }

    // Working-scale quantities.
    const Matrix& gram() const noexcept { return gram_; } // X_w' X_w
    const Matrix& xty() const noexcept { return xty_; }   // X_w' Y_w
    const Matrix& working_y() const noexcept { return y_work_; }

    Matrix working_x_times(const Matrix& beta) const
    {
        require_dim("variables", p(), beta.rows());
        if (!x_.is_sparse())
            return x_work_ * beta;
        Matrix b = inv_scale_.asDiagonal() * beta;
        Matrix out = x_.times(b);
        out.rowwise() -= (center_x_.transpose() * b);
        return out;
    }

    Matrix working_x() const
    {
        if (!x_.is_sparse())
            return x_work_;
        return (x_.to_dense().rowwise() - center_x_.transpose()) * inv_scale_.asDiagonal();
    }

    // Inverts the column centering/scaling of a working-scale X.
    Matrix destandardize_x(const Matrix& xw) const
    {
        require_dim("variables", p(), xw.cols());
        Matrix out = xw * scale_x_.asDiagonal();
        out.rowwise() += center_x_.transpose();
        return out;
    }

    CoefficientMatrix to_original(const Matrix& beta_w) const
    {
        require_dim("variables", p(), beta_w.rows());
        require_dim("outcomes", k(), beta_w.cols());
        CoefficientMatrix c;
        c.beta = inv_scale_.asDiagonal() * beta_w * scale_y_.asDiagonal();
        c.intercept = center_y_ - c.beta.transpose() * center_x_;
        return c;
    }

    Matrix to_working(const Matrix& beta_orig) const
    {
        require_dim("variables", p(), beta_orig.rows());
        require_dim("outcomes", k(), beta_orig.cols());
        Matrix b = scale_x_.asDiagonal() * beta_orig * scale_y_.cwiseInverse().asDiagonal();
        for (Index j : screened_)
            b.row(j).setZero();
        return b;
    }

    ProblemData subset(const std::vector<Index>& rows) const
    {
        Matrix ysub(static_cast<Index>(rows.size()), k());
        for (std::size_t i = 0; i < rows.size(); ++i)
            ysub.row(static_cast<Index>(i)) = y_.row(rows[i]);
        return make(x_.select_rows(rows), std::move(ysub), opts_);
    }

private:
    Design x_;
    Matrix y_;
    StandardizeOptions opts_;
    Vector center_x_, scale_x_, center_y_, scale_y_, inv_scale_;
    std::vector<Index> screened_;
    std::vector<bool> retained_;
    Matrix x_work_; // dense designs only
    Matrix y_work_;
    Matrix gram_;
    Matrix xty_;
};

// Penalty strength and per-(variable, group) / per-(variable, pair) weights.
// group_weights is p x |groups| and pair_weights is p x |pairs| in the order of
// OutcomeGrouping::groups() and OutcomeGrouping::fuse_pairs().
struct PenaltyConfig
{
    double lambda = 0.0;
    double alpha = 0.0;
    Matrix group_weights;
    Matrix pair_weights;
    double gamma1 = 1.0;
    double gamma2 = 1.0;
    double weight_cap = 1e8;
    bool adaptive = false;

    double lambda1() const noexcept { return lambda * (1.0 - alpha); }
    double lambda2() const noexcept { return lambda * alpha; }

    void validate(Index p, const OutcomeGrouping& grouping) const
    {
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw Error("lambda must be finite and nonnegative");
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw Error("alpha must lie in [0, 1]");
        require_dim("variables", p, group_weights.rows());
        require_dim("groups", grouping.num_groups(), group_weights.cols());
        require_dim("variables", p, pair_weights.rows());
        require_dim("pairs", grouping.num_pairs(), pair_weights.cols());
        auto ok = [&](const Matrix& w) {
            return w.allFinite() && (w.size() == 0 || (w.minCoeff() >= 0.0 && w.maxCoeff() <= weight_cap));
        };
        if (!ok(group_weights) || !ok(pair_weights))
            throw Error("penalty weights must be finite, nonnegative and at most weight_cap");
    }
};

struct PenaltyValues
{
    double group = 0.0; // P1
    double fused = 0.0; // P2
};

inline PenaltyValues eval_penalties(const Matrix& beta, const OutcomeGrouping& grouping,
                                    const PenaltyConfig& cfg)
{
    require_dim("outcomes", grouping.num_outcomes(), beta.cols());
    require_dim("variables", beta.rows(), cfg.group_weights.rows());
    require_dim("groups", grouping.num_groups(), cfg.group_weights.cols());
    require_dim("variables", beta.rows(), cfg.pair_weights.rows());
    require_dim("pairs", grouping.num_pairs(), cfg.pair_weights.cols());

    PenaltyValues v;
    for (Index j = 0; j < beta.rows(); ++j) {
        for (Index g = 0; g < grouping.num_groups(); ++g) {
            double ss = 0.0;
            for (Index o : grouping.groups()[static_cast<std::size_t>(g)].members)
                ss += beta(j, o) * beta(j, o);
            v.group += cfg.group_weights(j, g) * std::sqrt(ss);
        }
        for (Index q = 0; q < grouping.num_pairs(); ++q) {
            const auto& pr = grouping.fuse_pairs()[static_cast<std::size_t>(q)];
            v.fused += cfg.pair_weights(j, q) * std::abs(beta(j, pr.first) - beta(j, pr.second));
        }
    }
    return v;
}

// (2n)^{-1} ||Y_w - X_w beta||_F^2 with beta on the working scale.
inline double eval_loss(const ProblemData& data, const Matrix& beta)
{
    require_dim("variables", data.p(), beta.rows());
    require_dim("outcomes", data.k(), beta.cols());
    const Matrix resid = data.working_y() - data.working_x_times(beta);
    return resid.squaredNorm() / (2.0 * static_cast<double>(data.n()));
}

inline double eval_objective(const ProblemData& data, const Matrix& beta, const OutcomeGrouping& grouping,
                             const PenaltyConfig& cfg)
{
    const auto pen = eval_penalties(beta, grouping, cfg);
    return eval_loss(data, beta) + cfg.lambda1() * pen.group + cfg.lambda2() * pen.fused;
}

// Least-squares coefficients of the working problem (screened columns are 0).
inline CoefficientMatrix compute_ols(const ProblemData& data)
{
    std::vector<Index> keep;
    for (Index j = 0; j < data.p(); ++j)
        if (data.retained(j))
            keep.push_back(j);
    const Index q = static_cast<Index>(keep.size());
    if (q >= data.n() + (data.options().center ? 0 : 1))
        throw Error("least squares needs n > p (n = " + std::to_string(data.n()) + ", p = " +
                    std::to_string(q) + "); use compute_marginal_weights_base instead");

    Matrix g(q, q);
    Matrix b(q, data.k());
    for (Index a = 0; a < q; ++a) {
        b.row(a) = data.xty().row(keep[static_cast<std::size_t>(a)]);
        for (Index c = 0; c < q; ++c)
            g(a, c) = data.gram()(keep[static_cast<std::size_t>(a)], keep[static_cast<std::size_t>(c)]);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
    const double lo = q > 0 ? eig.eigenvalues().minCoeff() : 1.0;
    const double hi = q > 0 ? eig.eigenvalues().maxCoeff() : 1.0;
    if (!(lo > 1e-10 * hi))
        throw Error("X'X is singular or ill-conditioned; use compute_marginal_weights_base instead");

    Eigen::LLT<Matrix> llt(g);
    Matrix sol = llt.solve(b);
    // one step of iterative refinement
    sol += llt.solve(b - g * sol);

    CoefficientMatrix out;
    out.beta = Matrix::Zero(data.p(), data.k());
    for (Index a = 0; a < q; ++a)
        out.beta.row(keep[static_cast<std::size_t>(a)]) = sol.row(a);
    out.intercept = Vector::Zero(data.k());
    return out;
}

// Univariate regression of each working outcome on each working predictor.
inline CoefficientMatrix compute_marginal_weights_base(const ProblemData& data)
{
    CoefficientMatrix out;
    out.beta = Matrix::Zero(data.p(), data.k());
    out.intercept = Vector::Zero(data.k());
    for (Index j = 0; j < data.p(); ++j) {
        const double norm2 = data.gram()(j, j);
        if (!(norm2 > 0.0))
            throw Error("predictor column " + std::to_string(j + 1) + " has zero norm");
        out.beta.row(j) = data.xty().row(j) / norm2;
    }
    return out;
}

struct PenaltyWeights
{
    Matrix group; // p x |groups|
    Matrix pair;  // p x |pairs|
};

inline PenaltyWeights compute_adaptive_weights(const Matrix& base, const OutcomeGrouping& grouping, double gamma1,
                                               double gamma2, double cap = 1e8)
{
    require_dim("outcomes", grouping.num_outcomes(), base.cols());
    if (!(gamma1 > 0.0) || !(gamma2 > 0.0) || !(cap > 0.0))
        throw Error("adaptive exponents and weight cap must be positive");
    const Index p = base.rows();
    PenaltyWeights w{Matrix(p, grouping.num_groups()), Matrix(p, grouping.num_pairs())};
    auto capped = [cap](double v) { return (std::isfinite(v) && v < cap) ? v : cap; };
    for (Index j = 0; j < p; ++j) {
        for (Index g = 0; g < grouping.num_groups(); ++g) {
            const auto& grp = grouping.groups()[static_cast<std::size_t>(g)];
            double ss = 0.0;
            for (Index o : grp.members)
                ss += base(j, o) * base(j, o);
            const double one = capped(std::pow(std::sqrt(ss), -gamma1));
            w.group(j, g) = std::min(cap, one * static_cast<double>(grp.multiplicity));
        }
        for (Index q = 0; q < grouping.num_pairs(); ++q) {
            const auto& pr = grouping.fuse_pairs()[static_cast<std::size_t>(q)];
            w.pair(j, q) = capped(std::pow(std::abs(base(j, pr.first) - base(j, pr.second)), -gamma2));
        }
    }
    return w;
}

// sqrt(|G|) per group (identical across variables), 1 per pair.
inline PenaltyWeights make_nonadaptive_weights(const OutcomeGrouping& grouping, Index p)
{
    PenaltyWeights w{Matrix(p, grouping.num_groups()), Matrix::Ones(p, grouping.num_pairs())};
    for (Index g = 0; g < grouping.num_groups(); ++g) {
        const auto& grp = grouping.groups()[static_cast<std::size_t>(g)];
        w.group.col(g).setConstant(std::sqrt(static_cast<double>(grp.members.size())) *
                                   static_cast<double>(grp.multiplicity));
    }
    return w;
}

// Base estimate for adaptive weights: least squares when the working design is
// well conditioned with n > p, marginal regressions otherwise. Screened columns
// get a zero base (and therefore capped weights).
inline Matrix adaptive_base(const ProblemData& data)
{
    if (static_cast<Index>(data.p() - data.screened().size()) < data.n()) {
        try {
            return compute_ols(data).beta;
        } catch (const Error&) {
        }
    }
    Matrix base = Matrix::Zero(data.p(), data.k());
    for (Index j = 0; j < data.p(); ++j)
        if (data.retained(j))
            base.row(j) = data.xty().row(j) / data.gram()(j, j);
    return base;
}

// Fills weights for `data` according to cfg.adaptive / gamma1 / gamma2 / weight_cap.
inline PenaltyConfig with_weights(PenaltyConfig cfg, const ProblemData& data, const OutcomeGrouping& grouping)
{
    PenaltyWeights w = cfg.adaptive
                           ? compute_adaptive_weights(adaptive_base(data), grouping, cfg.gamma1, cfg.gamma2,
                                                      cfg.weight_cap)
                           : make_nonadaptive_weights(grouping, data.p());
    cfg.group_weights = std::move(w.group);
    cfg.pair_weights = std::move(w.pair);
    return cfg;
}

} // namespace ogfm
