#pragma once

// Multi-block ADMM for least squares with an overlapping group lasso and a
// fused lasso penalty:
//
//   minimize  (2n)^{-1} ||Y - X B||_F^2 + lambda1 * sum w_jG ||gamma_jG||_2
//                                        + lambda2 * sum w_jlo |eta_jlo|
//   subject to F vec(B) = gamma,  D vec(B) = eta.
//
// With A = [F; D] the blocks are minimized in the order beta, gamma, eta, then the
// scaled dual is updated: u <- u + A beta - [gamma; eta].

#include "ogfm/fit_result.hpp"
#include "ogfm/model.hpp"
#include "ogfm/structure.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace ogfm {

inline double soft_threshold(double u, double t)
{
    if (u > t)
        return u - t;
    if (u < -t)
        return u + t;
    return 0.0;
}

// u * (1 - t / ||u||)_+, exactly zero when ||u|| <= t.
inline Vector block_soft_threshold(const Eigen::Ref<const Vector>& u, double t)
{
    const double norm = u.norm();
    if (norm <= t || norm == 0.0)
        return Vector::Zero(u.size());
    return u * (1.0 - t / norm);
}

enum class AdmmBlock { beta, gamma, eta, dual };

struct SolverOptions
{
    double eps_abs = 1e-5;
    double eps_rel = 1e-5;
    Index max_iter = 5000;
    double rho0 = 1.0;
    double rho_mu = 10.0;
    double rho_tau = 2.0;
    bool adapt_rho = true;
    bool polish_support = true;
    // Support polishing re-solves on the collapsed support with Newton steps when the
    // collapsed dimension is at most this; larger supports are only zeroed/averaged.
    Index polish_max_dim = 2000;
    // Called after every block update (inspection/logging only).
    std::function<void(AdmmBlock, const SolverState&)> observer;

    void validate() const
    {
        if (!(eps_abs > 0.0) || !(eps_rel > 0.0))
            throw Error("eps_abs and eps_rel must be positive");
        if (!(rho_mu > 1.0) || !(rho_tau > 1.0))
            throw Error("rho_mu and rho_tau must exceed 1");
        if (!(rho0 > 0.0))
            throw Error("rho0 must be positive");
        if (max_iter < 1)
            throw Error("max_iter must be at least 1");
    }
};

// Solver for (G/n) B + rho * B M = R, which is the beta-update system
// ((I_K (x) X'X)/n + rho (F'F + D'D)) vec(B) = vec(R) written in matrix form:
// F'F = diag(c) (x) I_p with c_k the number of groups containing outcome k, and
// D'D = L (x) I_p with L the Laplacian of the fuse-pair graph, so M = diag(c) + L.
// Both factors are diagonalized once; a change of rho costs nothing.
class BetaSystem
{
public:
    BetaSystem() = default;

    BetaSystem(const Matrix& gram_over_n, const OutcomeGrouping& grouping)
    {
        const Index k = grouping.num_outcomes();
        Matrix m = Matrix::Zero(k, k);
        for (Index o = 0; o < k; ++o)
            m(o, o) = static_cast<double>(grouping.membership_count(o));
        for (const auto& pr : grouping.fuse_pairs()) {
            m(pr.first, pr.first) += 1.0;
            m(pr.second, pr.second) += 1.0;
            m(pr.first, pr.second) -= 1.0;
            m(pr.second, pr.first) -= 1.0;
        }
        Eigen::SelfAdjointEigenSolver<Matrix> eg(gram_over_n);
        Eigen::SelfAdjointEigenSolver<Matrix> em(m);
        gram_vecs_ = eg.eigenvectors();
        gram_vals_ = eg.eigenvalues().cwiseMax(0.0);
        outcome_vecs_ = em.eigenvectors();
        outcome_vals_ = em.eigenvalues().cwiseMax(0.0);
        gram_ = gram_over_n;
        outcome_ = m;
    }

    Matrix solve(const Matrix& rhs, double rho) const
    {
        Matrix t = gram_vecs_.transpose() * rhs * outcome_vecs_;
        for (Index c = 0; c < t.cols(); ++c)
            for (Index r = 0; r < t.rows(); ++r)
                t(r, c) /= gram_vals_(r) + rho * outcome_vals_(c);
        return gram_vecs_ * t * outcome_vecs_.transpose();
    }

    // Applies the system operator; used for residual checks.
    Matrix apply(const Matrix& b, double rho) const { return gram_ * b + rho * b * outcome_; }

private:
    Matrix gram_vecs_, outcome_vecs_, gram_, outcome_;
    Vector gram_vals_, outcome_vals_;
};

// Everything about one (data, grouping) pair that does not depend on lambda/alpha.
class AdmmWorkspace
{
public:
    AdmmWorkspace(const ProblemData& data, const OutcomeGrouping& grouping)
        : data_(&data), grouping_(&grouping), mats_(build_constraints(grouping, data.p())),
          system_(data.gram() / static_cast<double>(data.n()), grouping),
          xty_over_n_(data.xty() / static_cast<double>(data.n()))
    {
        require_dim("outcomes", grouping.num_outcomes(), data.k());
    }

    const ProblemData& data() const noexcept { return *data_; }
    const OutcomeGrouping& grouping() const noexcept { return *grouping_; }
    const ConstraintMatrices& matrices() const noexcept { return mats_; }
    const BetaSystem& system() const noexcept { return system_; }
    const Matrix& xty_over_n() const noexcept { return xty_over_n_; }

    Index p() const noexcept { return mats_.p; }
    Index k() const noexcept { return mats_.k; }
    Index m() const noexcept { return mats_.num_group_rows(); }
    Index e() const noexcept { return mats_.num_pair_rows(); }

    // F vec(beta)
    Vector apply_F(const Vector& beta) const
    {
        Vector out(m());
        const auto& cols = mats_.f.columns;
        for (Index r = 0; r < m(); ++r)
            out(r) = beta(cols[static_cast<std::size_t>(r)]);
        return out;
    }

    // D vec(beta)
    Vector apply_D(const Vector& beta) const
    {
        Vector out(e());
        const auto& rows = mats_.d.rows;
        for (Index r = 0; r < e(); ++r)
            out(r) = beta(rows[static_cast<std::size_t>(r)].plus) - beta(rows[static_cast<std::size_t>(r)].minus);
        return out;
    }

    Vector apply_A(const Vector& beta) const
    {
        Vector out(m() + e());
        out.head(m()) = apply_F(beta);
        out.tail(e()) = apply_D(beta);
        return out;
    }

    // F' a + D' b for a stacked vector v = [a; b]
    Vector apply_At(const Vector& v) const
    {
        Vector out = Vector::Zero(p() * k());
        const auto& cols = mats_.f.columns;
        for (Index r = 0; r < m(); ++r)
            out(cols[static_cast<std::size_t>(r)]) += v(r);
        const auto& rows = mats_.d.rows;
        for (Index r = 0; r < e(); ++r) {
            out(rows[static_cast<std::size_t>(r)].plus) += v(m() + r);
            out(rows[static_cast<std::size_t>(r)].minus) -= v(m() + r);
        }
        return out;
    }

    SolverState cold_state(double rho) const
    {
        SolverState s;
        s.beta = Vector::Zero(p() * k());
        s.gamma = Vector::Zero(m());
        s.eta = Vector::Zero(e());
        s.scaled_dual = Vector::Zero(m() + e());
        s.rho = rho;
        return s;
    }

private:
    const ProblemData* data_;
    const OutcomeGrouping* grouping_;
    ConstraintMatrices mats_;
    BetaSystem system_;
    Matrix xty_over_n_;
};

inline void check_state(const SolverState& s, const AdmmWorkspace& ws)
{
    require_dim("coefficients", ws.p() * ws.k(), s.beta.size());
    require_dim("group rows", ws.m(), s.gamma.size());
    require_dim("pair rows", ws.e(), s.eta.size());
    require_dim("dual", ws.m() + ws.e(), s.scaled_dual.size());
    if (!(s.rho > 0.0))
        throw Error("rho must be positive");
}

inline Vector stacked_split(const SolverState& s)
{
    Vector z(s.gamma.size() + s.eta.size());
    z << s.gamma, s.eta;
    return z;
}

// Solves (X'X/n + rho A'A) beta = X'Y/n + rho A'([gamma; eta] - u).
inline Vector beta_update(const SolverState& s, const AdmmWorkspace& ws)
{
    const Vector corr = ws.apply_At(stacked_split(s) - s.scaled_dual);
    Matrix rhs = ws.xty_over_n() + s.rho * corr.reshaped(ws.p(), ws.k());
    Matrix b = ws.system().solve(rhs, s.rho);
    return b.reshaped();
}

// Per (variable, group) slice: block soft-threshold of (F beta + u) at lambda1 w / rho.
inline Vector gamma_update(const SolverState& s, const AdmmWorkspace& ws, const PenaltyConfig& cfg)
{
    const Vector v = ws.apply_F(s.beta) + s.scaled_dual.head(ws.m());
    Vector out(ws.m());
    const double lam = cfg.lambda1();
    for (const auto& sl : ws.matrices().f.slices) {
        const double t = lam * cfg.group_weights(sl.variable, sl.group) / s.rho;
        out.segment(sl.begin, sl.size) = block_soft_threshold(v.segment(sl.begin, sl.size), t);
    }
    return out;
}

// Elementwise soft-threshold of (D beta + u) at lambda2 w / rho.
inline Vector eta_update(const SolverState& s, const AdmmWorkspace& ws, const PenaltyConfig& cfg)
{
    const Vector v = ws.apply_D(s.beta) + s.scaled_dual.tail(ws.e());
    Vector out(ws.e());
    const double lam = cfg.lambda2();
    const auto& rows = ws.matrices().d.rows;
    for (Index r = 0; r < ws.e(); ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        out(r) = soft_threshold(v(r), lam * cfg.pair_weights(row.variable, row.pair) / s.rho);
    }
    return out;
}

// u <- u + A beta - [gamma; eta]  (nu <- nu + rho (A beta - [gamma; eta]))
inline Vector dual_update(const SolverState& s, const AdmmWorkspace& ws)
{
    return s.scaled_dual + ws.apply_A(s.beta) - stacked_split(s);
}

struct ConvergenceCheck
{
    bool converged = false;
    double primal = 0.0;
    double dual = 0.0;
    double eps_primal = 0.0;
    double eps_dual = 0.0;
};

// r = A beta - [gamma; eta], s = rho A'([gamma; eta]_t - [gamma; eta]_{t-1}).
inline ConvergenceCheck check_convergence(const SolverState& s, const SolverState& prev, const AdmmWorkspace& ws,
                                          const SolverOptions& opts)
{
    const Vector ab = ws.apply_A(s.beta);
    const Vector z = stacked_split(s);
    const Vector dz = z - stacked_split(prev);
    ConvergenceCheck c;
    c.primal = (ab - z).norm();
    c.dual = s.rho * ws.apply_At(dz).norm();
    const double mz = static_cast<double>(ab.size());
    const double kp = static_cast<double>(s.beta.size());
    c.eps_primal = std::sqrt(mz) * opts.eps_abs + opts.eps_rel * std::max(ab.norm(), z.norm());
    c.eps_dual = std::sqrt(kp) * opts.eps_abs + opts.eps_rel * s.rho * ws.apply_At(s.scaled_dual).norm();
    c.converged = c.primal <= c.eps_primal && c.dual <= c.eps_dual;
    return c;
}

// Residual balancing: rho *= tau when primal > mu * dual, rho /= tau when
// dual > mu * primal. The scaled dual is rescaled so nu is unchanged.
inline bool update_rho(SolverState& s, double primal, double dual, const SolverOptions& opts)
{
    double factor = 1.0;
    if (primal > opts.rho_mu * dual)
        factor = opts.rho_tau;
    else if (dual > opts.rho_mu * primal)
        factor = 1.0 / opts.rho_tau;
    if (factor == 1.0)
        return false;
    s.rho *= factor;
    s.scaled_dual /= factor;
    return true;
}

// L_rho(beta, gamma, eta, nu) in unscaled form.
inline double augmented_lagrangian(const SolverState& s, const AdmmWorkspace& ws, const PenaltyConfig& cfg)
{
    const Matrix b = s.beta.reshaped(ws.p(), ws.k());
    double val = eval_loss(ws.data(), b);
    for (const auto& sl : ws.matrices().f.slices)
        val += cfg.lambda1() * cfg.group_weights(sl.variable, sl.group) * s.gamma.segment(sl.begin, sl.size).norm();
    const auto& rows = ws.matrices().d.rows;
    for (Index r = 0; r < ws.e(); ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        val += cfg.lambda2() * cfg.pair_weights(row.variable, row.pair) * std::abs(s.eta(r));
    }
    const Vector resid = ws.apply_A(s.beta) - stacked_split(s);
    val += s.rho * s.scaled_dual.dot(resid) + 0.5 * s.rho * resid.squaredNorm();
    return val;
}

namespace detail {

// Zeroes coefficients whose every containing group copy is exactly zero, collapses
// coefficients joined by exactly-zero fused differences, and minimizes the
// objective over the collapsed parameterization with a damped Newton method.
class SupportPolisher
{
public:
    SupportPolisher(const AdmmWorkspace& ws, const PenaltyConfig& cfg) : ws_(ws), cfg_(cfg) {}

    // Returns the polished working-scale beta, or nullopt when the zero/fusion
    // pattern equals the one of the previous call. Entries of gamma with
    // |value| <= tol count as zero and pairs with |eta| <= tol as fused.
    std::optional<Matrix> run(const SolverState& s, Index max_dim, double tol = 0.0)
    {
        const Index p = ws_.p(), k = ws_.k();
        const Matrix start = s.beta.reshaped(p, k);

        // zero pattern from gamma: nonzero iff some containing slice is nonzero
        std::vector<char> alive(static_cast<std::size_t>(p * k), 0);
        for (const auto& sl : ws_.matrices().f.slices) {
            const auto& members = ws_.grouping().groups()[static_cast<std::size_t>(sl.group)].members;
            for (Index i = 0; i < sl.size; ++i)
                if (std::abs(s.gamma(sl.begin + i)) > tol)
                    alive[static_cast<std::size_t>(sl.variable + members[static_cast<std::size_t>(i)] * p)] = 1;
        }
        for (Index j : ws_.data().screened())
            for (Index c = 0; c < k; ++c)
                alive[static_cast<std::size_t>(j + c * p)] = 0;

        // fusion components via union-find over vec indices
        std::vector<Index> parent(static_cast<std::size_t>(p * k));
        std::iota(parent.begin(), parent.end(), Index{0});
        auto find = [&](Index a) {
            while (parent[static_cast<std::size_t>(a)] != a) {
                parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
                a = parent[static_cast<std::size_t>(a)];
            }
            return a;
        };
        const auto& rows = ws_.matrices().d.rows;
        for (Index r = 0; r < ws_.e(); ++r) {
            const auto& row = rows[static_cast<std::size_t>(r)];
            if (std::abs(s.eta(r)) <= tol && alive[static_cast<std::size_t>(row.plus)] && alive[static_cast<std::size_t>(row.minus)]) {
                const Index a = find(row.plus), b = find(row.minus);
                if (a != b)
                    parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
            }
        }

        std::vector<Index> pattern(static_cast<std::size_t>(p * k), -1);
        for (Index idx = 0; idx < p * k; ++idx)
            if (alive[static_cast<std::size_t>(idx)])
                pattern[static_cast<std::size_t>(idx)] = find(idx);
        if (pattern == last_pattern_)
            return std::nullopt;
        last_pattern_ = std::move(pattern);

        comp_of_.assign(static_cast<std::size_t>(p * k), -1);
        members_.clear();
        std::vector<Index> root_to_comp(static_cast<std::size_t>(p * k), -1);
        for (Index idx = 0; idx < p * k; ++idx) {
            if (!alive[static_cast<std::size_t>(idx)])
                continue;
            const Index root = find(idx);
            Index& c = root_to_comp[static_cast<std::size_t>(root)];
            if (c < 0) {
                c = static_cast<Index>(members_.size());
                members_.emplace_back();
            }
            comp_of_[static_cast<std::size_t>(idx)] = c;
            members_[static_cast<std::size_t>(c)].push_back(idx);
        }

        const Index q = static_cast<Index>(members_.size());
        Vector theta(q);
        for (Index c = 0; c < q; ++c) {
            double sum = 0.0;
            for (Index idx : members_[static_cast<std::size_t>(c)])
                sum += start(idx % p, idx / p);
            theta(c) = sum / static_cast<double>(members_[static_cast<std::size_t>(c)].size());
        }
        if (q == 0)
            return Matrix::Zero(p, k);
        if (q <= max_dim)
            newton(theta);
        return expand(theta);
    }

private:
    Matrix expand(const Vector& theta) const
    {
        Matrix b = Matrix::Zero(ws_.p(), ws_.k());
        for (std::size_t c = 0; c < members_.size(); ++c)
            for (Index idx : members_[c])
                b(idx % ws_.p(), idx / ws_.p()) = theta(static_cast<Index>(c));
        return b;
    }

    Vector reduce(const Matrix& g) const
    {
        Vector out = Vector::Zero(static_cast<Index>(members_.size()));
        for (std::size_t c = 0; c < members_.size(); ++c)
            for (Index idx : members_[c])
                out(static_cast<Index>(c)) += g(idx % ws_.p(), idx / ws_.p());
        return out;
    }

    // objective up to the constant tr(Y'Y)/(2n)
    double value(const Matrix& b) const
    {
        const Matrix& gram = ws_.data().gram();
        const double n = static_cast<double>(ws_.data().n());
        double v = 0.5 * (b.cwiseProduct(gram * b)).sum() / n - b.cwiseProduct(ws_.xty_over_n()).sum();
        const auto pen = eval_penalties(b, ws_.grouping(), cfg_);
        return v + cfg_.lambda1() * pen.group + cfg_.lambda2() * pen.fused;
    }

    Matrix gradient(const Matrix& b) const
    {
        const double n = static_cast<double>(ws_.data().n());
        Matrix g = ws_.data().gram() * b / n - ws_.xty_over_n();
        const auto& grouping = ws_.grouping();
        for (Index j = 0; j < ws_.p(); ++j) {
            for (Index gi = 0; gi < grouping.num_groups(); ++gi) {
                const auto& mem = grouping.groups()[static_cast<std::size_t>(gi)].members;
                double ss = 0.0;
                for (Index o : mem)
                    ss += b(j, o) * b(j, o);
                if (ss == 0.0)
                    continue;
                const double scale = cfg_.lambda1() * cfg_.group_weights(j, gi) / std::sqrt(ss);
                for (Index o : mem)
                    g(j, o) += scale * b(j, o);
            }
            for (Index qi = 0; qi < grouping.num_pairs(); ++qi) {
                const auto& pr = grouping.fuse_pairs()[static_cast<std::size_t>(qi)];
                const double d = b(j, pr.first) - b(j, pr.second);
                if (d == 0.0)
                    continue;
                const double w = cfg_.lambda2() * cfg_.pair_weights(j, qi) * (d > 0.0 ? 1.0 : -1.0);
                g(j, pr.first) += w;
                g(j, pr.second) -= w;
            }
        }
        return g;
    }

    // Hessian of the smooth collapsed objective: sum over outcomes of the Gram
    // block between live coefficients plus each nonzero group norm's curvature.
    Matrix collapsed_hessian(const Matrix& b) const
    {
        const Index p = ws_.p(), k = ws_.k();
        const double n = static_cast<double>(ws_.data().n());
        const Matrix& gram = ws_.data().gram();
        const Index q = static_cast<Index>(members_.size());
        Matrix h = Matrix::Zero(q, q);
        std::vector<std::pair<Index, Index>> live; // (variable, component)
        for (Index o = 0; o < k; ++o) {
            live.clear();
            for (Index j = 0; j < p; ++j)
                if (Index c = comp_of_[static_cast<std::size_t>(j + o * p)]; c >= 0)
                    live.emplace_back(j, c);
            for (const auto& [ja, ca] : live)
                for (const auto& [jb, cb] : live)
                    h(ca, cb) += gram(ja, jb) / n;
        }
        const auto& grouping = ws_.grouping();
        for (Index j = 0; j < p; ++j) {
            for (Index gi = 0; gi < grouping.num_groups(); ++gi) {
                const auto& mem = grouping.groups()[static_cast<std::size_t>(gi)].members;
                double ss = 0.0;
                for (Index o : mem)
                    ss += b(j, o) * b(j, o);
                if (ss == 0.0)
                    continue;
                const double nrm = std::sqrt(ss);
                const double w = cfg_.lambda1() * cfg_.group_weights(j, gi);
                for (Index oa : mem) {
                    const Index ca = comp_of_[static_cast<std::size_t>(j + oa * p)];
                    if (ca < 0)
                        continue;
                    for (Index ob : mem) {
                        const Index cb = comp_of_[static_cast<std::size_t>(j + ob * p)];
                        if (cb < 0)
                            continue;
                        h(ca, cb) += w * ((oa == ob ? 1.0 / nrm : 0.0) - b(j, oa) * b(j, ob) / (ss * nrm));
                    }
                }
            }
        }
        return h;
    }

    void newton(Vector& theta) const
    {
        double f = value(expand(theta));
        for (int it = 0; it < 50; ++it) {
            const Matrix b = expand(theta);
            const Vector g = reduce(gradient(b));
            const double gnorm = g.lpNorm<Eigen::Infinity>();
            if (!(gnorm > 1e-14 * (1.0 + theta.lpNorm<Eigen::Infinity>())))
                break;

            const Matrix h = collapsed_hessian(b);
            const Eigen::LDLT<Matrix> ldlt(h);
            Vector d = ldlt.solve(-g);
            if (ldlt.info() != Eigen::Success || !d.allFinite() || !(g.dot(d) < 0.0))
                d = -g.cwiseQuotient(h.diagonal().cwiseMax(1e-12));

            const double slope = g.dot(d);
            double t = 1.0;
            bool moved = false;
            double gain = 0.0;
            for (int ls = 0; ls < 60; ++ls) {
                const Vector cand = theta + t * d;
                const double fc = value(expand(cand));
                if (fc <= f + 1e-4 * t * slope) {
                    moved = fc < f;
                    gain = f - fc;
                    theta = cand;
                    f = fc;
                    break;
                }
                t *= 0.5;
            }
            // stalls at kinks of the collapsed objective end the polish
            if (!moved || gain <= 1e-12 * (1.0 + std::abs(f)) ||
                t * d.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + theta.lpNorm<Eigen::Infinity>()))
                break;
        }
    }

    const AdmmWorkspace& ws_;
    const PenaltyConfig& cfg_;
    std::vector<Index> comp_of_;
    std::vector<std::vector<Index>> members_;
    std::vector<Index> last_pattern_;
};

} // namespace detail

inline FitResult fit(const AdmmWorkspace& ws, const PenaltyConfig& cfg, const SolverOptions& opts = {},
                     const SolverState* warm_start = nullptr)
{
    opts.validate();
    cfg.validate(ws.p(), ws.grouping());

    SolverState s = warm_start ? *warm_start : ws.cold_state(opts.rho0);
    check_state(s, ws);
    s.iter = 0;

    FitResult res;
    res.lambda = cfg.lambda;
    res.alpha = cfg.alpha;
    auto notify = [&](AdmmBlock b) {
        if (opts.observer)
            opts.observer(b, s);
    };

    ConvergenceCheck conv;
    for (Index it = 1; it <= opts.max_iter; ++it) {
        const SolverState prev = s;
        s.beta = beta_update(s, ws);
        notify(AdmmBlock::beta);
        s.gamma = gamma_update(s, ws, cfg);
        notify(AdmmBlock::gamma);
        s.eta = eta_update(s, ws, cfg);
        notify(AdmmBlock::eta);
        s.scaled_dual = dual_update(s, ws);
        s.iter = it;
        notify(AdmmBlock::dual);

        conv = check_convergence(s, prev, ws, opts);
        if (conv.converged)
            break;
        if (opts.adapt_rho && (it <= 100 || it % 10 == 0))
            update_rho(s, conv.primal, conv.dual, opts);
    }

    res.iterations = s.iter;
    res.converged = conv.converged;
    res.primal_residual = conv.primal;
    res.dual_residual = conv.dual;
    if (!res.converged)
        res.warnings.push_back("ADMM reached max_iter = " + std::to_string(opts.max_iter) +
                               " without converging (primal " + std::to_string(conv.primal) + ", dual " +
                               std::to_string(conv.dual) + ")");

    const ProblemData& data = ws.data();
    Matrix beta = s.beta.reshaped(ws.p(), ws.k());
    for (Index j : data.screened())
        beta.row(j).setZero();
    double obj = eval_objective(data, beta, ws.grouping(), cfg);

    if (opts.polish_support) {
        detail::SupportPolisher polisher(ws, cfg);
        const double scale = 1.0 + s.beta.cwiseAbs().maxCoeff();
        for (double rel : {0.0, 1e-6, 1e-4, 1e-3}) {
            if (auto pol = polisher.run(s, opts.polish_max_dim, rel * scale)) {
                const double pobj = eval_objective(data, *pol, ws.grouping(), cfg);
                if (pobj <= obj) {
                    beta = std::move(*pol);
                    obj = pobj;
                    res.polished = true;
                }
            }
        }
    }
    const Matrix zero = Matrix::Zero(ws.p(), ws.k());
    if (const double zobj = eval_objective(data, zero, ws.grouping(), cfg); zobj < obj) {
        beta = zero;
        obj = zobj;
        res.polished = true;
    }

    res.beta_working = beta;
    res.coef = data.to_original(beta);
    res.objective = obj;
    res.gamma = s.gamma;
    res.eta = s.eta;
    res.state = std::move(s);
    const auto st = detect_structure(res, ws.grouping());
    res.support = st.support;
    res.fused = st.fused;
    return res;
}

inline FitResult fit(const ProblemData& data, const OutcomeGrouping& grouping, const PenaltyConfig& cfg,
                     const SolverOptions& opts = {}, const SolverState* warm_start = nullptr)
{
    AdmmWorkspace ws(data, grouping);
    return fit(ws, cfg, opts, warm_start);
}

} // namespace ogfm
