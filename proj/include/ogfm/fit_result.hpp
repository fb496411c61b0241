#pragma once

#include "ogfm/model.hpp"
#include "ogfm/structure.hpp"

#include <string>
#include <vector>

namespace ogfm {

// ADMM iterate. The dual is stored in scaled form (u = nu / rho); nu() returns the
// unscaled multiplier. Group copies occupy the first m entries of the dual, fused
// differences the last e.
struct SolverState
{
    Vector beta;          // vec(beta), length Kp, working scale
    Vector gamma;         // length m
    Vector eta;           // length e
    Vector scaled_dual;   // length m + e
    double rho = 1.0;
    Index iter = 0;

    Vector nu() const { return rho * scaled_dual; }
};

struct FusedCoefficients
{
    Index variable = 0;
    FusePair pair;

    friend bool operator==(const FusedCoefficients&, const FusedCoefficients&) = default;
};

struct FitResult
{
    CoefficientMatrix coef; // original scale
    Matrix beta_working;    // p x K
    Vector gamma;
    Vector eta;
    std::vector<Index> support;           // vec indices with nonzero coefficient
    std::vector<FusedCoefficients> fused; // pairs in F that are equal and nonzero
    double objective = 0.0;               // penalized objective on the working scale
    Index iterations = 0;
    bool converged = false;
    bool polished = false;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double lambda = 0.0;
    double alpha = 0.0;
    SolverState state; // raw ADMM state, usable as a warm start
    std::vector<std::string> warnings;
};

struct StructureEstimate
{
    std::vector<Index> support;
    std::vector<FusedCoefficients> fused;
};

// Default fusion tolerance 1e-6 * (1 + max|beta|).
inline double default_fuse_tolerance(const Matrix& beta)
{
    return 1e-6 * (1.0 + (beta.size() ? beta.cwiseAbs().maxCoeff() : 0.0));
}

// Support = |beta| > tol_zero. A pair (l, o) of variable j is fused when both
// coefficients are in the support and either its eta entry is exactly zero or the
// coefficients differ by at most tol_fuse.
inline StructureEstimate detect_structure(const FitResult& fit, const OutcomeGrouping& grouping, double tol_zero,
                                          double tol_fuse)
{
    const Matrix& b = fit.coef.beta;
    require_dim("outcomes", grouping.num_outcomes(), b.cols());
    const Index p = b.rows();
    StructureEstimate out;
    for (Index c = 0; c < b.cols(); ++c)
        for (Index j = 0; j < p; ++j)
            if (std::abs(b(j, c)) > tol_zero)
                out.support.push_back(j + c * p);
    std::sort(out.support.begin(), out.support.end());

    const Index e = grouping.num_pairs();
    const bool have_eta = fit.eta.size() == p * e;
    for (Index j = 0; j < p; ++j) {
        for (Index q = 0; q < e; ++q) {
            const auto& pr = grouping.fuse_pairs()[static_cast<std::size_t>(q)];
            const double a = b(j, pr.first);
            const double c = b(j, pr.second);
            if (!(std::abs(a) > tol_zero && std::abs(c) > tol_zero))
                continue;
            const bool exact = have_eta && fit.eta(j * e + q) == 0.0;
            if (exact || std::abs(a - c) <= tol_fuse)
                out.fused.push_back({j, pr});
        }
    }
    return out;
}

inline StructureEstimate detect_structure(const FitResult& fit, const OutcomeGrouping& grouping)
{
    const double tol_zero = fit.polished ? 0.0 : 1e-4 * (fit.coef.beta.size() ? fit.coef.beta.cwiseAbs().maxCoeff() : 0.0);
    return detect_structure(fit, grouping, tol_zero, default_fuse_tolerance(fit.coef.beta));
}

} // namespace ogfm
