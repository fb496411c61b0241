#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace ogfm {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Base for every failure raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Raised when two inputs disagree on a dimension; axis() names the offending axis
// ("rows", "variables", "outcomes", "groups", "pairs", ...).
class DimensionError : public Error
{
public:
    DimensionError(std::string axis, Index expected, Index got)
        : Error("dimension mismatch on " + axis + ": expected " + std::to_string(expected) +
                ", got " + std::to_string(got)),
          axis_(std::move(axis))
    {}

    const std::string& axis() const noexcept { return axis_; }

private:
    std::string axis_;
};

inline void require_dim(const char* axis, Index expected, Index got)
{
    if (expected != got)
        throw DimensionError(axis, expected, got);
}

} // namespace ogfm
