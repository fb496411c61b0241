#include <ogfm/model.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace ogfm;

namespace {

constexpr StandardizeOptions raw{false, false, false};

Matrix randn(Index r, Index c, std::mt19937_64& rng)
{
    std::normal_distribution<double> nd;
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i)
            m(i, j) = nd(rng);
    return m;
}

PenaltyConfig unit_config(const OutcomeGrouping& g, Index p, double lambda = 0.0, double alpha = 0.0)
{
    PenaltyConfig cfg;
    cfg.lambda = lambda;
    cfg.alpha = alpha;
    cfg.group_weights = Matrix::Ones(p, g.num_groups());
    cfg.pair_weights = Matrix::Ones(p, g.num_pairs());
    return cfg;
}

} // namespace

TEST(Penalties, ZeroBeta)
{
    auto g = build_grouping(3, {{{0, 1}, {2}}});
    auto cfg = unit_config(g, 4);
    auto v = eval_penalties(Matrix::Zero(4, 3), g, cfg);
    EXPECT_EQ(v.group, 0.0);
    EXPECT_EQ(v.fused, 0.0);
}

TEST(Penalties, HandExample)
{
    // p = 1, K = 2: groups {1,2},{1},{2}; pair (1,2); beta = (3, 4)
    auto g = build_grouping(2, {}, std::vector<FusePair>{{0, 1}});
    ASSERT_EQ(g.num_groups(), 3);
    auto cfg = unit_config(g, 1);
    Matrix b(1, 2);
    b << 3, 4;
    auto v = eval_penalties(b, g, cfg);
    EXPECT_DOUBLE_EQ(v.group, 12.0);
    EXPECT_DOUBLE_EQ(v.fused, 1.0);
}

TEST(Penalties, ConstantRowsHaveNoFusedPenalty)
{
    auto g = build_grouping(4, {{{0, 1, 2, 3}}});
    PenaltyConfig cfg = unit_config(g, 2);
    cfg.pair_weights.setConstant(17.0);
    Matrix b(2, 4);
    b << 1, 1, 1, 1, -3, -3, -3, -3;
    EXPECT_EQ(eval_penalties(b, g, cfg).fused, 0.0);
}

TEST(Penalties, DimensionErrorNamesAxis)
{
    auto g = build_grouping(3, {});
    auto cfg = unit_config(g, 2);
    try {
        eval_penalties(Matrix::Zero(2, 4), g, cfg);
        FAIL();
    } catch (const DimensionError& e) {
        EXPECT_EQ(e.axis(), "outcomes");
    }
}

TEST(Penalties, HomogeneityAndTranslationProperties)
{
    std::mt19937_64 rng(11);
    auto g = build_grouping(5, {{{0, 1, 2}, {3, 4}}});
    const Index p = 4;
    PenaltyConfig cfg = unit_config(g, p);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (Index j = 0; j < p; ++j) {
        for (Index c = 0; c < cfg.group_weights.cols(); ++c)
            cfg.group_weights(j, c) = u(rng);
        for (Index c = 0; c < cfg.pair_weights.cols(); ++c)
            cfg.pair_weights(j, c) = u(rng);
    }
    for (int t = 0; t < 100; ++t) {
        Matrix b = randn(p, 5, rng);
        const double c = u(rng);
        auto v = eval_penalties(b, g, cfg);
        auto vs = eval_penalties(c * b, g, cfg);
        EXPECT_NEAR(vs.group, c * v.group, 1e-12 * c * v.group);
        EXPECT_NEAR(vs.fused, c * v.fused, 1e-12 * c * v.fused);

        Matrix shifted = b;
        shifted.row(t % p).array() += u(rng);
        EXPECT_NEAR(eval_penalties(shifted, g, cfg).fused, v.fused, 1e-12 * (1.0 + v.fused));
    }
}

TEST(Objective, ZeroCoefficients)
{
    std::mt19937_64 rng(3);
    Matrix x = randn(20, 3, rng), y = randn(20, 2, rng);
    auto data = ProblemData::make(x, y);
    auto g = build_grouping(2, {});
    auto cfg = unit_config(g, 3);
    Matrix yc = y.rowwise() - y.colwise().mean();
    EXPECT_NEAR(eval_objective(data, Matrix::Zero(3, 2), g, cfg), yc.squaredNorm() / 40.0, 1e-14);
}

TEST(Objective, ScalarHandExample)
{
    Matrix x(1, 1), y(1, 1);
    x << 2;
    y << 3;
    auto data = ProblemData::make(x, y, raw);
    auto g = build_grouping(1, {});
    PenaltyConfig cfg = unit_config(g, 1, 1.0, 0.0); // one deduplicated unit-weight group
    Matrix b(1, 1);
    b << 1;
    EXPECT_DOUBLE_EQ(eval_objective(data, b, g, cfg), 1.5);
}

TEST(Objective, ConvexAlongSegments)
{
    std::mt19937_64 rng(5);
    Matrix x = randn(15, 4, rng), y = randn(15, 3, rng);
    auto data = ProblemData::make(x, y);
    auto g = build_grouping(3, {{{0, 1}, {2}}});
    auto cfg = unit_config(g, 4, 0.7, 0.4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        Matrix a = randn(4, 3, rng), b = randn(4, 3, rng);
        const double t = u(rng);
        const double lhs = eval_objective(data, t * a + (1 - t) * b, g, cfg);
        const double rhs = t * eval_objective(data, a, g, cfg) + (1 - t) * eval_objective(data, b, g, cfg);
        EXPECT_LE(lhs, rhs + 1e-10);
    }
}

TEST(Standardization, RoundTripAndMetadata)
{
    std::mt19937_64 rng(9);
    Matrix x = randn(30, 4, rng) * 3.0;
    x.col(1).array() += 100.0;
    Matrix y = randn(30, 2, rng);
    auto data = ProblemData::make(x, y);
    Matrix back = data.destandardize_x(data.working_x());
    EXPECT_LE((back - x).norm() / x.norm(), 1e-12);
    for (Index j = 0; j < 4; ++j) {
        EXPECT_GT(data.scale_x()(j), 0.0);
        EXPECT_NEAR(data.working_x().col(j).squaredNorm() / 30.0, 1.0, 1e-12);
    }
    // beta round trip
    Matrix b = randn(4, 2, rng);
    EXPECT_LE((data.to_working(data.to_original(b).beta) - b).norm(), 1e-12 * b.norm());
}

TEST(Standardization, ZeroVarianceColumnsAreScreened)
{
    std::mt19937_64 rng(10);
    Matrix x = randn(12, 3, rng);
    x.col(1).setConstant(4.0);
    auto data = ProblemData::make(x, randn(12, 2, rng));
    ASSERT_EQ(data.screened(), (std::vector<Index>{1}));
    EXPECT_FALSE(data.retained(1));
    EXPECT_EQ(data.gram().row(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Standardization, SparseMatchesDense)
{
    std::mt19937_64 rng(12);
    Matrix x = randn(25, 5, rng);
    for (Index i = 0; i < x.size(); ++i)
        if (i % 3)
            x.data()[i] = 0.0;
    Matrix y = randn(25, 3, rng);
    auto dd = ProblemData::make(x, y);
    auto sd = ProblemData::make(Design(SparseMatrix(x.sparseView())), y);
    EXPECT_TRUE(sd.x().is_sparse());
    EXPECT_LE((dd.gram() - sd.gram()).norm(), 1e-12 * dd.gram().norm());
    EXPECT_LE((dd.xty() - sd.xty()).norm(), 1e-12 * dd.xty().norm());
    Matrix b = randn(5, 3, rng);
    EXPECT_LE((dd.working_x_times(b) - sd.working_x_times(b)).norm(), 1e-12 * dd.working_x_times(b).norm());
}

TEST(Standardization, RejectsNaNAndMismatch)
{
    Matrix x = Matrix::Ones(3, 2), y = Matrix::Ones(3, 1);
    x(1, 1) = std::nan("");
    EXPECT_THROW(ProblemData::make(x, y), Error);
    EXPECT_THROW(ProblemData::make(Matrix::Ones(3, 2), Matrix::Ones(4, 1)), DimensionError);
}

TEST(Ols, IdentityDesign)
{
    std::mt19937_64 rng(1);
    Matrix y = randn(4, 2, rng);
    auto data = ProblemData::make(Matrix::Identity(4, 4), y, raw);
    EXPECT_LE((compute_ols(data).beta - y).norm(), 1e-12);
}

TEST(Ols, MatchesIndependentQrSolve)
{
    std::mt19937_64 rng(2);
    Matrix x = randn(50, 5, rng), y = randn(50, 3, rng);
    auto data = ProblemData::make(x, y, raw);
    Matrix oracle = x.colPivHouseholderQr().solve(y);
    EXPECT_LE((compute_ols(data).beta - oracle).cwiseAbs().maxCoeff(), 1e-8);
    Matrix b = compute_ols(data).beta;
    Matrix grad = x.transpose() * (y - x * b);
    EXPECT_LE(grad.cwiseAbs().maxCoeff(), 1e-8 * (x.transpose() * y).cwiseAbs().maxCoeff());
}

TEST(Ols, NoiselessRecovery)
{
    std::mt19937_64 rng(4);
    Matrix x = randn(40, 6, rng), b0 = randn(6, 2, rng);
    auto data = ProblemData::make(x, x * b0, raw);
    EXPECT_LE((compute_ols(data).beta - b0).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ols, SingularErrors)
{
    std::mt19937_64 rng(6);
    Matrix x = randn(5, 8, rng);
    EXPECT_THROW(compute_ols(ProblemData::make(x, randn(5, 1, rng))), Error);
    Matrix xc = randn(20, 3, rng);
    xc.col(2) = xc.col(0) + xc.col(1);
    EXPECT_THROW(compute_ols(ProblemData::make(xc, randn(20, 1, rng))), Error);
}

TEST(Marginal, HandExampleAndZeroResponse)
{
    Matrix x(2, 1), y(2, 1);
    x << 1, 1;
    y << 2, 4;
    auto data = ProblemData::make(x, y, raw);
    EXPECT_DOUBLE_EQ(compute_marginal_weights_base(data).beta(0, 0), 3.0);
    auto zero = ProblemData::make(Matrix::Identity(3, 3), Matrix::Zero(3, 2), raw);
    EXPECT_EQ(compute_marginal_weights_base(zero).beta.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Marginal, OrthonormalDesignEqualsOls)
{
    std::mt19937_64 rng(8);
    Matrix q = Eigen::HouseholderQR<Matrix>(randn(30, 4, rng)).householderQ() * Matrix::Identity(30, 4);
    auto data = ProblemData::make(q, randn(30, 3, rng), raw);
    EXPECT_LE((compute_marginal_weights_base(data).beta - compute_ols(data).beta).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Marginal, ZeroColumnErrors)
{
    Matrix x = Matrix::Ones(4, 2);
    x.col(1).setZero();
    try {
        compute_marginal_weights_base(ProblemData::make(x, Matrix::Ones(4, 1), raw));
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("column 2"), std::string::npos);
    }
}

TEST(Weights, Adaptive)
{
    auto g = OutcomeGrouping::custom(2, {{{0, 1}}, {{0}, {1}}}, {{0, 1}});
    Matrix base(2, 2);
    base << 3, 4, 0.25, 0.25;
    auto w = compute_adaptive_weights(base, g, 0.5, 1.0, 1e8);
    EXPECT_NEAR(w.group(0, 0), 1.0 / std::sqrt(5.0), 1e-15);
    EXPECT_NEAR(w.group(0, 0), 0.44721, 1e-5);
    EXPECT_DOUBLE_EQ(w.pair(1, 0), 1e8); // equal base entries are capped
    EXPECT_DOUBLE_EQ(w.pair(0, 0), 1.0);

    auto w1 = compute_adaptive_weights(base, g, 1.0, 1.0, 1e8);
    EXPECT_DOUBLE_EQ(w1.group(1, 1), 4.0); // singleton with base 0.25, gamma1 = 1
    EXPECT_TRUE(w1.group.allFinite());
}

TEST(Weights, AdaptivePairWeightsIgnoreSign)
{
    std::mt19937_64 rng(13);
    auto g = build_grouping(4, {{{0, 1, 2, 3}}});
    Matrix base = randn(3, 4, rng);
    auto w = compute_adaptive_weights(base, g, 1.0, 1.0);
    auto wn = compute_adaptive_weights(-base, g, 1.0, 1.0);
    EXPECT_EQ(w.pair, wn.pair);
    EXPECT_EQ(w.group, wn.group);
}

TEST(Weights, NonAdaptive)
{
    auto g = build_grouping(6, {{{0, 1, 2, 3}, {4, 5}}});
    auto w = make_nonadaptive_weights(g, 3);
    EXPECT_DOUBLE_EQ(w.group(0, 1), 2.0);            // |G| = 4
    EXPECT_DOUBLE_EQ(w.group(2, g.num_groups() - 1), 1.0); // singleton
    EXPECT_EQ(w.pair, Matrix::Ones(3, g.num_pairs()));
    // duplicates sum
    auto g1 = build_grouping(1, {});
    EXPECT_DOUBLE_EQ(make_nonadaptive_weights(g1, 1).group(0, 0), 2.0);
}
