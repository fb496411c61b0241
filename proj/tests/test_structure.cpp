#include <ogfm/fit_result.hpp>
#include <ogfm/structure.hpp>

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace ogfm;

namespace {

Matrix dense(const SparseMatrix& m) { return Matrix(m); }

// Independent hull oracle on std::set: union every variable-expanded group that
// misses the nonzero set, then complement.
std::vector<Index> hull_oracle(const OutcomeGrouping& g, Index p, const std::set<Index>& nz)
{
    std::set<Index> removed;
    for (const auto& level : g.levels())
        for (const auto& grp : level)
            for (Index j = 0; j < p; ++j) {
                std::set<Index> expanded;
                for (Index o : grp)
                    expanded.insert(j + o * p);
                bool hit = false;
                for (Index i : expanded)
                    hit = hit || nz.count(i) > 0;
                if (!hit)
                    removed.insert(expanded.begin(), expanded.end());
            }
    std::vector<Index> out;
    for (Index i = 0; i < p * g.num_outcomes(); ++i)
        if (!removed.count(i))
            out.push_back(i);
    return out;
}

} // namespace

TEST(Grouping, ThreeGroupPresetK8)
{
    auto g = build_grouping(8, {{{0, 1, 2}, {3, 4}, {5, 6, 7}}});
    EXPECT_EQ(g.num_groups(), 12);
    EXPECT_EQ(g.levels().size(), 3u);
    const std::vector<FusePair> want{{0, 1}, {0, 2}, {1, 2}, {3, 4}, {5, 6}, {5, 7}, {6, 7}};
    EXPECT_EQ(g.fuse_pairs(), want);
    for (Index k = 0; k < 8; ++k)
        EXPECT_EQ(g.membership_count(k), 3);
}

TEST(Grouping, NoUserLevel)
{
    auto g = build_grouping(3, {});
    ASSERT_EQ(g.levels().size(), 2u);
    EXPECT_EQ(g.levels()[0], (std::vector<OutcomeSet>{{0, 1, 2}}));
    EXPECT_EQ(g.levels()[1], (std::vector<OutcomeSet>{{0}, {1}, {2}}));
    EXPECT_TRUE(g.fuse_pairs().empty());
    EXPECT_EQ(g.num_groups(), 4);
}

TEST(Grouping, SingleOutcomeCollapses)
{
    auto g = build_grouping(1, {});
    ASSERT_EQ(g.num_groups(), 1);
    EXPECT_EQ(g.groups()[0].members, (OutcomeSet{0}));
    EXPECT_EQ(g.groups()[0].multiplicity, 2);
    EXPECT_TRUE(g.fuse_pairs().empty());
}

TEST(Grouping, DuplicateAcrossLevelsMerged)
{
    // {3} in the user level duplicates the singleton {3}
    auto g = build_grouping(3, {{{0, 1}, {2}}});
    EXPECT_EQ(g.num_groups(), 5);
    Index dup = 0;
    for (const auto& grp : g.groups())
        if (grp.members == OutcomeSet{2})
            dup = grp.multiplicity;
    EXPECT_EQ(dup, 2);
    EXPECT_EQ(g.fuse_pairs(), (std::vector<FusePair>{{0, 1}}));
}

TEST(Grouping, OverlappingGroupsPairsDeduplicated)
{
    auto g = build_grouping(3, {{{0, 1}, {0, 1, 2}}});
    EXPECT_EQ(g.fuse_pairs(), (std::vector<FusePair>{{0, 1}, {0, 2}, {1, 2}}));
}

TEST(Grouping, ExplicitPairsOverride)
{
    auto g = build_grouping(4, {{{0, 1}, {2, 3}}}, std::vector<FusePair>{{2, 0}, {1, 3}});
    EXPECT_EQ(g.fuse_pairs(), (std::vector<FusePair>{{0, 2}, {1, 3}}));
}

TEST(Grouping, Errors)
{
    EXPECT_THROW(build_grouping(3, {{{0, 5}, {1, 2}}}), Error);
    EXPECT_THROW(build_grouping(3, {{{0, 1}}}), Error);
    EXPECT_THROW(build_grouping(3, {}, std::vector<FusePair>{{1, 1}}), Error);
    EXPECT_THROW(build_grouping(0, {}), Error);
}

TEST(ConstraintMatrices, WorkedExampleF)
{
    // p = 1, K = 3, G = {{1,2},{2,3}} exactly (no automatic levels)
    auto g = OutcomeGrouping::custom(3, {{{0, 1}, {1, 2}}}, {});
    auto f = build_F(g, 1);
    Matrix want(4, 3);
    want << 1, 0, 0,
            0, 1, 0,
            0, 1, 0,
            0, 0, 1;
    EXPECT_EQ(dense(f.matrix), want);
    Vector beta(3);
    beta << 1.0, 2.0, 3.0;
    Vector fb(4);
    fb << 1.0, 2.0, 2.0, 3.0;
    EXPECT_EQ(Vector(f.matrix * beta), fb);
}

TEST(ConstraintMatrices, LevelsPrecedeInFullHierarchy)
{
    auto g = build_grouping(3, {{{0, 1}, {1, 2}}});
    auto f = build_F(g, 1);
    Matrix want(4, 3);
    want << 1, 0, 0,
            0, 1, 0,
            0, 1, 0,
            0, 0, 1;
    // rows of the level-1 groups follow the 3 rows of the all-outcomes group
    EXPECT_EQ(dense(f.matrix).middleRows(3, 4), want);
    EXPECT_EQ(f.matrix.rows(), 3 + 4 + 3);
}

TEST(ConstraintMatrices, WorkedExampleD)
{
    auto g = build_grouping(3, {}, std::vector<FusePair>{{0, 1}, {1, 2}});
    auto d = build_D(g, 1);
    Matrix want(2, 3);
    want << 1, -1, 0,
            0, 1, -1;
    EXPECT_EQ(dense(d.matrix), want);
}

TEST(ConstraintMatrices, SingleGroupIsIdentity)
{
    auto g = OutcomeGrouping::custom(3, {{{0, 1, 2}}}, {});
    EXPECT_EQ(dense(build_F(g, 1).matrix), Matrix::Identity(3, 3));
}

TEST(ConstraintMatrices, MembershipCounts)
{
    auto g = build_grouping(4, {{{0, 1}, {2, 3}}});
    const Index p = 3;
    auto f = build_F(g, p);
    Matrix ftf = dense(f.matrix).transpose() * dense(f.matrix);
    EXPECT_TRUE(ftf.isApprox(Matrix(Vector::Constant(4 * p, 3.0).asDiagonal())));
    for (Index r = 0; r < f.matrix.rows(); ++r)
        EXPECT_DOUBLE_EQ(dense(f.matrix).row(r).sum(), 1.0);
    // slice sizes match their group sizes
    for (const auto& sl : f.slices)
        EXPECT_EQ(sl.size, static_cast<Index>(g.groups()[static_cast<std::size_t>(sl.group)].members.size()));
}

TEST(ConstraintMatrices, DRowsAndEmptySet)
{
    auto g = build_grouping(3, {});
    auto d = build_D(g, 4);
    EXPECT_EQ(d.matrix.rows(), 0);
    EXPECT_EQ(d.matrix.cols(), 12);

    auto g2 = build_grouping(3, {{{0, 1, 2}}});
    const Index p = 2;
    auto d2 = build_D(g2, p);
    Matrix dd = dense(d2.matrix);
    for (Index r = 0; r < dd.rows(); ++r) {
        EXPECT_DOUBLE_EQ(dd.row(r).sum(), 0.0);
        EXPECT_DOUBLE_EQ(dd.row(r).cwiseAbs().sum(), 2.0);
    }
    // row-constant beta gives zero differences
    Matrix beta(p, 3);
    beta << 1.5, 1.5, 1.5, -2, -2, -2;
    Vector db = dd * beta.reshaped();
    EXPECT_EQ(db.cwiseAbs().maxCoeff(), 0.0);
    // row for (j, (l, o)) has +1 at j + l p and -1 at j + o p
    const auto& row = d2.rows[static_cast<std::size_t>(1 * 3 + 2)];
    EXPECT_EQ(row.plus, 1 + 1 * p);
    EXPECT_EQ(row.minus, 1 + 2 * p);
}

TEST(Hull, WorkedExamples)
{
    auto g = OutcomeGrouping::custom(3, {{{0, 1}, {1, 2}}}, {});
    // J = {2}: both groups touch J, nothing is removed
    EXPECT_EQ(compute_hull(g, 1, {1}), (std::vector<Index>{0, 1, 2}));
    // J = {1}: {2,3} is disjoint
    EXPECT_EQ(compute_hull(g, 1, {0}), (std::vector<Index>{0}));
    EXPECT_EQ(compute_hull(g, 1, {1}), hull_oracle(g, 1, {1}));
}

TEST(Hull, SingletonsMakeHullEqualSupport)
{
    auto g = build_grouping(4, {{{0, 1}, {2, 3}}});
    for (const std::vector<Index>& j : {std::vector<Index>{}, std::vector<Index>{0}, std::vector<Index>{1, 4, 7},
                                        std::vector<Index>{0, 1, 2, 3, 4, 5, 6, 7}})
        EXPECT_EQ(compute_hull(g, 2, j), j);
}

TEST(Hull, PropertiesAgainstOracle)
{
    std::mt19937_64 rng(7);
    auto g = build_grouping(5, {{{0, 1, 2}, {2, 3, 4}}, {{0, 1}, {2}, {3, 4}}});
    const Index p = 3;
    for (int trial = 0; trial < 200; ++trial) {
        std::set<Index> nz, bigger;
        for (Index i = 0; i < p * 5; ++i) {
            const auto r = rng() % 4;
            if (r == 0)
                nz.insert(i);
            if (r <= 1)
                bigger.insert(i);
        }
        std::vector<Index> v(nz.begin(), nz.end()), vb(bigger.begin(), bigger.end());
        auto h = compute_hull(g, p, v);
        auto hb = compute_hull(g, p, vb);
        EXPECT_EQ(h, hull_oracle(g, p, nz));
        EXPECT_TRUE(std::includes(h.begin(), h.end(), v.begin(), v.end()));
        EXPECT_TRUE(std::includes(hb.begin(), hb.end(), h.begin(), h.end()));
    }
}

TEST(DetectStructure, Cases)
{
    auto g = build_grouping(3, {}, std::vector<FusePair>{{0, 1}, {1, 2}});
    FitResult fit;
    fit.coef.beta = Matrix::Zero(1, 3);
    fit.coef.intercept = Vector::Zero(3);
    fit.polished = true;
    auto st = detect_structure(fit, g);
    EXPECT_TRUE(st.support.empty());
    EXPECT_TRUE(st.fused.empty());

    fit.coef.beta << 1.0, 1.0, 0.5;
    st = detect_structure(fit, g, 0.0, 1e-6);
    EXPECT_EQ(st.support, (std::vector<Index>{0, 1, 2}));
    ASSERT_EQ(st.fused.size(), 1u);
    EXPECT_EQ(st.fused[0].pair, (FusePair{0, 1}));

    // exact zero eta marks a fusion regardless of tolerance
    fit.coef.beta << 1.0, 1.1, 0.5;
    fit.eta = Vector::Zero(2);
    fit.eta(1) = 0.6;
    st = detect_structure(fit, g, 0.0, 1e-9);
    ASSERT_EQ(st.fused.size(), 1u);
    EXPECT_EQ(st.fused[0].pair, (FusePair{0, 1}));
}
