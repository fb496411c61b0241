#include "oracles.hpp"

#include <ogfm/io.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace ogfm;

namespace {

std::filesystem::path scratch(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("ogfm_test_io_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string error_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(ParseMatrix, CommaDense)
{
    const Design d = parse_matrix_text("1,2\n3,4");
    ASSERT_FALSE(d.is_sparse());
    Matrix want(2, 2);
    want << 1, 2, 3, 4;
    EXPECT_EQ(d.dense(), want);
}

TEST(ParseMatrix, SparseTriplets)
{
    const Design d = parse_matrix_text("%%sparse 2 2\n1 1 5.0");
    ASSERT_TRUE(d.is_sparse());
    Matrix want = Matrix::Zero(2, 2);
    want(0, 0) = 5.0;
    EXPECT_EQ(d.to_dense(), want);
    EXPECT_EQ(d.sparse().nonZeros(), 1);
}

TEST(ParseMatrix, HeaderSkipped)
{
    const Design d = parse_matrix_text("a,b\n1,2\n");
    ASSERT_EQ(d.rows(), 1);
    ASSERT_EQ(d.cols(), 2);
    EXPECT_EQ(d.dense()(0, 0), 1.0);
    EXPECT_EQ(d.dense()(0, 1), 2.0);
}

TEST(ParseMatrix, WhitespaceAndBlankLines)
{
    const Design d = parse_matrix_text("\n 1\t2  3\r\n\n4 5 6\n\n");
    ASSERT_EQ(d.rows(), 2);
    ASSERT_EQ(d.cols(), 3);
    EXPECT_EQ(d.dense()(1, 2), 6.0);
}

TEST(ParseMatrix, ScientificNotationAndSigns)
{
    const Design d = parse_matrix_text("+1e-3,-2.5E2\n");
    EXPECT_EQ(d.dense()(0, 0), 1e-3);
    EXPECT_EQ(d.dense()(0, 1), -250.0);
}

TEST(ParseMatrix, Errors)
{
    EXPECT_NE(error_of([] { parse_matrix_text(""); }).find("empty"), std::string::npos);
    EXPECT_NE(error_of([] { parse_matrix_text(" \n\n"); }).find("empty"), std::string::npos);
    EXPECT_NE(error_of([] { parse_matrix_text("1,2\n3\n"); }).find("ragged"), std::string::npos);
    const std::string bad = error_of([] { parse_matrix_text("1,2\n3,x\n"); });
    EXPECT_NE(bad.find("line 2"), std::string::npos) << bad;
    EXPECT_NE(bad.find("column 2"), std::string::npos) << bad;
    EXPECT_FALSE(error_of([] { parse_matrix_text("%%sparse 2 2\n3 1 1\n"); }).empty());
    EXPECT_FALSE(error_of([] { parse_matrix_text("%%sparse 2\n"); }).empty());
    EXPECT_FALSE(error_of([] { parse_matrix_text("%%sparse 2 2\n1 1 nan?\n"); }).empty());
    EXPECT_FALSE(error_of([] { parse_matrix("/nonexistent/ogfm.csv"); }).empty());
}

TEST(ParseMatrix, SparseDuplicatesSum)
{
    const Design d = parse_matrix_text("%%sparse 1 2\n1 2 1\n1 2 2.5\n");
    EXPECT_EQ(d.to_dense()(0, 1), 3.5);
}

TEST(GroupSpec, LevelsAndFuse)
{
    const auto spec = parse_group_spec_text("# comment\n"
                                            "level:1 outcomes:1,2,3\n"
                                            "level:1 outcomes:4,5\n"
                                            "\n"
                                            "level:2 outcomes:1,2   # trailing\n"
                                            "level:2 outcomes:3\n"
                                            "level: 2 outcomes: 4,5\n"
                                            "fuse: 1,2\n"
                                            "fuse: 4,5\n");
    ASSERT_EQ(spec.levels.size(), 2u);
    EXPECT_EQ(spec.levels[0], (std::vector<OutcomeSet>{{0, 1, 2}, {3, 4}}));
    EXPECT_EQ(spec.levels[1], (std::vector<OutcomeSet>{{0, 1}, {2}, {3, 4}}));
    ASSERT_TRUE(spec.pairs);
    EXPECT_EQ(*spec.pairs, (std::vector<FusePair>{{0, 1}, {3, 4}}));
    const auto g = grouping_from_spec(5, spec);
    EXPECT_EQ(g.num_pairs(), 2);
}

TEST(GroupSpec, DefaultPairsWithoutFuseLines)
{
    const auto spec = parse_group_spec_text("level:1 outcomes:1,2,3\nlevel:1 outcomes:4,5\n");
    EXPECT_FALSE(spec.pairs);
    // within-group pairs of the last level: 3 + 1
    EXPECT_EQ(grouping_from_spec(5, spec).num_pairs(), 4);
}

TEST(GroupSpec, Errors)
{
    EXPECT_NE(error_of([] { parse_group_spec_text("level:0 outcomes:1,2\n"); }).find("line 1"), std::string::npos);
    EXPECT_NE(error_of([] { parse_group_spec_text("level:1 outcomes:1\nlevel:3 outcomes:2\n"); }).find("missing level 2"),
              std::string::npos);
    EXPECT_NE(error_of([] { parse_group_spec_text("\nlevel:1 outcomes:1,x\n"); }).find("line 2"), std::string::npos);
    EXPECT_FALSE(error_of([] { parse_group_spec_text("fuse: 1,2,3\n"); }).empty());
    EXPECT_FALSE(error_of([] { parse_group_spec_text("groups 1 2\n"); }).empty());
    EXPECT_FALSE(error_of([] { grouping_from_spec(3, parse_group_spec_text("level:1 outcomes:1,4\n")); }).empty());
}

TEST(Scenario, KeyValues)
{
    const auto sc = parse_scenario_text("n=100\np=20\nK=4\np_HS=0.25\np_GE = 0.75\nfamily=ordinal\n"
                                        "reps=3\nseed=42\ngroups=1,2;3,4\nalphas=0,0.5\nnlambda=7\n"
                                        "methods=ogfm,separate_lasso\n# comment\n");
    EXPECT_EQ(sc.n, 100);
    EXPECT_EQ(sc.p, 20);
    EXPECT_EQ(sc.k, 4);
    EXPECT_EQ(sc.p_hs, 0.25);
    EXPECT_EQ(sc.p_ge, 0.75);
    EXPECT_EQ(sc.family, ResponseFamily::ordinal);
    EXPECT_EQ(sc.reps, 3);
    EXPECT_EQ(sc.seed, 42u);
    EXPECT_EQ(sc.groups, (std::vector<OutcomeSet>{{0, 1}, {2, 3}}));
    EXPECT_EQ(sc.alphas, (std::vector<double>{0.0, 0.5}));
    EXPECT_EQ(sc.n_lambda, 7);
    EXPECT_EQ(sc.methods, (std::vector<std::string>{"ogfm", "separate_lasso"}));
}

TEST(Scenario, Errors)
{
    EXPECT_NE(error_of([] { parse_scenario_text("n=10\nbogus=1\n"); }).find("unknown key"), std::string::npos);
    EXPECT_FALSE(error_of([] { parse_scenario_text("n=ten\n"); }).empty());
    EXPECT_FALSE(error_of([] { parse_scenario_text("family=poisson\n"); }).empty());
    EXPECT_FALSE(error_of([] { parse_scenario_text("K=4\n"); }).empty()); // default groups do not partition 4
    EXPECT_FALSE(error_of([] { parse_scenario_text("p_GE=1.5\n"); }).empty());
}

TEST(Format, SeventeenDigitsRoundTrip)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 2000; ++i) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
        EXPECT_EQ(std::stod(format_real(v)), v);
    }
}

TEST(CoefficientsCsv, RoundTrip)
{
    std::mt19937_64 rng(9);
    CoefficientMatrix c;
    c.beta = oracle::randn(6, 3, rng) * 1e-3;
    c.beta(2, 1) = 0.0;
    c.intercept = oracle::randn(3, 1, rng);
    const Design back = parse_matrix_text(coefficients_csv(c));
    ASSERT_EQ(back.rows(), 7);
    ASSERT_EQ(back.cols(), 3);
    EXPECT_EQ(Matrix(back.dense().topRows(6)), c.beta);
    EXPECT_EQ(Vector(back.dense().row(6).transpose()), c.intercept);
}

TEST(PathLongCsv, RowCountAndMarker)
{
    PathResult path;
    path.fits.resize(2);
    for (auto& row : path.fits)
        for (int l = 0; l < 3; ++l) {
            FitResult f;
            f.coef.beta = Matrix::Zero(4, 2);
            f.coef.intercept = Vector::Zero(2);
            row.push_back(f);
        }
    CVPoint mark;
    mark.alpha_index = 1;
    mark.lambda_index = 2;
    const std::string csv = path_long_csv(path, mark);
    const auto lines = std::count(csv.begin(), csv.end(), '\n');
    EXPECT_EQ(lines, 1 + 2 * 3 * 4 * 2);
    std::size_t marked = 0;
    for (std::size_t pos = 0; (pos = csv.find(",1\n", pos)) != std::string::npos; ++pos)
        ++marked;
    EXPECT_EQ(marked, 8u);
}

TEST(SimulationTable, Header)
{
    SimulationRow r;
    r.rep = 0;
    r.method = "ogfm";
    r.rmse = 1.5;
    const std::string csv = simulation_table_csv({r});
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "rep,method,rmse,model_error,balanced_accuracy,seconds");
    EXPECT_EQ(csv.substr(csv.find('\n') + 1), "1,ogfm,1.5,0,0,0\n");
}

TEST(OutputSet, WritesAllFiles)
{
    const auto dir = scratch("writes");
    OutputSet out(dir / "sub");
    out.add("a.txt", "alpha\n");
    out.add("b.txt", "beta\n");
    const auto written = out.commit();
    ASSERT_EQ(written.size(), 2u);
    EXPECT_EQ(read_text_file((dir / "sub" / "a.txt").string()), "alpha\n");
    EXPECT_EQ(read_text_file((dir / "sub" / "b.txt").string()), "beta\n");
    for (const auto& e : std::filesystem::directory_iterator(dir / "sub"))
        EXPECT_NE(e.path().extension(), ".tmp");
}

TEST(OutputSet, RemovesPartialOutputOnFailure)
{
    const auto dir = scratch("partial");
    std::filesystem::create_directories(dir / "blocked"); // a directory where a file should go
    OutputSet out(dir);
    out.add("first.txt", "x\n");
    out.add("blocked", "y\n");
    EXPECT_THROW(out.commit(), Error);
    EXPECT_FALSE(std::filesystem::exists(dir / "first.txt"));
    EXPECT_FALSE(std::filesystem::exists(dir / "blocked.tmp"));
}
