#pragma once

// Hierarchical outcome groupings, the fuse-pair set, and the selection (F) and
// difference (D) constraint matrices used by the ADMM splitting.
//
// Outcome indices are 0-based everywhere in the C++ API; the group-specification
// file format (see io.hpp) is 1-based.
//
// Coefficients are vectorized column-major: vec(beta) = (beta_{.,0}, ..., beta_{.,K-1}),
// so coefficient (j, k) of a p x K matrix sits at index j + k * p.

#include "ogfm/common.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

namespace ogfm {

using OutcomeSet = std::vector<Index>;

struct FusePair
{
    Index first = 0;  // l
    Index second = 0; // o, always > first

    friend bool operator==(const FusePair&, const FusePair&) = default;
    friend auto operator<=>(const FusePair&, const FusePair&) = default;
};

// One deduplicated outcome group. `multiplicity` counts how many times the same
// outcome set appeared across (or within) levels; weights of duplicates are summed.
struct OutcomeGroup
{
    OutcomeSet members; // sorted, unique
    Index level = 0;    // level of first occurrence
    Index multiplicity = 1;
};

class OutcomeGrouping
{
public:
    OutcomeGrouping() = default;

    // Outcome count K.
    Index num_outcomes() const noexcept { return k_; }

    // All levels, including the auto-inserted all-outcomes level 0 and the
    // singleton level M+1.
    const std::vector<std::vector<OutcomeSet>>& levels() const noexcept { return levels_; }

    const std::vector<OutcomeGroup>& groups() const noexcept { return groups_; }
    Index num_groups() const noexcept { return static_cast<Index>(groups_.size()); }

    const std::vector<FusePair>& fuse_pairs() const noexcept { return pairs_; }
    Index num_pairs() const noexcept { return static_cast<Index>(pairs_.size()); }

    // Number of deduplicated groups containing outcome k.
    Index membership_count(Index k) const { return membership_.at(static_cast<std::size_t>(k)); }

    // Sum over groups of |G|.
    Index total_group_size() const noexcept
    {
        Index m = 0;
        for (const auto& g : groups_)
            m += static_cast<Index>(g.members.size());
        return m;
    }

    // Groupings made only of the K singletons with no fuse pairs. This is the
    // separate-lasso configuration; it bypasses the automatic all-outcomes level.
    static OutcomeGrouping singletons_only(Index k);

    // Uses `levels` verbatim (no automatic all-outcomes or singleton level). Every
    // level must still cover all outcomes.
    static OutcomeGrouping custom(Index k, const std::vector<std::vector<OutcomeSet>>& levels,
                                  const std::vector<FusePair>& fuse_pairs);

    friend OutcomeGrouping build_grouping(Index, const std::vector<std::vector<OutcomeSet>>&,
                                          const std::optional<std::vector<FusePair>>&);

private:
    void finalize(std::optional<std::vector<FusePair>> explicit_pairs, Index pair_level);

    Index k_ = 0;
    std::vector<std::vector<OutcomeSet>> levels_;
    std::vector<OutcomeGroup> groups_;
    std::vector<FusePair> pairs_;
    std::vector<Index> membership_;
};

namespace detail {

inline OutcomeSet normalized_set(const OutcomeSet& g, Index k)
{
    if (g.empty())
        throw Error("empty outcome group");
    OutcomeSet s = g;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    for (Index o : s)
        if (o < 0 || o >= k)
            throw Error("group references outcome " + std::to_string(o + 1) + " but K = " +
                        std::to_string(k));
    return s;
}

inline std::vector<FusePair> normalized_pairs(const std::vector<FusePair>& in, Index k)
{
    std::vector<FusePair> out;
    std::set<FusePair> seen;
    for (auto pr : in) {
        if (pr.first == pr.second)
            throw Error("fuse pair (" + std::to_string(pr.first + 1) + "," +
                        std::to_string(pr.second + 1) + ") pairs an outcome with itself");
        if (pr.first > pr.second)
            std::swap(pr.first, pr.second);
        if (pr.first < 0 || pr.second >= k)
            throw Error("fuse pair references outcome " + std::to_string(pr.second + 1) +
                        " but K = " + std::to_string(k));
        if (seen.insert(pr).second)
            out.push_back(pr);
    }
    return out;
}

inline std::vector<OutcomeSet> normalized_level(const std::vector<OutcomeSet>& level, Index k, std::size_t index);

} // namespace detail

inline void OutcomeGrouping::finalize(std::optional<std::vector<FusePair>> explicit_pairs,
                                      Index pair_level)
{
    groups_.clear();
    std::map<OutcomeSet, std::size_t> seen;
    for (std::size_t lev = 0; lev < levels_.size(); ++lev) {
        for (const auto& g : levels_[lev]) {
            auto it = seen.find(g);
            if (it != seen.end()) {
                ++groups_[it->second].multiplicity;
                continue;
            }
            seen.emplace(g, groups_.size());
            groups_.push_back({g, static_cast<Index>(lev), 1});
        }
    }

    membership_.assign(static_cast<std::size_t>(k_), 0);
    for (const auto& g : groups_)
        for (Index o : g.members)
            ++membership_[static_cast<std::size_t>(o)];

    if (explicit_pairs) {
        pairs_ = detail::normalized_pairs(*explicit_pairs, k_);
        return;
    }
    std::vector<FusePair> cand;
    if (pair_level >= 0) {
        for (const auto& g : levels_[static_cast<std::size_t>(pair_level)])
            for (std::size_t a = 0; a < g.size(); ++a)
                for (std::size_t b = a + 1; b < g.size(); ++b)
                    cand.push_back({g[a], g[b]});
    }
    pairs_ = detail::normalized_pairs(cand, k_);
}

namespace detail {

inline std::vector<OutcomeSet> normalized_level(const std::vector<OutcomeSet>& level, Index k, std::size_t index)
{
    std::vector<OutcomeSet> out;
    std::vector<bool> covered(static_cast<std::size_t>(k), false);
    for (const auto& g : level) {
        out.push_back(normalized_set(g, k));
        for (Index o : out.back())
            covered[static_cast<std::size_t>(o)] = true;
    }
    for (Index o = 0; o < k; ++o)
        if (!covered[static_cast<std::size_t>(o)])
            throw Error("grouping level " + std::to_string(index) + " does not cover outcome " +
                        std::to_string(o + 1));
    return out;
}

} // namespace detail

inline OutcomeGrouping OutcomeGrouping::custom(Index k, const std::vector<std::vector<OutcomeSet>>& levels,
                                               const std::vector<FusePair>& fuse_pairs)
{
    if (k < 1)
        throw Error("grouping needs at least one outcome");
    if (levels.empty())
        throw Error("custom grouping needs at least one level");
    OutcomeGrouping out;
    out.k_ = k;
    for (std::size_t lev = 0; lev < levels.size(); ++lev)
        out.levels_.push_back(detail::normalized_level(levels[lev], k, lev));
    out.finalize(fuse_pairs, -1);
    return out;
}

inline OutcomeGrouping OutcomeGrouping::singletons_only(Index k)
{
    if (k < 1)
        throw Error("grouping needs at least one outcome");
    std::vector<OutcomeSet> level;
    for (Index o = 0; o < k; ++o)
        level.push_back({o});
    return custom(k, {level}, {});
}

// Builds levels = [{0..K-1}] + user_levels + [singletons]. Default fuse pairs are
// all within-group pairs of the last user level (none when no user level is given);
// an explicit pair list replaces the default entirely.
inline OutcomeGrouping build_grouping(Index k, const std::vector<std::vector<OutcomeSet>>& user_levels,
                                      const std::optional<std::vector<FusePair>>& fuse_pairs = std::nullopt)
{
    if (k < 1)
        throw Error("grouping needs at least one outcome");

    OutcomeGrouping out;
    out.k_ = k;

    OutcomeSet all(static_cast<std::size_t>(k));
    std::iota(all.begin(), all.end(), Index{0});
    out.levels_.push_back({all});

    for (std::size_t lev = 0; lev < user_levels.size(); ++lev)
        out.levels_.push_back(detail::normalized_level(user_levels[lev], k, lev + 1));

    std::vector<OutcomeSet> singles;
    for (Index o = 0; o < k; ++o)
        singles.push_back({o});
    out.levels_.push_back(std::move(singles));

    const Index pair_level = user_levels.empty() ? -1 : static_cast<Index>(user_levels.size());
    out.finalize(fuse_pairs, pair_level);
    return out;
}

// Row (j, g) of F occupies rows [begin, begin + size).
struct GroupSlice
{
    Index variable = 0;
    Index group = 0;
    Index begin = 0;
    Index size = 0;
};

struct SelectionMatrix
{
    SparseMatrix matrix;            // m x Kp, one 1 per row
    std::vector<GroupSlice> slices; // variable-major, then group order
    std::vector<Index> columns;     // F row r selects vec(beta)[columns[r]]
};

struct DifferenceRow
{
    Index variable = 0;
    Index pair = 0;
    Index plus = 0;  // column holding +1
    Index minus = 0; // column holding -1
};

struct DifferenceMatrix
{
    SparseMatrix matrix;            // e x Kp
    std::vector<DifferenceRow> rows; // row (j, pair) at index j * |pairs| + pair
};

// Rows are ordered variable-major, then level order, then within-level group
// order, then outcome order.
inline SelectionMatrix build_F(const OutcomeGrouping& grouping, Index p)
{
    if (p < 1)
        throw Error("build_F needs p >= 1");
    const Index k = grouping.num_outcomes();
    SelectionMatrix f;
    const Index m = p * grouping.total_group_size();
    f.columns.reserve(static_cast<std::size_t>(m));
    f.slices.reserve(static_cast<std::size_t>(p * grouping.num_groups()));
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(m));
    Index row = 0;
    for (Index j = 0; j < p; ++j) {
        for (Index g = 0; g < grouping.num_groups(); ++g) {
            const auto& members = grouping.groups()[static_cast<std::size_t>(g)].members;
            f.slices.push_back({j, g, row, static_cast<Index>(members.size())});
            for (Index o : members) {
                const Index col = j + o * p;
                f.columns.push_back(col);
                trips.emplace_back(row, col, 1.0);
                ++row;
            }
        }
    }
    f.matrix.resize(m, k * p);
    f.matrix.setFromTriplets(trips.begin(), trips.end());
    return f;
}

inline DifferenceMatrix build_D(const OutcomeGrouping& grouping, Index p)
{
    if (p < 1)
        throw Error("build_D needs p >= 1");
    const Index k = grouping.num_outcomes();
    const Index e = grouping.num_pairs();
    DifferenceMatrix d;
    d.rows.reserve(static_cast<std::size_t>(p * e));
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(2 * p * e));
    Index row = 0;
    for (Index j = 0; j < p; ++j) {
        for (Index q = 0; q < e; ++q) {
            const auto& pr = grouping.fuse_pairs()[static_cast<std::size_t>(q)];
            if (pr.first == pr.second)
                throw Error("fuse pair with identical outcomes");
            const Index plus = j + pr.first * p;
            const Index minus = j + pr.second * p;
            d.rows.push_back({j, q, plus, minus});
            trips.emplace_back(row, plus, 1.0);
            trips.emplace_back(row, minus, -1.0);
            ++row;
        }
    }
    d.matrix.resize(p * e, k * p);
    d.matrix.setFromTriplets(trips.begin(), trips.end());
    return d;
}

struct ConstraintMatrices
{
    Index p = 0;
    Index k = 0;
    SelectionMatrix f;
    DifferenceMatrix d;

    Index num_group_rows() const noexcept { return static_cast<Index>(f.columns.size()); }
    Index num_pair_rows() const noexcept { return static_cast<Index>(d.rows.size()); }
};

inline ConstraintMatrices build_constraints(const OutcomeGrouping& grouping, Index p)
{
    return {p, grouping.num_outcomes(), build_F(grouping, p), build_D(grouping, p)};
}

// Complement of the union of all (variable-expanded) groups disjoint from the
// nonzero set. Indices refer to vec(beta) of a p x K matrix.
inline std::vector<Index> compute_hull(const OutcomeGrouping& grouping, Index p,
                                       const std::vector<Index>& nonzero)
{
    const Index kp = p * grouping.num_outcomes();
    std::vector<char> in_support(static_cast<std::size_t>(kp), 0);
    for (Index idx : nonzero) {
        if (idx < 0 || idx >= kp)
            throw Error("support index " + std::to_string(idx) + " outside 0.." + std::to_string(kp - 1));
        in_support[static_cast<std::size_t>(idx)] = 1;
    }
    std::vector<char> covered(static_cast<std::size_t>(kp), 0);
    for (Index j = 0; j < p; ++j) {
        for (const auto& g : grouping.groups()) {
            const bool disjoint = std::none_of(g.members.begin(), g.members.end(), [&](Index o) {
                return in_support[static_cast<std::size_t>(j + o * p)] != 0;
            });
            if (disjoint)
                for (Index o : g.members)
                    covered[static_cast<std::size_t>(j + o * p)] = 1;
        }
    }
    std::vector<Index> hull;
    for (Index idx = 0; idx < kp; ++idx)
        if (!covered[static_cast<std::size_t>(idx)])
            hull.push_back(idx);
    return hull;
}

} // namespace ogfm
