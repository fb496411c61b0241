#pragma once

// Text input and output: numeric matrices (dense or triplet-sparse), outcome
// group specifications, simulation scenario files, CSV tables, and staged
// atomic writes.

#include "ogfm/path_cv.hpp"
#include "ogfm/simulate.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace ogfm {

namespace io_detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

inline std::string lower(std::string_view s)
{
    std::string out(s);
    for (char& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::optional<double> to_double(std::string_view s)
{
    s = trim(s);
    if (!s.empty() && s.front() == '+')
        s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        return std::nullopt;
    return v;
}

inline std::optional<long long> to_integer(std::string_view s)
{
    s = trim(s);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        return std::nullopt;
    return v;
}

// Splits on commas when present, otherwise on whitespace.
inline std::vector<std::string_view> split_cells(std::string_view line)
{
    std::vector<std::string_view> out;
    if (line.find(',') != std::string_view::npos) {
        std::size_t start = 0;
        while (true) {
            const std::size_t pos = line.find(',', start);
            out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
            if (pos == std::string_view::npos)
                break;
            start = pos + 1;
        }
        return out;
    }
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
            ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
            ++i;
        if (i > start)
            out.push_back(line.substr(start, i - start));
    }
    return out;
}

inline std::vector<std::string_view> split_on(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
            return out;
        start = pos + 1;
    }
}

inline std::vector<std::string> read_lines(const std::string& text)
{
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

} // namespace io_detail

inline std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Dense text: comma or whitespace delimited, optional single header row
// (detected by a non-numeric cell in the first line). Sparse text: a
// "%%sparse rows cols" line followed by 1-based "i j value" triplets.
inline Design parse_matrix_text(const std::string& text, const std::string& source = "input")
{
    using namespace io_detail;
    const auto lines = read_lines(text);
    std::size_t first = 0;
    while (first < lines.size() && trim(lines[first]).empty())
        ++first;
    if (first == lines.size())
        throw Error(source + ": empty file");

    const std::string_view head = trim(lines[first]);
    if (head.rfind("%%sparse", 0) == 0) {
        const auto dims = split_cells(head.substr(8));
        std::optional<long long> r, c;
        if (dims.size() == 2) {
            r = to_integer(dims[0]);
            c = to_integer(dims[1]);
        }
        if (!r || !c || *r < 1 || *c < 1)
            throw Error(source + ": line " + std::to_string(first + 1) + ": expected '%%sparse rows cols'");
        std::vector<Triplet> trips;
        for (std::size_t i = first + 1; i < lines.size(); ++i) {
            const std::string_view line = trim(lines[i]);
            if (line.empty())
                continue;
            const auto cells = split_cells(line);
            const std::string where = source + ": line " + std::to_string(i + 1);
            if (cells.size() != 3)
                throw Error(where + ": expected 'row column value'");
            const auto ri = to_integer(cells[0]), ci = to_integer(cells[1]);
            const auto v = to_double(cells[2]);
            if (!ri || !ci)
                throw Error(where + ": non-integer index");
            if (!v)
                throw Error(where + ", column 3: non-numeric value '" + std::string(cells[2]) + "'");
            if (*ri < 1 || *ri > *r || *ci < 1 || *ci > *c)
                throw Error(where + ": index (" + std::to_string(*ri) + ", " + std::to_string(*ci) +
                            ") outside " + std::to_string(*r) + " x " + std::to_string(*c));
            trips.emplace_back(static_cast<Index>(*ri - 1), static_cast<Index>(*ci - 1), *v);
        }
        SparseMatrix m(static_cast<Index>(*r), static_cast<Index>(*c));
        m.setFromTriplets(trips.begin(), trips.end());
        return Design(std::move(m));
    }

    std::size_t start = first;
    {
        const auto cells = split_cells(head);
        const bool header = std::ranges::any_of(cells, [](std::string_view c) { return !to_double(c); });
        if (header)
            start = first + 1;
    }
    std::vector<std::vector<double>> rows;
    std::size_t ncol = 0;
    for (std::size_t i = start; i < lines.size(); ++i) {
        const std::string_view line = trim(lines[i]);
        if (line.empty())
            continue;
        const auto cells = split_cells(line);
        if (rows.empty())
            ncol = cells.size();
        else if (cells.size() != ncol)
            throw Error(source + ": ragged rows: line " + std::to_string(i + 1) + " has " +
                        std::to_string(cells.size()) + " columns, expected " + std::to_string(ncol));
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto v = to_double(cells[c]);
            if (!v)
                throw Error(source + ": non-numeric value '" + std::string(cells[c]) + "' at line " +
                            std::to_string(i + 1) + ", column " + std::to_string(c + 1));
            row[c] = *v;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty() || ncol == 0)
        throw Error(source + ": no numeric rows");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(ncol));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < ncol; ++c)
            m(static_cast<Index>(i), static_cast<Index>(c)) = rows[i][c];
    return Design(std::move(m));
}

inline Design parse_matrix(const std::string& path) { return parse_matrix_text(read_text_file(path), path); }

struct GroupSpec
{
    std::vector<std::vector<OutcomeSet>> levels; // user levels, 0-based outcomes
    std::optional<std::vector<FusePair>> pairs;  // explicit fuse pairs
};

namespace io_detail {

inline OutcomeSet parse_outcome_list(std::string_view s, const std::string& where)
{
    OutcomeSet out;
    std::string buf(s);
    std::replace(buf.begin(), buf.end(), ',', ' ');
    for (std::string_view cell : split_cells(buf)) {
        const auto v = to_integer(cell);
        if (!v || *v < 1)
            throw Error(where + ": outcome '" + std::string(cell) + "' is not a positive integer");
        out.push_back(static_cast<Index>(*v - 1));
    }
    if (out.empty())
        throw Error(where + ": empty outcome group");
    return out;
}

} // namespace io_detail

// One line per group: "level:<m> outcomes:<1-based list>", m = 1..M with no gaps
// (the all-outcome and singleton levels are implicit). Optional "fuse: l,o"
// lines replace the default pair set. '#' starts a comment.
inline GroupSpec parse_group_spec_text(const std::string& text, const std::string& source = "groups")
{
    using namespace io_detail;
    GroupSpec spec;
    std::map<long long, std::vector<OutcomeSet>> by_level;
    const auto lines = read_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = lines[i];
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const std::string where = source + ": line " + std::to_string(i + 1);
        const std::string low = lower(line);
        if (low.rfind("fuse", 0) == 0) {
            const auto colon = line.find(':');
            if (colon == std::string_view::npos)
                throw Error(where + ": expected 'fuse: l,o'");
            const auto pr = parse_outcome_list(line.substr(colon + 1), where);
            if (pr.size() != 2)
                throw Error(where + ": a fuse line needs exactly two outcomes");
            if (!spec.pairs)
                spec.pairs.emplace();
            spec.pairs->push_back({pr[0], pr[1]});
            continue;
        }
        const auto lpos = low.find("level");
        const auto opos = low.find("outcomes");
        if (lpos != 0 || opos == std::string::npos)
            throw Error(where + ": expected 'level:<m> outcomes:<list>' or 'fuse: l,o'");
        std::string_view lv = trim(line.substr(5, opos - 5));
        if (!lv.empty() && lv.front() == ':')
            lv.remove_prefix(1);
        const auto m = to_integer(lv);
        if (!m)
            throw Error(where + ": level must be an integer");
        if (*m < 1)
            throw Error(where + ": level 0 is implicit and must not appear");
        std::string_view body = trim(line.substr(opos + 8));
        if (!body.empty() && body.front() == ':')
            body.remove_prefix(1);
        by_level[*m].push_back(parse_outcome_list(body, where));
    }
    long long expect = 1;
    for (auto& [m, groups] : by_level) {
        if (m != expect)
            throw Error(source + ": levels must be numbered 1.." + std::to_string(by_level.size()) +
                        " without gaps (missing level " + std::to_string(expect) + ")");
        spec.levels.push_back(std::move(groups));
        ++expect;
    }
    return spec;
}

inline GroupSpec parse_group_spec(const std::string& path) { return parse_group_spec_text(read_text_file(path), path); }

inline OutcomeGrouping grouping_from_spec(Index k, const GroupSpec& spec)
{
    return build_grouping(k, spec.levels, spec.pairs);
}

namespace io_detail {

inline std::vector<double> parse_real_list(std::string_view s, const std::string& where)
{
    std::vector<double> out;
    std::string buf(s);
    std::replace(buf.begin(), buf.end(), ',', ' ');
    for (std::string_view cell : split_cells(buf)) {
        const auto v = to_double(cell);
        if (!v)
            throw Error(where + ": '" + std::string(cell) + "' is not a number");
        out.push_back(*v);
    }
    if (out.empty())
        throw Error(where + ": empty list");
    return out;
}

} // namespace io_detail

inline std::vector<double> parse_real_list(const std::string& s, const std::string& what = "list")
{
    return io_detail::parse_real_list(s, what);
}

// key=value lines; keys are case-insensitive, '#' starts a comment.
inline SimulationScenario parse_scenario_text(const std::string& text, const std::string& source = "scenario")
{
    using namespace io_detail;
    SimulationScenario sc;
    const auto lines = read_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = lines[i];
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const std::string where = source + ": line " + std::to_string(i + 1);
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw Error(where + ": expected key=value");
        const std::string key = lower(trim(line.substr(0, eq)));
        const std::string_view val = trim(line.substr(eq + 1));
        auto count = [&]() -> Index {
            const auto v = to_integer(val);
            if (!v || *v < 0)
                throw Error(where + ": " + key + " must be a nonnegative integer");
            return static_cast<Index>(*v);
        };
        auto real = [&]() {
            const auto v = to_double(val);
            if (!v)
                throw Error(where + ": " + key + " must be a number");
            return *v;
        };
        if (key == "n")
            sc.n = count();
        else if (key == "p")
            sc.p = count();
        else if (key == "k")
            sc.k = count();
        else if (key == "z")
            sc.z = count();
        else if (key == "p_hs")
            sc.p_hs = real();
        else if (key == "p_ge")
            sc.p_ge = real();
        else if (key == "family") {
            const std::string f = lower(val);
            if (f == "gaussian")
                sc.family = ResponseFamily::gaussian;
            else if (f == "ordinal")
                sc.family = ResponseFamily::ordinal;
            else
                throw Error(where + ": family must be gaussian or ordinal");
        } else if (key == "sigma_scale")
            sc.sigma_scale = real();
        else if (key == "ar_rho_x")
            sc.ar_rho_x = real();
        else if (key == "ar_rho_eps")
            sc.ar_rho_eps = real();
        else if (key == "test_size")
            sc.test_size = count();
        else if (key == "seed")
            sc.seed = static_cast<std::uint64_t>(count());
        else if (key == "reps")
            sc.reps = count();
        else if (key == "groups") {
            sc.groups.clear();
            for (std::string_view part : split_on(val, ';'))
                sc.groups.push_back(parse_outcome_list(part, where));
        } else if (key == "kfolds")
            sc.kfolds = count();
        else if (key == "nlambda" || key == "n_lambda")
            sc.n_lambda = count();
        else if (key == "lambda_min_ratio")
            sc.lambda_min_ratio = real();
        else if (key == "alphas")
            sc.alphas = parse_real_list(val, where);
        else if (key == "adaptive_gamma" || key == "gamma")
            sc.adaptive_gamma = real();
        else if (key == "methods") {
            sc.methods.clear();
            std::string buf(val);
            std::replace(buf.begin(), buf.end(), ',', ' ');
            for (std::string_view m : split_cells(buf))
                sc.methods.emplace_back(m);
        } else
            throw Error(where + ": unknown key '" + key + "'");
    }
    sc.validate();
    return sc;
}

inline SimulationScenario parse_scenario(const std::string& path)
{
    return parse_scenario_text(read_text_file(path), path);
}

// 17 significant digits.
inline std::string format_real(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Header y1..yK, then p coefficient rows, then the intercept row.
inline std::string coefficients_csv(const CoefficientMatrix& coef)
{
    std::string out;
    for (Index c = 0; c < coef.beta.cols(); ++c)
        out += (c ? ",y" : "y") + std::to_string(c + 1);
    out += '\n';
    auto row = [&](auto&& get) {
        for (Index c = 0; c < coef.beta.cols(); ++c)
            out += (c ? "," : "") + format_real(get(c));
        out += '\n';
    };
    for (Index j = 0; j < coef.beta.rows(); ++j)
        row([&](Index c) { return coef.beta(j, c); });
    row([&](Index c) { return coef.intercept(c); });
    return out;
}

inline std::string fit_summary_text(const FitResult& r)
{
    std::ostringstream s;
    s << "lambda: " << format_real(r.lambda) << '\n'
      << "alpha: " << format_real(r.alpha) << '\n'
      << "objective: " << format_real(r.objective) << '\n'
      << "iterations: " << r.iterations << '\n'
      << "converged: " << (r.converged ? "true" : "false") << '\n'
      << "polished: " << (r.polished ? "true" : "false") << '\n'
      << "support_size: " << r.support.size() << '\n'
      << "fused_pairs: " << r.fused.size() << '\n';
    for (const auto& w : r.warnings)
        s << "warning: " << w << '\n';
    return s.str();
}

inline std::string cv_table_csv(const CVResult& cv)
{
    std::string out = "lambda,alpha,mean_mse,se_mse\n";
    for (std::size_t a = 0; a < cv.grids.size(); ++a)
        for (std::size_t l = 0; l < cv.grids[a].lambdas.size(); ++l)
            out += format_real(cv.grids[a].lambdas[l]) + "," + format_real(cv.grids[a].alpha) + "," +
                   format_real(cv.mean_mse[a](static_cast<Index>(l))) + "," +
                   format_real(cv.se_mse[a](static_cast<Index>(l))) + "\n";
    return out;
}

inline std::string cv_summary_text(const CVResult& cv, bool one_se)
{
    std::ostringstream s;
    auto point = [&](const char* name, const CVPoint& p) {
        s << name << "_lambda: " << format_real(p.lambda) << '\n'
          << name << "_alpha: " << format_real(p.alpha) << '\n'
          << name << "_mean_mse: " << format_real(p.mean_mse) << '\n'
          << name << "_se_mse: " << format_real(p.se_mse) << '\n';
    };
    s << "kfolds: " << cv.kfolds << '\n' << "seed: " << cv.seed << '\n';
    s << "selection: " << (one_se ? "best_1se" : "best") << '\n';
    point("best", cv.best);
    point("best_1se", cv.best_1se);
    s << "nonconverged_fits: " << cv.nonconverged << '\n';
    for (const auto& w : cv.warnings)
        s << "warning: " << w << '\n';
    return s.str();
}

// Long format: one row per (lambda, alpha, variable, outcome), 1-based indices;
// cv_min is 1 on the rows of the selected (lambda, alpha).
inline std::string path_long_csv(const PathResult& path, std::optional<CVPoint> marker)
{
    std::string out = "lambda,alpha,variable,outcome,coefficient,cv_min\n";
    for (std::size_t a = 0; a < path.fits.size(); ++a)
        for (std::size_t l = 0; l < path.fits[a].size(); ++l) {
            const auto& f = path.fits[a][l];
            const bool mark = marker && marker->alpha_index == a && marker->lambda_index == l;
            const std::string prefix = format_real(f.lambda) + "," + format_real(f.alpha) + ",";
            for (Index j = 0; j < f.coef.beta.rows(); ++j)
                for (Index c = 0; c < f.coef.beta.cols(); ++c)
                    out += prefix + std::to_string(j + 1) + "," + std::to_string(c + 1) + "," +
                           format_real(f.coef.beta(j, c)) + (mark ? ",1\n" : ",0\n");
        }
    return out;
}

inline std::string simulation_table_csv(const std::vector<SimulationRow>& rows)
{
    std::string out = "rep,method,rmse,model_error,balanced_accuracy,seconds\n";
    for (const auto& r : rows)
        out += std::to_string(r.rep + 1) + "," + r.method + "," + format_real(r.rmse) + "," +
               format_real(r.model_error) + "," + format_real(r.balanced_accuracy) + "," +
               format_real(r.seconds) + "\n";
    return out;
}

// Writes through a temporary file in the same directory and renames it over
// the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content)
{
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error("write to '" + tmp.string() + "' failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error("cannot rename into '" + path.string() + "'");
    }
}

// Collects named outputs in memory and writes them together; if any write
// fails the files already written by this set are removed.
class OutputSet
{
public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

    std::vector<std::filesystem::path> commit()
    {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec)
            throw Error("cannot create output directory '" + dir_.string() + "'");
        std::vector<std::filesystem::path> written;
        try {
            for (const auto& [name, content] : files_) {
                const auto target = dir_ / name;
                write_file_atomic(target, content);
                written.push_back(target);
            }
        } catch (...) {
            for (const auto& w : written)
                std::filesystem::remove(w, ec);
            throw;
        }
        return written;
    }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

} // namespace ogfm
