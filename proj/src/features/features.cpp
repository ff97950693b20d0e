#include "episignal/features.hpp"

#include "episignal/core/csv.hpp"
#include "episignal/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

namespace episignal::features {

FeatureTable FeatureTable::select(std::span<const std::string> cols) const {
    FeatureTable out;
    out.region = region;
    out.start = start;
    out.X.resize(X.rows(), Eigen::Index(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        auto it = std::find(names.begin(), names.end(), cols[j]);
        if (it == names.end()) throw ValidationError("unknown feature '" + cols[j] + "'");
        out.X.col(Eigen::Index(j)) = X.col(Eigen::Index(it - names.begin()));
        out.names.push_back(cols[j]);
    }
    return out;
}

FeatureTable FeatureTable::slice(const DateRange& r) const {
    long off = days_between(start, r.start);
    if (off < 0 || off + r.length() > long(days()))
        throw CoverageError("feature table does not cover " + format_date(r.start) + ".." +
                            format_date(r.end));
    FeatureTable out;
    out.region = region;
    out.start = r.start;
    out.names = names;
    out.X = X.middleRows(off, r.length());
    return out;
}

void FeatureTable::validate() const {
    if (Eigen::Index(names.size()) != X.cols())
        throw ValidationError("feature table has " + std::to_string(X.cols()) + " columns but " +
                              std::to_string(names.size()) + " names");
    if (!X.allFinite()) throw ValidationError("feature table contains non-finite entries");
}

FeatureTable concat(std::span<const FeatureTable> parts) {
    if (parts.empty()) return {};
    FeatureTable out;
    out.region = parts.front().region;
    out.start = parts.front().start;
    Eigen::Index rows = parts.front().X.rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.start != out.start || p.X.rows() != rows)
            throw ValidationError("concat: feature tables cover different date ranges");
        cols += p.X.cols();
    }
    out.X.resize(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        out.X.middleCols(c, p.X.cols()) = p.X;
        c += p.X.cols();
        out.names.insert(out.names.end(), p.names.begin(), p.names.end());
    }
    return out;
}

FeatureTable from_series(std::span<const ingest::DailySeries> series, const DateRange& range) {
    FeatureTable out;
    out.start = range.start;
    out.X.resize(range.length(), Eigen::Index(series.size()));
    for (std::size_t j = 0; j < series.size(); ++j) {
        const auto& s = series[j];
        if (out.region.empty()) out.region = s.region;
        out.names.push_back(s.name);
        for (long i = 0; i < range.length(); ++i) {
            auto v = s.at(add_days(range.start, i));
            if (!v || ingest::is_gap(*v))
                throw CoverageError("series '" + s.name + "' has no value on " +
                                    format_date(add_days(range.start, i)));
            out.X(i, Eigen::Index(j)) = *v;
        }
    }
    return out;
}

void write_csv(std::ostream& out, const FeatureTable& t) {
    std::vector<std::string> header{"date"};
    header.insert(header.end(), t.names.begin(), t.names.end());
    csv::write_row(out, header);
    for (Eigen::Index i = 0; i < t.X.rows(); ++i) {
        out << format_date(add_days(t.start, long(i)));
        for (Eigen::Index j = 0; j < t.X.cols(); ++j) out << ',' << csv::format_double(t.X(i, j));
        out << '\n';
    }
}

FeatureTable read_csv(std::istream& in, const std::string& region) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(0, "empty feature table");
    auto header = csv::split_line(line);
    if (header.empty() || header[0] != "date") throw ParseError(1, "first column must be 'date'");
    FeatureTable t;
    t.region = region;
    t.names.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    Date prev{};
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = csv::split_line(line);
        if (f.size() != header.size()) throw ParseError(lineno, "wrong number of columns");
        Date d;
        if (!try_parse_date(f[0], d)) throw ParseError(lineno, "unparseable date '" + f[0] + "'");
        if (rows.empty())
            t.start = d;
        else if (d != add_days(prev, 1))
            throw ParseError(lineno, "rows must be consecutive days");
        prev = d;
        std::vector<double> r;
        for (std::size_t j = 1; j < f.size(); ++j) r.push_back(std::stod(f[j]));
        rows.push_back(std::move(r));
    }
    t.X.resize(Eigen::Index(rows.size()), Eigen::Index(t.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < t.names.size(); ++j) t.X(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
    return t;
}

FeatureTable daily_cluster_counts(std::span<const ingest::PostRecord> posts,
                                  std::span<const int> labels, const DateRange& range) {
    if (posts.size() != labels.size())
        throw DimensionError("daily_cluster_counts: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(posts.size()) + " posts");
    std::set<int> ids;
    for (int l : labels)
        if (l >= 0) ids.insert(l);
    std::unordered_map<int, Eigen::Index> col;
    FeatureTable t;
    t.region = posts.empty() ? std::string{} : posts.front().region;
    t.start = range.start;
    for (int id : ids) {
        col[id] = Eigen::Index(t.names.size());
        t.names.push_back("cluster_" + std::to_string(id));
    }
    t.X = Matrix::Zero(range.length(), Eigen::Index(ids.size()));
    for (std::size_t i = 0; i < posts.size(); ++i) {
        if (labels[i] < 0 || !range.contains(posts[i].day)) continue;
        t.X(days_between(range.start, posts[i].day), col[labels[i]]) += 1.0;
    }
    return t;
}

ingest::DailySeries moving_average(const ingest::DailySeries& s, int w) {
    if (w < 1) throw ValidationError("moving_average: window must be >= 1");
    ingest::DailySeries out = s;
    for (std::size_t t = 0; t < s.values.size(); ++t) {
        std::size_t lo = t + 1 >= std::size_t(w) ? t + 1 - std::size_t(w) : 0;
        double sum = 0.0;
        for (std::size_t k = lo; k <= t; ++k) sum += s.values[k];
        out.values[t] = sum / double(t - lo + 1);
    }
    return out;
}

FeatureTable moving_average(const FeatureTable& t, int w) {
    FeatureTable out = t;
    for (Eigen::Index j = 0; j < t.X.cols(); ++j) {
        ingest::DailySeries s;
        s.values.resize(std::size_t(t.X.rows()));
        for (Eigen::Index i = 0; i < t.X.rows(); ++i) s.values[std::size_t(i)] = t.X(i, j);
        auto m = moving_average(s, w);
        for (Eigen::Index i = 0; i < t.X.rows(); ++i) out.X(i, j) = m.values[std::size_t(i)];
    }
    return out;
}

FeatureTable keyword_counts(std::span<const ingest::PostRecord> posts,
                            std::span<const std::string> lexicon, const DateRange& range) {
    if (lexicon.empty()) throw ValidationError("keyword_counts: empty lexicon");
    std::unordered_map<std::string, Eigen::Index> col;
    FeatureTable t;
    t.region = posts.empty() ? std::string{} : posts.front().region;
    t.start = range.start;
    for (const auto& w : lexicon) {
        if (col.emplace(w, Eigen::Index(t.names.size())).second) t.names.push_back("kw_" + w);
    }
    t.X = Matrix::Zero(range.length(), Eigen::Index(t.names.size()));
    for (const auto& p : posts) {
        if (!range.contains(p.day)) continue;
        long row = days_between(range.start, p.day);
        for (const auto& tok : p.tokens) {
            auto it = col.find(tok);
            if (it != col.end()) t.X(row, it->second) += 1.0;
        }
    }
    return t;
}

}  // namespace episignal::features
