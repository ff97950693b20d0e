#include "episignal/ingest.hpp"

#include "episignal/core/csv.hpp"
#include "episignal/core/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

namespace episignal::ingest {

using nlohmann::json;

bool DailySeries::has_gaps() const {
    return std::any_of(values.begin(), values.end(), is_gap);
}

std::optional<double> DailySeries::at(Date day) const {
    long i = days_between(start, day);
    if (i < 0 || i >= long(values.size())) return std::nullopt;
    return values[std::size_t(i)];
}

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

json parse_json_line(const std::string& line, std::size_t lineno) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
    }
}

const json& require(const json& obj, const char* key, std::size_t lineno) {
    if (!obj.is_object()) throw ParseError(lineno, "expected a JSON object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(lineno, std::string("missing field '") + key + "'");
    return *it;
}

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

std::vector<PostRecord> parse_posts(std::istream& in) {
    std::vector<PostRecord> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        json obj = parse_json_line(line, lineno);
        const json& id = require(obj, "id", lineno);
        const json& utc = require(obj, "utc", lineno);
        const json& region = require(obj, "region", lineno);
        const json& tokens = require(obj, "tokens", lineno);
        if (!id.is_string()) throw ParseError(lineno, "'id' must be a string");
        if (!utc.is_number_integer()) throw ParseError(lineno, "'utc' must be integer seconds");
        if (!region.is_string()) throw ParseError(lineno, "'region' must be a string");
        if (!tokens.is_array()) throw ParseError(lineno, "'tokens' must be an array");
        PostRecord p;
        p.id = id.get<std::string>();
        p.utc = utc.get<std::int64_t>();
        p.day = day_of_utc(p.utc);
        p.region = region.get<std::string>();
        for (const auto& t : tokens) {
            if (!t.is_string()) throw ParseError(lineno, "tokens must be strings");
            p.tokens.push_back(t.get<std::string>());
        }
        if (p.tokens.empty()) throw ValidationError("line " + std::to_string(lineno) + ": post '" + p.id + "' has no tokens");
        if (!seen.insert(p.id).second)
            throw ValidationError("line " + std::to_string(lineno) + ": duplicate post id '" + p.id + "'");
        out.push_back(std::move(p));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const PostRecord& a, const PostRecord& b) { return a.day < b.day; });
    return out;
}

std::vector<PostRecord> parse_posts(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return parse_posts(in);
}

void write_posts(std::ostream& out, const std::vector<PostRecord>& posts) {
    for (const auto& p : posts) {
        json obj = {{"id", p.id}, {"utc", p.utc}, {"region", p.region}, {"tokens", p.tokens}};
        out << obj.dump() << '\n';
    }
}

void check_study_range(const std::vector<PostRecord>& posts, const DateRange& range) {
    for (const auto& p : posts)
        if (!range.contains(p.day))
            throw ValidationError("post '" + p.id + "' dated " + format_date(p.day) +
                                  " is outside the study range");
}

EmbeddingMatrix parse_embeddings(std::istream& in) {
    std::vector<std::string> ids;
    std::vector<float> flat;
    std::size_t dim = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        json obj = parse_json_line(line, lineno);
        const json& id = require(obj, "id", lineno);
        const json& v = require(obj, "v", lineno);
        if (!id.is_string()) throw ParseError(lineno, "'id' must be a string");
        if (!v.is_array() || v.empty()) throw ParseError(lineno, "'v' must be a non-empty array");
        if (ids.empty()) {
            dim = v.size();
        } else if (v.size() != dim) {
            throw DimensionError("line " + std::to_string(lineno) + ": vector has dimension " +
                                 std::to_string(v.size()) + ", expected " + std::to_string(dim));
        }
        for (const auto& x : v) {
            // nlohmann parses nan/inf literals as errors; null shows up for non-finite writers.
            if (!x.is_number())
                throw ValidationError("line " + std::to_string(lineno) + ": non-numeric vector entry");
            double d = x.get<double>();
            float f = static_cast<float>(d);
            if (!std::isfinite(d) || !std::isfinite(f))
                throw ValidationError("line " + std::to_string(lineno) + ": non-finite vector entry");
            flat.push_back(f);
        }
        ids.push_back(id.get<std::string>());
    }
    EmbeddingMatrix emb;
    emb.ids = std::move(ids);
    emb.vectors = Eigen::Map<MatrixF>(flat.data(), Eigen::Index(emb.ids.size()), Eigen::Index(dim));
    return emb;
}

EmbeddingMatrix parse_embeddings(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return parse_embeddings(in);
}

void write_embeddings(std::ostream& out, const EmbeddingMatrix& emb) {
    for (std::size_t i = 0; i < emb.ids.size(); ++i) {
        out << "{\"id\":" << json(emb.ids[i]).dump() << ",\"v\":[";
        for (Eigen::Index j = 0; j < emb.vectors.cols(); ++j) {
            if (j) out << ',';
            // float's shortest round-trip form; parsing back through double recovers it exactly.
            char buf[32];
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, emb.vectors(Eigen::Index(i), j));
            out.write(buf, ptr - buf);
        }
        out << "]}\n";
    }
}

void cross_check(const std::vector<PostRecord>& posts, const EmbeddingMatrix& emb,
                 bool require_all_posts) {
    std::unordered_set<std::string> post_ids;
    for (const auto& p : posts) post_ids.insert(p.id);
    std::unordered_set<std::string> emb_ids;
    for (const auto& id : emb.ids) {
        if (!post_ids.count(id)) throw ValidationError("embedding id '" + id + "' has no post");
        if (!emb_ids.insert(id).second) throw ValidationError("duplicate embedding id '" + id + "'");
    }
    if (require_all_posts && emb_ids.size() != post_ids.size()) {
        for (const auto& p : posts)
            if (!emb_ids.count(p.id)) throw ValidationError("post '" + p.id + "' has no embedding");
    }
}

EmbeddingMatrix align_to_posts(const std::vector<PostRecord>& posts, const EmbeddingMatrix& emb) {
    std::unordered_map<std::string, Eigen::Index> row;
    for (std::size_t i = 0; i < emb.ids.size(); ++i) row.emplace(emb.ids[i], Eigen::Index(i));
    EmbeddingMatrix out;
    out.vectors.resize(Eigen::Index(posts.size()), emb.vectors.cols());
    for (std::size_t i = 0; i < posts.size(); ++i) {
        auto it = row.find(posts[i].id);
        if (it == row.end()) throw ValidationError("post '" + posts[i].id + "' has no embedding");
        out.ids.push_back(posts[i].id);
        out.vectors.row(Eigen::Index(i)) = emb.vectors.row(it->second);
    }
    return out;
}

DailySeries load_series_csv(std::istream& in, const SeriesSchema& schema, const std::string& region,
                            const std::string& name) {
    std::string line;
    if (!std::getline(in, line) || blank(line)) throw ParseError(0, "empty series file");
    auto header = csv::split_line(line);
    auto col = [&](const std::string& want) {
        auto it = std::find(header.begin(), header.end(), want);
        if (it == header.end()) throw ParseError(1, "missing column '" + want + "'");
        return std::size_t(it - header.begin());
    };
    std::size_t dcol = col(schema.date_column);
    std::size_t vcol = col(schema.value_column);

    std::map<Date, double> obs;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        auto f = csv::split_line(line);
        if (f.size() <= std::max(dcol, vcol)) throw ParseError(lineno, "too few columns");
        Date d;
        if (!try_parse_date(f[dcol], d)) throw ParseError(lineno, "unparseable date '" + f[dcol] + "'");
        double v = kGap;
        if (!f[vcol].empty()) {
            try {
                std::size_t used = 0;
                v = std::stod(f[vcol], &used);
                if (used != f[vcol].size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ParseError(lineno, "unparseable value '" + f[vcol] + "'");
            }
        }
        obs[d] = v;
    }
    if (obs.empty()) throw ParseError(0, "series file has no data rows");

    DailySeries s;
    s.region = region;
    s.name = name.empty() ? schema.value_column : name;
    s.start = obs.begin()->first;
    s.values.assign(std::size_t(days_between(s.start, obs.rbegin()->first) + 1), kGap);
    for (auto& [d, v] : obs) s.values[std::size_t(days_between(s.start, d))] = v;
    return s;
}

DailySeries load_series_csv(const std::filesystem::path& path, const SeriesSchema& schema,
                            const std::string& region) {
    auto in = open_or_throw(path);
    return load_series_csv(in, schema, region, path.stem().string());
}

void write_series_csv(std::ostream& out, const DailySeries& s, const std::string& value_column) {
    out << "date," << csv::escape(value_column) << '\n';
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        out << format_date(add_days(s.start, long(i))) << ',';
        if (!is_gap(s.values[i])) out << csv::format_double(s.values[i]);
        out << '\n';
    }
}

DailySeries align_series(const DailySeries& s, const DateRange& range) {
    DailySeries out;
    out.region = s.region;
    out.name = s.name;
    out.start = range.start;
    out.values.assign(std::size_t(range.length()), kGap);

    std::optional<double> first;
    for (long i = 0; i < range.length(); ++i) {
        auto v = s.at(add_days(range.start, i));
        out.values[std::size_t(i)] = v.value_or(kGap);
        if (!first && v && !is_gap(*v)) first = *v;
    }
    if (!first)
        throw CoverageError("series '" + s.name + "' (" + s.region + ") has no observation in " +
                            format_date(range.start) + ".." + format_date(range.end));

    double last = *first;
    for (double& v : out.values) {
        if (is_gap(v))
            v = last;
        else
            last = v;
    }
    return out;
}

CovariateBundle align_bundle(const CovariateBundle& raw, const DateRange& range) {
    const std::string& region = raw.caseload.region;
    auto check = [&](const DailySeries& s) {
        if (s.region != region)
            throw ValidationError("series '" + s.name + "' belongs to region '" + s.region +
                                  "', bundle region is '" + region + "'");
        return align_series(s, range);
    };
    CovariateBundle out;
    out.caseload = check(raw.caseload);
    for (const auto& s : raw.mobility) out.mobility.push_back(check(s));
    for (const auto& s : raw.gov_response) out.gov_response.push_back(check(s));
    out.post_count = check(raw.post_count);
    return out;
}

DailySeries daily_post_counts(const std::vector<PostRecord>& posts, const DateRange& range,
                              const std::string& region) {
    DailySeries s;
    s.region = region;
    s.name = "post_count";
    s.start = range.start;
    s.values.assign(std::size_t(range.length()), 0.0);
    for (const auto& p : posts)
        if (range.contains(p.day)) s.values[std::size_t(days_between(range.start, p.day))] += 1.0;
    return s;
}

}  // namespace episignal::ingest
