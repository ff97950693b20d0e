#pragma once

#include "episignal/core/date.hpp"
#include "episignal/core/matrix.hpp"

#include <cmath>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace episignal::ingest {

struct PostRecord {
    std::string id;
    Date day;
    std::string region;
    std::vector<std::string> tokens;
    std::int64_t utc = 0;

    bool operator==(const PostRecord&) const = default;
};

/// Sentence vectors, one row per post id, stored at single precision.
struct EmbeddingMatrix {
    std::vector<std::string> ids;
    MatrixF vectors;

    std::size_t rows() const { return ids.size(); }
    std::size_t dim() const { return std::size_t(vectors.cols()); }
};

inline constexpr double kGap = std::numeric_limits<double>::quiet_NaN();
inline bool is_gap(double v) { return std::isnan(v); }

/// One value per consecutive UTC day starting at `start`; gaps are NaN.
struct DailySeries {
    std::string region;
    std::string name;
    Date start{};
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    Date end() const { return add_days(start, long(values.size()) - 1); }
    bool has_gaps() const;
    /// Value on `day`, or nullopt if outside the span.
    std::optional<double> at(Date day) const;
};

/// Caseload, mobility (M), government response (G) and post count (P) for one region.
struct CovariateBundle {
    DailySeries caseload;
    std::vector<DailySeries> mobility;
    std::vector<DailySeries> gov_response;
    DailySeries post_count;
};

struct SeriesSchema {
    std::string date_column = "date";
    std::string value_column = "value";
};

// Posts: JSON lines {id, utc, region, tokens}. Result sorted by (day, utc, id).
std::vector<PostRecord> parse_posts(std::istream& in);
std::vector<PostRecord> parse_posts(const std::filesystem::path& path);
void write_posts(std::ostream& out, const std::vector<PostRecord>& posts);

/// Rejects posts outside `range` with a ValidationError naming the id.
void check_study_range(const std::vector<PostRecord>& posts, const DateRange& range);

// Embeddings: JSON lines {id, v: [float...]}.
EmbeddingMatrix parse_embeddings(std::istream& in);
EmbeddingMatrix parse_embeddings(const std::filesystem::path& path);
void write_embeddings(std::ostream& out, const EmbeddingMatrix& emb);

/// Throws ValidationError unless every embedding id is a post id (and vice versa when
/// `require_all_posts`).
void cross_check(const std::vector<PostRecord>& posts, const EmbeddingMatrix& emb,
                 bool require_all_posts = true);

/// Reorders embedding rows to follow `posts`.
EmbeddingMatrix align_to_posts(const std::vector<PostRecord>& posts, const EmbeddingMatrix& emb);

DailySeries load_series_csv(std::istream& in, const SeriesSchema& schema, const std::string& region,
                            const std::string& name = {});
DailySeries load_series_csv(const std::filesystem::path& path, const SeriesSchema& schema,
                            const std::string& region);
void write_series_csv(std::ostream& out, const DailySeries& s, const std::string& value_column = "value");

/// Clips to `range`, forward-fills interior gaps and back-fills leading days with the first
/// observation. Throws CoverageError when the series has no observation inside `range`.
DailySeries align_series(const DailySeries& s, const DateRange& range);

CovariateBundle align_bundle(const CovariateBundle& raw, const DateRange& range);

/// Number of posts per day over `range`; days without posts are 0.
DailySeries daily_post_counts(const std::vector<PostRecord>& posts, const DateRange& range,
                              const std::string& region = {});

}  // namespace episignal::ingest
