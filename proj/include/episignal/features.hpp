#pragma once

#include "episignal/core/date.hpp"
#include "episignal/core/matrix.hpp"
#include "episignal/ingest.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace episignal::features {

/// Day-by-feature matrix; row i is `start + i`.
struct FeatureTable {
    std::string region;
    Date start{};
    std::vector<std::string> names;
    Matrix X;

    std::size_t days() const { return std::size_t(X.rows()); }
    std::size_t width() const { return names.size(); }
    DateRange range() const { return {start, add_days(start, long(X.rows()) - 1)}; }

    /// Column subset, in the order given.
    FeatureTable select(std::span<const std::string> cols) const;
    /// Row subset covering `r` (must lie inside this table).
    FeatureTable slice(const DateRange& r) const;
    /// Throws ValidationError on mismatched columns or non-finite entries.
    void validate() const;
};

/// Side-by-side join of tables over the same date range.
FeatureTable concat(std::span<const FeatureTable> parts);
FeatureTable from_series(std::span<const ingest::DailySeries> series, const DateRange& range);

void write_csv(std::ostream& out, const FeatureTable& t);
FeatureTable read_csv(std::istream& in, const std::string& region = {});

enum class SelectionMethod { chi2, f_regression };

struct ScoredFeature {
    std::string name;
    double score = 0.0;
    double p_value = 1.0;
};

struct SelectionResult {
    SelectionMethod method = SelectionMethod::chi2;
    std::vector<ScoredFeature> kept;  // ascending p, descending score on ties

    std::vector<std::string> names() const;
};

/// Per-cluster daily post counts over `range`. Noise (-1) is dropped; one column per
/// cluster id present in `labels`, named "cluster_<id>".
FeatureTable daily_cluster_counts(std::span<const ingest::PostRecord> posts,
                                  std::span<const int> labels, const DateRange& range);

/// Trailing mean over [t-w+1, t]; the first w-1 days average the available prefix.
ingest::DailySeries moving_average(const ingest::DailySeries& s, int w = 7);
FeatureTable moving_average(const FeatureTable& t, int w = 7);

/// Chi-squared score of non-negative count features against binary labels.
SelectionResult chi2_select(const Matrix& X, std::span<const std::string> names,
                            std::span<const int> y, std::size_t top = 25);

/// Univariate F-test of the Pearson correlation between each column and `y`.
SelectionResult f_regression_select(const Matrix& X, std::span<const std::string> names,
                                    std::span<const double> y, std::size_t top = 25);

/// Survival function of F(1, dof) at `f`.
double f_survival_1(double f, double dof);
/// Survival function of chi-squared with 1 degree of freedom.
double chi2_survival_1(double x);

/// Daily token occurrences of each lexicon word over all posts.
FeatureTable keyword_counts(std::span<const ingest::PostRecord> posts,
                            std::span<const std::string> lexicon, const DateRange& range);

struct WordScore {
    std::string word;
    double score = 0.0;
};

/// Words over-represented in `target` relative to `background`, ranked by 2x2 chi-squared.
std::vector<WordScore> overrepresented_words(std::span<const ingest::PostRecord> target,
                                             const std::map<std::string, long>& background,
                                             std::size_t top);

/// 2x2 chi-squared for word-vs-rest counts (a, b) in target and (c, d) in background.
double chi2_2x2(double a, double b, double c, double d);

}  // namespace episignal::features
