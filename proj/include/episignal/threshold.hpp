#pragma once

#include "episignal/core/date.hpp"
#include "episignal/core/matrix.hpp"
#include "episignal/features.hpp"
#include "episignal/ingest.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace episignal::threshold {

/// A day is positive when (mu(t+tau) - mu(t)) / mu(t) >= m.
struct ThresholdSpec {
    int tau = 14;
    double m = 1.0;

    void validate() const;
};

struct DayLabel {
    Date day{};
    double delta = 0.0;
    int label = 0;
};

struct Labeling {
    std::vector<DayLabel> days;
    int zero_days = 0;  ///< days dropped because mu(t) == 0
};

Labeling label_days(const ingest::DailySeries& mu, const ThresholdSpec& spec);

enum class SplitMode { random, chronological };

struct ThresholdDataset {
    std::vector<std::string> names;
    std::vector<Date> days;
    Matrix X;
    std::vector<int> y;
    std::vector<char> test;  ///< per row; empty until split
    std::uint64_t seed = 0;

    std::size_t rows() const { return y.size(); }
    std::vector<int> indices(bool test_rows) const;
    Matrix rows_of(const std::vector<int>& idx) const;
    std::vector<int> labels_of(const std::vector<int>& idx) const;
};

/// Joins labeled days with the feature rows of the same day. Days outside the table are dropped.
ThresholdDataset make_rows(const features::FeatureTable& table, const Labeling& labels);

/// Undersamples the majority class to the minority size, then holds out
/// ceil(test_fraction * n) rows as the test set.
ThresholdDataset balance_and_split(const ThresholdDataset& rows, std::uint64_t seed, double test_fraction = 0.25,
                                   SplitMode mode = SplitMode::random);

struct TreeNode {
    int feature = -1;  ///< -1 for a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int depth = 0;
    int n_samples = 0;
    double impurity = 0.0;
    double gini_decrease = 0.0;  ///< weighted: n_t/N * (i_t - n_l/n_t i_l - n_r/n_t i_r)
    double value = 0.0;          ///< fraction of class 1
};

struct Tree {
    std::vector<TreeNode> nodes;
    std::vector<int> bootstrap;

    int predict(const double* row) const;
    int depth() const;
};

struct ForestParams {
    int n_trees = 100;
    int max_depth = 20;
    int min_samples_split = 2;
    std::uint64_t seed = 0;
};

struct ForestModel {
    ForestParams params;
    std::vector<std::string> names;
    std::vector<Tree> trees;

    int predict(const double* row) const;
    std::vector<int> predict(const Matrix& X) const;
};

ForestModel train_forest(const Matrix& X, std::span<const int> y, std::span<const std::string> names,
                         const ForestParams& params);
/// Trains on the dataset's training rows.
ForestModel train_forest(const ThresholdDataset& ds, const ForestParams& params);

/// Accuracy of the majority vote on the test rows.
double evaluate(const ForestModel& model, const ThresholdDataset& ds);

/// Mean per-tree Gini decrease per feature, normalised to sum to 1.
std::vector<double> feature_importances(const ForestModel& model);

/// Sums feature importances by group tag. Every model feature needs a group and every
/// grouped name must be a model feature.
std::map<std::string, double> grouped_importance(const ForestModel& model,
                                                 const std::map<std::string, std::string>& groups);

}  // namespace episignal::threshold
