#include "episignal/threshold.hpp"
#include "episignal/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace episignal::threshold {

void ThresholdSpec::validate() const {
    if (tau < 1) throw ValidationError("threshold: tau must be >= 1");
    if (!(m > 0.0)) throw ValidationError("threshold: m must be positive");
}

Labeling label_days(const ingest::DailySeries& mu, const ThresholdSpec& spec) {
    spec.validate();
    Labeling out;
    const std::size_t n = mu.values.size();
    for (std::size_t t = 0; t + std::size_t(spec.tau) < n; ++t) {
        const double now = mu.values[t], later = mu.values[t + std::size_t(spec.tau)];
        if (ingest::is_gap(now) || ingest::is_gap(later)) continue;
        if (now == 0.0) {
            ++out.zero_days;
            continue;
        }
        const double delta = (later - now) / now;
        out.days.push_back({add_days(mu.start, long(t)), delta, delta >= spec.m ? 1 : 0});
    }
    return out;
}

std::vector<int> ThresholdDataset::indices(bool test_rows) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < y.size(); ++i) {
        bool is_test = !test.empty() && test[i];
        if (is_test == test_rows) out.push_back(int(i));
    }
    return out;
}

Matrix ThresholdDataset::rows_of(const std::vector<int>& idx) const {
    Matrix out(Eigen::Index(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(Eigen::Index(i)) = X.row(idx[i]);
    return out;
}

std::vector<int> ThresholdDataset::labels_of(const std::vector<int>& idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(y[std::size_t(i)]);
    return out;
}

ThresholdDataset make_rows(const features::FeatureTable& table, const Labeling& labels) {
    ThresholdDataset ds;
    ds.names = table.names;
    std::vector<Eigen::Index> src;
    for (const auto& d : labels.days) {
        long off = days_between(table.start, d.day);
        if (off < 0 || off >= long(table.days())) continue;
        src.push_back(off);
        ds.days.push_back(d.day);
        ds.y.push_back(d.label);
    }
    ds.X.resize(Eigen::Index(src.size()), table.X.cols());
    for (std::size_t i = 0; i < src.size(); ++i) ds.X.row(Eigen::Index(i)) = table.X.row(src[i]);
    return ds;
}

ThresholdDataset balance_and_split(const ThresholdDataset& rows, std::uint64_t seed, double test_fraction,
                                   SplitMode mode) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("balance_and_split: test fraction must be in (0, 1)");
    std::vector<int> pos, neg;
    for (std::size_t i = 0; i < rows.y.size(); ++i) (rows.y[i] ? pos : neg).push_back(int(i));
    if (pos.empty() || neg.empty())
        throw ValidationError("balance_and_split: need both classes (" + std::to_string(pos.size()) + " positive, " +
                              std::to_string(neg.size()) + " negative)");

    std::mt19937_64 rng(seed);
    auto& major = pos.size() > neg.size() ? pos : neg;
    const std::size_t keep = std::min(pos.size(), neg.size());
    std::shuffle(major.begin(), major.end(), rng);
    major.resize(keep);
    std::vector<int> kept(pos);
    kept.insert(kept.end(), neg.begin(), neg.end());
    std::sort(kept.begin(), kept.end());

    ThresholdDataset ds;
    ds.names = rows.names;
    ds.seed = seed;
    ds.X.resize(Eigen::Index(kept.size()), rows.X.cols());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        ds.X.row(Eigen::Index(i)) = rows.X.row(kept[i]);
        ds.days.push_back(rows.days[std::size_t(kept[i])]);
        ds.y.push_back(rows.y[std::size_t(kept[i])]);
    }

    const std::size_t n = kept.size();
    const auto n_test = std::size_t(std::ceil(test_fraction * double(n) - 1e-9));
    ds.test.assign(n, 0);
    if (mode == SplitMode::random) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t i = 0; i < n_test; ++i) ds.test[perm[i]] = 1;
    } else {
        for (std::size_t i = n - n_test; i < n; ++i) ds.test[i] = 1;
    }
    return ds;
}

}  // namespace episignal::threshold
