#include "episignal/core/error.hpp"
#include "episignal/features.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace episignal::features {

std::vector<std::string> SelectionResult::names() const {
    std::vector<std::string> out;
    for (const auto& k : kept) out.push_back(k.name);
    return out;
}

double f_survival_1(double f, double dof) {
    if (!(f > 0.0)) return 1.0;
    if (std::isinf(f)) return 0.0;
    // P(F > f) for F(1, dof) = I_{dof/(dof+f)}(dof/2, 1/2)
    return boost::math::ibeta(dof / 2.0, 0.5, dof / (dof + f));
}

double chi2_survival_1(double x) {
    if (!(x > 0.0)) return 1.0;
    return std::erfc(std::sqrt(x / 2.0));
}

namespace {

SelectionResult rank(SelectionMethod method, std::vector<ScoredFeature> all, std::size_t top) {
    std::sort(all.begin(), all.end(), [](const ScoredFeature& a, const ScoredFeature& b) {
        if (a.p_value != b.p_value) return a.p_value < b.p_value;
        if (a.score != b.score) return a.score > b.score;
        return a.name < b.name;
    });
    if (all.size() > top) all.resize(top);
    return {method, std::move(all)};
}

void check_shape(const Matrix& X, std::span<const std::string> names, std::size_t ny) {
    if (Eigen::Index(names.size()) != X.cols())
        throw DimensionError("selection: " + std::to_string(names.size()) + " names for " +
                             std::to_string(X.cols()) + " columns");
    if (Eigen::Index(ny) != X.rows())
        throw DimensionError("selection: " + std::to_string(ny) + " targets for " +
                             std::to_string(X.rows()) + " rows");
}

}  // namespace

SelectionResult chi2_select(const Matrix& X, std::span<const std::string> names,
                            std::span<const int> y, std::size_t top) {
    check_shape(X, names, y.size());
    if ((X.array() < 0.0).any()) throw ValidationError("chi2_select: features must be non-negative counts");

    const double n = double(y.size());
    double n1 = 0.0;
    for (int v : y) {
        if (v != 0 && v != 1) throw ValidationError("chi2_select: labels must be 0/1");
        n1 += v;
    }
    const double prior[2] = {(n - n1) / n, n1 / n};

    std::vector<ScoredFeature> all;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        double observed[2] = {0.0, 0.0};
        for (Eigen::Index i = 0; i < X.rows(); ++i) observed[y[std::size_t(i)]] += X(i, j);
        const double total = observed[0] + observed[1];
        double score = 0.0;
        for (int c = 0; c < 2; ++c) {
            const double expected = total * prior[c];
            if (expected > 0.0) score += (observed[c] - expected) * (observed[c] - expected) / expected;
        }
        all.push_back({names[std::size_t(j)], score, chi2_survival_1(score)});
    }
    return rank(SelectionMethod::chi2, std::move(all), top);
}

SelectionResult f_regression_select(const Matrix& X, std::span<const std::string> names,
                                    std::span<const double> y, std::size_t top) {
    check_shape(X, names, y.size());
    const Eigen::Index n = X.rows();
    if (n < 3) throw ValidationError("f_regression_select: need at least 3 rows");

    Vector yc = Eigen::Map<const Vector>(y.data(), n);
    yc.array() -= yc.mean();
    const double ynorm = yc.norm();
    if (!(ynorm > 0.0)) throw ValidationError("f_regression_select: target is constant");
    const double dof = double(n - 2);

    std::vector<ScoredFeature> all;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        Vector xc = X.col(j);
        xc.array() -= xc.mean();
        const double xnorm = xc.norm();
        double rho = 0.0;
        if (xnorm > 0.0) rho = std::clamp(xc.dot(yc) / (xnorm * ynorm), -1.0, 1.0);
        const double r2 = rho * rho;
        double f = r2 >= 1.0 ? std::numeric_limits<double>::infinity() : r2 / (1.0 - r2) * dof;
        all.push_back({names[std::size_t(j)], f, f_survival_1(f, dof)});
    }
    return rank(SelectionMethod::f_regression, std::move(all), top);
}

double chi2_2x2(double a, double b, double c, double d) {
    const double n = a + b + c + d;
    const double den = (a + b) * (c + d) * (a + c) * (b + d);
    if (!(den > 0.0)) return 0.0;
    const double diff = a * d - b * c;
    return n * diff * diff / den;
}

std::vector<WordScore> overrepresented_words(std::span<const ingest::PostRecord> target,
                                             const std::map<std::string, long>& background,
                                             std::size_t top) {
    std::map<std::string, long> counts;
    long nt = 0;
    for (const auto& p : target)
        for (const auto& t : p.tokens) {
            ++counts[t];
            ++nt;
        }
    if (nt == 0) throw ValidationError("overrepresented_words: empty target corpus");
    long nb = 0;
    for (const auto& [w, c] : background) nb += c;

    std::vector<WordScore> out;
    for (const auto& [w, a] : counts) {
        auto it = background.find(w);
        const double c = it == background.end() ? 0.0 : double(it->second);
        if (double(a) / double(nt) <= (nb > 0 ? c / double(nb) : 0.0)) continue;
        out.push_back({w, chi2_2x2(double(a), double(nt - a), c, double(nb) - c)});
    }
    std::sort(out.begin(), out.end(), [](const WordScore& x, const WordScore& y) {
        if (x.score != y.score) return x.score > y.score;
        return x.word < y.word;
    });
    if (out.size() > top) out.resize(top);
    return out;
}

}  // namespace episignal::features
