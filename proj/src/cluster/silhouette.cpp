#include "episignal/cluster.hpp"
#include "episignal/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace episignal::cluster {

double silhouette(const Matrix& X, const std::vector<int>& labels) {
    if (std::size_t(X.rows()) != labels.size()) throw DimensionError("silhouette: labels do not match rows");
    std::map<int, int> index;
    for (int lab : labels)
        if (lab >= 0) index.emplace(lab, 0);
    if (index.size() < 2) throw ValidationError("silhouette: undefined with fewer than 2 clusters");
    int next = 0;
    for (auto& [lab, idx] : index) idx = next++;
    const int k = next;

    std::vector<int> dense(labels.size(), -1);
    std::vector<int> size(static_cast<std::size_t>(k), 0);
    std::vector<int> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) continue;
        dense[i] = index[labels[i]];
        ++size[std::size_t(dense[i])];
        members.push_back(int(i));
    }

    const int dim = int(X.cols());
    std::vector<double> sums(static_cast<std::size_t>(k));
    double total = 0.0;
    for (int i : members) {
        std::fill(sums.begin(), sums.end(), 0.0);
        const double* xi = X.row(i).data();
        for (int j : members) {
            if (j == i) continue;
            const double* xj = X.row(j).data();
            double s = 0.0;
            for (int c = 0; c < dim; ++c) {
                double d = xi[c] - xj[c];
                s += d * d;
            }
            sums[std::size_t(dense[std::size_t(j)])] += std::sqrt(s);
        }
        const int own = dense[std::size_t(i)];
        if (size[std::size_t(own)] < 2) continue;
        double a = sums[std::size_t(own)] / double(size[std::size_t(own)] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c)
            if (c != own) b = std::min(b, sums[std::size_t(c)] / double(size[std::size_t(c)]));
        double m = std::max(a, b);
        if (m > 0.0) total += (b - a) / m;
    }
    return total / double(members.size());
}

}  // namespace episignal::cluster
