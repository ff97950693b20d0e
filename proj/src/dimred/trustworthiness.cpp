#include "episignal/core/error.hpp"
#include "episignal/dimred.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace episignal::dimred {

double trustworthiness(const Matrix& X, const Matrix& Y, int k) {
    const Eigen::Index n = X.rows();
    if (Y.rows() != n)
        throw DimensionError("trustworthiness: X has " + std::to_string(n) + " rows, Y has " +
                             std::to_string(Y.rows()));
    if (k < 1 || 2 * Eigen::Index(k) >= n)
        throw ValidationError("trustworthiness: k must satisfy 1 <= k < n/2");

    Knn low = exact_knn(Y, k);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::vector<int> rank(static_cast<std::size_t>(n));
    std::vector<double> d(static_cast<std::size_t>(n));
    double penalty = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) d[std::size_t(j)] = (X.row(i) - X.row(j)).squaredNorm();
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (a == i || b == i) return a == i && b != i;
            return d[std::size_t(a)] != d[std::size_t(b)] ? d[std::size_t(a)] < d[std::size_t(b)] : a < b;
        });
        // order[0] is i itself, so positions are 1-based neighbour ranks.
        for (Eigen::Index r = 0; r < n; ++r) rank[std::size_t(order[std::size_t(r)])] = int(r);
        for (int j : low.index[std::size_t(i)]) {
            int r = rank[std::size_t(j)];
            if (r > k) penalty += double(r - k);
        }
    }
    const double nn = double(n), kk = double(k);
    return 1.0 - 2.0 / (nn * kk * (2.0 * nn - 3.0 * kk - 1.0)) * penalty;
}

}  // namespace episignal::dimred
