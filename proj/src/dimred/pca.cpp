#include "episignal/core/error.hpp"
#include "episignal/dimred.hpp"

#include <string>

namespace episignal::dimred {

Projection fit_pca(const Matrix& X, int k) {
    const Eigen::Index n = X.rows(), d = X.cols();
    if (k < 1) throw ValidationError("fit_pca: k must be >= 1");
    if (k >= d || Eigen::Index(k) >= n)
        throw ValidationError("fit_pca: k=" + std::to_string(k) + " needs k < D=" + std::to_string(d) +
                              " and k < n=" + std::to_string(n));

    Projection proj;
    proj.kind = ProjectionKind::pca;
    proj.in_dim = int(d);
    proj.out_dim = k;
    proj.pca.mean = X.colwise().mean().transpose();
    Matrix centered = X.rowwise() - proj.pca.mean.transpose();
    Eigen::MatrixXd cov = (centered.transpose() * centered) / double(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericalError("fit_pca: eigendecomposition failed");
    // Eigen returns ascending eigenvalues.
    proj.pca.components.resize(k, d);
    proj.pca.explained_variance.resize(k);
    for (int i = 0; i < k; ++i) {
        Eigen::Index src = d - 1 - i;
        Vector v = eig.eigenvectors().col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        proj.pca.components.row(i) = v.transpose();
        proj.pca.explained_variance(i) = std::max(0.0, eig.eigenvalues()(src));
    }
    proj.pca.total_variance = cov.trace();
    return proj;
}

}  // namespace episignal::dimred
