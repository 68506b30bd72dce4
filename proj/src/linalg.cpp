#include "kfdmd/linalg.hpp"

#include "kfdmd/error.hpp"

#include <cmath>
#include <string>

namespace kfdmd::linalg {

Eigen::MatrixXd symmetrize(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    return 0.5 * (a + a.transpose());
}

double min_eigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
    return es.eigenvalues()(0);
}

Eigen::MatrixXd psd_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
    if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd spd_inv_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a));
    if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
    if (!(es.eigenvalues()(0) > 0.0)) throw NumericalError("matrix is not positive definite");
    const Eigen::VectorXd inv_root = es.eigenvalues().cwiseSqrt().cwiseInverse();
    return es.eigenvectors() * inv_root.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd spd_solve(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw NumericalError("matrix is not positive definite; Cholesky failed");
    Eigen::MatrixXd x = llt.solve(b);
    if (!x.allFinite()) throw NumericalError("positive-definite solve produced non-finite values");
    return x;
}

double spectral_norm(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    return svd.singularValues()(0);
}

Eigen::MatrixXd helmert_rows(Index rows, Index cols) {
    if (rows >= cols)
        throw ConfigError("Helmert basis needs rows < cols (got " + std::to_string(rows) + " rows, " +
                          std::to_string(cols) + " cols)");
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(rows, cols);
    for (Index j = 1; j <= rows; ++j) {
        const double jj = static_cast<double>(j);
        const double s = 1.0 / std::sqrt(jj * (jj + 1.0));
        h.row(j - 1).head(j).setConstant(s);
        h(j - 1, j) = -jj * s;
    }
    return h;
}

}  // namespace kfdmd::linalg
