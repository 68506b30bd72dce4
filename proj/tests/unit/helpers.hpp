#pragma once

#include "kfdmd/core.hpp"
#include "kfdmd/random.hpp"

#include <Eigen/Dense>

namespace testutil {

inline double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double s = std::max(b.norm(), 1e-300);
    return (a - b).norm() / s;
}

// Real matrix whose columns follow y_{k+1} = A y_k.
inline Eigen::MatrixXd linear_trajectory(const Eigen::MatrixXd& a, const Eigen::VectorXd& y0, Eigen::Index steps) {
    Eigen::MatrixXd y(a.rows(), steps + 1);
    y.col(0) = y0;
    for (Eigen::Index k = 1; k <= steps; ++k) y.col(k) = a * y.col(k - 1);
    return y;
}

inline Eigen::MatrixXd random_stable(Eigen::Index d, std::uint64_t seed, double radius = 0.9) {
    kfdmd::Stream rng(seed, kfdmd::StreamTag::system, 99);
    Eigen::MatrixXd a = rng.normal_matrix(d, d);
    const double rho = a.eigenvalues().cwiseAbs().maxCoeff();
    return a * (radius / rho);
}

}  // namespace testutil
