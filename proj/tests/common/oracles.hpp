#pragma once

// Independent reference computations shared by the unit and acceptance
// tests. Everything here uses plain dense formulas, not the library's
// ensemble-space shortcuts.

#include "kfdmd/core.hpp"
#include "kfdmd/dmd.hpp"
#include "kfdmd/enkf.hpp"
#include "kfdmd/random.hpp"
#include "kfdmd/systems.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace oracle {

using kfdmd::Index;

// Textbook Kalman analysis with Q = 0, covariance form.
struct KalmanState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    void update(const Eigen::MatrixXd& h, const Eigen::VectorXd& y, double sigma) {
        Eigen::MatrixXd s = h * cov * h.transpose();
        s.diagonal().array() += sigma * sigma;
        const Eigen::MatrixXd k = cov * h.transpose() * s.inverse();
        mean += k * (y - h * mean);
        const Eigen::MatrixXd ikh = Eigen::MatrixXd::Identity(cov.rows(), cov.cols()) - k * h;
        // Joseph form stays symmetric.
        cov = ikh * cov * ikh.transpose() + sigma * sigma * k * k.transpose();
    }
};

struct Discrepancy {
    double mean = 0.0;  // worst ||m_ens - m_kf|| / max(||m_kf||, 1)
    double cov = 0.0;   // worst ||C_ens - C_kf|| / ||C_kf||
};

// Runs the ETKF with linear observations H theta against the Kalman filter
// for `steps` steps. Both start from the sample moments of one ensemble.
inline Discrepancy etkf_vs_kalman(Index p, Index dim_obs, Index members, Index steps, double sigma, std::uint64_t seed) {
    kfdmd::Stream rng(seed, kfdmd::StreamTag::system, 500);
    const Eigen::MatrixXd h = rng.normal_matrix(dim_obs, p) / std::sqrt(static_cast<double>(p));
    const Eigen::VectorXd truth = rng.normal_vector(p);
    Eigen::MatrixXd m0 = rng.normal_matrix(p, members);
    m0.colwise() += truth;
    kfdmd::Ensemble ens(m0, 0);
    KalmanState kf{ens.mean(), ens.sample_covariance()};

    kfdmd::FilterConfig cfg;
    cfg.ensemble_size = members;
    cfg.noise = kfdmd::NoiseSpec::autonomous(sigma);
    cfg.kind = kfdmd::FilterKind::etkf;

    Discrepancy worst;
    for (Index k = 0; k < steps; ++k) {
        const Eigen::VectorXd y = h * truth + sigma * rng.normal_vector(dim_obs);
        ens = kfdmd::etkf_update(ens, h * ens.members(), y, cfg);
        kf.update(h, y, sigma);
        worst.mean = std::max(worst.mean, (ens.mean() - kf.mean).norm() / std::max(kf.mean.norm(), 1.0));
        worst.cov = std::max(worst.cov, (ens.sample_covariance() - kf.cov).norm() / kf.cov.norm());
    }
    return worst;
}

// Analysis covariance target P - P_ty (P_yy + sigma^2 I)^-1 P_yt from the
// forecast ensemble, by direct inversion.
inline Eigen::MatrixXd etkf_target(const kfdmd::Ensemble& ens, const Eigen::MatrixXd& obs, double sigma) {
    const double scale = 1.0 / static_cast<double>(ens.size() - 1);
    const Eigen::MatrixXd t = ens.deviations();
    const Eigen::MatrixXd y = obs.colwise() - obs.rowwise().mean();
    const Eigen::MatrixXd p = t * t.transpose() * scale, pty = t * y.transpose() * scale;
    Eigen::MatrixXd s = y * y.transpose() * scale;
    s.diagonal().array() += sigma * sigma;
    return p - pty * s.inverse() * pty.transpose();
}

// Steps the ETKF by hand through the lifted-ODE run and returns the worst
// relative gap between the sample covariance after each step and its target.
struct OdeEtkfCheck {
    double worst = 0.0;
    Index steps = 0;
    Index p = 0;
    Index members = 0;
};

inline OdeEtkfCheck etkf_cov_exactness_ode(Index members, std::uint64_t seed) {
    const auto truth = kfdmd::gen_ode_auto(-0.01, -0.5, 1.0, 100, Eigen::Vector2d(3.0, 3.0));
    const auto noisy = kfdmd::add_noise(truth, 0.1, seed);
    const Index r = 3, d = 3, n = 5;
    kfdmd::FilterConfig cfg;
    cfg.ensemble_size = members;
    cfg.noise = kfdmd::NoiseSpec::autonomous(0.1);
    cfg.delays = n;
    cfg.rank = r;
    cfg.seed = seed;
    cfg.prior = kfdmd::PriorCovariance::blocks(r, d, 1e-2, 1e-3, 1e-3);
    const auto init = kfdmd::exact_dmd(noisy, kfdmd::RankPolicy::fixed(r));
    kfdmd::Ensemble ens = kfdmd::init_ensemble(init, cfg.prior, members, seed);

    OdeEtkfCheck out;
    out.p = kfdmd::SpectralParams::flat_size(r, d);
    out.members = members;
    for (Index k = n; k <= noisy.last(); ++k) {
        const Eigen::VectorXd data = kfdmd::delay_stack(noisy, kfdmd::DelayWindow(n, k));
        const Eigen::MatrixXd obs = kfdmd::observe_ensemble(ens, k, n, r, d);
        const Eigen::MatrixXd target = etkf_target(ens, obs, cfg.noise.sigma());
        ens = kfdmd::etkf_update(ens, obs, data, cfg);
        out.worst = std::max(out.worst, (ens.sample_covariance() - target).norm() / target.norm());
        ++out.steps;
    }
    return out;
}

// Pearson correlation.
inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd x = a.array() - a.mean(), y = b.array() - b.mean();
    return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace oracle
