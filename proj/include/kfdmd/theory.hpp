#pragma once

#include "kfdmd/core.hpp"
#include "kfdmd/enkf.hpp"

#include <cstdint>
#include <vector>

namespace kfdmd {

// A linearized analysis step: prior covariance P, observation matrix H,
// noise level sigma, state noise Q, member-norm bound R and ||H|| bound M.
struct LemmaInstance {
    Eigen::MatrixXd p;
    Eigen::MatrixXd h;
    double sigma = 1.0;
    Eigen::MatrixXd q;  // empty means zero
    double r_bound = 1.0;
    double m_bound = 1.0;

    Index pdim() const { return p.rows(); }
    Index odim() const { return h.rows(); }
    Eigen::MatrixXd q_or_zero() const;
    // Throws ConfigError on shape mismatch or when ||H|| > M or ||P|| > 2R^2.
    void validate() const;
};

// P is the sample covariance of n_members vectors with norms in
// [R/4, R]; H is Gaussian rescaled to spectral norm in (M/2, M]. Q is zero
// when q_scale == 0, otherwise q_scale * G G^T / p for Gaussian G.
LemmaInstance random_lemma_instance(Index p, Index d, double sigma, double q_scale, std::uint64_t seed,
                                    Index n_members = 0);

// ||[P - P H^T (H P H^T + sigma^2 I)^-1 H P + Q] - [(P^-1 + sigma^-2 H^T H)^-1 + Q]|| / ||P||
double verify_cov_update(const LemmaInstance& inst);

// lambda_min(W - (2 M^2 R^2 + sigma^2)^-1 H^T H) with
// W = P^-1 - (I - K H)^T P+^-1 (I - K H).
double verify_w_bound(const LemmaInstance& inst);

// sigma^-2 M - ||K^T P+^-1||_2.
double verify_gain_bound(const LemmaInstance& inst);

struct LemmaSweep {
    Index instances = 0;
    double max_cov_residual = 0.0;
    double min_w_slack = 0.0;           // raw
    double min_w_slack_relative = 0.0;  // divided by ||H^T H||
    double min_gain_slack = 0.0;        // raw, Q = 0 instances
    double min_gain_slack_relative = 0.0;
    // Gain bound evaluated with Q != 0, outside the lemma's hypotheses.
    double min_gain_slack_relative_with_q = 0.0;
};

// Randomized sweep over p in 1..10, D in 1..30, sigma log-uniform in
// [0.01, 10]; half the instances carry a nonzero Q.
LemmaSweep lemma_sweep(Index count, std::uint64_t seed);

struct MisfitLedger {
    std::vector<Index> steps;
    std::vector<double> misfit;       // ||ybar_k - h_k(theta_k^true)||^2
    std::vector<double> noise_norm;   // ||eps_k||
    std::vector<double> drift_norm;   // ||theta_{k+1}^true - theta_k^true||
    std::vector<double> avg_misfit;   // running means
    std::vector<double> avg_noise;
    std::vector<double> avg_noise_sq;
    std::vector<double> avg_drift;

    std::size_t size() const { return steps.size(); }
};

// theta_true holds one flattened parameter vector per posterior step (a
// single column means constant truth). noise holds the stacked data noise
// per step, d (n+1) x steps.
MisfitLedger misfit_ledger(const FilterTrajectory& run, const Eigen::Ref<const Eigen::MatrixXd>& theta_true,
                           const Eigen::Ref<const Eigen::MatrixXd>& noise);

// Least-squares fit of avg_misfit(T) ~ C1 / T + C2 * avg_noise(T)
// (+ C3 * avg_drift(T) when any drift is nonzero).
struct MisfitFit {
    double c1 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;
    double relative_residual = 0.0;  // ||fit - data|| / ||data||
};
MisfitFit fit_misfit(const MisfitLedger& ledger);

// Least-squares slope of log avg_misfit against log T over T in
// [T_end / 10, T_end], T counted from 1.
double final_decade_slope(const MisfitLedger& ledger);

}  // namespace kfdmd
