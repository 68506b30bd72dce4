#pragma once

#include "kfdmd/core.hpp"
#include "kfdmd/random.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace kfdmd {

enum class FilterKind { etkf, enkf };
enum class RunMode { autonomous, nonautonomous };

// N parameter samples, one per column.
class Ensemble {
public:
    Ensemble(Eigen::MatrixXd members, Index step);

    Index size() const { return members_.cols(); }
    Index pdim() const { return members_.rows(); }
    Index step() const { return step_; }
    const Eigen::MatrixXd& members() const { return members_; }

    Eigen::VectorXd mean() const { return members_.rowwise().mean(); }
    // Theta: members minus the mean, rows sum to zero.
    Eigen::MatrixXd deviations() const { return members_.colwise() - mean(); }
    Eigen::MatrixXd sample_covariance() const;

private:
    Eigen::MatrixXd members_;
    Index step_;
};

// Prior covariance C0, either diagonal or dense.
class PriorCovariance {
public:
    PriorCovariance() = default;
    static PriorCovariance diagonal(Eigen::VectorXd variances);
    static PriorCovariance dense(Eigen::MatrixXd cov);
    // Block-diagonal default over the flattened layout.
    static PriorCovariance blocks(Index rank, Index dim, double mode_var, double eigenvalue_var, double amplitude_var);

    bool empty() const { return size() == 0; }
    Index size() const { return is_dense_ ? dense_.rows() : diag_.size(); }
    bool is_dense() const { return is_dense_; }
    Eigen::MatrixXd matrix() const;
    // Draws from N(0, C0).
    Eigen::VectorXd sample(Stream& rng) const;

private:
    bool is_dense_ = false;
    Eigen::VectorXd diag_;
    Eigen::MatrixXd dense_;
    Eigen::MatrixXd factor_;
};

struct FilterConfig {
    Index ensemble_size = 50;
    NoiseSpec noise = NoiseSpec::autonomous(0.1);
    Index delays = 0;
    FilterKind kind = FilterKind::etkf;
    PriorCovariance prior;  // empty means PriorCovariance::blocks(rank, d, 1e-2, 1e-3, 1e-3)
    std::uint64_t seed = 0;
    Index rank = 1;
    // Store the covariance factor for every step, not only the last one.
    bool keep_covariance_history = true;

    // Throws ConfigError for inconsistent settings at parameter dimension p.
    void validate(Index p) const;
};

struct Gaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Posterior N(mean, F F^T) after assimilating the data window ending at `step`.
class PosteriorSpectrum {
public:
    PosteriorSpectrum(Eigen::VectorXd mean, Eigen::MatrixXd factor, Index step)
        : mean_(std::move(mean)), factor_(std::move(factor)), step_(step) {}

    const Eigen::VectorXd& mean() const { return mean_; }
    Index step() const { return step_; }
    bool has_cov() const { return factor_.size() > 0; }
    // p x N factor, F = Theta / sqrt(N - 1).
    const Eigen::MatrixXd& factor() const { return factor_; }
    Eigen::MatrixXd cov() const;

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd factor_;
    Index step_;
};

struct Covariances {
    Eigen::MatrixXd p;     // p x p
    Eigen::MatrixXd p_ty;  // p x D
    Eigen::MatrixXd p_yy;  // D x D
};

struct FilterTrajectory {
    SpectralParams initial;
    Index rank;
    Index dim;
    Index delays;
    std::vector<PosteriorSpectrum> posteriors;   // one per assimilated step, k = n..m
    std::vector<Eigen::VectorXd> predicted_mean; // ensemble-average h_k before the update at k

    const PosteriorSpectrum& last() const { return posteriors.back(); }
    SpectralParams params(std::size_t i) const { return SpectralParams::unflatten(posteriors[i].mean(), rank, dim); }
    SpectralParams final_params() const { return params(posteriors.size() - 1); }
};

Ensemble init_ensemble(const SpectralParams& dmd_out, const PriorCovariance& c0, Index n_members, std::uint64_t seed);

// Stacks Re(Phi Lambda^j b) for j = k-n..k.
Eigen::VectorXd observation_map(const Eigen::Ref<const Eigen::VectorXd>& theta, Index k, Index n, Index rank, Index dim);

// D x N matrix whose column i is observation_map of member i.
Eigen::MatrixXd observe_ensemble(const Ensemble& ens, Index k, Index n, Index rank, Index dim);

Covariances empirical_covariances(const Ensemble& ens, const Eigen::Ref<const Eigen::MatrixXd>& obs);

// P_ty (P_yy + sigma^2 I)^-1 by a Cholesky solve.
Eigen::MatrixXd kalman_gain(const Eigen::Ref<const Eigen::MatrixXd>& p_ty, const Eigen::Ref<const Eigen::MatrixXd>& p_yy,
                            double sigma);

// Stochastic EnKF update with perturbed observations; draws come from
// substreams keyed by (cfg.seed, k, member).
Ensemble enkf_step(const Ensemble& ens, const Eigen::Ref<const Eigen::VectorXd>& data, Index k, const FilterConfig& cfg);

// Deterministic ETKF update that realizes the analysis covariance exactly.
Ensemble etkf_step(const Ensemble& ens, const Eigen::Ref<const Eigen::VectorXd>& data, Index k, const FilterConfig& cfg);

// Same updates with a caller-supplied observation operator: obs is the D x N
// matrix of predicted observations of `ens`.
Ensemble enkf_update(const Ensemble& ens, const Eigen::Ref<const Eigen::MatrixXd>& obs,
                     const Eigen::Ref<const Eigen::VectorXd>& data, Index k, const FilterConfig& cfg);
Ensemble etkf_update(const Ensemble& ens, const Eigen::Ref<const Eigen::MatrixXd>& obs,
                     const Eigen::Ref<const Eigen::VectorXd>& data, const FilterConfig& cfg);

// Exact DMD on the whole series initializes the ensemble.
FilterTrajectory run_filter(const SnapshotSeries& series, const FilterConfig& cfg, RunMode mode);
// Same, starting from a given initialization (e.g. compressed DMD).
FilterTrajectory run_filter(const SnapshotSeries& series, const SpectralParams& init, const FilterConfig& cfg,
                            RunMode mode);

// (mode block, eigenvalue block) of the flattened layout.
std::pair<Gaussian, Gaussian> extract_marginals(const PosteriorSpectrum& post, Index rank, Index dim);

}  // namespace kfdmd
