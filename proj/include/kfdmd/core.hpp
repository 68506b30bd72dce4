#pragma once

#include <Eigen/Dense>

#include <complex>
#include <utility>

namespace kfdmd {

using Index = Eigen::Index;
using cplx = std::complex<double>;

// Uniformly sampled observable snapshots; column k holds g(x_k).
class SnapshotSeries {
public:
    SnapshotSeries(Eigen::MatrixXd values, double dt, double t0 = 0.0);

    Index dim() const { return values_.rows(); }
    Index count() const { return values_.cols(); }
    // Index of the last snapshot (m when there are m+1 snapshots).
    Index last() const { return values_.cols() - 1; }
    double dt() const { return dt_; }
    double t0() const { return t0_; }
    double time(Index k) const { return t0_ + static_cast<double>(k) * dt_; }

    const Eigen::MatrixXd& values() const { return values_; }
    Eigen::VectorXd column(Index k) const { return values_.col(k); }

    // Snapshots first..first+len-1 as a new series starting at time(first).
    SnapshotSeries slice(Index first, Index len) const;

private:
    Eigen::MatrixXd values_;
    double dt_;
    double t0_;
};

// The triple {Phi, Lambda, b}. Every scalar is complex; real systems carry
// zero imaginary parts.
class SpectralParams {
public:
    SpectralParams(Eigen::MatrixXcd modes, Eigen::VectorXcd eigenvalues, Eigen::VectorXcd amplitudes);

    Index rank() const { return eigenvalues_.size(); }
    Index dim() const { return modes_.rows(); }

    const Eigen::MatrixXcd& modes() const { return modes_; }
    const Eigen::VectorXcd& eigenvalues() const { return eigenvalues_; }
    const Eigen::VectorXcd& amplitudes() const { return amplitudes_; }

    // Flattened length 2*r*(d+2).
    static Index flat_size(Index rank, Index dim) { return 2 * rank * (dim + 2); }

    // Layout: modes column by column, then eigenvalues, then amplitudes;
    // each complex scalar contributes (Re, Im) consecutively.
    Eigen::VectorXd flatten() const;
    static SpectralParams unflatten(const Eigen::Ref<const Eigen::VectorXd>& theta, Index rank, Index dim);

    // Offsets of the blocks inside the flattened vector.
    static Index mode_offset() { return 0; }
    static Index eigenvalue_offset(Index rank, Index dim) { return 2 * rank * dim; }
    static Index amplitude_offset(Index rank, Index dim) { return 2 * rank * dim + 2 * rank; }

private:
    Eigen::MatrixXcd modes_;
    Eigen::VectorXcd eigenvalues_;
    Eigen::VectorXcd amplitudes_;
};

// Observation noise std and state noise covariance. Q is kept implicit when
// it is zero or isotropic so that large parameter spaces never materialize a
// dense p x p matrix.
class NoiseSpec {
public:
    enum class QKind { zero, isotropic, dense };

    NoiseSpec() = default;
    static NoiseSpec autonomous(double sigma);
    static NoiseSpec isotropic(double sigma, double q_variance);
    static NoiseSpec dense(double sigma, Eigen::MatrixXd q);

    double sigma() const { return sigma_; }
    QKind q_kind() const { return kind_; }
    bool q_is_zero() const { return kind_ == QKind::zero; }
    double q_variance() const { return q_variance_; }

    // Q as a dense p x p matrix.
    Eigen::MatrixXd q_matrix(Index p) const;
    // Adds Q to a dense covariance in place.
    void add_q(Eigen::MatrixXd& cov) const;
    // Lower factor L with L L^T = Q, for sampling. Empty when Q is zero.
    Eigen::MatrixXd q_factor(Index p) const;

private:
    double sigma_ = 0.0;
    QKind kind_ = QKind::zero;
    double q_variance_ = 0.0;
    Eigen::MatrixXd q_;
};

struct DelayWindow {
    Index n = 0;  // number of delays; the window holds n+1 snapshots
    Index k = 0;  // index of the newest snapshot in the window

    DelayWindow(Index delays, Index step);
};

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> build_data_matrices(const SnapshotSeries& series);

// Integer power by repeated squaring. Throws RangeError on overflow.
cplx int_power(cplx base, Index exponent);

// Re(Phi Lambda^k b).
Eigen::VectorXd reconstruct(const SpectralParams& params, Index k);

// Columns k-n..k stacked top to bottom.
Eigen::VectorXd delay_stack(const SnapshotSeries& series, const DelayWindow& window);

// sqrt(sum_i ||est_i - truth_i||^2 / N) over the N columns.
double rmse(const Eigen::Ref<const Eigen::MatrixXd>& estimate, const Eigen::Ref<const Eigen::MatrixXd>& truth);

}  // namespace kfdmd
