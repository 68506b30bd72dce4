#include "kfdmd/core.hpp"

#include "kfdmd/error.hpp"
#include "kfdmd/linalg.hpp"

#include <cmath>
#include <string>

namespace kfdmd {

SnapshotSeries::SnapshotSeries(Eigen::MatrixXd values, double dt, double t0)
    : values_(std::move(values)), dt_(dt), t0_(t0) {
    if (values_.rows() < 1) throw ConfigError("snapshot series needs at least one observable");
    if (values_.cols() < 2) throw ConfigError("snapshot series needs at least 2 snapshots, got " + std::to_string(values_.cols()));
    if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw ConfigError("snapshot series needs dt > 0");
    if (!std::isfinite(t0_)) throw ConfigError("snapshot series needs a finite start time");
    if (!values_.allFinite()) throw ConfigError("snapshot series contains non-finite entries");
}

SnapshotSeries SnapshotSeries::slice(Index first, Index len) const {
    if (first < 0 || len < 2 || first + len > count())
        throw ConfigError("slice [" + std::to_string(first) + ", " + std::to_string(first + len) +
                          ") out of range for " + std::to_string(count()) + " snapshots");
    return SnapshotSeries(values_.middleCols(first, len), dt_, time(first));
}

SpectralParams::SpectralParams(Eigen::MatrixXcd modes, Eigen::VectorXcd eigenvalues, Eigen::VectorXcd amplitudes)
    : modes_(std::move(modes)), eigenvalues_(std::move(eigenvalues)), amplitudes_(std::move(amplitudes)) {
    if (eigenvalues_.size() < 1) throw ConfigError("spectral parameters need rank >= 1");
    if (modes_.cols() != eigenvalues_.size() || amplitudes_.size() != eigenvalues_.size())
        throw ConfigError("spectral parameters: modes have " + std::to_string(modes_.cols()) + " columns, " +
                          std::to_string(eigenvalues_.size()) + " eigenvalues, " + std::to_string(amplitudes_.size()) +
                          " amplitudes");
    if (modes_.rows() < 1) throw ConfigError("spectral parameters need dim >= 1");
    if (!modes_.allFinite() || !eigenvalues_.allFinite() || !amplitudes_.allFinite())
        throw NumericalError("spectral parameters contain non-finite entries");
}

Eigen::VectorXd SpectralParams::flatten() const {
    const Index r = rank(), d = dim();
    Eigen::VectorXd theta(flat_size(r, d));
    Index pos = 0;
    auto put = [&](cplx z) {
        theta(pos++) = z.real();
        theta(pos++) = z.imag();
    };
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < d; ++j) put(modes_(j, i));
    for (Index i = 0; i < r; ++i) put(eigenvalues_(i));
    for (Index i = 0; i < r; ++i) put(amplitudes_(i));
    return theta;
}

SpectralParams SpectralParams::unflatten(const Eigen::Ref<const Eigen::VectorXd>& theta, Index rank, Index dim) {
    if (rank < 1 || dim < 1) throw ConfigError("unflatten needs rank >= 1 and dim >= 1");
    if (theta.size() != flat_size(rank, dim))
        throw ConfigError("flattened vector has length " + std::to_string(theta.size()) + ", expected " +
                          std::to_string(flat_size(rank, dim)));
    Eigen::MatrixXcd modes(dim, rank);
    Eigen::VectorXcd eig(rank), amp(rank);
    Index pos = 0;
    auto get = [&]() {
        const cplx z(theta(pos), theta(pos + 1));
        pos += 2;
        return z;
    };
    for (Index i = 0; i < rank; ++i)
        for (Index j = 0; j < dim; ++j) modes(j, i) = get();
    for (Index i = 0; i < rank; ++i) eig(i) = get();
    for (Index i = 0; i < rank; ++i) amp(i) = get();
    return SpectralParams(std::move(modes), std::move(eig), std::move(amp));
}

NoiseSpec NoiseSpec::autonomous(double sigma) {
    if (!(sigma >= 0.0)) throw ConfigError("observation noise sigma must be nonnegative");
    NoiseSpec n;
    n.sigma_ = sigma;
    return n;
}

NoiseSpec NoiseSpec::isotropic(double sigma, double q_variance) {
    NoiseSpec n = autonomous(sigma);
    if (!(q_variance >= 0.0)) throw ConfigError("state noise variance must be nonnegative");
    if (q_variance > 0.0) {
        n.kind_ = QKind::isotropic;
        n.q_variance_ = q_variance;
    }
    return n;
}

NoiseSpec NoiseSpec::dense(double sigma, Eigen::MatrixXd q) {
    NoiseSpec n = autonomous(sigma);
    if (q.rows() != q.cols()) throw ConfigError("state noise covariance must be square");
    if (!q.allFinite()) throw ConfigError("state noise covariance has non-finite entries");
    const double scale = std::max(q.norm(), 1e-300);
    if ((q - q.transpose()).norm() > 1e-12 * scale) throw ConfigError("state noise covariance is not symmetric");
    if (q.size() > 0 && linalg::min_eigenvalue(q) < -1e-10 * scale)
        throw ConfigError("state noise covariance is not positive semidefinite");
    if (q.norm() == 0.0) return n;
    n.kind_ = QKind::dense;
    n.q_ = std::move(q);
    return n;
}

Eigen::MatrixXd NoiseSpec::q_matrix(Index p) const {
    switch (kind_) {
    case QKind::zero: return Eigen::MatrixXd::Zero(p, p);
    case QKind::isotropic: return q_variance_ * Eigen::MatrixXd::Identity(p, p);
    case QKind::dense:
        if (q_.rows() != p) throw ConfigError("state noise covariance is " + std::to_string(q_.rows()) +
                                              "x" + std::to_string(q_.rows()) + ", parameter dimension is " +
                                              std::to_string(p));
        return q_;
    }
    return {};
}

void NoiseSpec::add_q(Eigen::MatrixXd& cov) const {
    switch (kind_) {
    case QKind::zero: return;
    case QKind::isotropic: cov.diagonal().array() += q_variance_; return;
    case QKind::dense: cov += q_matrix(cov.rows()); return;
    }
}

Eigen::MatrixXd NoiseSpec::q_factor(Index p) const {
    switch (kind_) {
    case QKind::zero: return {};
    case QKind::isotropic: return std::sqrt(q_variance_) * Eigen::MatrixXd::Identity(p, p);
    case QKind::dense: return linalg::psd_sqrt(q_matrix(p));
    }
    return {};
}

DelayWindow::DelayWindow(Index delays, Index step) : n(delays), k(step) {
    if (n < 0) throw ConfigError("delay count must be nonnegative");
    if (k < n)
        throw ConfigError("delay window k=" + std::to_string(k) + " precedes the series start for n=" + std::to_string(n));
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> build_data_matrices(const SnapshotSeries& series) {
    const Index m = series.last();
    if (m < 1) throw ConfigError("data matrices need at least 2 snapshots");
    return {series.values().leftCols(m), series.values().rightCols(m)};
}

cplx int_power(cplx base, Index exponent) {
    if (exponent < 0) throw ConfigError("negative eigenvalue power " + std::to_string(exponent));
    cplx result(1.0, 0.0);
    cplx b = base;
    auto e = static_cast<unsigned long long>(exponent);
    while (e > 0) {
        if (e & 1ULL) result *= b;
        e >>= 1ULL;
        if (e > 0) b *= b;
    }
    if (!std::isfinite(result.real()) || !std::isfinite(result.imag()))
        throw RangeError("eigenvalue power " + std::to_string(exponent) + " overflows (|lambda| = " +
                         std::to_string(std::abs(base)) + ")");
    return result;
}

Eigen::VectorXd reconstruct(const SpectralParams& params, Index k) {
    if (k < 0) throw ConfigError("reconstruct needs k >= 0");
    Eigen::VectorXcd coeff(params.rank());
    for (Index i = 0; i < params.rank(); ++i) coeff(i) = int_power(params.eigenvalues()(i), k) * params.amplitudes()(i);
    Eigen::VectorXd out = (params.modes() * coeff).real();
    if (!out.allFinite()) throw RangeError("reconstruction at k=" + std::to_string(k) + " is not finite");
    return out;
}

Eigen::VectorXd delay_stack(const SnapshotSeries& series, const DelayWindow& window) {
    if (window.k > series.last())
        throw ConfigError("delay window k=" + std::to_string(window.k) + " exceeds last snapshot " +
                          std::to_string(series.last()));
    const Index d = series.dim();
    Eigen::VectorXd out(d * (window.n + 1));
    for (Index j = 0; j <= window.n; ++j) out.segment(j * d, d) = series.values().col(window.k - window.n + j);
    return out;
}

double rmse(const Eigen::Ref<const Eigen::MatrixXd>& estimate, const Eigen::Ref<const Eigen::MatrixXd>& truth) {
    if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
        throw ConfigError("rmse shape mismatch: " + std::to_string(estimate.rows()) + "x" +
                          std::to_string(estimate.cols()) + " vs " + std::to_string(truth.rows()) + "x" +
                          std::to_string(truth.cols()));
    if (truth.cols() == 0) throw ConfigError("rmse needs at least one column");
    return std::sqrt((estimate - truth).squaredNorm() / static_cast<double>(truth.cols()));
}

}  // namespace kfdmd
