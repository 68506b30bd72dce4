#include "kfdmd/enkf.hpp"

#include "kfdmd/dmd.hpp"
#include "kfdmd/error.hpp"
#include "kfdmd/linalg.hpp"

#include <cmath>
#include <string>

namespace kfdmd {

Ensemble::Ensemble(Eigen::MatrixXd members, Index step) : members_(std::move(members)), step_(step) {
    if (members_.cols() < 2) throw ConfigError("ensemble needs N >= 2 members");
    if (members_.rows() < 1) throw ConfigError("ensemble members need at least one coordinate");
    if (!members_.allFinite()) throw NumericalError("ensemble contains non-finite members");
}

Eigen::MatrixXd Ensemble::sample_covariance() const {
    const Eigen::MatrixXd dev = deviations();
    return dev * dev.transpose() / static_cast<double>(size() - 1);
}

PriorCovariance PriorCovariance::diagonal(Eigen::VectorXd variances) {
    if (!variances.allFinite() || (variances.array() < 0.0).any())
        throw NumericalError("prior covariance is not positive semidefinite (negative variance)");
    PriorCovariance c;
    c.diag_ = std::move(variances);
    return c;
}

PriorCovariance PriorCovariance::dense(Eigen::MatrixXd cov) {
    if (cov.rows() != cov.cols()) throw ConfigError("prior covariance must be square");
    if (!cov.allFinite()) throw NumericalError("prior covariance has non-finite entries");
    const double scale = std::max(cov.norm(), 1e-300);
    if ((cov - cov.transpose()).norm() > 1e-10 * scale) throw NumericalError("prior covariance is not symmetric");
    if (cov.size() > 0 && linalg::min_eigenvalue(cov) < -1e-10 * scale)
        throw NumericalError("prior covariance is not positive semidefinite");
    PriorCovariance c;
    c.is_dense_ = true;
    c.factor_ = linalg::psd_sqrt(cov);
    c.dense_ = std::move(cov);
    return c;
}

PriorCovariance PriorCovariance::blocks(Index rank, Index dim, double mode_var, double eigenvalue_var,
                                        double amplitude_var) {
    const Index p = SpectralParams::flat_size(rank, dim);
    Eigen::VectorXd v(p);
    const Index e0 = SpectralParams::eigenvalue_offset(rank, dim);
    const Index a0 = SpectralParams::amplitude_offset(rank, dim);
    v.head(e0).setConstant(mode_var);
    v.segment(e0, 2 * rank).setConstant(eigenvalue_var);
    v.segment(a0, 2 * rank).setConstant(amplitude_var);
    return diagonal(std::move(v));
}

Eigen::MatrixXd PriorCovariance::matrix() const {
    if (is_dense_) return dense_;
    return diag_.asDiagonal();
}

Eigen::VectorXd PriorCovariance::sample(Stream& rng) const {
    const Eigen::VectorXd z = rng.normal_vector(size());
    if (is_dense_) return factor_ * z;
    return diag_.cwiseSqrt().cwiseProduct(z);
}

void FilterConfig::validate(Index p) const {
    if (ensemble_size < 2) throw ConfigError("ensemble size must be >= 2");
    if (delays < 0) throw ConfigError("delay count must be nonnegative");
    if (rank < 1) throw ConfigError("rank must be >= 1");
    if (!prior.empty() && prior.size() != p)
        throw ConfigError("prior covariance is " + std::to_string(prior.size()) + "-dimensional, parameter vector has p=" +
                          std::to_string(p));
    const bool needs_dense = !noise.q_is_zero() || noise.sigma() == 0.0;
    if (kind == FilterKind::etkf && needs_dense && ensemble_size < p + 1)
        throw ConfigError("etkf with nonzero state noise (or sigma = 0) needs N >= p+1 = " + std::to_string(p + 1) +
                          " members, got " + std::to_string(ensemble_size) + "; use filter kind enkf instead");
}

Eigen::MatrixXd PosteriorSpectrum::cov() const {
    if (!has_cov()) throw ConfigError("posterior at step " + std::to_string(step_) + " was stored without covariance");
    return factor_ * factor_.transpose();
}

Ensemble init_ensemble(const SpectralParams& dmd_out, const PriorCovariance& c0, Index n_members, std::uint64_t seed) {
    const Eigen::VectorXd theta = dmd_out.flatten();
    if (c0.size() != theta.size())
        throw ConfigError("prior covariance is " + std::to_string(c0.size()) + "-dimensional, parameter vector has p=" +
                          std::to_string(theta.size()));
    if (n_members < 2) throw ConfigError("ensemble size must be >= 2");
    Eigen::MatrixXd members(theta.size(), n_members);
    for (Index i = 0; i < n_members; ++i) {
        Stream rng(seed, StreamTag::prior, static_cast<std::uint64_t>(i));
        members.col(i) = theta + c0.sample(rng);
    }
    return Ensemble(std::move(members), 0);
}

Eigen::VectorXd observation_map(const Eigen::Ref<const Eigen::VectorXd>& theta, Index k, Index n, Index rank, Index dim) {
    if (n < 0) throw ConfigError("delay count must be nonnegative");
    if (k < n) throw ConfigError("observation map needs k >= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    const SpectralParams params = SpectralParams::unflatten(theta, rank, dim);
    Eigen::VectorXcd coeff(rank);
    for (Index i = 0; i < rank; ++i) coeff(i) = int_power(params.eigenvalues()(i), k - n) * params.amplitudes()(i);
    Eigen::VectorXd out(dim * (n + 1));
    for (Index j = 0; j <= n; ++j) {
        if (j > 0) coeff = coeff.cwiseProduct(params.eigenvalues());
        out.segment(j * dim, dim) = (params.modes() * coeff).real();
    }
    if (!out.allFinite())
        throw RangeError("observation map at k=" + std::to_string(k) + " is not finite (eigenvalue powers overflow)");
    return out;
}

Eigen::MatrixXd observe_ensemble(const Ensemble& ens, Index k, Index n, Index rank, Index dim) {
    Eigen::MatrixXd obs(dim * (n + 1), ens.size());
    for (Index i = 0; i < ens.size(); ++i) obs.col(i) = observation_map(ens.members().col(i), k, n, rank, dim);
    return obs;
}

Covariances empirical_covariances(const Ensemble& ens, const Eigen::Ref<const Eigen::MatrixXd>& obs) {
    const Index n = ens.size();
    if (n < 2) throw ConfigError("empirical covariances need N >= 2");
    if (obs.cols() != n)
        throw ConfigError("observation matrix has " + std::to_string(obs.cols()) + " columns for " + std::to_string(n) +
                          " members");
    const Eigen::MatrixXd theta = ens.deviations();
    const Eigen::MatrixXd y = obs.colwise() - obs.rowwise().mean();
    const double scale = 1.0 / static_cast<double>(n - 1);
    return {theta * theta.transpose() * scale, theta * y.transpose() * scale, y * y.transpose() * scale};
}

Eigen::MatrixXd kalman_gain(const Eigen::Ref<const Eigen::MatrixXd>& p_ty, const Eigen::Ref<const Eigen::MatrixXd>& p_yy,
                            double sigma) {
    if (p_yy.rows() != p_yy.cols() || p_ty.cols() != p_yy.rows()) throw ConfigError("kalman gain: shape mismatch");
    if (!(sigma >= 0.0)) throw ConfigError("kalman gain: sigma must be nonnegative");
    Eigen::MatrixXd s = linalg::symmetrize(p_yy);
    s.diagonal().array() += sigma * sigma;
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success)
        throw NumericalError("innovation covariance P_yy + sigma^2 I is singular (sigma = " + std::to_string(sigma) + ")");
    // K = P_ty S^-1  <=>  K^T = S^-1 P_yt
    return llt.solve(p_ty.transpose()).transpose();
}

namespace {

// Quantities shared by both update kinds: Theta, Y, innovation weights.
struct Analysis {
    Eigen::VectorXd mean;
    Eigen::MatrixXd theta;   // p x N deviations
    Eigen::MatrixXd y;       // D x N observation deviations
    Eigen::VectorXd y_mean;  // D
    Eigen::MatrixXd gram;    // Y^T Y + (N-1) sigma^2 I, present when sigma > 0
    Eigen::LLT<Eigen::MatrixXd> gram_llt;
};

Analysis analyse(const Ensemble& ens, const Eigen::Ref<const Eigen::MatrixXd>& obs,
                 const Eigen::Ref<const Eigen::VectorXd>& data, double sigma) {
    if (obs.cols() != ens.size())
        throw ConfigError("observation matrix has " + std::to_string(obs.cols()) + " columns for " +
                          std::to_string(ens.size()) + " members");
    if (data.size() != obs.rows())
        throw ConfigError("data vector has length " + std::to_string(data.size()) + ", observations have " +
                          std::to_string(obs.rows()));
    if (!data.allFinite()) throw ConfigError("data vector contains non-finite entries");
    Analysis a;
    a.mean = ens.mean();
    a.theta = ens.members().colwise() - a.mean;
    a.y_mean = obs.rowwise().mean();
    a.y = obs.colwise() - a.y_mean;
    if (sigma > 0.0) {
        const double c = static_cast<double>(ens.size() - 1) * sigma * sigma;
        a.gram = a.y.transpose() * a.y;
        a.gram.diagonal().array() += c;
        a.gram_llt.compute(a.gram);
        if (a.gram_llt.info() != Eigen::Success) throw NumericalError("ensemble-space innovation matrix is singular");
    }
    return a;
}

// K v for a batch of innovation columns V (D x q), without forming K.
// With sigma > 0: K = Theta (Y^T Y + (N-1) sigma^2 I)^-1 Y^T (push-through
// form of P_ty (P_yy + sigma^2 I)^-1).
Eigen::MatrixXd apply_gain(const Analysis& a, const Eigen::Ref<const Eigen::MatrixXd>& v, double sigma, Index n_members) {
    if (sigma > 0.0) return a.theta * a.gram_llt.solve(a.y.transpose() * v);
    const double scale = 1.0 / static_cast<double>(n_members - 1);
    const Eigen::MatrixXd p_ty = a.theta * a.y.transpose() * scale;
    const Eigen::MatrixXd p_yy = a.y * a.y.transpose() * scale;
    return kalman_gain(p_ty, p_yy, 0.0) * v;
}

// Analysis covariance P - P_ty (P_yy + sigma^2 I)^-1 P_yt as a dense matrix.
Eigen::MatrixXd analysis_covariance(const Analysis& a, double sigma, Index n_members) {
    const double scale = 1.0 / static_cast<double>(n_members - 1);
    const Eigen::MatrixXd p = a.theta * a.theta.transpose() * scale;
    const Eigen::MatrixXd p_ty = a.theta * a.y.transpose() * scale;
    const Eigen::MatrixXd p_yy = a.y * a.y.transpose() * scale;
    const Eigen::MatrixXd k = kalman_gain(p_ty, p_yy, sigma);
    return linalg::symmetrize(p - k * p_ty.transpose());
}

}  // namespace

Ensemble etkf_update(const Ensemble& ens, const Eigen::Ref<const Eigen::MatrixXd>& obs,
                     const Eigen::Ref<const Eigen::VectorXd>& data, const FilterConfig& cfg) {
    const Index n = ens.size(), p = ens.pdim();
    const double sigma = cfg.noise.sigma();
    cfg.validate(p);
    const Analysis a = analyse(ens, obs, data, sigma);

    const Eigen::VectorXd innovation = data - a.y_mean;
    const Eigen::VectorXd mean = a.mean + apply_gain(a, innovation, sigma, n);

    Eigen::MatrixXd theta_new;
    if (cfg.noise.q_is_zero() && sigma > 0.0) {
        // Right transform T = (I + Y^T Y / ((N-1) sigma^2))^{-1/2}; T 1 = 1
        // keeps the mean, Theta T T^T Theta^T / (N-1) equals the analysis
        // covariance by the Woodbury identity.
        const double c = static_cast<double>(n - 1) * sigma * sigma;
        const Eigen::MatrixXd t = std::sqrt(c) * linalg::spd_inv_sqrt(a.gram);
        theta_new = a.theta * t;
    } else {
        // Dense target P_{k+1} = analysis + Q realized by sqrt(N-1) S B.
        Eigen::MatrixXd target = analysis_covariance(a, sigma, n);
        cfg.noise.add_q(target);
        target = linalg::symmetrize(target);
        const Eigen::MatrixXd s = linalg::psd_sqrt(target);
        theta_new = std::sqrt(static_cast<double>(n - 1)) * s * linalg::helmert_rows(p, n);
    }
    Eigen::MatrixXd members = theta_new.colwise() + mean;
    return Ensemble(std::move(members), ens.step() + 1);
}

Ensemble enkf_update(const Ensemble& ens, const Eigen::Ref<const Eigen::MatrixXd>& obs,
                     const Eigen::Ref<const Eigen::VectorXd>& data, Index k, const FilterConfig& cfg) {
    const Index n = ens.size(), p = ens.pdim(), dim_obs = obs.rows();
    const double sigma = cfg.noise.sigma();
    cfg.validate(p);
    const Analysis a = analyse(ens, obs, data, sigma);

    Eigen::MatrixXd innovations(dim_obs, n);
    for (Index i = 0; i < n; ++i) {
        Stream rng(cfg.seed, StreamTag::observation_noise, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
        innovations.col(i) = data - obs.col(i) - sigma * rng.normal_vector(dim_obs);
    }
    Eigen::MatrixXd members = ens.members() + apply_gain(a, innovations, sigma, n);

    if (!cfg.noise.q_is_zero()) {
        const Eigen::MatrixXd q_factor = cfg.noise.q_factor(p);
        for (Index i = 0; i < n; ++i) {
            Stream rng(cfg.seed, StreamTag::state_noise, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
            members.col(i) += q_factor * rng.normal_vector(p);
        }
    }
    return Ensemble(std::move(members), ens.step() + 1);
}

Ensemble etkf_step(const Ensemble& ens, const Eigen::Ref<const Eigen::VectorXd>& data, Index k, const FilterConfig& cfg) {
    const Index dim = data.size() / (cfg.delays + 1);
    if (dim * (cfg.delays + 1) != data.size()) throw ConfigError("data length is not a multiple of n+1");
    return etkf_update(ens, observe_ensemble(ens, k, cfg.delays, cfg.rank, dim), data, cfg);
}

Ensemble enkf_step(const Ensemble& ens, const Eigen::Ref<const Eigen::VectorXd>& data, Index k, const FilterConfig& cfg) {
    const Index dim = data.size() / (cfg.delays + 1);
    if (dim * (cfg.delays + 1) != data.size()) throw ConfigError("data length is not a multiple of n+1");
    return enkf_update(ens, observe_ensemble(ens, k, cfg.delays, cfg.rank, dim), data, k, cfg);
}

namespace {

template <class E>
[[noreturn]] void rethrow_at(const E& e, Index k) {
    throw E("step " + std::to_string(k) + ": " + e.what());
}

}  // namespace

FilterTrajectory run_filter(const SnapshotSeries& series, const FilterConfig& cfg, RunMode mode) {
    const SpectralParams init = exact_dmd(series, RankPolicy::fixed(cfg.rank));
    return run_filter(series, init, cfg, mode);
}

FilterTrajectory run_filter(const SnapshotSeries& series, const SpectralParams& init, const FilterConfig& cfg,
                            RunMode mode) {
    const Index n = cfg.delays, m = series.last(), r = init.rank(), d = init.dim();
    if (d != series.dim())
        throw ConfigError("initial modes have dimension " + std::to_string(d) + ", series has " +
                          std::to_string(series.dim()));
    if (r != cfg.rank)
        throw ConfigError("initialization has rank " + std::to_string(r) + ", config asks for " + std::to_string(cfg.rank));
    if (m < n + 1)
        throw ConfigError("series with " + std::to_string(series.count()) + " snapshots is too short for n=" +
                          std::to_string(n) + " delays");
    const Index p = SpectralParams::flat_size(r, d);

    FilterConfig step_cfg = cfg;
    if (mode == RunMode::autonomous) step_cfg.noise = NoiseSpec::autonomous(cfg.noise.sigma());
    if (step_cfg.prior.empty()) step_cfg.prior = PriorCovariance::blocks(r, d, 1e-2, 1e-3, 1e-3);
    step_cfg.validate(p);

    FilterTrajectory out{init, r, d, n, {}, {}};
    out.posteriors.reserve(static_cast<std::size_t>(m - n + 1));
    out.predicted_mean.reserve(static_cast<std::size_t>(m - n + 1));

    Ensemble ens = init_ensemble(init, step_cfg.prior, step_cfg.ensemble_size, step_cfg.seed);
    const double norm = 1.0 / std::sqrt(static_cast<double>(step_cfg.ensemble_size - 1));
    for (Index k = n; k <= m; ++k) {
        try {
            const Eigen::VectorXd data = delay_stack(series, DelayWindow(n, k));
            const Eigen::MatrixXd obs = observe_ensemble(ens, k, n, r, d);
            out.predicted_mean.push_back(obs.rowwise().mean());
            ens = step_cfg.kind == FilterKind::etkf ? etkf_update(ens, obs, data, step_cfg)
                                                    : enkf_update(ens, obs, data, k, step_cfg);
        } catch (const RangeError& e) {
            rethrow_at(e, k);
        } catch (const NumericalError& e) {
            rethrow_at(e, k);
        } catch (const ConfigError& e) {
            rethrow_at(e, k);
        }
        const bool keep = step_cfg.keep_covariance_history || k == m;
        Eigen::MatrixXd factor = keep ? Eigen::MatrixXd(ens.deviations() * norm) : Eigen::MatrixXd();
        out.posteriors.emplace_back(ens.mean(), std::move(factor), k);
    }
    return out;
}

std::pair<Gaussian, Gaussian> extract_marginals(const PosteriorSpectrum& post, Index rank, Index dim) {
    const Index p = SpectralParams::flat_size(rank, dim);
    if (post.mean().size() != p)
        throw ConfigError("posterior has dimension " + std::to_string(post.mean().size()) + ", expected 2r(d+2) = " +
                          std::to_string(p));
    const Index mode_len = 2 * rank * dim;
    const Index e0 = SpectralParams::eigenvalue_offset(rank, dim);
    const Eigen::MatrixXd& f = post.factor();
    Gaussian modes{post.mean().head(mode_len), Eigen::MatrixXd()};
    Gaussian eigs{post.mean().segment(e0, 2 * rank), Eigen::MatrixXd()};
    if (post.has_cov()) {
        modes.cov = f.topRows(mode_len) * f.topRows(mode_len).transpose();
        eigs.cov = f.middleRows(e0, 2 * rank) * f.middleRows(e0, 2 * rank).transpose();
    }
    return {std::move(modes), std::move(eigs)};
}

}  // namespace kfdmd
