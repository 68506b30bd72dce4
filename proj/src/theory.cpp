#include "kfdmd/theory.hpp"

#include "kfdmd/error.hpp"
#include "kfdmd/linalg.hpp"
#include "kfdmd/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace kfdmd {

Eigen::MatrixXd LemmaInstance::q_or_zero() const {
    if (q.size() == 0) return Eigen::MatrixXd::Zero(pdim(), pdim());
    return q;
}

void LemmaInstance::validate() const {
    if (p.rows() != p.cols() || p.rows() < 1) throw ConfigError("lemma instance: P must be square and nonempty");
    if (h.cols() != p.rows()) throw ConfigError("lemma instance: H has " + std::to_string(h.cols()) + " columns, P is " +
                                                std::to_string(p.rows()) + "x" + std::to_string(p.rows()));
    if (q.size() != 0 && (q.rows() != p.rows() || q.cols() != p.cols()))
        throw ConfigError("lemma instance: Q shape differs from P");
    if (!(sigma > 0.0)) throw ConfigError("lemma instance: sigma must be positive");
    const double tol = 1e-12;
    if (linalg::spectral_norm(h) > m_bound * (1.0 + tol)) throw ConfigError("lemma instance: ||H|| exceeds M");
    if (linalg::spectral_norm(p) > 2.0 * r_bound * r_bound * (1.0 + tol))
        throw ConfigError("lemma instance: ||P|| exceeds 2 R^2");
}

LemmaInstance random_lemma_instance(Index p, Index d, double sigma, double q_scale, std::uint64_t seed,
                                    Index n_members) {
    if (p < 1 || d < 1) throw ConfigError("lemma instance needs p, D >= 1");
    if (n_members == 0) n_members = 2 * p + 3;
    if (n_members < p + 1) throw ConfigError("sample covariance needs at least p+1 members to be nonsingular");
    Stream rng(seed, StreamTag::lemma);
    LemmaInstance inst;
    inst.sigma = sigma;
    inst.r_bound = 0.5 + 1.5 * rng.uniform();
    inst.m_bound = 0.5 + 2.5 * rng.uniform();

    Eigen::MatrixXd members(p, n_members);
    for (Index i = 0; i < n_members; ++i) {
        Eigen::VectorXd v = rng.normal_vector(p);
        v *= inst.r_bound * (0.25 + 0.75 * rng.uniform()) / v.norm();
        members.col(i) = v;
    }
    const Eigen::MatrixXd dev = members.colwise() - members.rowwise().mean();
    inst.p = linalg::symmetrize(dev * dev.transpose() / static_cast<double>(n_members - 1));

    Eigen::MatrixXd h = rng.normal_matrix(d, p);
    h *= inst.m_bound * (0.5 + 0.5 * rng.uniform()) / linalg::spectral_norm(h);
    inst.h = std::move(h);

    if (q_scale > 0.0) {
        const Eigen::MatrixXd g = rng.normal_matrix(p, p);
        inst.q = linalg::symmetrize(q_scale * g * g.transpose() / static_cast<double>(p));
    }
    return inst;
}

namespace {

Eigen::MatrixXd identity(Index n) { return Eigen::MatrixXd::Identity(n, n); }

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& a, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(linalg::symmetrize(a));
    if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + " is singular or indefinite");
    return llt.solve(identity(a.rows()));
}

// Covariance-form gain K = P H^T (H P H^T + sigma^2 I)^-1.
Eigen::MatrixXd gain(const LemmaInstance& inst) {
    Eigen::MatrixXd s = inst.h * inst.p * inst.h.transpose();
    s.diagonal().array() += inst.sigma * inst.sigma;
    return linalg::spd_solve(linalg::symmetrize(s), inst.h * inst.p).transpose();
}

// Information form (P^-1 + sigma^-2 H^T H)^-1 + Q.
Eigen::MatrixXd posterior_information_form(const LemmaInstance& inst) {
    const Eigen::MatrixXd p_inv = spd_inverse(inst.p, "P");
    const Eigen::MatrixXd x = p_inv + inst.h.transpose() * inst.h / (inst.sigma * inst.sigma);
    return linalg::symmetrize(spd_inverse(x, "P^-1 + sigma^-2 H^T H") + inst.q_or_zero());
}

}  // namespace

double verify_cov_update(const LemmaInstance& inst) {
    inst.validate();
    Eigen::MatrixXd s = inst.h * inst.p * inst.h.transpose();
    s.diagonal().array() += inst.sigma * inst.sigma;
    const Eigen::MatrixXd hp = inst.h * inst.p;
    const Eigen::MatrixXd covariance_form = inst.p - hp.transpose() * linalg::spd_solve(s, hp) + inst.q_or_zero();
    const Eigen::MatrixXd information_form = posterior_information_form(inst);
    return (covariance_form - information_form).norm() / inst.p.norm();
}

double verify_w_bound(const LemmaInstance& inst) {
    inst.validate();
    const Index p = inst.pdim();
    const Eigen::MatrixXd k = gain(inst);
    const Eigen::MatrixXd p_next_inv = spd_inverse(posterior_information_form(inst), "P+");
    const Eigen::MatrixXd i_kh = identity(p) - k * inst.h;
    const Eigen::MatrixXd w = spd_inverse(inst.p, "P") - i_kh.transpose() * p_next_inv * i_kh;
    const double mu = 2.0 * inst.m_bound * inst.m_bound * inst.r_bound * inst.r_bound + inst.sigma * inst.sigma;
    return linalg::min_eigenvalue(w - inst.h.transpose() * inst.h / mu);
}

double verify_gain_bound(const LemmaInstance& inst) {
    inst.validate();
    const Eigen::MatrixXd k = gain(inst);
    const Eigen::MatrixXd p_next_inv = spd_inverse(posterior_information_form(inst), "P+");
    return inst.m_bound / (inst.sigma * inst.sigma) - linalg::spectral_norm(k.transpose() * p_next_inv);
}

LemmaSweep lemma_sweep(Index count, std::uint64_t seed) {
    if (count < 1) throw ConfigError("lemma sweep needs at least one instance");
    LemmaSweep out;
    out.instances = count;
    const double inf = std::numeric_limits<double>::infinity();
    out.min_w_slack = out.min_w_slack_relative = inf;
    out.min_gain_slack = out.min_gain_slack_relative = out.min_gain_slack_relative_with_q = inf;
    for (Index i = 0; i < count; ++i) {
        Stream draw(seed, StreamTag::lemma, static_cast<std::uint64_t>(i), 1);
        const Index p = 1 + static_cast<Index>(draw.uniform() * 10.0) % 10;
        const Index d = 1 + static_cast<Index>(draw.uniform() * 30.0) % 30;
        const double sigma = std::pow(10.0, -2.0 + 3.0 * draw.uniform());
        const double q_scale = (i % 2 == 1) ? std::pow(10.0, -3.0 + 2.0 * draw.uniform()) : 0.0;
        const LemmaInstance inst = random_lemma_instance(p, d, sigma, q_scale, mix64(seed + static_cast<std::uint64_t>(i)));

        out.max_cov_residual = std::max(out.max_cov_residual, verify_cov_update(inst));

        const double hth = (inst.h.transpose() * inst.h).norm();
        const double w = verify_w_bound(inst);
        out.min_w_slack = std::min(out.min_w_slack, w);
        out.min_w_slack_relative = std::min(out.min_w_slack_relative, w / std::max(hth, 1e-300));

        const double gain_scale = inst.m_bound / (sigma * sigma);
        if (q_scale == 0.0) {
            const double g = verify_gain_bound(inst);
            out.min_gain_slack = std::min(out.min_gain_slack, g);
            out.min_gain_slack_relative = std::min(out.min_gain_slack_relative, g / gain_scale);
        } else {
            out.min_gain_slack_relative_with_q =
                std::min(out.min_gain_slack_relative_with_q, verify_gain_bound(inst) / gain_scale);
        }
    }
    return out;
}

MisfitLedger misfit_ledger(const FilterTrajectory& run, const Eigen::Ref<const Eigen::MatrixXd>& theta_true,
                           const Eigen::Ref<const Eigen::MatrixXd>& noise) {
    const auto steps = static_cast<Index>(run.posteriors.size());
    if (steps == 0) throw ConfigError("misfit ledger: empty filter trajectory");
    if (theta_true.size() == 0) throw ConfigError("misfit ledger: true parameters are missing");
    const Index p = SpectralParams::flat_size(run.rank, run.dim);
    if (theta_true.rows() != p)
        throw ConfigError("misfit ledger: true parameters have length " + std::to_string(theta_true.rows()) +
                          ", expected " + std::to_string(p));
    if (theta_true.cols() != 1 && theta_true.cols() != steps)
        throw ConfigError("misfit ledger: need one true parameter column or one per step (" + std::to_string(steps) + ")");
    const Index obs_dim = run.dim * (run.delays + 1);
    if (noise.rows() != obs_dim || noise.cols() != steps)
        throw ConfigError("misfit ledger: noise must be " + std::to_string(obs_dim) + "x" + std::to_string(steps));

    MisfitLedger out;
    double sum_m = 0.0, sum_n = 0.0, sum_n2 = 0.0, sum_d = 0.0;
    for (Index i = 0; i < steps; ++i) {
        const Index k = run.posteriors[static_cast<std::size_t>(i)].step();
        const Index col = theta_true.cols() == 1 ? 0 : i;
        const Eigen::VectorXd truth = observation_map(theta_true.col(col), k, run.delays, run.rank, run.dim);
        const double m = (run.predicted_mean[static_cast<std::size_t>(i)] - truth).squaredNorm();
        const double e = noise.col(i).norm();
        const double dr = (theta_true.cols() > 1 && i + 1 < steps) ? (theta_true.col(i + 1) - theta_true.col(i)).norm() : 0.0;
        sum_m += m;
        sum_n += e;
        sum_n2 += e * e;
        sum_d += dr;
        const double t = static_cast<double>(i + 1);
        out.steps.push_back(k);
        out.misfit.push_back(m);
        out.noise_norm.push_back(e);
        out.drift_norm.push_back(dr);
        out.avg_misfit.push_back(sum_m / t);
        out.avg_noise.push_back(sum_n / t);
        out.avg_noise_sq.push_back(sum_n2 / t);
        out.avg_drift.push_back(sum_d / t);
    }
    return out;
}

MisfitFit fit_misfit(const MisfitLedger& ledger) {
    const auto n = static_cast<Index>(ledger.size());
    if (n < 2) throw ConfigError("misfit fit needs at least two steps");
    const bool drift = std::any_of(ledger.drift_norm.begin(), ledger.drift_norm.end(), [](double v) { return v > 0.0; });
    const Index cols = drift ? 3 : 2;
    Eigen::MatrixXd a(n, cols);
    Eigen::VectorXd b(n);
    for (Index i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        a(i, 0) = 1.0 / static_cast<double>(i + 1);
        a(i, 1) = ledger.avg_noise[u];
        if (drift) a(i, 2) = ledger.avg_drift[u];
        b(i) = ledger.avg_misfit[u];
    }
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(b);
    MisfitFit fit;
    fit.c1 = c(0);
    fit.c2 = c(1);
    if (drift) fit.c3 = c(2);
    const double bn = b.norm();
    fit.relative_residual = bn > 0.0 ? (a * c - b).norm() / bn : 0.0;
    return fit;
}

double final_decade_slope(const MisfitLedger& ledger) {
    const auto n = static_cast<Index>(ledger.size());
    if (n < 10) throw ConfigError("final-decade slope needs at least 10 steps");
    const Index first = (n + 9) / 10;  // T = n/10 rounded up, 1-based
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    Index count = 0;
    for (Index t = first; t <= n; ++t) {
        const double v = ledger.avg_misfit[static_cast<std::size_t>(t - 1)];
        if (!(v > 0.0)) return std::numeric_limits<double>::quiet_NaN();
        const double x = std::log(static_cast<double>(t)), y = std::log(v);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++count;
    }
    const double c = static_cast<double>(count);
    return (c * sxy - sx * sy) / (c * sxx - sx * sx);
}

}  // namespace kfdmd
