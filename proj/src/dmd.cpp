#include "kfdmd/dmd.hpp"

#include "kfdmd/error.hpp"
#include "kfdmd/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace kfdmd {

RankPolicy RankPolicy::fixed(Index r) {
    if (r < 1) throw ConfigError("fixed rank must be >= 1");
    return RankPolicy(Kind::fixed, static_cast<double>(r));
}

RankPolicy RankPolicy::threshold(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("rank threshold must lie in (0, 1)");
    return RankPolicy(Kind::threshold, tau);
}

RankPolicy RankPolicy::energy(double eta) {
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("energy fraction must lie in (0, 1]");
    return RankPolicy(Kind::energy, eta);
}

Index RankPolicy::select(const Eigen::VectorXd& sv, Index rows, Index cols) const {
    if (sv.size() == 0 || !(sv(0) > 0.0)) throw NumericalError("data matrix Y0 is zero; DMD is undefined");
    const double tol = static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() * sv(0);
    Index numerical = 0;
    while (numerical < sv.size() && sv(numerical) > tol) ++numerical;

    switch (kind_) {
    case Kind::fixed: {
        const auto r = static_cast<Index>(value_);
        if (r > numerical)
            throw NumericalError("requested rank " + std::to_string(r) + " exceeds achievable rank " +
                                 std::to_string(numerical));
        return r;
    }
    case Kind::threshold: {
        Index r = 0;
        while (r < numerical && sv(r) > value_ * sv(0)) ++r;
        return std::max<Index>(r, 1);
    }
    case Kind::energy: {
        const double total = sv.head(numerical).squaredNorm();
        double acc = 0.0;
        Index r = 0;
        while (r < numerical) {
            acc += sv(r) * sv(r);
            ++r;
            if (acc >= value_ * total * (1.0 - 1e-15)) break;
        }
        return r;
    }
    }
    return 1;
}

namespace {

// a strictly before b in the spectral order?
bool spectral_before(cplx a, cplx b) {
    constexpr double rel = 1e-10;
    auto differs = [&](double x, double y, double scale) { return std::abs(x - y) > rel * scale; };
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    if (differs(std::abs(a), std::abs(b), scale)) return std::abs(a) > std::abs(b);
    if (differs(a.real(), b.real(), scale)) return a.real() > b.real();
    if (differs(a.imag(), b.imag(), scale)) return a.imag() > b.imag();
    return false;
}

}  // namespace

std::vector<Index> spectral_order(const Eigen::VectorXcd& eigenvalues) {
    // Insertion sort: stable and well defined even though the tolerant
    // comparison is not a strict weak order.
    std::vector<Index> order;
    order.reserve(static_cast<std::size_t>(eigenvalues.size()));
    for (Index i = 0; i < eigenvalues.size(); ++i) {
        auto pos = order.end();
        while (pos != order.begin() && spectral_before(eigenvalues(i), eigenvalues(*(pos - 1)))) --pos;
        order.insert(pos, i);
    }
    return order;
}

Eigen::VectorXcd fit_amplitudes(const Eigen::MatrixXcd& modes, const Eigen::Ref<const Eigen::VectorXd>& y0) {
    if (modes.rows() != y0.size()) throw ConfigError("amplitude fit: mode rows and snapshot length differ");
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(modes);
    const Eigen::VectorXcd rhs = y0.cast<cplx>();
    Eigen::VectorXcd b = cod.solve(rhs);
    if (!b.allFinite()) throw NumericalError("amplitude least-squares fit failed");
    return b;
}

namespace {

DmdDecomposition dmd_core(const Eigen::Ref<const Eigen::MatrixXd>& y0_svd, const Eigen::Ref<const Eigen::MatrixXd>& y1_svd,
                          const Eigen::Ref<const Eigen::MatrixXd>& y1_modes, const Eigen::Ref<const Eigen::VectorXd>& first,
                          const RankPolicy& policy) {
    if (y0_svd.rows() != y1_svd.rows() || y0_svd.cols() != y1_svd.cols())
        throw ConfigError("DMD needs Y0 and Y1 of the same shape");
    if (y0_svd.cols() < 1) throw ConfigError("DMD needs at least one snapshot pair");
    if (!y0_svd.allFinite() || !y1_svd.allFinite()) throw ConfigError("DMD data contains non-finite entries");

    Eigen::BDCSVD<Eigen::MatrixXd> svd(y0_svd, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Index r = policy.select(svd.singularValues(), y0_svd.rows(), y0_svd.cols());

    const Eigen::MatrixXd u = svd.matrixU().leftCols(r);
    const Eigen::VectorXd s = svd.singularValues().head(r);
    const Eigen::MatrixXd v = svd.matrixV().leftCols(r);
    const Eigen::MatrixXd v_sinv = v * s.cwiseInverse().asDiagonal();

    const Eigen::MatrixXd k_tilde = u.transpose() * (y1_svd * v_sinv);
    Eigen::EigenSolver<Eigen::MatrixXd> es(k_tilde);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of the reduced DMD operator failed");

    const Eigen::VectorXcd lam = es.eigenvalues();
    const Eigen::MatrixXcd w = es.eigenvectors();
    const std::vector<Index> order = spectral_order(lam);

    Eigen::VectorXcd lam_sorted(r);
    Eigen::MatrixXcd w_sorted(r, r);
    for (Index i = 0; i < r; ++i) {
        lam_sorted(i) = lam(order[static_cast<std::size_t>(i)]);
        w_sorted.col(i) = w.col(order[static_cast<std::size_t>(i)]);
    }

    const Eigen::MatrixXcd modes = (y1_modes * v_sinv).cast<cplx>() * w_sorted;
    Eigen::VectorXcd b = fit_amplitudes(modes, first);

    return DmdDecomposition{SpectralParams(modes, lam_sorted, std::move(b)), u, s, v, k_tilde, w_sorted};
}

}  // namespace

DmdDecomposition exact_dmd_decomposition(const Eigen::Ref<const Eigen::MatrixXd>& y0,
                                         const Eigen::Ref<const Eigen::MatrixXd>& y1, const RankPolicy& policy) {
    if (y0.cols() < 1) throw ConfigError("DMD needs at least one snapshot pair");
    return dmd_core(y0, y1, y1, y0.col(0), policy);
}

SpectralParams exact_dmd(const Eigen::Ref<const Eigen::MatrixXd>& y0, const Eigen::Ref<const Eigen::MatrixXd>& y1,
                         const RankPolicy& policy) {
    return exact_dmd_decomposition(y0, y1, policy).params;
}

SpectralParams exact_dmd(const SnapshotSeries& series, const RankPolicy& policy) {
    const auto [y0, y1] = build_data_matrices(series);
    return exact_dmd(y0, y1, policy);
}

DmdDecomposition compressed_dmd_decomposition(const Eigen::Ref<const Eigen::MatrixXd>& y0,
                                              const Eigen::Ref<const Eigen::MatrixXd>& y1,
                                              const Eigen::Ref<const Eigen::MatrixXd>& compression,
                                              const RankPolicy& policy) {
    if (compression.cols() != y0.rows())
        throw ConfigError("compression matrix has " + std::to_string(compression.cols()) + " columns, data has " +
                          std::to_string(y0.rows()) + " rows");
    if (compression.rows() > compression.cols()) throw ConfigError("compression matrix must have c <= d rows");
    if (y0.cols() < 1) throw ConfigError("DMD needs at least one snapshot pair");

    Eigen::JacobiSVD<Eigen::MatrixXd> csvd(compression);
    const Eigen::VectorXd csv = csvd.singularValues();
    const double tol = static_cast<double>(compression.cols()) * std::numeric_limits<double>::epsilon() * csv(0);
    if (!(csv(0) > 0.0) || csv(csv.size() - 1) <= tol)
        throw NumericalError("compression matrix is row-rank deficient");

    const Eigen::MatrixXd cy0 = compression * y0;
    const Eigen::MatrixXd cy1 = compression * y1;
    return dmd_core(cy0, cy1, y1, y0.col(0), policy);
}

SpectralParams compressed_dmd(const Eigen::Ref<const Eigen::MatrixXd>& y0, const Eigen::Ref<const Eigen::MatrixXd>& y1,
                              const Eigen::Ref<const Eigen::MatrixXd>& compression, const RankPolicy& policy) {
    return compressed_dmd_decomposition(y0, y1, compression, policy).params;
}

Eigen::MatrixXd gaussian_compression(Index c, Index d, std::uint64_t seed) {
    if (c < 1 || d < 1 || c > d) throw ConfigError("compression needs 1 <= c <= d");
    Stream rng(seed, StreamTag::compression);
    return rng.normal_matrix(c, d) / std::sqrt(static_cast<double>(c));
}

namespace {

// Minimum-cost assignment of n rows to distinct columns (n <= m).
std::vector<Index> hungarian(const Eigen::MatrixXd& cost) {
    const Index n = cost.rows(), m = cost.cols();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
    std::vector<Index> p(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
    for (Index i = 1; i <= n; ++i) {
        p[0] = i;
        Index j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
        std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const Index i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            Index j1 = 0;
            for (Index j = 1; j <= m; ++j) {
                const auto sj = static_cast<std::size_t>(j);
                if (used[sj]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[sj];
                if (cur < minv[sj]) {
                    minv[sj] = cur;
                    way[sj] = j0;
                }
                if (minv[sj] < delta) {
                    delta = minv[sj];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= m; ++j) {
                const auto sj = static_cast<std::size_t>(j);
                if (used[sj]) {
                    u[static_cast<std::size_t>(p[sj])] += delta;
                    v[sj] -= delta;
                } else {
                    minv[sj] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const Index j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<Index> assignment(static_cast<std::size_t>(n), -1);
    for (Index j = 1; j <= m; ++j)
        if (p[static_cast<std::size_t>(j)] != 0) assignment[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return assignment;
}

}  // namespace

std::vector<Index> match_eigenvalues(const Eigen::VectorXcd& estimate, const Eigen::VectorXcd& reference, Matching how) {
    const Index n = reference.size(), m = estimate.size();
    if (m < n) throw ConfigError("eigenvalue matching needs at least as many estimates as references");
    std::vector<Index> perm(static_cast<std::size_t>(n));
    switch (how) {
    case Matching::sort_order: {
        const auto est_order = spectral_order(estimate);
        const auto ref_order = spectral_order(reference);
        for (Index i = 0; i < n; ++i)
            perm[static_cast<std::size_t>(ref_order[static_cast<std::size_t>(i)])] = est_order[static_cast<std::size_t>(i)];
        return perm;
    }
    case Matching::greedy_nearest: {
        // Repeatedly take the globally closest unpaired (reference, estimate).
        std::vector<char> ref_used(static_cast<std::size_t>(n), 0), est_used(static_cast<std::size_t>(m), 0);
        for (Index step = 0; step < n; ++step) {
            double best = std::numeric_limits<double>::infinity();
            Index bi = -1, bj = -1;
            for (Index i = 0; i < n; ++i) {
                if (ref_used[static_cast<std::size_t>(i)]) continue;
                for (Index j = 0; j < m; ++j) {
                    if (est_used[static_cast<std::size_t>(j)]) continue;
                    const double dist = std::abs(estimate(j) - reference(i));
                    if (dist < best) {
                        best = dist;
                        bi = i;
                        bj = j;
                    }
                }
            }
            ref_used[static_cast<std::size_t>(bi)] = 1;
            est_used[static_cast<std::size_t>(bj)] = 1;
            perm[static_cast<std::size_t>(bi)] = bj;
        }
        return perm;
    }
    case Matching::optimal: {
        Eigen::MatrixXd cost(n, m);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < m; ++j) cost(i, j) = std::abs(estimate(j) - reference(i));
        return hungarian(cost);
    }
    }
    return perm;
}

double mean_eigenvalue_error(const Eigen::VectorXcd& estimate, const Eigen::VectorXcd& reference) {
    const auto perm = match_eigenvalues(estimate, reference, Matching::optimal);
    double total = 0.0;
    for (Index i = 0; i < reference.size(); ++i)
        total += std::abs(estimate(perm[static_cast<std::size_t>(i)]) - reference(i));
    return total / static_cast<double>(reference.size());
}

Dictionary::Dictionary(std::string name, Index input_dim, Index lifted_dim, Lift lift)
    : name_(std::move(name)), input_dim_(input_dim), lifted_dim_(lifted_dim), lift_(std::move(lift)) {
    if (input_dim_ < 1 || lifted_dim_ < 1) throw ConfigError("dictionary dimensions must be positive");
    if (!lift_) throw ConfigError("dictionary needs a lift function");
}

Dictionary Dictionary::identity(Index dim) {
    return Dictionary("identity", dim, dim, [](const Eigen::Ref<const Eigen::VectorXd>& x) { return Eigen::VectorXd(x); });
}

Dictionary Dictionary::quadratic_pair() {
    return Dictionary("x1,x2,x1^2", 2, 3, [](const Eigen::Ref<const Eigen::VectorXd>& x) {
        Eigen::VectorXd out(3);
        out << x(0), x(1), x(0) * x(0);
        return out;
    });
}

Dictionary Dictionary::cubic(Index dim) {
    return Dictionary("u,u^3", dim, 2 * dim, [dim](const Eigen::Ref<const Eigen::VectorXd>& x) {
        Eigen::VectorXd out(2 * dim);
        out.head(dim) = x;
        out.tail(dim) = x.array().cube().matrix();
        return out;
    });
}

Eigen::VectorXd Dictionary::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != input_dim_)
        throw ConfigError("dictionary '" + name_ + "' expects input length " + std::to_string(input_dim_) + ", got " +
                          std::to_string(x.size()));
    Eigen::VectorXd out = lift_(x);
    if (out.size() != lifted_dim_)
        throw ConfigError("dictionary '" + name_ + "' produced length " + std::to_string(out.size()) + ", declared " +
                          std::to_string(lifted_dim_));
    return out;
}

SnapshotSeries lift_series(const SnapshotSeries& series, const Dictionary& dict) {
    Eigen::MatrixXd lifted(dict.lifted_dim(), series.count());
    for (Index k = 0; k < series.count(); ++k) lifted.col(k) = dict(series.values().col(k));
    return SnapshotSeries(std::move(lifted), series.dt(), series.t0());
}

}  // namespace kfdmd
