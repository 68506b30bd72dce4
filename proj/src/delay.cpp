#include "kfdmd/delay.hpp"

#include "kfdmd/error.hpp"

#include <cmath>
#include <string>

namespace kfdmd {

void DelayCriterion::validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("delay threshold epsilon must be > 0");
    if (rank < 1) throw ConfigError("delay criterion rank must be >= 1");
    if (max_n < rank + 1) throw ConfigError("delay criterion needs max_n >= r+1");
}

namespace {

Eigen::VectorXcd stencil_eigenvalues(const SnapshotSeries& series, Index snapshots, Index rank) {
    const auto [y0, y1] = build_data_matrices(series.slice(0, snapshots));
    return exact_dmd(y0, y1, RankPolicy::fixed(rank)).eigenvalues();
}

}  // namespace

DelaySelection select_delay(const SnapshotSeries& series, const DelayCriterion& crit) {
    crit.validate();
    const Index r = crit.rank;
    if (series.count() < r + 2)
        throw ConfigError("delay selection needs at least r+2 = " + std::to_string(r + 2) + " snapshots, got " +
                          std::to_string(series.count()));

    DelaySelection out;
    Index s = r + 1;
    Eigen::VectorXcd lam = stencil_eigenvalues(series, s, r);
    while (s + 1 <= crit.max_n && s + 1 <= series.count()) {
        const Eigen::VectorXcd next = stencil_eigenvalues(series, s + 1, r);
        const auto perm = match_eigenvalues(next, lam, crit.matching);
        double e2 = 0.0;
        for (Index i = 0; i < r; ++i) e2 += std::norm(next(perm[static_cast<std::size_t>(i)]) - lam(i));
        const double e = std::sqrt(e2);
        out.residuals.push_back(e);
        const double threshold =
            crit.relative && std::isfinite(crit.epsilon) ? crit.epsilon * lam.norm() : crit.epsilon;
        if (e <= threshold) {
            out.n = s + 1;
            return out;
        }
        lam = next;
        ++s;
    }
    out.n = crit.max_n;
    out.saturated = true;
    return out;
}

}  // namespace kfdmd
